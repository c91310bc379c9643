#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "nseg/errors.hpp"
#include "nseg/trainer.hpp"
#include "support.hpp"

using namespace nseg;

namespace {

struct Split {
    std::vector<TaggedSequence> train;
    std::vector<TaggedSequence> dev;
    Vocab vocab;
};

Split synthetic_split(std::size_t passages, std::uint64_t seed) {
    auto corpus = testing::synthetic_corpus(passages, seed);
    Split s;
    const std::size_t cut = passages * 4 / 5;
    s.train.assign(corpus.passages.begin(), corpus.passages.begin() + static_cast<std::ptrdiff_t>(cut));
    s.dev.assign(corpus.passages.begin() + static_cast<std::ptrdiff_t>(cut), corpus.passages.end());
    s.vocab = Vocab::build(s.train, VocabConfig{});
    return s;
}

OptimizerConfig quick_optimizer(std::size_t epochs) {
    OptimizerConfig o;
    o.max_epochs = epochs;
    o.batch_size = 8;
    o.seed = 3;
    return o;
}

std::vector<Matrix> values(const SegmenterModel& m) { return m.parameters().snapshot(); }

}  // namespace

TEST_CASE("adagrad first step") {
    Matrix p = Matrix::Constant(1, 1, 1.0);
    Matrix acc = Matrix::Zero(1, 1);
    adagrad_step(p, Matrix::Constant(1, 1, 2.0), acc, 0.02);
    CHECK(acc(0, 0) == 4.0);
    CHECK(p(0, 0) == doctest::Approx(0.98).epsilon(1e-9));
}

TEST_CASE("adam first step moves by the learning rate") {
    Matrix p = (Matrix(1, 2) << 1.0, -1.0).finished();
    AdamState st;
    adam_step(p, (Matrix(1, 2) << 2.0, -0.5).finished(), st, 0.001, 0.9, 0.999, 1e-8);
    CHECK(st.step == 1);
    CHECK(p(0, 0) == doctest::Approx(1.0 - 0.001).epsilon(1e-8));
    CHECK(p(0, 1) == doctest::Approx(-1.0 + 0.001).epsilon(1e-8));
}

TEST_CASE("optimizer keeps state per parameter") {
    OptimizerConfig cfg;
    cfg.learning_rate = 0.02;
    Optimizer opt(cfg);
    Parameter a("a", Matrix::Constant(1, 1, 1.0));
    Parameter b("b", Matrix::Constant(1, 1, 1.0));
    a.grad(0, 0) = 2.0;
    b.grad(0, 0) = 2.0;
    std::vector<Parameter*> both = {&a, &b};
    opt.step(both);
    std::vector<Parameter*> only_a = {&a};
    opt.step(only_a);
    // Second step on a: acc = 8, update = 0.02 * 2 / sqrt(8).
    CHECK(a.value(0, 0) == doctest::Approx(0.98 - 0.04 / std::sqrt(8.0)).epsilon(1e-9));
    CHECK(b.value(0, 0) == doctest::Approx(0.98).epsilon(1e-9));
}

TEST_CASE("l2 penalty sums squares over every parameter") {
    ParameterStore store;
    store.add("a", (Matrix(1, 2) << 1.0, -2.0).finished());
    store.add("b", Matrix::Constant(1, 1, 3.0));
    CHECK(l2_penalty(store, 0.01) == doctest::Approx(0.14));
}

TEST_CASE("optimizer config validation") {
    OptimizerConfig c;
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = OptimizerConfig{};
    c.patience = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(parse_optimizer("adam") == OptimizerKind::Adam);
    CHECK_THROWS_AS(parse_optimizer("sgd"), ConfigError);
}

TEST_CASE("supervised training is deterministic and keeps the best epoch") {
    const auto s = synthetic_split(60, 1);
    const auto cfg = testing::tiny_model_config();
    SegmenterModel a(cfg, s.vocab, 5), b(cfg, s.vocab, 5);
    std::ostringstream log_a, log_b;
    const auto ha = train_supervised(a, s.train, s.dev, quick_optimizer(4), &log_a);
    const auto hb = train_supervised(b, s.train, s.dev, quick_optimizer(4), &log_b);
    CHECK(log_a.str() == log_b.str());
    CHECK(values(a) == values(b));
    CHECK(ha.epochs.size() == 4);
    CHECK(evaluate_sequences(a, s.dev) == ha.best_validation);
    for (const auto& e : ha.epochs) CHECK(e.validation <= ha.best_validation);
    CHECK(ha.epochs.back().supervised_loss < ha.epochs.front().supervised_loss);

    std::istringstream lines(log_a.str());
    std::string line;
    std::size_t count = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("supervised_loss"));
        CHECK(j.contains("validation"));
        ++count;
    }
    CHECK(count == 4);
}

TEST_CASE("patience stops training") {
    const auto s = synthetic_split(30, 2);
    SegmenterModel m(testing::tiny_model_config(), s.vocab, 5);
    auto opt = quick_optimizer(40);
    opt.patience = 1;
    opt.learning_rate = 1e-9;
    const auto h = train_supervised(m, s.train, s.dev, opt);
    CHECK(h.epochs.size() <= h.best_epoch + opt.patience);
    CHECK(h.epochs.size() < 40);
}

TEST_CASE("non-finite losses raise a training error") {
    const auto s = synthetic_split(20, 3);
    SegmenterModel m(testing::tiny_model_config(), s.vocab, 5);
    m.parameters().find("output.bias")->value.setConstant(std::numeric_limits<double>::quiet_NaN());
    CHECK_THROWS_AS(train_supervised(m, s.train, s.dev, quick_optimizer(1)), TrainingError);
}

TEST_CASE("cross-view training with no dropping equals supervised training") {
    const auto s = synthetic_split(40, 4);
    const auto unlabeled = testing::synthetic_corpus(20, 99).passages;
    const auto cfg = testing::tiny_model_config();
    SegmenterModel sup(cfg, s.vocab, 7), cvt(cfg, s.vocab, 7);
    const auto hs = train_supervised(sup, s.train, s.dev, quick_optimizer(3));
    CvtConfig none;
    none.drop_rate = 0.0;
    const auto hc = train_cvt(cvt, s.train, s.dev, unlabeled, none, quick_optimizer(3));
    CHECK(values(sup) == values(cvt));
    REQUIRE(hs.epochs.size() == hc.epochs.size());
    for (std::size_t i = 0; i < hs.epochs.size(); ++i) {
        CHECK(hs.epochs[i].validation == hc.epochs[i].validation);
        CHECK(hs.epochs[i].supervised_loss == hc.epochs[i].supervised_loss);
    }
}

TEST_CASE("cross-view training records its loss and leaves the CRF to labeled steps") {
    const auto s = synthetic_split(30, 5);
    const auto unlabeled = testing::synthetic_corpus(30, 77).passages;
    SegmenterModel m(testing::tiny_model_config(), s.vocab, 7);
    std::ostringstream log;
    const auto h = train_cvt(m, s.train, s.dev, unlabeled, CvtConfig{}, quick_optimizer(2), &log);
    REQUIRE(h.epochs.size() == 2);
    for (const auto& e : h.epochs) {
        REQUIRE(e.cvt_loss.has_value());
        CHECK(*e.cvt_loss > 0.0);
    }
    CHECK(log.str().find("cvt_loss") != std::string::npos);
    CHECK_THROWS_AS(train_cvt(m, s.train, s.dev, {}, CvtConfig{}, quick_optimizer(1)), InvalidInput);
}

TEST_CASE("grid search table shape") {
    const auto s = synthetic_split(20, 6);
    const std::vector<std::size_t> words = {1, 2}, ngrams = {1, 2, 3};
    const auto r = grid_search(s.train, s.dev, words, ngrams, testing::tiny_model_config(), quick_optimizer(1), 3);
    CHECK(r.table.size() == 6);
    double best = -1.0;
    for (const auto& cell : r.table) {
        REQUIRE(cell.metric.has_value());
        best = std::max(best, *cell.metric);
    }
    CHECK(r.best_metric == best);

    const std::vector<std::size_t> one = {2};
    const auto single = grid_search(s.train, s.dev, one, one, testing::tiny_model_config(), quick_optimizer(1), 3);
    CHECK(single.table.size() == 1);
    CHECK(single.best_c_word == 2);
    CHECK(single.best_c_ngram == 2);
}
