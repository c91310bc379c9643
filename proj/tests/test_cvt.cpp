#include <doctest.h>

#include <cmath>

#include "nseg/cvt.hpp"
#include "nseg/errors.hpp"
#include "support.hpp"

using namespace nseg;
using testing::random_matrix;

namespace {

Matrix random_distribution(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    return primary_distribution(random_matrix(rows, cols, -4, 4, rng));
}

struct Fixture {
    std::vector<TaggedSequence> data;
    Vocab vocab;
};

Fixture fixture(std::uint64_t seed) {
    Rng rng(seed);
    Fixture f;
    for (int i = 0; i < 6; ++i) f.data.push_back(testing::random_passage(3 + rng.index(3), Task::Segmentation, rng));
    f.vocab = Vocab::build(f.data, VocabConfig{1, 1});
    return f;
}

}  // namespace

TEST_CASE("primary distribution is a row softmax") {
    Matrix g(1, 2);
    g << std::log(3.0), 0.0;
    const Matrix p = primary_distribution(g);
    CHECK(p(0, 0) == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(p(0, 1) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("worked KL example") {
    const std::vector<double> p = {0.5, 0.5}, q = {0.9, 0.1};
    CHECK(kl_divergence(p, q) == doctest::Approx(0.5108256237659907).epsilon(1e-12));

    Matrix primary(1, 2), local(1, 2);
    primary << 0.5, 0.5;
    local << 0.9, 0.1;
    CHECK(cvt_loss(primary, local, primary) == doctest::Approx(0.5108256237659907).epsilon(1e-12));

    ad::Tape tape;
    const ad::Var local_logits = tape.constant(local.array().log().matrix());
    const ad::Var distant_logits = tape.constant(primary.array().log().matrix());
    CHECK(cvt_loss(tape, primary, local_logits, distant_logits).value()(0, 0) ==
          doctest::Approx(0.5108256237659907).epsilon(1e-12));
}

TEST_CASE("loss is non-negative and zero at agreement") {
    Rng rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto d = static_cast<Eigen::Index>(1 + rng.index(6));
        const auto s = static_cast<Eigen::Index>(2 + rng.index(3));
        const Matrix p = random_distribution(d, s, rng);
        const Matrix q = random_distribution(d, s, rng);
        const Matrix r = random_distribution(d, s, rng);
        CHECK(cvt_loss(p, q, r) >= 0.0);
        CHECK(cvt_loss(p, p, p) == 0.0);
    }
    CHECK(cvt_loss(Matrix(0, 2), Matrix(0, 2), Matrix(0, 2)) == 0.0);
    const std::vector<double> zero_mass = {0.0, 1.0}, q = {0.5, 0.5};
    CHECK(kl_divergence(zero_mass, q) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("loss averages over dropped timesteps") {
    Rng rng(3);
    const Matrix p = random_distribution(4, 3, rng);
    const Matrix q = random_distribution(4, 3, rng);
    double expected = 0.0;
    for (Eigen::Index t = 0; t < 4; ++t) {
        double kl = 0.0;
        for (Eigen::Index k = 0; k < 3; ++k) kl += p(t, k) * std::log(p(t, k) / q(t, k));
        expected += kl;
    }
    CHECK(cvt_loss(p, q, p) == doctest::Approx(expected / 4.0).epsilon(1e-12));
}

TEST_CASE("tape loss gradient matches finite differences") {
    Rng rng(4);
    const Matrix primary = random_distribution(3, 4, rng);
    Parameter local("local", random_matrix(3, 4, -2, 2, rng));
    Parameter distant("distant", random_matrix(3, 4, -2, 2, rng));
    std::vector<Parameter*> params = {&local, &distant};
    const auto r = finite_diff_check(
        [&](ad::Tape& t) { return cvt_loss(t, primary, t.param(local), t.param(distant)); }, params);
    CHECK(r.max_rel_error < 1e-7);
}

TEST_CASE("auxiliary heads gradient matches finite differences") {
    const auto f = fixture(5);
    SegmenterModel model(testing::tiny_model_config(), f.vocab, 3);
    const auto view = model.view(f.data[0].tokens);
    MaskedView masked;
    masked.dropped = {0, 2};
    masked.view = mask_timesteps(view, masked.dropped);
    const Matrix primary = primary_distribution(model.logits(view));
    Matrix target(static_cast<Eigen::Index>(masked.dropped.size()), primary.cols());
    for (std::size_t i = 0; i < masked.dropped.size(); ++i) {
        target.row(static_cast<Eigen::Index>(i)) = primary.row(static_cast<Eigen::Index>(masked.dropped[i]));
    }
    const auto r = finite_diff_check(
        [&](ad::Tape& t) {
            Rng drop(8);
            const auto local = aux_local_logits(t, model, masked.view, masked.dropped, 0.3, &drop);
            const auto distant = aux_distant_logits(t, model, masked.view, masked.dropped, 0.3, &drop);
            return cvt_loss(t, target, local, distant);
        },
        model.low_level_parameters());
    INFO(r.worst_parameter);
    CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("no gradient flows through the primary distribution") {
    const auto f = fixture(7);
    SegmenterModel model(testing::tiny_model_config(), f.vocab, 3);
    const auto view = model.view(f.data[1].tokens);
    CvtConfig cfg;
    cfg.drop_rate = 0.6;
    Rng rng(1);
    std::optional<UnlabeledLoss> loss;
    ad::Tape tape;
    do {
        loss = unlabeled_loss(tape, model, view, cfg, rng);
    } while (!loss);
    model.parameters().zero_grad();
    tape.backward(loss->loss);

    double low = 0.0;
    for (const Parameter* p : model.parameters().all()) {
        const bool high = p->name.rfind("high.", 0) == 0 || p->name.rfind("output.", 0) == 0 ||
                          p->name.rfind("crf.", 0) == 0;
        if (high) {
            INFO(p->name);
            CHECK(p->grad.isZero());
        } else {
            low += p->grad.cwiseAbs().sum();
        }
    }
    CHECK(low > 0.0);
}

TEST_CASE("evaluation-mode auxiliary distributions") {
    const auto f = fixture(9);
    const SegmenterModel model(testing::tiny_model_config(), f.vocab, 3);
    const auto view = model.view(f.data[0].tokens);
    const std::vector<std::size_t> d = {0, 2};
    const auto masked = mask_timesteps(view, d);
    const Matrix local = aux_local_distribution(model, masked, d);
    CHECK(local.rows() == 2);
    CHECK(local.row(1).sum() == doctest::Approx(1.0));
    CHECK(aux_distant_distribution(model, masked, {}).size() == 0);
}

TEST_CASE("config validation") {
    CvtConfig c;
    c.drop_rate = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = CvtConfig{};
    c.unlabeled_batches = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
