#include <doctest.h>

#include "nseg/corpus.hpp"
#include "nseg/errors.hpp"
#include "nseg/metrics.hpp"
#include "nseg/rng.hpp"

using namespace nseg;

namespace {

std::vector<int> seg_tags(std::size_t n, std::initializer_list<std::size_t> sb) {
    std::vector<int> v(n, tag::kNsb);
    for (std::size_t i : sb) v[i] = tag::kSb;
    return v;
}

}  // namespace

TEST_CASE("sentence boundary F1") {
    const auto gold = seg_tags(10, {2, 7});
    const auto r = f1_sentence_boundary(seg_tags(10, {2, 5}), gold);
    CHECK(r.score.tp == 1);
    CHECK(r.score.fp == 1);
    CHECK(r.score.fn == 1);
    CHECK(r.score.precision() == 0.5);
    CHECK(r.score.recall() == 0.5);
    CHECK(r.score.f1() == 0.5);
    CHECK(f1_sentence_boundary(gold, gold).score.f1() == 1.0);

    const auto none = f1_sentence_boundary(seg_tags(10, {}), gold);
    CHECK(none.score.precision() == 0.0);
    CHECK(none.score.f1() == 0.0);
    CHECK_THROWS_AS(f1_sentence_boundary(seg_tags(3, {}), gold), InvalidInput);
}

TEST_CASE("overall punctuation F1") {
    const std::vector<int> gold = {tag::kO, tag::kPeriod};
    const std::vector<int> pred = {tag::kO, tag::kComma};
    const auto r = f1_overall_punct(pred, gold);
    CHECK(r.score.tp == 0);
    CHECK(r.score.fp == 1);
    CHECK(r.score.fn == 1);
    CHECK(r.score.f1() == 0.0);
    CHECK(r.per_class.size() == 3);
    CHECK(f1_overall_punct(gold, gold).score.f1() == 1.0);
    const std::vector<int> all_o = {tag::kO, tag::kO};
    const auto o = f1_overall_punct(all_o, gold);
    CHECK(o.score.precision() == 0.0);
    CHECK(o.score.recall() == 0.0);
    CHECK(o.score.f1() == 0.0);
}

TEST_CASE("two-class F1 ignores punctuation type") {
    const std::vector<int> gold = {tag::kO, tag::kPeriod};
    const std::vector<int> pred = {tag::kO, tag::kComma};
    CHECK(f1_two_class(pred, gold).score.f1() == 1.0);
    const std::vector<int> all_o = {tag::kO, tag::kO};
    CHECK(f1_two_class(all_o, gold).score.f1() == 0.0);
}

TEST_CASE("coarsening never lowers F1 and counts are consistent") {
    Rng rng(4);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng.index(30);
        std::vector<int> pred(n), gold(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = static_cast<int>(rng.index(4));
            gold[i] = static_cast<int>(rng.index(4));
        }
        const auto overall = f1_overall_punct(pred, gold);
        const auto two = f1_two_class(pred, gold);
        CHECK(two.score.f1() >= overall.score.f1() - 1e-15);
        std::size_t pred_pos = 0, gold_pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            pred_pos += pred[i] != tag::kO;
            gold_pos += gold[i] != tag::kO;
        }
        CHECK(overall.score.tp + overall.score.fp == pred_pos);
        CHECK(overall.score.tp + overall.score.fn == gold_pos);
        CHECK(overall.score.f1() >= 0.0);
        CHECK(overall.score.f1() <= 1.0);
    }
}

TEST_CASE("task metrics select the headline value") {
    const auto gold = seg_tags(10, {0, 4});
    const auto pred = seg_tags(10, {0});
    CHECK(task_metric(Task::Segmentation, pred, gold) == doctest::Approx(2.0 / 3.0));
    CHECK(evaluate_task(Task::Segmentation, pred, gold).size() == 1);
    const std::vector<int> pg = {0, 1, 2, 3};
    const auto reports = evaluate_task(Task::Punctuation, pg, pg);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].family == "overall");
    CHECK(reports[1].family == "two_class");
    const auto json = reports_to_json(reports);
    CHECK(json.dump().find("\"tp\"") != std::string::npos);
}

TEST_CASE("paired t-test") {
    const std::vector<double> a = {0.52, 0.41, 0.63};
    const std::vector<double> b = {0.50, 0.40, 0.60};
    const auto r = paired_t_test(a, b);
    CHECK(r.mean_difference == doctest::Approx(0.02));
    CHECK(r.t == doctest::Approx(3.464101615137755).epsilon(1e-6));
    CHECK(r.df == 2);
    CHECK(r.p_value == doctest::Approx(0.07417990022744853).epsilon(1e-6));
    CHECK_FALSE(r.degenerate);

    const auto same = paired_t_test(a, a);
    CHECK(same.t == 0.0);
    CHECK(same.p_value == 1.0);

    const std::vector<double> base = {1.0, 2.0, 3.0};
    const std::vector<double> shifted = {1.5, 2.5, 3.5};
    const auto flat = paired_t_test(shifted, base);
    CHECK(flat.degenerate);
    CHECK(flat.p_value == 0.0);

    const std::vector<double> one = {0.5};
    CHECK_THROWS_AS(paired_t_test(one, one), InvalidInput);
}
