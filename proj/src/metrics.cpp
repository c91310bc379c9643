#include "nseg/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>

#include "nseg/errors.hpp"

namespace nseg {

namespace {

void check_lengths(std::span<const int> pred, std::span<const int> gold) {
    if (pred.size() != gold.size()) {
        throw InvalidInput("metrics: predicted length " + std::to_string(pred.size()) +
                           " differs from gold length " + std::to_string(gold.size()));
    }
}

Score class_score(std::span<const int> pred, std::span<const int> gold, int cls) {
    Score s;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == cls;
        const bool g = gold[i] == cls;
        if (p && g) ++s.tp;
        else if (p) ++s.fp;
        else if (g) ++s.fn;
    }
    return s;
}

nlohmann::json score_json(const Score& s) {
    return {{"tp", s.tp},
            {"fp", s.fp},
            {"fn", s.fn},
            {"precision", s.precision()},
            {"recall", s.recall()},
            {"f1", s.f1()}};
}

}  // namespace

double Score::precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }

double Score::recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }

double Score::f1() const {
    const double p = precision();
    const double r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j = score_json(score);
    j["metric"] = family;
    if (!per_class.empty()) {
        nlohmann::json classes = nlohmann::json::object();
        for (const auto& [name, s] : per_class) classes[name] = score_json(s);
        j["per_class"] = std::move(classes);
    }
    return j;
}

MetricsReport f1_sentence_boundary(std::span<const int> pred, std::span<const int> gold) {
    check_lengths(pred, gold);
    return {"sentence_boundary", class_score(pred, gold, tag::kSb), {}};
}

MetricsReport f1_overall_punct(std::span<const int> pred, std::span<const int> gold) {
    check_lengths(pred, gold);
    MetricsReport report{"overall", {}, {}};
    const TagSet tags(Task::Punctuation);
    for (int cls : {tag::kComma, tag::kPeriod, tag::kQuestion}) {
        report.per_class.emplace_back(tags.name(cls), class_score(pred, gold, cls));
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != tag::kO;
        const bool g = gold[i] != tag::kO;
        if (p && g && pred[i] == gold[i]) {
            ++report.score.tp;
        } else {
            if (p) ++report.score.fp;
            if (g) ++report.score.fn;
        }
    }
    return report;
}

MetricsReport f1_two_class(std::span<const int> pred, std::span<const int> gold) {
    check_lengths(pred, gold);
    MetricsReport report{"two_class", {}, {}};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != tag::kO;
        const bool g = gold[i] != tag::kO;
        if (p && g) ++report.score.tp;
        else if (p) ++report.score.fp;
        else if (g) ++report.score.fn;
    }
    return report;
}

std::vector<MetricsReport> evaluate_task(Task task, std::span<const int> pred, std::span<const int> gold) {
    if (task == Task::Segmentation) return {f1_sentence_boundary(pred, gold)};
    return {f1_overall_punct(pred, gold), f1_two_class(pred, gold)};
}

double task_metric(Task task, std::span<const int> pred, std::span<const int> gold) {
    return task == Task::Segmentation ? f1_sentence_boundary(pred, gold).score.f1()
                                      : f1_overall_punct(pred, gold).score.f1();
}

nlohmann::json reports_to_json(const std::vector<MetricsReport>& reports) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& r : reports) j[r.family] = r.to_json();
    return j;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InvalidInput("paired_t_test: score lists differ in length");
    }
    if (a.size() < 2) {
        throw InvalidInput("paired_t_test: need at least two paired scores");
    }
    const auto n = static_cast<double>(a.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
    mean /= n;
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i] - mean;
        ss += d * d;
    }
    TTestResult result;
    result.mean_difference = mean;
    result.df = a.size() - 1;
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd == 0.0) {
        if (mean == 0.0) {
            result.t = 0.0;
            result.p_value = 1.0;
        } else {
            result.t = mean > 0 ? INFINITY : -INFINITY;
            result.p_value = 0.0;
            result.degenerate = true;
        }
        return result;
    }
    result.t = mean / (sd / std::sqrt(n));
    const boost::math::students_t dist(static_cast<double>(result.df));
    result.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(result.t)));
    return result;
}

}  // namespace nseg
