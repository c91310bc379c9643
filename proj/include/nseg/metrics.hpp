#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nseg/corpus.hpp"

namespace nseg {

// Precision/recall/F1 from micro counts. A zero denominator gives 0.
struct Score {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    double precision() const;
    double recall() const;
    double f1() const;
};

struct MetricsReport {
    std::string family;
    Score score;
    std::vector<std::pair<std::string, Score>> per_class;

    nlohmann::json to_json() const;
};

// Positive class sb (segmentation tag set).
MetricsReport f1_sentence_boundary(std::span<const int> pred, std::span<const int> gold);

// Micro-average over COMMA, PERIOD, QUESTION; O is never a positive. Per-class
// scores are included.
MetricsReport f1_overall_punct(std::span<const int> pred, std::span<const int> gold);

// Every non-O tag collapses to one "punct" class.
MetricsReport f1_two_class(std::span<const int> pred, std::span<const int> gold);

// The reports a task is judged by, and the headline value used for model
// selection (sb F1 for segmentation, overall F1 for punctuation).
std::vector<MetricsReport> evaluate_task(Task task, std::span<const int> pred, std::span<const int> gold);
double task_metric(Task task, std::span<const int> pred, std::span<const int> gold);

nlohmann::json reports_to_json(const std::vector<MetricsReport>& reports);

struct TTestResult {
    double mean_difference = 0.0;
    double t = 0.0;
    std::size_t df = 0;
    double p_value = 1.0;
    // Zero-variance differences with a nonzero mean; p_value is reported as 0.
    bool degenerate = false;
};

// Two-tailed paired t-test on per-fold scores, differences taken as a - b.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace nseg
