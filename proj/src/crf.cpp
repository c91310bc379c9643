#include "nseg/crf.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "nseg/errors.hpp"
#include "nseg/layers.hpp"

namespace nseg {

namespace {

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

void check_shapes(const Matrix& logits, const CrfParams& params) {
    const auto s = static_cast<Eigen::Index>(params.tags());
    if (logits.rows() < 1) {
        throw InvalidInput("crf: sequence must contain at least one timestep");
    }
    if (logits.cols() != s || params.transitions.cols() != s || params.start.cols() != s ||
        params.end.cols() != s || params.start.rows() != 1 || params.end.rows() != 1) {
        throw ShapeError("crf: logits have " + std::to_string(logits.cols()) + " columns, expected " +
                         std::to_string(s) + " tags");
    }
}

void check_gold(const Matrix& logits, std::span<const int> gold) {
    if (static_cast<Eigen::Index>(gold.size()) != logits.rows()) {
        throw InvalidInput("crf: gold length " + std::to_string(gold.size()) + " does not match " +
                           std::to_string(logits.rows()) + " timesteps");
    }
    for (int y : gold) {
        if (y < 0 || y >= logits.cols()) {
            throw InvalidInput("crf: tag index " + std::to_string(y) + " out of range");
        }
    }
}

Matrix forward_scores(const Matrix& logits, const CrfParams& params) {
    const auto n = logits.rows();
    const auto s = logits.cols();
    Matrix alpha(n, s);
    alpha.row(0) = params.start.row(0) + logits.row(0);
    Eigen::RowVectorXd scratch(s);
    for (Eigen::Index t = 1; t < n; ++t) {
        for (Eigen::Index j = 0; j < s; ++j) {
            scratch = alpha.row(t - 1) + params.transitions.col(j).transpose();
            alpha(t, j) = log_sum_exp(scratch) + logits(t, j);
        }
    }
    return alpha;
}

Matrix backward_scores(const Matrix& logits, const CrfParams& params) {
    const auto n = logits.rows();
    const auto s = logits.cols();
    Matrix beta(n, s);
    beta.row(n - 1) = params.end.row(0);
    Eigen::RowVectorXd scratch(s);
    for (Eigen::Index t = n - 1; t-- > 0;) {
        for (Eigen::Index i = 0; i < s; ++i) {
            scratch = params.transitions.row(i) + logits.row(t + 1) + beta.row(t + 1);
            beta(t, i) = log_sum_exp(scratch);
        }
    }
    return beta;
}

}  // namespace

CrfParams CrfParams::zeros(std::size_t tags) {
    const auto s = static_cast<Eigen::Index>(tags);
    return {Matrix::Zero(s, s), Matrix::Zero(1, s), Matrix::Zero(1, s)};
}

double path_score(const Matrix& logits, std::span<const int> tags, const CrfParams& params) {
    check_shapes(logits, params);
    check_gold(logits, tags);
    double score = params.start(0, tags[0]) + params.end(0, tags.back());
    for (std::size_t t = 0; t < tags.size(); ++t) {
        score += logits(static_cast<Eigen::Index>(t), tags[t]);
        if (t > 0) score += params.transitions(tags[t - 1], tags[t]);
    }
    return score;
}

double log_partition(const Matrix& logits, const CrfParams& params) {
    check_shapes(logits, params);
    const Matrix alpha = forward_scores(logits, params);
    return log_sum_exp(alpha.row(alpha.rows() - 1) + params.end.row(0));
}

double nll_loss(const Matrix& logits, std::span<const int> gold, const CrfParams& params) {
    check_shapes(logits, params);
    check_gold(logits, gold);
    return log_partition(logits, params) - path_score(logits, gold, params);
}

std::vector<int> viterbi(const Matrix& logits, const CrfParams& params) {
    check_shapes(logits, params);
    const auto n = logits.rows();
    const auto s = logits.cols();
    Matrix best(n, s);
    Eigen::MatrixXi back(n, s);
    best.row(0) = params.start.row(0) + logits.row(0);
    for (Eigen::Index t = 1; t < n; ++t) {
        for (Eigen::Index j = 0; j < s; ++j) {
            Eigen::Index arg = 0;
            double top = best(t - 1, 0) + params.transitions(0, j);
            for (Eigen::Index i = 1; i < s; ++i) {
                const double v = best(t - 1, i) + params.transitions(i, j);
                if (v > top) {
                    top = v;
                    arg = i;
                }
            }
            best(t, j) = top + logits(t, j);
            back(t, j) = static_cast<int>(arg);
        }
    }
    Eigen::Index last = 0;
    double top = best(n - 1, 0) + params.end(0, 0);
    for (Eigen::Index j = 1; j < s; ++j) {
        const double v = best(n - 1, j) + params.end(0, j);
        if (v > top) {
            top = v;
            last = j;
        }
    }
    std::vector<int> path(static_cast<std::size_t>(n));
    path.back() = static_cast<int>(last);
    for (Eigen::Index t = n - 1; t > 0; --t) {
        path[static_cast<std::size_t>(t - 1)] = back(t, path[static_cast<std::size_t>(t)]);
    }
    return path;
}

Matrix marginals(const Matrix& logits, const CrfParams& params) {
    check_shapes(logits, params);
    const Matrix alpha = forward_scores(logits, params);
    const Matrix beta = backward_scores(logits, params);
    const double log_z = log_sum_exp(alpha.row(alpha.rows() - 1) + params.end.row(0));
    return ((alpha + beta).array() - log_z).exp().matrix();
}

CrfGradient nll_gradient(const Matrix& logits, std::span<const int> gold, const CrfParams& params) {
    check_shapes(logits, params);
    check_gold(logits, gold);
    const auto n = logits.rows();
    const auto s = logits.cols();
    const Matrix alpha = forward_scores(logits, params);
    const Matrix beta = backward_scores(logits, params);
    const double log_z = log_sum_exp(alpha.row(n - 1) + params.end.row(0));
    const Matrix unary = ((alpha + beta).array() - log_z).exp().matrix();

    CrfGradient grad;
    grad.logits = unary;
    grad.start = unary.row(0);
    grad.end = unary.row(n - 1);
    grad.transitions = Matrix::Zero(s, s);
    for (Eigen::Index t = 0; t + 1 < n; ++t) {
        for (Eigen::Index i = 0; i < s; ++i) {
            for (Eigen::Index j = 0; j < s; ++j) {
                grad.transitions(i, j) += std::exp(alpha(t, i) + params.transitions(i, j) + logits(t + 1, j) +
                                                   beta(t + 1, j) - log_z);
            }
        }
    }
    for (Eigen::Index t = 0; t < n; ++t) {
        grad.logits(t, gold[static_cast<std::size_t>(t)]) -= 1.0;
        if (t > 0) grad.transitions(gold[static_cast<std::size_t>(t - 1)], gold[static_cast<std::size_t>(t)]) -= 1.0;
    }
    grad.start(0, gold.front()) -= 1.0;
    grad.end(0, gold.back()) -= 1.0;
    return grad;
}

CrfLayer::CrfLayer(ParameterStore& store, const std::string& name, std::size_t tags) {
    const auto s = static_cast<Eigen::Index>(tags);
    transitions_ = &store.add(name + ".transitions", Matrix::Zero(s, s));
    start_ = &store.add(name + ".start", Matrix::Zero(1, s));
    end_ = &store.add(name + ".end", Matrix::Zero(1, s));
}

CrfParams CrfLayer::params() const { return {transitions_->value, start_->value, end_->value}; }

ad::Var CrfLayer::nll(ad::Tape& tape, const ad::Var& logits, std::span<const int> gold) const {
    const ad::Var trans = tape.param(*transitions_);
    const ad::Var start = tape.param(*start_);
    const ad::Var end = tape.param(*end_);
    const CrfParams p{trans.value(), start.value(), end.value()};
    Matrix loss(1, 1);
    loss(0, 0) = nll_loss(logits.value(), gold, p);
    std::vector<int> y(gold.begin(), gold.end());
    return tape.record(std::move(loss), true,
                       [logits, trans, start, end, y = std::move(y)](ad::Tape& t, const Matrix& g, const Matrix&) {
                           const CrfParams p{trans.value(), start.value(), end.value()};
                           const CrfGradient d = nll_gradient(logits.value(), y, p);
                           const double s = g(0, 0);
                           t.accumulate(logits, d.logits * s);
                           t.accumulate(trans, d.transitions * s);
                           t.accumulate(start, d.start * s);
                           t.accumulate(end, d.end * s);
                       });
}

}  // namespace nseg
