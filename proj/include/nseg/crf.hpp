#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nseg/autodiff.hpp"

namespace nseg {

class ParameterStore;

// Linear-chain CRF scores over S tags:
//   score(y) = start[y_0] + Σ_t G[t, y_t] + Σ_t trans[y_{t-1}, y_t] + end[y_{N-1}]
struct CrfParams {
    Matrix transitions;  // S x S, row = previous tag, column = next tag
    Matrix start;        // 1 x S
    Matrix end;          // 1 x S

    static CrfParams zeros(std::size_t tags);
    std::size_t tags() const { return static_cast<std::size_t>(transitions.rows()); }
};

double path_score(const Matrix& logits, std::span<const int> tags, const CrfParams& params);

// Forward algorithm in log space.
double log_partition(const Matrix& logits, const CrfParams& params);

// log_partition - path_score(gold).
double nll_loss(const Matrix& logits, std::span<const int> gold, const CrfParams& params);

// Highest-scoring path; ties go to the lowest tag index.
std::vector<int> viterbi(const Matrix& logits, const CrfParams& params);

// Per-position tag posteriors from forward-backward (N x S).
Matrix marginals(const Matrix& logits, const CrfParams& params);

// Gradient of nll_loss: expected minus observed feature counts.
struct CrfGradient {
    Matrix logits;
    Matrix transitions;
    Matrix start;
    Matrix end;
};

CrfGradient nll_gradient(const Matrix& logits, std::span<const int> gold, const CrfParams& params);

// CRF parameters held in a ParameterStore, with a tape-level NLL.
class CrfLayer {
public:
    CrfLayer() = default;
    CrfLayer(ParameterStore& store, const std::string& name, std::size_t tags);

    CrfParams params() const;
    std::size_t tags() const { return static_cast<std::size_t>(transitions_->value.rows()); }

    ad::Var nll(ad::Tape& tape, const ad::Var& logits, std::span<const int> gold) const;
    std::vector<int> decode(const Matrix& logits) const { return viterbi(logits, params()); }

    Parameter& transitions() const { return *transitions_; }
    Parameter& start() const { return *start_; }
    Parameter& end() const { return *end_; }

private:
    Parameter* transitions_ = nullptr;
    Parameter* start_ = nullptr;
    Parameter* end_ = nullptr;
};

}  // namespace nseg
