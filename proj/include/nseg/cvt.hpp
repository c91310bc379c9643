#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "nseg/model.hpp"

namespace nseg {

struct CvtConfig {
    double drop_rate = 0.30;
    std::size_t unlabeled_batches = 1;  // B
    double unlabeled_input_dropout = 0.50;

    void validate() const;
};

// Row-wise softmax of the virtual logits. Used as a fixed target.
Matrix primary_distribution(const Matrix& logits);

// KL(p || q) = Σ p_i ln(p_i / q_i), with 0 ln 0 = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// (1/|D|) Σ_{t∈D} [KL(p_primary,t || p_local,t) + KL(p_primary,t || p_distant,t)],
// with one row per dropped timestep in each matrix. Returns 0 when |D| = 0.
double cvt_loss(const Matrix& primary, const Matrix& local, const Matrix& distant);

// Auxiliary logits at the dropped timesteps (|D| x S). The local head reads
// the low-level BiLSTM over the masked n-gram stream, the distant head reads
// the low-level attention over the masked unigram stream.
ad::Var aux_local_logits(ad::Tape& tape, const SegmenterModel& model, const NgramView& masked,
                         std::span<const std::size_t> dropped, double input_dropout, Rng* rng);
ad::Var aux_distant_logits(ad::Tape& tape, const SegmenterModel& model, const NgramView& masked,
                           std::span<const std::size_t> dropped, double input_dropout, Rng* rng);

// Evaluation-mode distributions over the dropped timesteps; empty when
// dropped is empty.
Matrix aux_local_distribution(const SegmenterModel& model, const NgramView& masked,
                              std::span<const std::size_t> dropped);
Matrix aux_distant_distribution(const SegmenterModel& model, const NgramView& masked,
                                std::span<const std::size_t> dropped);

// Tape form of cvt_loss taking auxiliary logits. `primary` is a constant, so
// no gradient reaches the parameters that produced it.
ad::Var cvt_loss(ad::Tape& tape, const Matrix& primary, const ad::Var& local_logits,
                 const ad::Var& distant_logits);

struct UnlabeledLoss {
    ad::Var loss;
    std::size_t dropped = 0;
};

// One unlabeled sequence: primary target from an evaluation pass on the
// clean input, then masked auxiliary predictions. Empty when no timestep was
// dropped.
std::optional<UnlabeledLoss> unlabeled_loss(ad::Tape& tape, const SegmenterModel& model, const NgramView& view,
                                            const CvtConfig& config, Rng& rng);

}  // namespace nseg
