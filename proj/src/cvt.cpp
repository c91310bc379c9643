#include "nseg/cvt.hpp"

#include <cmath>

#include "nseg/errors.hpp"

namespace nseg {

void CvtConfig::validate() const {
    if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw ConfigError("cvt drop_rate must lie in [0, 1)");
    if (!(unlabeled_input_dropout >= 0.0 && unlabeled_input_dropout < 1.0)) {
        throw ConfigError("cvt unlabeled_input_dropout must lie in [0, 1)");
    }
    if (unlabeled_batches < 1) throw ConfigError("cvt unlabeled_batches (B) must be at least 1");
}

Matrix primary_distribution(const Matrix& logits) {
    Matrix p = logits;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double m = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - m).exp().matrix();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw InvalidInput("kl_divergence: distributions differ in size");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

double cvt_loss(const Matrix& primary, const Matrix& local, const Matrix& distant) {
    if (local.rows() != primary.rows() || distant.rows() != primary.rows() || local.cols() != primary.cols() ||
        distant.cols() != primary.cols()) {
        throw ShapeError("cvt_loss: distributions must share one shape");
    }
    if (primary.rows() == 0) return 0.0;
    double total = 0.0;
    std::vector<double> p(static_cast<std::size_t>(primary.cols()));
    std::vector<double> q(p.size());
    for (Eigen::Index t = 0; t < primary.rows(); ++t) {
        for (Eigen::Index i = 0; i < primary.cols(); ++i) p[static_cast<std::size_t>(i)] = primary(t, i);
        for (const Matrix* aux : {&local, &distant}) {
            for (Eigen::Index i = 0; i < primary.cols(); ++i) q[static_cast<std::size_t>(i)] = (*aux)(t, i);
            total += kl_divergence(p, q);
        }
    }
    return total / static_cast<double>(primary.rows());
}

ad::Var aux_local_logits(ad::Tape& tape, const SegmenterModel& model, const NgramView& masked,
                         std::span<const std::size_t> dropped, double input_dropout, Rng* rng) {
    const ad::Var r_local = apply_dropout(model.local_representation(tape, masked), input_dropout, rng);
    const ad::Var r_recurrent = model.low_lstm()(tape, r_local);
    return model.aux_local()(tape, ad::select_rows(r_recurrent, dropped));
}

ad::Var aux_distant_logits(ad::Tape& tape, const SegmenterModel& model, const NgramView& masked,
                           std::span<const std::size_t> dropped, double input_dropout, Rng* rng) {
    const ad::Var e_uni = apply_dropout(model.unigram_embeddings(tape, masked), input_dropout, rng);
    const ad::Var r_distant = model.low_attention()(tape, e_uni).output;
    return model.aux_distant()(tape, ad::select_rows(r_distant, dropped));
}

Matrix aux_local_distribution(const SegmenterModel& model, const NgramView& masked,
                              std::span<const std::size_t> dropped) {
    if (dropped.empty()) return Matrix(0, static_cast<Eigen::Index>(model.config().tag_count()));
    ad::Tape tape;
    return primary_distribution(aux_local_logits(tape, model, masked, dropped, 0.0, nullptr).value());
}

Matrix aux_distant_distribution(const SegmenterModel& model, const NgramView& masked,
                                std::span<const std::size_t> dropped) {
    if (dropped.empty()) return Matrix(0, static_cast<Eigen::Index>(model.config().tag_count()));
    ad::Tape tape;
    return primary_distribution(aux_distant_logits(tape, model, masked, dropped, 0.0, nullptr).value());
}

ad::Var cvt_loss(ad::Tape& tape, const Matrix& primary, const ad::Var& local_logits, const ad::Var& distant_logits) {
    if (local_logits.rows() != primary.rows() || distant_logits.rows() != primary.rows() ||
        local_logits.cols() != primary.cols() || distant_logits.cols() != primary.cols()) {
        throw ShapeError("cvt_loss: auxiliary logits do not match the primary distribution");
    }
    if (primary.rows() == 0) return tape.constant(Matrix::Zero(1, 1));
    // Σ p ln p is constant; the trainable part is the cross entropy.
    Matrix p_log_p = Matrix::Zero(1, 1);
    for (Eigen::Index k = 0; k < primary.size(); ++k) {
        const double p = primary.data()[k];
        if (p > 0.0) p_log_p(0, 0) += p * std::log(p);
    }
    const ad::Var target = tape.constant(primary);
    const ad::Var cross = ad::add(ad::sum(ad::mul(target, ad::log_softmax_rows(local_logits))),
                                  ad::sum(ad::mul(target, ad::log_softmax_rows(distant_logits))));
    const ad::Var kl = ad::sub(tape.constant(p_log_p * 2.0), cross);
    return ad::scale(kl, 1.0 / static_cast<double>(primary.rows()));
}

std::optional<UnlabeledLoss> unlabeled_loss(ad::Tape& tape, const SegmenterModel& model, const NgramView& view,
                                            const CvtConfig& config, Rng& rng) {
    MaskedView masked = drop_tokens(view, config.drop_rate, rng);
    if (masked.dropped.empty()) return std::nullopt;
    const Matrix primary_all = primary_distribution(model.logits(view));
    Matrix primary(static_cast<Eigen::Index>(masked.dropped.size()), primary_all.cols());
    for (std::size_t i = 0; i < masked.dropped.size(); ++i) {
        primary.row(static_cast<Eigen::Index>(i)) = primary_all.row(static_cast<Eigen::Index>(masked.dropped[i]));
    }
    const ad::Var local =
        aux_local_logits(tape, model, masked.view, masked.dropped, config.unlabeled_input_dropout, &rng);
    const ad::Var distant =
        aux_distant_logits(tape, model, masked.view, masked.dropped, config.unlabeled_input_dropout, &rng);
    return UnlabeledLoss{cvt_loss(tape, primary, local, distant), masked.dropped.size()};
}

}  // namespace nseg
