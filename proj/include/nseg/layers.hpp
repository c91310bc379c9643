#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nseg/autodiff.hpp"
#include "nseg/rng.hpp"
#include "nseg/vocab.hpp"

namespace nseg {

// Owns every learnable tensor of a model in creation order. Layers keep raw
// pointers into the store; addresses are stable for the store's lifetime.
class ParameterStore {
public:
    ParameterStore() = default;
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;
    ParameterStore(ParameterStore&&) = default;
    ParameterStore& operator=(ParameterStore&&) = default;

    Parameter& add(std::string name, Matrix value);
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;

    std::vector<Parameter*> all() const;
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    void zero_grad();

    // Value snapshots, e.g. for keeping the best epoch.
    std::vector<Matrix> snapshot() const;
    void restore(const std::vector<Matrix>& values);

private:
    std::vector<std::unique_ptr<Parameter>> params_;
};

// Uniform in [-scale, scale].
Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng);
// Fan-based (Xavier) uniform initialization.
Matrix xavier_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// Inverted dropout with a Bernoulli keep-mask drawn from rng. Identity when
// rng is null (evaluation) or rate is zero.
ad::Var apply_dropout(const ad::Var& x, double rate, Rng* rng);

struct EmbeddingDims {
    std::size_t uni_word = 64;
    std::size_t uni_pos = 32;
    std::size_t uni_type = 32;
    std::size_t ngram_word = 16;
    std::size_t ngram_pos = 8;
    std::size_t ngram_type = 8;

    std::size_t field(Gram gram, Field field) const;
    std::size_t gram(Gram gram) const;
};

// Word, POS and type tables for each gram order. A gram embedding is the
// concatenation word ⊕ pos ⊕ type.
class EmbeddingTables {
public:
    EmbeddingTables() = default;
    EmbeddingTables(ParameterStore& store, const Vocab& vocab, const EmbeddingDims& dims, Rng& rng);

    Parameter& table(Gram gram, Field field) const;
    std::size_t dim(Gram gram) const;

    // Rows of e_gram for each entry of ids.
    ad::Var embed(ad::Tape& tape, Gram gram, std::span<const FieldIds> ids) const;

private:
    std::array<Parameter*, 9> tables_{};
    EmbeddingDims dims_;
};

struct GramEmbeddings {
    ad::Var uni;
    ad::Var bi;
    ad::Var tri;
};

GramEmbeddings embed(ad::Tape& tape, const NgramView& view, const EmbeddingTables& tables);

class Linear {
public:
    Linear() = default;
    Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);

    ad::Var operator()(ad::Tape& tape, const ad::Var& x) const;

    Parameter& weight() const { return *weight_; }
    Parameter& bias() const { return *bias_; }
    std::size_t in() const { return static_cast<std::size_t>(weight_->value.rows()); }
    std::size_t out() const { return static_cast<std::size_t>(weight_->value.cols()); }

private:
    Parameter* weight_ = nullptr;
    Parameter* bias_ = nullptr;
};

// One LSTM direction. Gate blocks in the 4H columns are ordered
// input, forget, cell, output.
struct LstmParams {
    Parameter* w_input = nullptr;   // in x 4H
    Parameter* w_hidden = nullptr;  // H x 4H
    Parameter* bias = nullptr;      // 1 x 4H

    std::size_t hidden() const { return static_cast<std::size_t>(w_hidden->value.rows()); }
    std::size_t input() const { return static_cast<std::size_t>(w_input->value.rows()); }
};

LstmParams make_lstm(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                     Rng& rng);

// Runs the recurrence over the rows of x (N x in) and returns N x H, row t
// holding the state after reading x_t. reverse reads from the last row.
ad::Var lstm(ad::Tape& tape, const ad::Var& x, const LstmParams& params, bool reverse);

class BiLstm {
public:
    BiLstm() = default;
    BiLstm(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng);

    // N x 2H: forward state ⊕ backward state per timestep.
    ad::Var operator()(ad::Tape& tape, const ad::Var& x) const;

    const LstmParams& forward() const { return fwd_; }
    const LstmParams& backward() const { return bwd_; }
    std::size_t hidden() const { return fwd_.hidden(); }

private:
    LstmParams fwd_;
    LstmParams bwd_;
};

class StackedBiLstm {
public:
    StackedBiLstm() = default;
    StackedBiLstm(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                  std::size_t layers, Rng& rng);

    // Each layer reads the previous layer's output; dropout applies between
    // layers only.
    ad::Var operator()(ad::Tape& tape, const ad::Var& x, double dropout, Rng* rng) const;

    const std::vector<BiLstm>& layers() const { return layers_; }

private:
    std::vector<BiLstm> layers_;
};

// Single-head scaled dot-product self-attention whose attended vector is
// concatenated with the input and projected:
//   out_t = Wo (Σ_s softmax_s(q_t·k_s / sqrt(d)) v_s ⊕ x_t) + b
class SelfAttention {
public:
    struct Output {
        ad::Var output;   // N x out
        ad::Var weights;  // N x N, rows sum to 1
    };

    SelfAttention() = default;
    SelfAttention(ParameterStore& store, const std::string& name, std::size_t in, std::size_t projection,
                  std::size_t out, Rng& rng);

    Output operator()(ad::Tape& tape, const ad::Var& x) const;

    Parameter& query() const { return *wq_; }
    Parameter& key() const { return *wk_; }
    Parameter& value() const { return *wv_; }
    const Linear& output_projection() const { return out_; }
    std::size_t out_dim() const { return out_.out(); }

private:
    Parameter* wq_ = nullptr;
    Parameter* wk_ = nullptr;
    Parameter* wv_ = nullptr;
    Linear out_;
};

}  // namespace nseg
