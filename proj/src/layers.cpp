#include "nseg/layers.hpp"

#include <cmath>

#include "nseg/errors.hpp"

namespace nseg {

Parameter& ParameterStore::add(std::string name, Matrix value) {
    if (find(name) != nullptr) {
        throw ConfigError("duplicate parameter name '" + name + "'");
    }
    params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
    return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
    for (auto& p : params_) {
        if (p->name == name) return p.get();
    }
    return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
    for (const auto& p : params_) {
        if (p->name == name) return p.get();
    }
    return nullptr;
}

std::vector<Parameter*> ParameterStore::all() const {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

std::vector<Matrix> ParameterStore::snapshot() const {
    std::vector<Matrix> values;
    values.reserve(params_.size());
    for (const auto& p : params_) values.push_back(p->value);
    return values;
}

void ParameterStore::restore(const std::vector<Matrix>& values) {
    if (values.size() != params_.size()) {
        throw ShapeError("restore: snapshot has " + std::to_string(values.size()) + " tensors, store has " +
                         std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) params_[i]->value = values[i];
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-scale, scale);
    }
    return m;
}

Matrix xavier_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    return uniform_matrix(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

ad::Var apply_dropout(const ad::Var& x, double rate, Rng* rng) {
    if (rng == nullptr || rate <= 0.0) return x;
    Matrix mask(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = rng->bernoulli(rate) ? 0.0 : 1.0;
    }
    return ad::dropout(x, mask, rate);
}

std::size_t EmbeddingDims::field(Gram gram, Field field) const {
    const bool uni = gram == Gram::Uni;
    switch (field) {
        case Field::Word: return uni ? uni_word : ngram_word;
        case Field::Pos: return uni ? uni_pos : ngram_pos;
        case Field::Type: return uni ? uni_type : ngram_type;
    }
    return 0;
}

std::size_t EmbeddingDims::gram(Gram g) const {
    return field(g, Field::Word) + field(g, Field::Pos) + field(g, Field::Type);
}

EmbeddingTables::EmbeddingTables(ParameterStore& store, const Vocab& vocab, const EmbeddingDims& dims, Rng& rng)
    : dims_(dims) {
    for (Gram gram : kGrams) {
        for (Field field : kFields) {
            const std::string name =
                "embed." + std::string(gram_name(gram)) + "." + std::string(field_name(field));
            const auto rows = static_cast<Eigen::Index>(vocab.size(gram, field));
            const auto cols = static_cast<Eigen::Index>(dims.field(gram, field));
            tables_[static_cast<std::size_t>(gram) * 3 + static_cast<std::size_t>(field)] =
                &store.add(name, uniform_matrix(rows, cols, 0.1, rng));
        }
    }
}

Parameter& EmbeddingTables::table(Gram gram, Field field) const {
    return *tables_[static_cast<std::size_t>(gram) * 3 + static_cast<std::size_t>(field)];
}

std::size_t EmbeddingTables::dim(Gram gram) const { return dims_.gram(gram); }

ad::Var EmbeddingTables::embed(ad::Tape& tape, Gram gram, std::span<const FieldIds> ids) const {
    std::array<ad::Var, 3> parts;
    std::vector<int> column(ids.size());
    for (Field field : kFields) {
        const auto f = static_cast<std::size_t>(field);
        for (std::size_t t = 0; t < ids.size(); ++t) column[t] = ids[t][f];
        parts[f] = ad::embedding(tape, table(gram, field), column);
    }
    return ad::concat_cols(parts);
}

GramEmbeddings embed(ad::Tape& tape, const NgramView& view, const EmbeddingTables& tables) {
    return {tables.embed(tape, Gram::Uni, view.uni), tables.embed(tape, Gram::Bi, view.bi),
            tables.embed(tape, Gram::Tri, view.tri)};
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    const auto i = static_cast<Eigen::Index>(in);
    const auto o = static_cast<Eigen::Index>(out);
    weight_ = &store.add(name + ".weight", xavier_matrix(i, o, rng));
    bias_ = &store.add(name + ".bias", Matrix::Zero(1, o));
}

ad::Var Linear::operator()(ad::Tape& tape, const ad::Var& x) const {
    return ad::add_row(ad::matmul(x, tape.param(*weight_)), tape.param(*bias_));
}

LstmParams make_lstm(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                     Rng& rng) {
    const auto i = static_cast<Eigen::Index>(in);
    const auto h = static_cast<Eigen::Index>(hidden);
    LstmParams p;
    p.w_input = &store.add(name + ".w_input", xavier_matrix(i, 4 * h, rng));
    p.w_hidden = &store.add(name + ".w_hidden", xavier_matrix(h, 4 * h, rng));
    Matrix bias = Matrix::Zero(1, 4 * h);
    bias.middleCols(h, h).setOnes();  // forget gate
    p.bias = &store.add(name + ".bias", std::move(bias));
    return p;
}

ad::Var lstm(ad::Tape& tape, const ad::Var& x, const LstmParams& params, bool reverse) {
    const auto n = x.rows();
    const auto h = static_cast<Eigen::Index>(params.hidden());
    if (x.cols() != static_cast<Eigen::Index>(params.input())) {
        throw ShapeError("lstm: input width " + std::to_string(x.cols()) + " does not match " +
                         std::to_string(params.input()));
    }
    const ad::Var projected = ad::add_row(ad::matmul(x, tape.param(*params.w_input)), tape.param(*params.bias));
    const ad::Var w_hidden = tape.param(*params.w_hidden);
    std::vector<ad::Var> states(static_cast<std::size_t>(n));
    ad::Var hidden;
    ad::Var cell;
    for (Eigen::Index step = 0; step < n; ++step) {
        const Eigen::Index t = reverse ? n - 1 - step : step;
        ad::Var gates = ad::slice_rows(projected, t, 1);
        if (step > 0) gates = ad::add(gates, ad::matmul(hidden, w_hidden));
        const ad::Var in_gate = ad::sigmoid(ad::slice_cols(gates, 0, h));
        const ad::Var forget_gate = ad::sigmoid(ad::slice_cols(gates, h, h));
        const ad::Var candidate = ad::tanh(ad::slice_cols(gates, 2 * h, h));
        const ad::Var out_gate = ad::sigmoid(ad::slice_cols(gates, 3 * h, h));
        cell = step > 0 ? ad::add(ad::mul(forget_gate, cell), ad::mul(in_gate, candidate))
                        : ad::mul(in_gate, candidate);
        hidden = ad::mul(out_gate, ad::tanh(cell));
        states[static_cast<std::size_t>(t)] = hidden;
    }
    return ad::concat_rows(states);
}

BiLstm::BiLstm(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng)
    : fwd_(make_lstm(store, name + ".fwd", in, hidden, rng)), bwd_(make_lstm(store, name + ".bwd", in, hidden, rng)) {}

ad::Var BiLstm::operator()(ad::Tape& tape, const ad::Var& x) const {
    const std::array<ad::Var, 2> both = {lstm(tape, x, fwd_, false), lstm(tape, x, bwd_, true)};
    return ad::concat_cols(both);
}

StackedBiLstm::StackedBiLstm(ParameterStore& store, const std::string& name, std::size_t in,
                             std::size_t hidden, std::size_t layers, Rng& rng) {
    if (layers == 0) throw ConfigError("stacked BiLSTM needs at least one layer");
    for (std::size_t k = 0; k < layers; ++k) {
        layers_.emplace_back(store, name + "." + std::to_string(k), k == 0 ? in : 2 * hidden, hidden, rng);
    }
}

ad::Var StackedBiLstm::operator()(ad::Tape& tape, const ad::Var& x, double dropout, Rng* rng) const {
    ad::Var h = x;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        if (k > 0) h = apply_dropout(h, dropout, rng);
        h = layers_[k](tape, h);
    }
    return h;
}

SelfAttention::SelfAttention(ParameterStore& store, const std::string& name, std::size_t in,
                             std::size_t projection, std::size_t out, Rng& rng) {
    const auto i = static_cast<Eigen::Index>(in);
    const auto p = static_cast<Eigen::Index>(projection);
    wq_ = &store.add(name + ".query", xavier_matrix(i, p, rng));
    wk_ = &store.add(name + ".key", xavier_matrix(i, p, rng));
    wv_ = &store.add(name + ".value", xavier_matrix(i, p, rng));
    out_ = Linear(store, name + ".out", projection + in, out, rng);
}

SelfAttention::Output SelfAttention::operator()(ad::Tape& tape, const ad::Var& x) const {
    const ad::Var q = ad::matmul(x, tape.param(*wq_));
    const ad::Var k = ad::matmul(x, tape.param(*wk_));
    const ad::Var v = ad::matmul(x, tape.param(*wv_));
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(wq_->value.cols()));
    const ad::Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_d);
    const ad::Var weights = ad::softmax_rows(scores);
    const std::array<ad::Var, 2> joined = {ad::matmul(weights, v), x};
    return {out_(tape, ad::concat_cols(joined)), weights};
}

}  // namespace nseg
