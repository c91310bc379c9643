#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nseg/cvt.hpp"
#include "nseg/model.hpp"

namespace nseg {

enum class OptimizerKind { Adagrad, Adam };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view optimizer_name(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adagrad;
    double learning_rate = 0.02;
    double l2 = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 16;
    std::size_t patience = 5;
    std::size_t max_epochs = 100;
    std::uint64_t seed = 1;

    void validate() const;
};

// accumulator += g²; param -= lr * g / (sqrt(accumulator) + 1e-8)
void adagrad_step(Matrix& param, const Matrix& grad, Matrix& accumulator, double lr);

struct AdamState {
    Matrix m;
    Matrix v;
    std::size_t step = 0;
};

// Bias-corrected Adam update.
void adam_step(Matrix& param, const Matrix& grad, AdamState& state, double lr, double beta1, double beta2,
               double epsilon);

// Per-parameter optimizer state, keyed by Parameter address.
class Optimizer {
public:
    explicit Optimizer(const OptimizerConfig& config) : config_(config) {}

    void step(std::span<Parameter* const> params);

private:
    struct Slot {
        const Parameter* param;
        Matrix accumulator;
        AdamState adam;
    };

    Slot& slot(const Parameter* p);

    OptimizerConfig config_;
    std::vector<Slot> slots_;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double supervised_loss = 0.0;  // mean CRF NLL per labeled sequence
    double l2_penalty = 0.0;       // alpha * Σ w² at the end of the epoch
    std::optional<double> cvt_loss;  // mean cross-view loss per unlabeled step
    double validation = 0.0;

    nlohmann::json to_json() const;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_validation = 0.0;
};

// Validation metric of the model on labeled sequences.
double evaluate_sequences(const SegmenterModel& model, const std::vector<TaggedSequence>& sequences);
std::vector<int> predict_flat(const SegmenterModel& model, const std::vector<TaggedSequence>& sequences);
std::vector<int> gold_flat(const std::vector<TaggedSequence>& sequences);

// alpha * Σ over every parameter of w².
double l2_penalty(const ParameterStore& store, double alpha);

// Mini-batch NLL training with L2 and early stopping. The model ends with
// the parameters of the best validation epoch. Each epoch is written as one
// JSON line to `log` when given.
TrainHistory train_supervised(SegmenterModel& model, const std::vector<TaggedSequence>& train,
                              const std::vector<TaggedSequence>& dev, const OptimizerConfig& config,
                              std::ostream* log = nullptr);

// Alternates one labeled mini-batch with B unlabeled mini-batches drawn
// without replacement from the unlabeled pool. Patience counts labeled epochs.
TrainHistory train_cvt(SegmenterModel& model, const std::vector<TaggedSequence>& train,
                       const std::vector<TaggedSequence>& dev, const std::vector<TaggedSequence>& unlabeled,
                       const CvtConfig& cvt, const OptimizerConfig& config, std::ostream* log = nullptr);

struct GridCell {
    std::size_t c_word = 0;
    std::size_t c_ngram = 0;
    std::optional<double> metric;
    std::string error;
};

struct GridSearchResult {
    std::vector<GridCell> table;
    std::size_t best_c_word = 0;
    std::size_t best_c_ngram = 0;
    double best_metric = 0.0;
};

// Trains one model per (c_word, c_ngram) pair; a failing cell is recorded
// and the search continues. Ties favour the lexicographically smaller pair.
GridSearchResult grid_search(const std::vector<TaggedSequence>& train, const std::vector<TaggedSequence>& dev,
                             std::span<const std::size_t> c_word_candidates,
                             std::span<const std::size_t> c_ngram_candidates, const ModelConfig& model_config,
                             const OptimizerConfig& optimizer, std::uint64_t model_seed);

}  // namespace nseg
