#include "nseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>

#include "nseg/errors.hpp"
#include "nseg/metrics.hpp"

namespace nseg {

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "adagrad") return OptimizerKind::Adagrad;
    if (name == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::Adagrad ? "adagrad" : "adam"; }

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(l2 >= 0.0)) throw ConfigError("l2 alpha must be non-negative");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must lie in [0, 1)");
}

void adagrad_step(Matrix& param, const Matrix& grad, Matrix& accumulator, double lr) {
    if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
        throw ShapeError("adagrad_step: gradient shape does not match parameter");
    }
    if (accumulator.size() == 0) accumulator = Matrix::Zero(param.rows(), param.cols());
    if (accumulator.rows() != param.rows() || accumulator.cols() != param.cols()) {
        throw ShapeError("adagrad_step: accumulator shape does not match parameter");
    }
    accumulator.array() += grad.array().square();
    param.array() -= lr * grad.array() / (accumulator.array().sqrt() + 1e-8);
}

void adam_step(Matrix& param, const Matrix& grad, AdamState& state, double lr, double beta1, double beta2,
               double epsilon) {
    if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
        throw ShapeError("adam_step: gradient shape does not match parameter");
    }
    if (state.m.size() == 0) {
        state.m = Matrix::Zero(param.rows(), param.cols());
        state.v = Matrix::Zero(param.rows(), param.cols());
    }
    ++state.step;
    state.m = beta1 * state.m + (1.0 - beta1) * grad;
    state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    param.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + epsilon);
}

Optimizer::Slot& Optimizer::slot(const Parameter* p) {
    for (auto& s : slots_) {
        if (s.param == p) return s;
    }
    slots_.push_back(Slot{p, Matrix(), AdamState{}});
    return slots_.back();
}

void Optimizer::step(std::span<Parameter* const> params) {
    for (Parameter* p : params) {
        Slot& s = slot(p);
        if (config_.kind == OptimizerKind::Adagrad) {
            adagrad_step(p->value, p->grad, s.accumulator, config_.learning_rate);
        } else {
            adam_step(p->value, p->grad, s.adam, config_.learning_rate, config_.beta1, config_.beta2,
                      config_.epsilon);
        }
    }
}

nlohmann::json EpochRecord::to_json() const {
    nlohmann::json j = {{"epoch", epoch},
                        {"supervised_loss", supervised_loss},
                        {"l2_penalty", l2_penalty},
                        {"validation", validation}};
    if (cvt_loss) j["cvt_loss"] = *cvt_loss;
    return j;
}

std::vector<int> predict_flat(const SegmenterModel& model, const std::vector<TaggedSequence>& sequences) {
    std::vector<int> out;
    for (const auto& s : sequences) {
        const auto tags = model.predict(s.tokens);
        out.insert(out.end(), tags.begin(), tags.end());
    }
    return out;
}

std::vector<int> gold_flat(const std::vector<TaggedSequence>& sequences) {
    std::vector<int> out;
    for (const auto& s : sequences) {
        if (!s.labeled()) throw InvalidInput("evaluation needs labeled sequences");
        out.insert(out.end(), s.tags.begin(), s.tags.end());
    }
    return out;
}

double evaluate_sequences(const SegmenterModel& model, const std::vector<TaggedSequence>& sequences) {
    const auto gold = gold_flat(sequences);
    const auto pred = predict_flat(model, sequences);
    return task_metric(model.config().task, pred, gold);
}

double l2_penalty(const ParameterStore& store, double alpha) {
    double total = 0.0;
    for (const Parameter* p : store.all()) total += p->value.squaredNorm();
    return alpha * total;
}

namespace {

void check_labeled(const std::vector<TaggedSequence>& seqs, const std::string& what) {
    if (seqs.empty()) throw InvalidInput(what + " split is empty");
    for (const auto& s : seqs) {
        if (!s.labeled() || s.tags.size() != s.tokens.size()) {
            throw InvalidInput(what + " split contains unlabeled sequences");
        }
    }
}

std::vector<NgramView> views_of(const SegmenterModel& model, const std::vector<TaggedSequence>& seqs) {
    std::vector<NgramView> views;
    views.reserve(seqs.size());
    for (const auto& s : seqs) views.push_back(model.view(s.tokens));
    return views;
}

// Cycles through a shuffled index pool, reshuffling after each full pass.
class PoolSampler {
public:
    PoolSampler(std::size_t size, Rng& rng) : order_(size), rng_(rng) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        rng_.shuffle(order_);
    }

    std::vector<std::size_t> take(std::size_t count) {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < count && !order_.empty(); ++i) {
            if (cursor_ == order_.size()) {
                rng_.shuffle(order_);
                cursor_ = 0;
            }
            out.push_back(order_[cursor_++]);
        }
        return out;
    }

private:
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    Rng& rng_;
};

class Loop {
public:
    Loop(SegmenterModel& model, const std::vector<TaggedSequence>& train, const std::vector<TaggedSequence>& dev,
         const OptimizerConfig& config, std::ostream* log)
        : model_(model), train_(train), dev_(dev), config_(config), log_(log), optimizer_(config),
          rng_(config.seed), train_views_(views_of(model, train)) {
        config.validate();
        check_labeled(train, "training");
        check_labeled(dev, "validation");
    }

    double supervised_batch(std::span<const std::size_t> batch, std::size_t epoch, std::size_t index) {
        ParameterStore& store = model_.parameters();
        store.zero_grad();
        const double inv = 1.0 / static_cast<double>(batch.size());
        double total = 0.0;
        for (std::size_t i : batch) {
            ad::Tape tape;
            const ad::Var loss = model_.nll(tape, train_views_[i], train_[i].tags, ForwardOptions{Mode::Train, &rng_});
            total += loss.value()(0, 0);
            tape.backward(ad::scale(loss, inv));
        }
        if (!std::isfinite(total)) throw TrainingError(epoch, index, "non-finite supervised loss");
        const auto params = store.all();
        for (Parameter* p : params) p->grad += (2.0 * config_.l2) * p->value;
        optimizer_.step(params);
        return total;
    }

    // Returns true when training should stop.
    bool end_epoch(EpochRecord record, TrainHistory& history) {
        record.l2_penalty = l2_penalty(model_.parameters(), config_.l2);
        record.validation = evaluate_sequences(model_, dev_);
        if (log_ != nullptr) *log_ << record.to_json().dump() << '\n' << std::flush;
        history.epochs.push_back(record);
        if (history.epochs.size() == 1 || record.validation > history.best_validation) {
            history.best_validation = record.validation;
            history.best_epoch = record.epoch;
            best_ = model_.parameters().snapshot();
            stale_ = 0;
            return false;
        }
        return ++stale_ >= config_.patience;
    }

    void finish() { model_.parameters().restore(best_); }

    Rng& rng() { return rng_; }
    Optimizer& optimizer() { return optimizer_; }
    std::size_t train_size() const { return train_.size(); }

private:
    SegmenterModel& model_;
    const std::vector<TaggedSequence>& train_;
    const std::vector<TaggedSequence>& dev_;
    OptimizerConfig config_;
    std::ostream* log_;
    Optimizer optimizer_;
    Rng rng_;
    std::vector<NgramView> train_views_;
    std::vector<Matrix> best_;
    std::size_t stale_ = 0;
};

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < n; i += batch_size) {
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
    }
    return batches;
}

}  // namespace

TrainHistory train_supervised(SegmenterModel& model, const std::vector<TaggedSequence>& train,
                              const std::vector<TaggedSequence>& dev, const OptimizerConfig& config,
                              std::ostream* log) {
    Loop loop(model, train, dev, config, log);
    TrainHistory history;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto batches = epoch_batches(loop.train_size(), config.batch_size, loop.rng());
        double total = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) total += loop.supervised_batch(batches[b], epoch, b);
        EpochRecord record;
        record.epoch = epoch;
        record.supervised_loss = total / static_cast<double>(loop.train_size());
        if (loop.end_epoch(record, history)) break;
    }
    loop.finish();
    return history;
}

TrainHistory train_cvt(SegmenterModel& model, const std::vector<TaggedSequence>& train,
                       const std::vector<TaggedSequence>& dev, const std::vector<TaggedSequence>& unlabeled,
                       const CvtConfig& cvt, const OptimizerConfig& config, std::ostream* log) {
    cvt.validate();
    if (unlabeled.empty()) throw InvalidInput("cross-view training needs a nonempty unlabeled pool");
    Loop loop(model, train, dev, config, log);
    const auto unlabeled_views = views_of(model, unlabeled);
    // Separate stream: the supervised schedule is unaffected by unlabeled draws.
    Rng unlabeled_rng(config.seed ^ 0x6a09e667f3bcc909ULL);
    PoolSampler pool(unlabeled.size(), unlabeled_rng);
    const auto low_level = model.low_level_parameters();
    TrainHistory history;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto batches = epoch_batches(loop.train_size(), config.batch_size, loop.rng());
        double total = 0.0;
        double cvt_total = 0.0;
        std::size_t cvt_steps = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            total += loop.supervised_batch(batches[b], epoch, b);
            for (std::size_t u = 0; u < cvt.unlabeled_batches; ++u) {
                const auto members = pool.take(config.batch_size);
                std::vector<std::unique_ptr<ad::Tape>> tapes;
                std::vector<ad::Var> losses;
                for (std::size_t i : members) {
                    auto tape = std::make_unique<ad::Tape>();
                    auto result = unlabeled_loss(*tape, model, unlabeled_views[i], cvt, unlabeled_rng);
                    if (!result) continue;
                    losses.push_back(result->loss);
                    tapes.push_back(std::move(tape));
                }
                if (losses.empty()) continue;
                model.parameters().zero_grad();
                const double inv = 1.0 / static_cast<double>(losses.size());
                double step_loss = 0.0;
                for (std::size_t i = 0; i < losses.size(); ++i) {
                    step_loss += losses[i].value()(0, 0);
                    tapes[i]->backward(ad::scale(losses[i], inv));
                }
                step_loss *= inv;
                if (!std::isfinite(step_loss)) throw TrainingError(epoch, b, "non-finite cross-view loss");
                loop.optimizer().step(low_level);
                cvt_total += step_loss;
                ++cvt_steps;
            }
        }
        EpochRecord record;
        record.epoch = epoch;
        record.supervised_loss = total / static_cast<double>(loop.train_size());
        record.cvt_loss = cvt_steps > 0 ? cvt_total / static_cast<double>(cvt_steps) : 0.0;
        if (loop.end_epoch(record, history)) break;
    }
    loop.finish();
    return history;
}

GridSearchResult grid_search(const std::vector<TaggedSequence>& train, const std::vector<TaggedSequence>& dev,
                             std::span<const std::size_t> c_word_candidates,
                             std::span<const std::size_t> c_ngram_candidates, const ModelConfig& model_config,
                             const OptimizerConfig& optimizer, std::uint64_t model_seed) {
    if (c_word_candidates.empty() || c_ngram_candidates.empty()) {
        throw InvalidInput("grid_search: candidate lists must be nonempty");
    }
    std::vector<std::size_t> words(c_word_candidates.begin(), c_word_candidates.end());
    std::vector<std::size_t> ngrams(c_ngram_candidates.begin(), c_ngram_candidates.end());
    std::sort(words.begin(), words.end());
    std::sort(ngrams.begin(), ngrams.end());
    GridSearchResult result;
    bool found = false;
    for (std::size_t cw : words) {
        for (std::size_t cn : ngrams) {
            GridCell cell{cw, cn, std::nullopt, {}};
            try {
                SegmenterModel model(model_config, Vocab::build(train, VocabConfig{cw, cn}), model_seed);
                const TrainHistory h = train_supervised(model, train, dev, optimizer);
                cell.metric = h.best_validation;
                if (!found || h.best_validation > result.best_metric) {
                    found = true;
                    result.best_metric = h.best_validation;
                    result.best_c_word = cw;
                    result.best_c_ngram = cn;
                }
            } catch (const Error& e) {
                cell.error = e.what();
            }
            result.table.push_back(std::move(cell));
        }
    }
    return result;
}

}  // namespace nseg
