#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nseg/corpus.hpp"
#include "nseg/crf.hpp"
#include "nseg/layers.hpp"
#include "nseg/vocab.hpp"

namespace nseg {

struct ModelConfig {
    Task task = Task::Segmentation;
    EmbeddingDims embedding;
    std::size_t lstm_hidden = 25;
    std::size_t lstm_layers = 2;  // K, stacked BiLSTM depth in the high-level module
    std::size_t attention_output = 50;
    std::size_t low_attention_projection = 64;
    std::size_t high_attention_projection = 25;
    double local_dropout = 0.30;
    double layer_dropout = 0.15;

    std::size_t tag_count() const { return TagSet(task).size(); }
    // Width of the nine-way n-gram concatenation fed to the low-level BiLSTM.
    std::size_t local_dim() const;

    void validate() const;

    // Sets one field from its textual key (see keys()); ConfigError on an
    // unknown key or malformed value.
    void set(const std::string& key, const std::string& value);
    std::map<std::string, std::string> to_map() const;
    static std::vector<std::string> keys();
};

enum class Mode { Train, Eval };

struct ForwardOptions {
    Mode mode = Mode::Eval;
    Rng* rng = nullptr;  // required in Train mode
    // Dropout on the model inputs (r_local and the distant-structure input);
    // a negative value selects ModelConfig::local_dropout.
    double input_dropout = -1.0;
    // Ablation hook: replace R_distant with zeros.
    bool zero_distant = false;
};

struct ForwardResult {
    ad::Var e_uni;        // N x |e_uni|
    ad::Var r_local;      // N x local_dim
    ad::Var r_recurrent;  // N x 2H
    ad::Var r_distant;    // N x attention_output
    ad::Var h;            // N x attention_output
    ad::Var logits;       // N x S, the virtual logits G
};

// Low-level local + distant structures, stacked BiLSTM with self-attention,
// virtual-logit projection and CRF. Also owns the two auxiliary projections
// used by cross-view training.
class SegmenterModel {
public:
    SegmenterModel(const ModelConfig& config, Vocab vocab, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    const Vocab& vocab() const { return vocab_; }
    TagSet tags() const { return TagSet(config_.task); }
    ParameterStore& parameters() { return store_; }
    const ParameterStore& parameters() const { return store_; }

    NgramView view(const std::vector<Token>& tokens) const { return extract_ngrams(tokens, vocab_); }

    // r_local,t = e_uni[t-1..t+1] ⊕ e_bi[t-1..t+1] ⊕ e_tri[t-1..t+1]; neighbours
    // outside the sequence embed the PAD id.
    ad::Var local_representation(ad::Tape& tape, const NgramView& view) const;
    ad::Var unigram_embeddings(ad::Tape& tape, const NgramView& view) const;

    ForwardResult forward(ad::Tape& tape, const NgramView& view, const ForwardOptions& options) const;

    ad::Var nll(ad::Tape& tape, const NgramView& view, std::span<const int> gold,
                const ForwardOptions& options) const;

    Matrix logits(const NgramView& view) const;
    std::vector<int> predict(const std::vector<Token>& tokens) const;

    const EmbeddingTables& embeddings() const { return embeddings_; }
    const BiLstm& low_lstm() const { return low_lstm_; }
    const SelfAttention& low_attention() const { return low_attention_; }
    const StackedBiLstm& stack() const { return stack_; }
    const SelfAttention& high_attention() const { return high_attention_; }
    const Linear& output() const { return output_; }
    const Linear& aux_local() const { return aux_local_; }
    const Linear& aux_distant() const { return aux_distant_; }
    const CrfLayer& crf() const { return crf_; }

    // Parameters reached by the cross-view loss: embeddings, the low-level
    // BiLSTM and attention, and both auxiliary heads.
    std::vector<Parameter*> low_level_parameters() const;

private:
    ModelConfig config_;
    Vocab vocab_;
    ParameterStore store_;
    EmbeddingTables embeddings_;
    BiLstm low_lstm_;
    SelfAttention low_attention_;
    StackedBiLstm stack_;
    SelfAttention high_attention_;
    Linear output_;
    Linear aux_local_;
    Linear aux_distant_;
    CrfLayer crf_;
};

// Checkpoint container:
//   nseg-checkpoint 1
//   config <bytes>\n<key: value lines>
//   vocab <bytes>\n<vocab text>
//   params <count>\n
//   then per tensor: <name> <rows> <cols>\n<rows*cols little-endian float64, column-major>
void save_checkpoint(const std::string& path, const SegmenterModel& model);
SegmenterModel load_checkpoint(const std::string& path);

}  // namespace nseg
