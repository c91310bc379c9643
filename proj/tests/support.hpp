#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nseg/config.hpp"
#include "nseg/corpus.hpp"
#include "nseg/crf.hpp"
#include "nseg/model.hpp"
#include "nseg/rng.hpp"
#include "nseg/vocab.hpp"

namespace nseg::testing {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi, Rng& rng);

// Exhaustive enumeration over all S^N tag paths.
struct BruteForceCrf {
    double log_partition = 0.0;
    double best_score = 0.0;
    std::vector<int> best_path;
    Matrix marginals;
};

BruteForceCrf brute_force_crf(const Matrix& logits, const CrfParams& params);
double brute_force_path_score(const Matrix& logits, const std::vector<int>& path, const CrfParams& params);

// Model sizes small enough for finite-difference checks (all dims <= 8).
ModelConfig tiny_model_config(Task task = Task::Segmentation);

// Orchid preset with every size scaled down for desk-scale training.
RunConfig small_orchid_config();

// Random labeled passage over a small closed vocabulary.
TaggedSequence random_passage(std::size_t length, Task task, Rng& rng);

struct SyntheticCorpus {
    std::vector<TaggedSequence> passages;
};

// Segmentation corpus over a 50-word vocabulary. Every sentence ends with a
// final-particle bigram; single particles are scattered mid-sentence as
// distractors with probability distractor_rate per content word. A token is
// sb exactly when it opens a passage or follows a final bigram.
SyntheticCorpus synthetic_corpus(std::size_t passages, std::uint64_t seed, double distractor_rate = 0.10);

// Passages whose sentence lengths are drawn from [1, seq_len].
std::vector<TaggedSequence> random_sentence_profile(std::size_t seq_len, Task task, Rng& rng);

// Empty when every packing invariant holds, otherwise a description of the
// first violation.
std::string check_packing(const std::vector<TaggedSequence>& passages, const std::vector<PackedSequence>& packed,
                          PackingPolicy policy, std::size_t seq_len, const TagSet& tags);

// Empty when no surviving id in the masked view covers a dropped token and
// every other id is unchanged.
std::string check_mask_closure(const NgramView& original, const MaskedView& masked);

std::string temp_dir(const std::string& name);

}  // namespace nseg::testing
