#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nseg/corpus.hpp"
#include "nseg/rng.hpp"

namespace nseg {

enum class Gram { Uni = 0, Bi = 1, Tri = 2 };
enum class Field { Word = 0, Pos = 1, Type = 2 };

inline constexpr std::array<Gram, 3> kGrams = {Gram::Uni, Gram::Bi, Gram::Tri};
inline constexpr std::array<Field, 3> kFields = {Field::Word, Field::Pos, Field::Type};

std::string_view gram_name(Gram gram);
std::string_view field_name(Field field);

struct VocabConfig {
    // Minimum count for unigram entries (all three fields).
    std::size_t c_word = 2;
    // Minimum count for bigram and trigram entries.
    std::size_t c_ngram = 2;

    void validate() const;
};

// Frequency-filtered id maps, one per (gram, field). Bigrams and trigrams
// are atomic entries keyed by the joined member values. Ids 0..2 are the
// PAD, UNK and REMOVED specials in every table.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kRemoved = 2;
    static constexpr int kSpecials = 3;

    Vocab();

    static Vocab build(const std::vector<TaggedSequence>& sequences, const VocabConfig& config);

    // Key of an n-gram from its member values. Members outside the
    // sequence are written as `pad_component()`.
    static std::string join(std::span<const std::string_view> parts);
    static std::string_view pad_component();

    // Unknown keys map to kUnk.
    int id(Gram gram, Field field, std::string_view key) const;
    std::size_t size(Gram gram, Field field) const;
    const std::string& token(Gram gram, Field field, int id) const;

    const VocabConfig& config() const { return config_; }

    void write(std::ostream& out) const;
    static Vocab read(std::istream& in);

    bool operator==(const Vocab& other) const;

private:
    struct Table {
        std::vector<std::string> tokens;
        std::unordered_map<std::string, int> ids;
    };

    Table& table(Gram gram, Field field);
    const Table& table(Gram gram, Field field) const;

    VocabConfig config_;
    std::array<Table, 9> tables_;
};

using FieldIds = std::array<int, 3>;  // indexed by Field

// Per-timestep ids: uni = x_t, bi = (x_{t-1}, x_t), tri = (x_{t-1}, x_t, x_{t+1}).
struct NgramView {
    std::vector<FieldIds> uni;
    std::vector<FieldIds> bi;
    std::vector<FieldIds> tri;

    std::size_t size() const { return uni.size(); }
    const std::vector<FieldIds>& stream(Gram gram) const;
    std::vector<FieldIds>& stream(Gram gram);

    bool operator==(const NgramView&) const = default;
};

NgramView extract_ngrams(const std::vector<Token>& tokens, const Vocab& vocab);

struct MaskedView {
    NgramView view;
    std::vector<std::size_t> dropped;  // ascending timesteps
};

// Replaces the unigram at each dropped timestep and every bigram/trigram
// containing a dropped token with REMOVED.
NgramView mask_timesteps(const NgramView& view, std::span<const std::size_t> dropped);

// Drops each timestep independently with probability drop_rate.
MaskedView drop_tokens(const NgramView& view, double drop_rate, Rng& rng);

}  // namespace nseg
