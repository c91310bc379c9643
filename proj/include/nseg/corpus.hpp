#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace nseg {

enum class WordType : std::uint8_t { English, Thai, Punctuation, Digit, Space };

inline constexpr std::size_t kWordTypeCount = 5;

std::string_view word_type_name(WordType type);

// Space if every code point is whitespace, else Digit if every code point
// is a decimal digit, else Punctuation if every code point is punctuation,
// else Thai if any code point lies in U+0E00..U+0E7F, else English.
// Throws InvalidInput on an empty word.
WordType classify_word_type(std::string_view word);

struct Token {
    std::string word;
    std::string pos;
    WordType type = WordType::English;

    Token() = default;
    Token(std::string w, std::string p);

    bool operator==(const Token&) const = default;
};

enum class Task { Segmentation, Punctuation };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);

// Tag inventories. Segmentation tags mark the first word of a sentence;
// punctuation tags mark the punctuation following a word.
namespace tag {
inline constexpr int kSb = 0;
inline constexpr int kNsb = 1;

inline constexpr int kO = 0;
inline constexpr int kComma = 1;
inline constexpr int kPeriod = 2;
inline constexpr int kQuestion = 3;
}  // namespace tag

class TagSet {
public:
    explicit TagSet(Task task);

    Task task() const { return task_; }
    std::size_t size() const { return names_.size(); }
    const std::string& name(int tag) const;
    // Returns -1 when the text is not a tag of this set.
    int find(std::string_view text) const;
    bool contains(int tag) const { return tag >= 0 && static_cast<std::size_t>(tag) < size(); }

    // Tag that is assigned to a token when nothing is predicted there.
    int background() const { return task_ == Task::Segmentation ? tag::kNsb : tag::kO; }

private:
    Task task_;
    std::vector<std::string> names_;
};

// A passage or a packed training unit. `tags` is empty for unlabeled data,
// otherwise it has one entry per token.
struct TaggedSequence {
    std::vector<Token> tokens;
    std::vector<int> tags;

    bool labeled() const { return !tags.empty(); }
    std::size_t size() const { return tokens.size(); }

    bool operator==(const TaggedSequence&) const = default;
};

enum class Schema { Labeled, Unlabeled };

// TSV corpus: `word<TAB>pos<TAB>tag` (labeled) or `word<TAB>pos`
// (unlabeled); blank lines separate passages; lines starting with '#' are
// comments.
std::vector<TaggedSequence> parse_corpus(std::istream& in, const std::string& source_name,
                                         Schema schema, const TagSet& tags);
std::vector<TaggedSequence> parse_corpus_file(const std::string& path, Schema schema,
                                              const TagSet& tags);

void write_corpus(std::ostream& out, const std::vector<TaggedSequence>& passages,
                  const TagSet& tags);
void write_corpus_file(const std::string& path, const std::vector<TaggedSequence>& passages,
                       const TagSet& tags);

// Offsets of sentence-initial tokens. The first token always starts a
// sentence; segmentation marks further starts with sb, punctuation starts a
// sentence after a PERIOD or QUESTION tag.
std::vector<std::size_t> sentence_starts(const TaggedSequence& passage, const TagSet& tags);

enum class PackingPolicy { Orchid, Iwslt };

PackingPolicy parse_packing_policy(std::string_view name);
std::string_view packing_policy_name(PackingPolicy policy);

struct PackedSequence {
    TaggedSequence sequence;
    // Leading tokens repeated from the previous sequence (iwslt only).
    std::size_t duplicated_prefix = 0;
};

// Concatenates the sentences of all passages and packs them into sequences
// of at most seq_len tokens, each starting at a sentence start.
//   orchid: a sentence that does not fit is moved whole to the next sequence.
//   iwslt:  the sequence is filled up to seq_len; a sentence cut at the end
//           is repeated in full at the start of the next sequence.
// A sentence longer than seq_len is a ConfigError under both policies.
std::vector<PackedSequence> build_sequences(const std::vector<TaggedSequence>& passages,
                                            PackingPolicy policy, std::size_t seq_len,
                                            const TagSet& tags);

// Greedy fixed-size chunking used for unlabeled passages. Chunks never span
// two passages.
std::vector<TaggedSequence> chunk_sequences(const std::vector<TaggedSequence>& passages,
                                            std::size_t seq_len);

struct FoldSplit {
    std::size_t fold_count = 0;
    std::vector<std::size_t> assignments;  // passage index -> fold index

    std::vector<std::size_t> members(std::size_t fold) const;
    std::vector<std::size_t> sizes() const;
};

// Shuffles passage indices with the seed and deals them round-robin.
FoldSplit split_folds(std::size_t passage_count, std::size_t k, std::uint64_t seed);

}  // namespace nseg
