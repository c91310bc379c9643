#include "nseg/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "nseg/errors.hpp"
#include "nseg/rng.hpp"

namespace nseg {

namespace {

// Decodes one code point starting at `i`; malformed bytes decode as
// themselves so classification stays total.
char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto lead = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    char32_t cp = lead;
    if (lead >= 0xF0 && lead < 0xF8) {
        extra = 3;
        cp = lead & 0x07;
    } else if (lead >= 0xE0) {
        extra = 2;
        cp = lead & 0x0F;
    } else if (lead >= 0xC0) {
        extra = 1;
        cp = lead & 0x1F;
    }
    if (extra == 0 || i + extra >= s.size()) {
        ++i;
        return lead;
    }
    for (std::size_t k = 1; k <= extra; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) {
            ++i;
            return lead;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    i += extra + 1;
    return cp;
}

bool is_space(char32_t c) {
    return c == U' ' || (c >= U'\t' && c <= U'\r') || c == 0x00A0 || (c >= 0x2000 && c <= 0x200B) ||
           c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

bool is_digit(char32_t c) {
    return (c >= U'0' && c <= U'9') || (c >= 0x0E50 && c <= 0x0E59);
}

bool is_punct(char32_t c) {
    if (c < 0x80) {
        return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
               (c >= 0x7B && c <= 0x7E);
    }
    // Latin-1 punctuation, general punctuation, CJK punctuation and the
    // Thai abbreviation/repetition/section marks.
    return c == 0x00A1 || c == 0x00A7 || c == 0x00AB || c == 0x00B6 || c == 0x00B7 ||
           c == 0x00BB || c == 0x00BF || (c >= 0x2010 && c <= 0x2027) ||
           (c >= 0x2030 && c <= 0x205E) || (c >= 0x3001 && c <= 0x3003) ||
           (c >= 0x3008 && c <= 0x3011) || c == 0x0E2F || c == 0x0E46 || c == 0x0E4F ||
           c == 0x0E5A || c == 0x0E5B;
}

bool is_thai(char32_t c) { return c >= 0x0E00 && c <= 0x0E7F; }

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

}  // namespace

std::string_view word_type_name(WordType type) {
    switch (type) {
        case WordType::English: return "English";
        case WordType::Thai: return "Thai";
        case WordType::Punctuation: return "Punctuation";
        case WordType::Digit: return "Digit";
        case WordType::Space: return "Space";
    }
    return "English";
}

WordType classify_word_type(std::string_view word) {
    if (word.empty()) {
        throw InvalidInput("classify_word_type: empty word");
    }
    bool all_space = true;
    bool all_digit = true;
    bool all_punct = true;
    bool any_thai = false;
    for (std::size_t i = 0; i < word.size();) {
        const char32_t c = next_code_point(word, i);
        all_space = all_space && is_space(c);
        all_digit = all_digit && is_digit(c);
        all_punct = all_punct && is_punct(c);
        any_thai = any_thai || is_thai(c);
    }
    if (all_space) return WordType::Space;
    if (all_digit) return WordType::Digit;
    if (all_punct) return WordType::Punctuation;
    if (any_thai) return WordType::Thai;
    return WordType::English;
}

Token::Token(std::string w, std::string p)
    : word(std::move(w)), pos(std::move(p)), type(classify_word_type(word)) {}

std::string_view task_name(Task task) {
    return task == Task::Segmentation ? "segmentation" : "punctuation";
}

Task parse_task(std::string_view name) {
    if (name == "segmentation") return Task::Segmentation;
    if (name == "punctuation") return Task::Punctuation;
    throw ConfigError("unknown task '" + std::string(name) + "'");
}

TagSet::TagSet(Task task) : task_(task) {
    if (task == Task::Segmentation) {
        names_ = {"sb", "nsb"};
    } else {
        names_ = {"O", "COMMA", "PERIOD", "QUESTION"};
    }
}

const std::string& TagSet::name(int tag) const {
    if (!contains(tag)) {
        throw InvalidInput("tag index " + std::to_string(tag) + " out of range");
    }
    return names_[static_cast<std::size_t>(tag)];
}

int TagSet::find(std::string_view text) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == text) return static_cast<int>(i);
    }
    return -1;
}

std::vector<TaggedSequence> parse_corpus(std::istream& in, const std::string& source_name,
                                         Schema schema, const TagSet& tags) {
    const std::size_t columns = schema == Schema::Labeled ? 3 : 2;
    std::vector<TaggedSequence> passages;
    TaggedSequence current;
    std::string line;
    std::size_t line_no = 0;
    auto flush = [&] {
        if (!current.tokens.empty()) {
            passages.push_back(std::move(current));
            current = TaggedSequence{};
        }
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush();
            continue;
        }
        if (line.front() == '#') continue;
        const auto fields = split_tabs(line);
        if (fields.size() != columns) {
            throw ParseError(source_name, line_no,
                             "expected " + std::to_string(columns) + " tab-separated columns, got " +
                                 std::to_string(fields.size()));
        }
        if (fields[0].empty()) {
            throw ParseError(source_name, line_no, "empty word");
        }
        current.tokens.emplace_back(std::string(fields[0]), std::string(fields[1]));
        if (schema == Schema::Labeled) {
            const int t = tags.find(fields[2]);
            if (t < 0) {
                throw ParseError(source_name, line_no, "unknown tag '" + std::string(fields[2]) + "'");
            }
            current.tags.push_back(t);
        }
    }
    flush();
    return passages;
}

std::vector<TaggedSequence> parse_corpus_file(const std::string& path, Schema schema,
                                              const TagSet& tags) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidInput("cannot open corpus file '" + path + "'");
    }
    return parse_corpus(in, path, schema, tags);
}

void write_corpus(std::ostream& out, const std::vector<TaggedSequence>& passages,
                  const TagSet& tags) {
    bool first = true;
    for (const auto& p : passages) {
        if (!first) out << '\n';
        first = false;
        for (std::size_t t = 0; t < p.tokens.size(); ++t) {
            out << p.tokens[t].word << '\t' << p.tokens[t].pos;
            if (p.labeled()) out << '\t' << tags.name(p.tags[t]);
            out << '\n';
        }
    }
}

void write_corpus_file(const std::string& path, const std::vector<TaggedSequence>& passages,
                       const TagSet& tags) {
    std::ofstream out(path);
    if (!out) {
        throw InvalidInput("cannot write corpus file '" + path + "'");
    }
    write_corpus(out, passages, tags);
}

std::vector<std::size_t> sentence_starts(const TaggedSequence& passage, const TagSet& tags) {
    std::vector<std::size_t> starts;
    if (passage.tokens.empty()) return starts;
    starts.push_back(0);
    if (!passage.labeled()) return starts;
    for (std::size_t t = 1; t < passage.tags.size(); ++t) {
        const bool start = tags.task() == Task::Segmentation
                               ? passage.tags[t] == tag::kSb
                               : (passage.tags[t - 1] == tag::kPeriod ||
                                  passage.tags[t - 1] == tag::kQuestion);
        if (start) starts.push_back(t);
    }
    return starts;
}

PackingPolicy parse_packing_policy(std::string_view name) {
    if (name == "orchid") return PackingPolicy::Orchid;
    if (name == "iwslt") return PackingPolicy::Iwslt;
    throw ConfigError("unknown packing policy '" + std::string(name) + "'");
}

std::string_view packing_policy_name(PackingPolicy policy) {
    return policy == PackingPolicy::Orchid ? "orchid" : "iwslt";
}

namespace {

struct SentenceSpan {
    std::size_t passage;
    std::size_t begin;
    std::size_t end;

    std::size_t size() const { return end - begin; }
};

void append_span(TaggedSequence& out, const TaggedSequence& src, std::size_t begin, std::size_t end) {
    out.tokens.insert(out.tokens.end(), src.tokens.begin() + static_cast<std::ptrdiff_t>(begin),
                      src.tokens.begin() + static_cast<std::ptrdiff_t>(end));
    if (src.labeled()) {
        out.tags.insert(out.tags.end(), src.tags.begin() + static_cast<std::ptrdiff_t>(begin),
                        src.tags.begin() + static_cast<std::ptrdiff_t>(end));
    }
}

}  // namespace

std::vector<PackedSequence> build_sequences(const std::vector<TaggedSequence>& passages,
                                            PackingPolicy policy, std::size_t seq_len,
                                            const TagSet& tags) {
    if (seq_len == 0) {
        throw ConfigError("seq_len must be positive");
    }
    std::vector<SentenceSpan> sentences;
    for (std::size_t p = 0; p < passages.size(); ++p) {
        const auto starts = sentence_starts(passages[p], tags);
        for (std::size_t i = 0; i < starts.size(); ++i) {
            const std::size_t end = i + 1 < starts.size() ? starts[i + 1] : passages[p].size();
            sentences.push_back({p, starts[i], end});
            if (end - starts[i] > seq_len) {
                throw ConfigError("sentence " + std::to_string(i) + " of passage " +
                                  std::to_string(p) + " has " + std::to_string(end - starts[i]) +
                                  " tokens, longer than seq_len " + std::to_string(seq_len));
            }
        }
    }

    std::vector<PackedSequence> out;
    if (policy == PackingPolicy::Orchid) {
        PackedSequence current;
        for (const auto& s : sentences) {
            if (current.sequence.size() + s.size() > seq_len) {
                out.push_back(std::move(current));
                current = PackedSequence{};
            }
            append_span(current.sequence, passages[s.passage], s.begin, s.end);
        }
        if (current.sequence.size() > 0) out.push_back(std::move(current));
        return out;
    }

    std::size_t next = 0;
    std::size_t carried = 0;
    while (next < sentences.size()) {
        PackedSequence current;
        current.duplicated_prefix = carried;
        carried = 0;
        std::size_t i = next;
        while (i < sentences.size() && current.sequence.size() < seq_len) {
            const auto& s = sentences[i];
            const std::size_t room = seq_len - current.sequence.size();
            if (s.size() <= room) {
                append_span(current.sequence, passages[s.passage], s.begin, s.end);
                ++i;
            } else {
                append_span(current.sequence, passages[s.passage], s.begin, s.begin + room);
                carried = room;
                break;
            }
        }
        next = i;
        out.push_back(std::move(current));
    }
    return out;
}

std::vector<TaggedSequence> chunk_sequences(const std::vector<TaggedSequence>& passages,
                                            std::size_t seq_len) {
    if (seq_len == 0) {
        throw ConfigError("seq_len must be positive");
    }
    std::vector<TaggedSequence> out;
    for (const auto& p : passages) {
        for (std::size_t begin = 0; begin < p.size(); begin += seq_len) {
            TaggedSequence chunk;
            append_span(chunk, p, begin, std::min(p.size(), begin + seq_len));
            out.push_back(std::move(chunk));
        }
    }
    return out;
}

std::vector<std::size_t> FoldSplit::members(std::size_t fold) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] == fold) idx.push_back(i);
    }
    return idx;
}

std::vector<std::size_t> FoldSplit::sizes() const {
    std::vector<std::size_t> counts(fold_count, 0);
    for (auto f : assignments) ++counts[f];
    return counts;
}

FoldSplit split_folds(std::size_t passage_count, std::size_t k, std::uint64_t seed) {
    if (k < 2) {
        throw InvalidInput("split_folds: k must be at least 2");
    }
    if (k > passage_count) {
        throw InvalidInput("split_folds: k=" + std::to_string(k) + " exceeds passage count " +
                           std::to_string(passage_count));
    }
    std::vector<std::size_t> order(passage_count);
    for (std::size_t i = 0; i < passage_count; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    FoldSplit split;
    split.fold_count = k;
    split.assignments.assign(passage_count, 0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        split.assignments[order[i]] = i % k;
    }
    return split;
}

}  // namespace nseg
