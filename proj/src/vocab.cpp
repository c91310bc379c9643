#include "nseg/vocab.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "nseg/errors.hpp"

namespace nseg {

namespace {

constexpr char kJoiner = '\x1f';
constexpr std::string_view kPadComponent = "\x1e";
constexpr std::string_view kVocabHeader = "nseg-vocab 1";
const std::array<std::string, 3> kSpecialNames = {"<PAD>", "<UNK>", "<REMOVED>"};

std::size_t table_index(Gram gram, Field field) {
    return static_cast<std::size_t>(gram) * 3 + static_cast<std::size_t>(field);
}

std::string field_value(const Token& token, Field field) {
    switch (field) {
        case Field::Word: return token.word;
        case Field::Pos: return token.pos;
        case Field::Type: return std::string(word_type_name(token.type));
    }
    return token.word;
}

// Field value of the token at offset t, or the pad component out of range.
std::string_view member(const std::vector<std::string>& values, std::ptrdiff_t t) {
    if (t < 0 || t >= static_cast<std::ptrdiff_t>(values.size())) return kPadComponent;
    return values[static_cast<std::size_t>(t)];
}

std::string gram_key(const std::vector<std::string>& values, Gram gram, std::size_t t) {
    const auto ti = static_cast<std::ptrdiff_t>(t);
    switch (gram) {
        case Gram::Uni: return values[t];
        case Gram::Bi: {
            const std::array<std::string_view, 2> parts = {member(values, ti - 1), member(values, ti)};
            return Vocab::join(parts);
        }
        case Gram::Tri: {
            const std::array<std::string_view, 3> parts = {member(values, ti - 1), member(values, ti),
                                                           member(values, ti + 1)};
            return Vocab::join(parts);
        }
    }
    return values[t];
}

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\t': out += "\\t"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\x1f': out += "\\j"; break;
            case '\x1e': out += "\\p"; break;
            default: out += c;
        }
    }
    return out;
}

std::string unescape(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\' || i + 1 == s.size()) {
            out += s[i];
            continue;
        }
        switch (s[++i]) {
            case 't': out += '\t'; break;
            case 'n': out += '\n'; break;
            case 'r': out += '\r'; break;
            case 'j': out += '\x1f'; break;
            case 'p': out += '\x1e'; break;
            default: out += s[i];
        }
    }
    return out;
}

}  // namespace

std::string_view gram_name(Gram gram) {
    switch (gram) {
        case Gram::Uni: return "uni";
        case Gram::Bi: return "bi";
        case Gram::Tri: return "tri";
    }
    return "uni";
}

std::string_view field_name(Field field) {
    switch (field) {
        case Field::Word: return "word";
        case Field::Pos: return "pos";
        case Field::Type: return "type";
    }
    return "word";
}

void VocabConfig::validate() const {
    if (c_word < 1 || c_ngram < 1) {
        throw ConfigError("vocab cutoffs c_word and c_ngram must be at least 1");
    }
}

Vocab::Vocab() {
    for (auto& t : tables_) {
        t.tokens.assign(kSpecialNames.begin(), kSpecialNames.end());
    }
}

std::string Vocab::join(std::span<const std::string_view> parts) {
    std::string key;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) key += kJoiner;
        key += parts[i];
    }
    return key;
}

std::string_view Vocab::pad_component() { return kPadComponent; }

Vocab::Table& Vocab::table(Gram gram, Field field) { return tables_[table_index(gram, field)]; }

const Vocab::Table& Vocab::table(Gram gram, Field field) const {
    return tables_[table_index(gram, field)];
}

Vocab Vocab::build(const std::vector<TaggedSequence>& sequences, const VocabConfig& config) {
    config.validate();
    if (sequences.empty()) {
        throw InvalidInput("build_vocab: no sequences");
    }
    Vocab vocab;
    vocab.config_ = config;
    std::array<std::map<std::string, std::size_t>, 9> counts;
    std::vector<std::string> values;
    for (const auto& seq : sequences) {
        for (Field field : kFields) {
            values.clear();
            for (const auto& tok : seq.tokens) values.push_back(field_value(tok, field));
            for (Gram gram : kGrams) {
                auto& c = counts[table_index(gram, field)];
                for (std::size_t t = 0; t < values.size(); ++t) ++c[gram_key(values, gram, t)];
            }
        }
    }
    for (Gram gram : kGrams) {
        const std::size_t cutoff = gram == Gram::Uni ? config.c_word : config.c_ngram;
        for (Field field : kFields) {
            auto& tab = vocab.table(gram, field);
            // std::map iterates keys in sorted order, so ids are stable.
            for (const auto& [key, n] : counts[table_index(gram, field)]) {
                if (n >= cutoff) {
                    tab.ids.emplace(key, static_cast<int>(tab.tokens.size()));
                    tab.tokens.push_back(key);
                }
            }
        }
    }
    return vocab;
}

int Vocab::id(Gram gram, Field field, std::string_view key) const {
    const auto& tab = table(gram, field);
    const auto it = tab.ids.find(std::string(key));
    return it == tab.ids.end() ? kUnk : it->second;
}

std::size_t Vocab::size(Gram gram, Field field) const { return table(gram, field).tokens.size(); }

const std::string& Vocab::token(Gram gram, Field field, int id) const {
    const auto& tab = table(gram, field);
    if (id < 0 || static_cast<std::size_t>(id) >= tab.tokens.size()) {
        throw InvalidInput("vocab id " + std::to_string(id) + " out of range");
    }
    return tab.tokens[static_cast<std::size_t>(id)];
}

void Vocab::write(std::ostream& out) const {
    out << kVocabHeader << '\n';
    out << "c_word\t" << config_.c_word << "\nc_ngram\t" << config_.c_ngram << '\n';
    for (Gram gram : kGrams) {
        for (Field field : kFields) {
            const auto& tab = table(gram, field);
            for (std::size_t i = kSpecials; i < tab.tokens.size(); ++i) {
                out << gram_name(gram) << '\t' << field_name(field) << '\t' << escape(tab.tokens[i])
                    << '\t' << i << '\n';
            }
        }
    }
}

Vocab Vocab::read(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kVocabHeader) {
        throw InvalidInput("vocab: missing or unsupported header");
    }
    Vocab vocab;
    auto read_cutoff = [&](std::string_view name) -> std::size_t {
        if (!std::getline(in, line) || line.rfind(std::string(name) + "\t", 0) != 0) {
            throw InvalidInput("vocab: expected " + std::string(name));
        }
        return std::stoul(line.substr(name.size() + 1));
    };
    vocab.config_.c_word = read_cutoff("c_word");
    vocab.config_.c_ngram = read_cutoff("c_ngram");
    auto parse_gram = [](std::string_view s) {
        for (Gram g : kGrams)
            if (gram_name(g) == s) return g;
        throw InvalidInput("vocab: unknown gram '" + std::string(s) + "'");
    };
    auto parse_field = [](std::string_view s) {
        for (Field f : kFields)
            if (field_name(f) == s) return f;
        throw InvalidInput("vocab: unknown field '" + std::string(s) + "'");
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::array<std::string, 4> cols;
        std::size_t start = 0;
        for (std::size_t c = 0; c < 4; ++c) {
            const auto tab = line.find('\t', start);
            if ((tab == std::string::npos) != (c == 3)) {
                throw InvalidInput("vocab: malformed line '" + line + "'");
            }
            cols[c] = line.substr(start, tab == std::string::npos ? std::string::npos : tab - start);
            start = tab + 1;
        }
        auto& tab = vocab.table(parse_gram(cols[0]), parse_field(cols[1]));
        const auto id = std::stoul(cols[3]);
        if (id != tab.tokens.size()) {
            throw InvalidInput("vocab: ids must be dense, got " + cols[3]);
        }
        auto key = unescape(cols[2]);
        tab.ids.emplace(key, static_cast<int>(id));
        tab.tokens.push_back(std::move(key));
    }
    return vocab;
}

bool Vocab::operator==(const Vocab& other) const {
    if (config_.c_word != other.config_.c_word || config_.c_ngram != other.config_.c_ngram) {
        return false;
    }
    for (std::size_t i = 0; i < tables_.size(); ++i) {
        if (tables_[i].tokens != other.tables_[i].tokens) return false;
    }
    return true;
}

const std::vector<FieldIds>& NgramView::stream(Gram gram) const {
    return gram == Gram::Uni ? uni : gram == Gram::Bi ? bi : tri;
}

std::vector<FieldIds>& NgramView::stream(Gram gram) {
    return gram == Gram::Uni ? uni : gram == Gram::Bi ? bi : tri;
}

NgramView extract_ngrams(const std::vector<Token>& tokens, const Vocab& vocab) {
    const std::size_t n = tokens.size();
    NgramView view;
    view.uni.resize(n);
    view.bi.resize(n);
    view.tri.resize(n);
    std::vector<std::string> values;
    for (Field field : kFields) {
        values.clear();
        for (const auto& tok : tokens) values.push_back(field_value(tok, field));
        const auto f = static_cast<std::size_t>(field);
        for (Gram gram : kGrams) {
            auto& stream = view.stream(gram);
            for (std::size_t t = 0; t < n; ++t) stream[t][f] = vocab.id(gram, field, gram_key(values, gram, t));
        }
    }
    return view;
}

NgramView mask_timesteps(const NgramView& view, std::span<const std::size_t> dropped) {
    NgramView masked = view;
    const std::size_t n = view.size();
    constexpr FieldIds removed = {Vocab::kRemoved, Vocab::kRemoved, Vocab::kRemoved};
    for (std::size_t d : dropped) {
        if (d >= n) {
            throw InvalidInput("mask_timesteps: timestep " + std::to_string(d) + " out of range");
        }
        masked.uni[d] = removed;
        // bigram at t covers {t-1, t}; trigram at t covers {t-1, t, t+1}.
        masked.bi[d] = removed;
        if (d + 1 < n) masked.bi[d + 1] = removed;
        if (d > 0) masked.tri[d - 1] = removed;
        masked.tri[d] = removed;
        if (d + 1 < n) masked.tri[d + 1] = removed;
    }
    return masked;
}

MaskedView drop_tokens(const NgramView& view, double drop_rate, Rng& rng) {
    if (drop_rate < 0.0 || drop_rate >= 1.0) {
        throw InvalidInput("drop_tokens: drop_rate must lie in [0, 1)");
    }
    MaskedView out;
    for (std::size_t t = 0; t < view.size(); ++t) {
        if (rng.bernoulli(drop_rate)) out.dropped.push_back(t);
    }
    out.view = mask_timesteps(view, out.dropped);
    return out;
}

}  // namespace nseg
