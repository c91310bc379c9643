#include "support.hpp"

#include <array>
#include <cmath>
#include <filesystem>

namespace nseg::testing {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
    return m;
}

double brute_force_path_score(const Matrix& logits, const std::vector<int>& path, const CrfParams& params) {
    double s = params.start(0, path.front()) + params.end(0, path.back());
    for (std::size_t t = 0; t < path.size(); ++t) {
        s += logits(static_cast<Eigen::Index>(t), path[t]);
        if (t > 0) s += params.transitions(path[t - 1], path[t]);
    }
    return s;
}

BruteForceCrf brute_force_crf(const Matrix& logits, const CrfParams& params) {
    const auto n = static_cast<std::size_t>(logits.rows());
    const auto s = static_cast<int>(logits.cols());
    std::vector<int> path(n, 0);
    std::vector<double> scores;
    std::vector<std::vector<int>> paths;
    while (true) {
        scores.push_back(brute_force_path_score(logits, path, params));
        paths.push_back(path);
        std::size_t k = 0;
        while (k < n && ++path[k] == s) path[k++] = 0;
        if (k == n) break;
    }
    BruteForceCrf out;
    double m = scores[0];
    std::size_t best = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > m) {
            m = scores[i];
            best = i;
        }
    }
    double z = 0.0;
    for (double v : scores) z += std::exp(v - m);
    out.log_partition = m + std::log(z);
    out.best_score = m;
    out.best_path = paths[best];
    out.marginals = Matrix::Zero(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double p = std::exp(scores[i] - out.log_partition);
        for (std::size_t t = 0; t < n; ++t) out.marginals(static_cast<Eigen::Index>(t), paths[i][t]) += p;
    }
    return out;
}

ModelConfig tiny_model_config(Task task) {
    ModelConfig c;
    c.task = task;
    c.embedding = EmbeddingDims{4, 2, 2, 2, 1, 1};
    c.lstm_hidden = 3;
    c.lstm_layers = 2;
    c.attention_output = 4;
    c.low_attention_projection = 3;
    c.high_attention_projection = 2;
    c.local_dropout = 0.3;
    c.layer_dropout = 0.15;
    return c;
}

RunConfig small_orchid_config() {
    RunConfig c = RunConfig::from_preset(Preset::Orchid);
    c.model.embedding = EmbeddingDims{16, 8, 8, 8, 4, 4};
    c.model.lstm_hidden = 16;
    c.model.attention_output = 16;
    c.model.low_attention_projection = 16;
    c.model.high_attention_projection = 8;
    c.optimizer.max_epochs = 12;
    return c;
}

TaggedSequence random_passage(std::size_t length, Task task, Rng& rng) {
    static const char* words[] = {"cat", "กิน", "42", ".", "dog", "ข้าว", "run", "?", " ", "na", "kha", "ไป"};
    static const char* pos[] = {"NOUN", "VERB", "PART", "PUNC"};
    const TagSet tags(task);
    TaggedSequence s;
    for (std::size_t t = 0; t < length; ++t) {
        s.tokens.emplace_back(words[rng.index(std::size(words))], pos[rng.index(std::size(pos))]);
        s.tags.push_back(static_cast<int>(rng.index(tags.size())));
    }
    if (task == Task::Segmentation) s.tags[0] = tag::kSb;
    return s;
}

SyntheticCorpus synthetic_corpus(std::size_t passages, std::uint64_t seed, double distractor_rate) {
    static const std::vector<std::string> particles = {"na", "kha", "khrap", "laew", "loei"};
    static const std::vector<std::pair<int, int>> finals = {{0, 1}, {0, 2}, {3, 2}, {4, 1}};
    static const char* content_pos[] = {"NOUN", "VERB", "ADJ"};
    std::vector<std::string> content;
    for (int i = 0; i < 45; ++i) content.push_back("w" + std::to_string(i));

    Rng rng(seed);
    SyntheticCorpus corpus;
    for (std::size_t p = 0; p < passages; ++p) {
        TaggedSequence passage;
        const std::size_t sentences = 1 + rng.index(4);
        for (std::size_t s = 0; s < sentences; ++s) {
            const std::size_t length = 3 + rng.index(6);
            bool first = true;
            auto push = [&](const std::string& w, const std::string& pos) {
                passage.tokens.emplace_back(w, pos);
                passage.tags.push_back(first ? tag::kSb : tag::kNsb);
                first = false;
            };
            for (std::size_t w = 0; w < length; ++w) {
                const std::size_t id = rng.index(content.size());
                push(content[id], content_pos[id % 3]);
                if (w + 1 < length && rng.bernoulli(distractor_rate)) {
                    push(particles[rng.index(particles.size())], "PART");
                }
            }
            const auto& [a, b] = finals[rng.index(finals.size())];
            push(particles[static_cast<std::size_t>(a)], "PART");
            push(particles[static_cast<std::size_t>(b)], "PART");
        }
        corpus.passages.push_back(std::move(passage));
    }
    return corpus;
}

std::vector<TaggedSequence> random_sentence_profile(std::size_t seq_len, Task task, Rng& rng) {
    const TagSet tags(task);
    std::vector<TaggedSequence> passages(1 + rng.index(3));
    const std::size_t sentences = 1 + rng.index(12);
    for (std::size_t s = 0; s < sentences; ++s) {
        TaggedSequence& passage = passages[rng.index(passages.size())];
        const std::size_t length = 1 + rng.index(seq_len);
        for (std::size_t t = 0; t < length; ++t) {
            passage.tokens.emplace_back("s" + std::to_string(s) + "t" + std::to_string(t), "X");
            if (task == Task::Segmentation) {
                passage.tags.push_back(t == 0 ? tag::kSb : tag::kNsb);
            } else if (t + 1 == length) {
                passage.tags.push_back(rng.bernoulli(0.5) ? tag::kPeriod : tag::kQuestion);
            } else {
                passage.tags.push_back(rng.bernoulli(0.2) ? tag::kComma : tag::kO);
            }
        }
    }
    std::erase_if(passages, [](const TaggedSequence& p) { return p.tokens.empty(); });
    return passages;
}

std::string check_packing(const std::vector<TaggedSequence>& passages, const std::vector<PackedSequence>& packed,
                          PackingPolicy policy, std::size_t seq_len, const TagSet& tags) {
    TaggedSequence stream;
    std::vector<bool> starts;
    for (const auto& p : passages) {
        std::vector<bool> local(p.size(), false);
        for (std::size_t s : sentence_starts(p, tags)) local[s] = true;
        stream.tokens.insert(stream.tokens.end(), p.tokens.begin(), p.tokens.end());
        stream.tags.insert(stream.tags.end(), p.tags.begin(), p.tags.end());
        starts.insert(starts.end(), local.begin(), local.end());
    }

    TaggedSequence rebuilt;
    for (std::size_t i = 0; i < packed.size(); ++i) {
        const auto& seq = packed[i].sequence;
        const std::string where = "sequence " + std::to_string(i) + ": ";
        if (seq.size() == 0 || seq.size() > seq_len) return where + "bad length " + std::to_string(seq.size());
        if (seq.tags.size() != seq.size()) return where + "tag count mismatch";
        const std::size_t dup = packed[i].duplicated_prefix;
        if (policy == PackingPolicy::Orchid && dup != 0) return where + "duplicated prefix under orchid";
        if (i == 0 && dup != 0) return where + "first sequence has a duplicated prefix";
        if (dup >= seq.size()) return where + "duplicated prefix covers the whole sequence";
        if (dup > 0) {
            // The repeated tokens must be exactly the tail of the previous sequence.
            const auto& prev = packed[i - 1].sequence;
            if (prev.size() < dup) return where + "duplicated prefix longer than previous sequence";
            for (std::size_t k = 0; k < dup; ++k) {
                if (!(prev.tokens[prev.size() - dup + k] == seq.tokens[k])) return where + "prefix differs";
            }
        }
        if (dup > rebuilt.size()) return where + "duplicated prefix longer than the emitted stream";
        const std::size_t origin = rebuilt.size() - dup;
        if (origin >= stream.size() || !starts[origin]) return where + "does not begin at a sentence start";
        for (std::size_t k = 0; k < seq.size(); ++k) {
            if (origin + k >= stream.size() || !(stream.tokens[origin + k] == seq.tokens[k]) ||
                stream.tags[origin + k] != seq.tags[k]) {
                return where + "token " + std::to_string(k) + " differs from the source stream";
            }
        }
        rebuilt.tokens.insert(rebuilt.tokens.end(), seq.tokens.begin() + static_cast<std::ptrdiff_t>(dup),
                              seq.tokens.end());
        rebuilt.tags.insert(rebuilt.tags.end(), seq.tags.begin() + static_cast<std::ptrdiff_t>(dup), seq.tags.end());
        if (policy == PackingPolicy::Orchid) {
            const std::size_t next = rebuilt.size();
            if (next < stream.size() && !starts[next]) return where + "orchid sequence cuts a sentence";
        }
    }
    if (!(rebuilt == stream)) return "stream not reproduced";
    return {};
}

std::string check_mask_closure(const NgramView& original, const MaskedView& masked) {
    const auto n = static_cast<long>(original.size());
    std::vector<bool> dropped(original.size(), false);
    for (std::size_t d : masked.dropped) dropped[d] = true;
    auto covers_dropped = [&](long t, long lo, long hi) {
        for (long k = t + lo; k <= t + hi; ++k) {
            if (k >= 0 && k < n && dropped[static_cast<std::size_t>(k)]) return true;
        }
        return false;
    };
    const std::array<std::pair<long, long>, 3> spans = {{{0, 0}, {-1, 0}, {-1, 1}}};
    for (Gram g : kGrams) {
        const auto& before = original.stream(g);
        const auto& after = masked.view.stream(g);
        const auto [lo, hi] = spans[static_cast<std::size_t>(g)];
        for (long t = 0; t < n; ++t) {
            const auto ut = static_cast<std::size_t>(t);
            const bool hit = covers_dropped(t, lo, hi);
            for (Field f : kFields) {
                const int id = after[ut][static_cast<std::size_t>(f)];
                if (hit && id != Vocab::kRemoved) {
                    return std::string(gram_name(g)) + " id at t=" + std::to_string(t) + " encodes a dropped token";
                }
                if (!hit && id != before[ut][static_cast<std::size_t>(f)]) {
                    return std::string(gram_name(g)) + " id at t=" + std::to_string(t) + " changed without a drop";
                }
            }
        }
    }
    return {};
}

std::string temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("nseg-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace nseg::testing
