#include "nseg/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "nseg/errors.hpp"

namespace nseg {

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != value.size() || value.front() == '-') {
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
    }
    return static_cast<std::size_t>(v);
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != value.size()) {
        throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
    }
    return v;
}

std::string format_double(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

// Shifts an id stream by one step; the vacated slot gets PAD in every field.
std::vector<FieldIds> shifted(const std::vector<FieldIds>& ids, int offset) {
    constexpr FieldIds pad = {Vocab::kPad, Vocab::kPad, Vocab::kPad};
    const auto n = static_cast<std::ptrdiff_t>(ids.size());
    std::vector<FieldIds> out(ids.size(), pad);
    for (std::ptrdiff_t t = 0; t < n; ++t) {
        const std::ptrdiff_t src = t + offset;
        if (src >= 0 && src < n) out[static_cast<std::size_t>(t)] = ids[static_cast<std::size_t>(src)];
    }
    return out;
}

}  // namespace

std::size_t ModelConfig::local_dim() const {
    return 3 * (embedding.gram(Gram::Uni) + embedding.gram(Gram::Bi) + embedding.gram(Gram::Tri));
}

void ModelConfig::validate() const {
    const std::size_t sizes[] = {embedding.uni_word,   embedding.uni_pos,        embedding.uni_type,
                                 embedding.ngram_word, embedding.ngram_pos,      embedding.ngram_type,
                                 lstm_hidden,          lstm_layers,              attention_output,
                                 low_attention_projection, high_attention_projection};
    for (std::size_t s : sizes) {
        if (s == 0) throw ConfigError("model sizes must all be positive");
    }
    for (double d : {local_dropout, layer_dropout}) {
        if (!(d >= 0.0 && d < 1.0)) throw ConfigError("dropout rates must lie in [0, 1)");
    }
}

std::vector<std::string> ModelConfig::keys() {
    return {"task",          "uni_word_dim",     "uni_pos_dim",      "uni_type_dim",
            "ngram_word_dim", "ngram_pos_dim",   "ngram_type_dim",   "lstm_hidden",
            "lstm_layers",   "attention_output", "low_attention_projection",
            "high_attention_projection", "local_dropout", "layer_dropout"};
}

void ModelConfig::set(const std::string& key, const std::string& value) {
    if (key == "task") task = parse_task(value);
    else if (key == "uni_word_dim") embedding.uni_word = parse_size(key, value);
    else if (key == "uni_pos_dim") embedding.uni_pos = parse_size(key, value);
    else if (key == "uni_type_dim") embedding.uni_type = parse_size(key, value);
    else if (key == "ngram_word_dim") embedding.ngram_word = parse_size(key, value);
    else if (key == "ngram_pos_dim") embedding.ngram_pos = parse_size(key, value);
    else if (key == "ngram_type_dim") embedding.ngram_type = parse_size(key, value);
    else if (key == "lstm_hidden") lstm_hidden = parse_size(key, value);
    else if (key == "lstm_layers") lstm_layers = parse_size(key, value);
    else if (key == "attention_output") attention_output = parse_size(key, value);
    else if (key == "low_attention_projection") low_attention_projection = parse_size(key, value);
    else if (key == "high_attention_projection") high_attention_projection = parse_size(key, value);
    else if (key == "local_dropout") local_dropout = parse_double(key, value);
    else if (key == "layer_dropout") layer_dropout = parse_double(key, value);
    else throw ConfigError("unknown model key '" + key + "'");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
    return {{"task", std::string(task_name(task))},
            {"uni_word_dim", std::to_string(embedding.uni_word)},
            {"uni_pos_dim", std::to_string(embedding.uni_pos)},
            {"uni_type_dim", std::to_string(embedding.uni_type)},
            {"ngram_word_dim", std::to_string(embedding.ngram_word)},
            {"ngram_pos_dim", std::to_string(embedding.ngram_pos)},
            {"ngram_type_dim", std::to_string(embedding.ngram_type)},
            {"lstm_hidden", std::to_string(lstm_hidden)},
            {"lstm_layers", std::to_string(lstm_layers)},
            {"attention_output", std::to_string(attention_output)},
            {"low_attention_projection", std::to_string(low_attention_projection)},
            {"high_attention_projection", std::to_string(high_attention_projection)},
            {"local_dropout", format_double(local_dropout)},
            {"layer_dropout", format_double(layer_dropout)}};
}

SegmenterModel::SegmenterModel(const ModelConfig& config, Vocab vocab, std::uint64_t seed)
    : config_(config), vocab_(std::move(vocab)) {
    config_.validate();
    Rng rng(seed);
    const std::size_t h = config_.lstm_hidden;
    const std::size_t s = config_.tag_count();
    embeddings_ = EmbeddingTables(store_, vocab_, config_.embedding, rng);
    low_lstm_ = BiLstm(store_, "low.lstm", config_.local_dim(), h, rng);
    low_attention_ = SelfAttention(store_, "low.attention", config_.embedding.gram(Gram::Uni),
                                   config_.low_attention_projection, config_.attention_output, rng);
    stack_ = StackedBiLstm(store_, "high.lstm", 2 * h + config_.attention_output, h, config_.lstm_layers, rng);
    high_attention_ = SelfAttention(store_, "high.attention", 2 * h, config_.high_attention_projection,
                                    config_.attention_output, rng);
    output_ = Linear(store_, "output", config_.attention_output, s, rng);
    aux_local_ = Linear(store_, "aux.local", 2 * h, s, rng);
    aux_distant_ = Linear(store_, "aux.distant", config_.attention_output, s, rng);
    crf_ = CrfLayer(store_, "crf", s);
}

ad::Var SegmenterModel::unigram_embeddings(ad::Tape& tape, const NgramView& view) const {
    return embeddings_.embed(tape, Gram::Uni, view.uni);
}

ad::Var SegmenterModel::local_representation(ad::Tape& tape, const NgramView& view) const {
    if (view.size() == 0) throw InvalidInput("local_representation: empty sequence");
    std::vector<ad::Var> parts;
    parts.reserve(9);
    for (Gram gram : kGrams) {
        const auto& ids = view.stream(gram);
        for (int offset : {-1, 0, 1}) {
            parts.push_back(embeddings_.embed(tape, gram, offset == 0 ? ids : shifted(ids, offset)));
        }
    }
    return ad::concat_cols(parts);
}

ForwardResult SegmenterModel::forward(ad::Tape& tape, const NgramView& view, const ForwardOptions& options) const {
    if (view.size() == 0) throw InvalidInput("forward: empty sequence");
    Rng* rng = nullptr;
    if (options.mode == Mode::Train) {
        if (options.rng == nullptr) throw InvalidInput("forward: train mode needs an rng");
        rng = options.rng;
    }
    const double input_dropout = options.input_dropout < 0.0 ? config_.local_dropout : options.input_dropout;
    const double layer_dropout = config_.layer_dropout;

    ForwardResult out;
    out.e_uni = unigram_embeddings(tape, view);
    out.r_local = local_representation(tape, view);
    out.r_recurrent = low_lstm_(tape, apply_dropout(out.r_local, input_dropout, rng));
    if (options.zero_distant) {
        out.r_distant = tape.constant(Matrix::Zero(static_cast<Eigen::Index>(view.size()),
                                                   static_cast<Eigen::Index>(config_.attention_output)));
    } else {
        out.r_distant = low_attention_(tape, apply_dropout(out.e_uni, input_dropout, rng)).output;
    }
    const std::array<ad::Var, 2> low = {apply_dropout(out.r_recurrent, layer_dropout, rng), out.r_distant};
    const ad::Var stacked = stack_(tape, ad::concat_cols(low), layer_dropout, rng);
    out.h = high_attention_(tape, apply_dropout(stacked, layer_dropout, rng)).output;
    out.logits = output_(tape, apply_dropout(out.h, layer_dropout, rng));
    return out;
}

ad::Var SegmenterModel::nll(ad::Tape& tape, const NgramView& view, std::span<const int> gold,
                            const ForwardOptions& options) const {
    const ForwardResult f = forward(tape, view, options);
    return crf_.nll(tape, f.logits, gold);
}

Matrix SegmenterModel::logits(const NgramView& view) const {
    ad::Tape tape;
    return forward(tape, view, ForwardOptions{}).logits.value();
}

std::vector<int> SegmenterModel::predict(const std::vector<Token>& tokens) const {
    return crf_.decode(logits(view(tokens)));
}

std::vector<Parameter*> SegmenterModel::low_level_parameters() const {
    std::vector<Parameter*> out;
    for (Parameter* p : store_.all()) {
        const std::string& n = p->name;
        if (n.rfind("embed.", 0) == 0 || n.rfind("low.", 0) == 0 || n.rfind("aux.", 0) == 0) out.push_back(p);
    }
    return out;
}

namespace {

constexpr std::string_view kCheckpointMagic = "nseg-checkpoint 1";

void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    out.write(bytes, 8);
}

double read_f64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw InvalidInput("checkpoint: truncated tensor data");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

std::string read_section(std::istream& in, std::string_view name) {
    std::string header;
    if (!std::getline(in, header)) throw InvalidInput("checkpoint: missing section '" + std::string(name) + "'");
    std::istringstream hs(header);
    std::string got;
    std::size_t bytes = 0;
    if (!(hs >> got >> bytes) || got != name) {
        throw InvalidInput("checkpoint: expected section '" + std::string(name) + "', got '" + header + "'");
    }
    std::string body(bytes, '\0');
    in.read(body.data(), static_cast<std::streamsize>(bytes));
    if (!in) throw InvalidInput("checkpoint: truncated section '" + std::string(name) + "'");
    return body;
}

}  // namespace

void save_checkpoint(const std::string& path, const SegmenterModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write checkpoint '" + path + "'");
    std::ostringstream config;
    for (const auto& [k, v] : model.config().to_map()) config << k << ": " << v << '\n';
    std::ostringstream vocab;
    model.vocab().write(vocab);
    out << kCheckpointMagic << '\n';
    out << "config " << config.str().size() << '\n' << config.str();
    out << "vocab " << vocab.str().size() << '\n' << vocab.str();
    const auto params = model.parameters().all();
    out << "params " << params.size() << '\n';
    for (const Parameter* p : params) {
        out << p->name << ' ' << p->value.rows() << ' ' << p->value.cols() << '\n';
        for (Eigen::Index k = 0; k < p->value.size(); ++k) write_f64(out, p->value.data()[k]);
    }
    if (!out) throw InvalidInput("failed writing checkpoint '" + path + "'");
}

SegmenterModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open checkpoint '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic) {
        throw InvalidInput("checkpoint '" + path + "': unsupported format");
    }
    ModelConfig config;
    {
        std::istringstream cs(read_section(in, "config"));
        while (std::getline(cs, line)) {
            const auto colon = line.find(": ");
            if (colon == std::string::npos) throw InvalidInput("checkpoint: bad config line '" + line + "'");
            config.set(line.substr(0, colon), line.substr(colon + 2));
        }
    }
    std::istringstream vs(read_section(in, "vocab"));
    SegmenterModel model(config, Vocab::read(vs), 0);

    if (!std::getline(in, line)) throw InvalidInput("checkpoint: missing params section");
    std::istringstream ps(line);
    std::string tag;
    std::size_t count = 0;
    if (!(ps >> tag >> count) || tag != "params") throw InvalidInput("checkpoint: bad params header");
    const auto params = model.parameters().all();
    if (count != params.size()) {
        throw ShapeError("checkpoint: " + std::to_string(count) + " tensors stored, model expects " +
                         std::to_string(params.size()));
    }
    for (Parameter* p : params) {
        if (!std::getline(in, line)) throw InvalidInput("checkpoint: truncated tensor list");
        std::istringstream ts(line);
        std::string name;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        if (!(ts >> name >> rows >> cols)) throw InvalidInput("checkpoint: bad tensor header '" + line + "'");
        if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
            throw ShapeError("checkpoint: tensor '" + name + "' " + std::to_string(rows) + "x" +
                             std::to_string(cols) + " does not fit '" + p->name + "' " +
                             std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
        }
        for (Eigen::Index k = 0; k < p->value.size(); ++k) p->value.data()[k] = read_f64(in);
    }
    return model;
}

}  // namespace nseg
