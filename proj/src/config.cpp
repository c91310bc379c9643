#include "nseg/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <iomanip>
#include <sstream>

#include "nseg/errors.hpp"

namespace nseg {

namespace {

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError("config key '" + key + "' has an invalid value");
    }
}

std::string text(const YAML::Node& node, const std::string& key) { return scalar<std::string>(node, key); }

void apply_optimizer(OptimizerConfig& o, const std::string& key, const YAML::Node& v) {
    if (key == "kind") o.kind = parse_optimizer(text(v, key));
    else if (key == "learning_rate") o.learning_rate = scalar<double>(v, key);
    else if (key == "l2") o.l2 = scalar<double>(v, key);
    else if (key == "beta1") o.beta1 = scalar<double>(v, key);
    else if (key == "beta2") o.beta2 = scalar<double>(v, key);
    else if (key == "epsilon") o.epsilon = scalar<double>(v, key);
    else if (key == "batch_size") o.batch_size = scalar<std::size_t>(v, key);
    else if (key == "patience") o.patience = scalar<std::size_t>(v, key);
    else if (key == "max_epochs") o.max_epochs = scalar<std::size_t>(v, key);
    else throw ConfigError("unknown optimizer key '" + key + "'");
}

void apply_cvt(CvtConfig& c, const std::string& key, const YAML::Node& v) {
    if (key == "drop_rate") c.drop_rate = scalar<double>(v, key);
    else if (key == "unlabeled_batches") c.unlabeled_batches = scalar<std::size_t>(v, key);
    else if (key == "unlabeled_input_dropout") c.unlabeled_input_dropout = scalar<double>(v, key);
    else throw ConfigError("unknown cvt key '" + key + "'");
}

void apply_vocab(VocabConfig& c, const std::string& key, const YAML::Node& v) {
    if (key == "c_word") c.c_word = scalar<std::size_t>(v, key);
    else if (key == "c_ngram") c.c_ngram = scalar<std::size_t>(v, key);
    else throw ConfigError("unknown vocab key '" + key + "'");
}

void apply_paths(RunPaths& p, const std::string& key, const YAML::Node& v) {
    if (key == "train") p.train = text(v, key);
    else if (key == "dev") p.dev = text(v, key);
    else if (key == "test") p.test = text(v, key);
    else if (key == "unlabeled") p.unlabeled = text(v, key);
    else if (key == "checkpoint") p.checkpoint = text(v, key);
    else if (key == "run_dir") p.run_dir = text(v, key);
    else throw ConfigError("unknown paths key '" + key + "'");
}

template <typename Fn>
void each_entry(const YAML::Node& section, const std::string& name, Fn&& fn) {
    if (!section.IsMap()) throw ConfigError("config section '" + name + "' must be a mapping");
    for (const auto& kv : section) fn(kv.first.as<std::string>(), kv.second);
}

}  // namespace

Preset parse_preset(std::string_view name) {
    if (name == "orchid") return Preset::Orchid;
    if (name == "ugwc") return Preset::Ugwc;
    if (name == "iwslt") return Preset::Iwslt;
    throw ConfigError("unknown preset '" + std::string(name) + "'");
}

std::string_view preset_name(Preset preset) {
    switch (preset) {
        case Preset::Orchid: return "orchid";
        case Preset::Ugwc: return "ugwc";
        case Preset::Iwslt: return "iwslt";
    }
    return "orchid";
}

RunConfig RunConfig::from_preset(Preset preset) {
    RunConfig c;
    c.preset = preset;
    c.seq_len = 200;
    c.vocab = VocabConfig{2, 2};
    c.optimizer.batch_size = 16;
    c.optimizer.patience = 5;
    c.optimizer.l2 = 0.01;
    c.model.local_dropout = 0.30;
    c.model.layer_dropout = 0.15;
    if (preset == Preset::Iwslt) {
        c.model.task = Task::Punctuation;
        c.policy = PackingPolicy::Iwslt;
        c.vocab.c_ngram = 13;
        c.optimizer.kind = OptimizerKind::Adam;
        c.optimizer.learning_rate = 0.001;
        c.model.embedding = EmbeddingDims{300, 300, 300, 10, 10, 10};
        c.model.lstm_hidden = 256;
        c.model.lstm_layers = 4;
        c.model.attention_output = 256;
        c.model.low_attention_projection = 32;
        c.model.high_attention_projection = 128;
        c.cvt = CvtConfig{0.30, 2, 0.30};
    } else {
        c.model.task = Task::Segmentation;
        c.policy = PackingPolicy::Orchid;
        c.optimizer.kind = OptimizerKind::Adagrad;
        c.optimizer.learning_rate = 0.02;
        c.model.embedding = EmbeddingDims{64, 32, 32, 16, 8, 8};
        c.model.lstm_hidden = 25;
        c.model.lstm_layers = 2;
        c.model.attention_output = 50;
        c.model.low_attention_projection = 64;
        c.model.high_attention_projection = 25;
        // Orchid has no unlabeled column; it shares the UGWC values.
        c.cvt = CvtConfig{0.30, 1, 0.50};
    }
    return c;
}

RunConfig RunConfig::from_yaml(const std::string& yaml, std::optional<Preset> preset_override) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config is not valid YAML: ") + e.what());
    }
    if (root.IsNull()) return from_preset(preset_override.value_or(Preset::Orchid));
    if (!root.IsMap()) throw ConfigError("config must be a mapping");
    Preset preset = root["preset"] ? parse_preset(text(root["preset"], "preset")) : Preset::Orchid;
    if (preset_override) preset = *preset_override;
    RunConfig c = from_preset(preset);
    for (const auto& kv : root) {
        const auto key = kv.first.as<std::string>();
        const YAML::Node& v = kv.second;
        if (key == "preset") continue;
        if (key == "task") c.model.task = parse_task(text(v, key));
        else if (key == "seed") c.seed = scalar<std::uint64_t>(v, key);
        else if (key == "seq_len") c.seq_len = scalar<std::size_t>(v, key);
        else if (key == "policy") c.policy = parse_packing_policy(text(v, key));
        else if (key == "paths") each_entry(v, key, [&](const std::string& k, const YAML::Node& x) { apply_paths(c.paths, k, x); });
        else if (key == "model") each_entry(v, key, [&](const std::string& k, const YAML::Node& x) { c.model.set(k, text(x, k)); });
        else if (key == "optimizer") each_entry(v, key, [&](const std::string& k, const YAML::Node& x) { apply_optimizer(c.optimizer, k, x); });
        else if (key == "cvt") each_entry(v, key, [&](const std::string& k, const YAML::Node& x) { apply_cvt(c.cvt, k, x); });
        else if (key == "vocab") each_entry(v, key, [&](const std::string& k, const YAML::Node& x) { apply_vocab(c.vocab, k, x); });
        else throw ConfigError("unknown config key '" + key + "'");
    }
    c.optimizer.seed = c.seed;
    return c;
}

RunConfig RunConfig::from_file(const std::string& path, std::optional<Preset> preset_override) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return from_yaml(s.str(), preset_override);
}

std::string RunConfig::to_yaml() const {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "preset" << YAML::Value << std::string(preset_name(preset));
    out << YAML::Key << "seed" << YAML::Value << seed;
    out << YAML::Key << "seq_len" << YAML::Value << seq_len;
    out << YAML::Key << "policy" << YAML::Value << std::string(packing_policy_name(policy));
    out << YAML::Key << "paths" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "train" << YAML::Value << paths.train;
    out << YAML::Key << "dev" << YAML::Value << paths.dev;
    out << YAML::Key << "test" << YAML::Value << paths.test;
    out << YAML::Key << "unlabeled" << YAML::Value << paths.unlabeled;
    out << YAML::Key << "checkpoint" << YAML::Value << paths.checkpoint;
    out << YAML::Key << "run_dir" << YAML::Value << paths.run_dir;
    out << YAML::EndMap;
    out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
    for (const auto& [k, v] : model.to_map()) out << YAML::Key << k << YAML::Value << v;
    out << YAML::EndMap;
    out.SetDoublePrecision(17);
    out << YAML::Key << "optimizer" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "kind" << YAML::Value << std::string(optimizer_name(optimizer.kind));
    out << YAML::Key << "learning_rate" << YAML::Value << optimizer.learning_rate;
    out << YAML::Key << "l2" << YAML::Value << optimizer.l2;
    out << YAML::Key << "beta1" << YAML::Value << optimizer.beta1;
    out << YAML::Key << "beta2" << YAML::Value << optimizer.beta2;
    out << YAML::Key << "epsilon" << YAML::Value << optimizer.epsilon;
    out << YAML::Key << "batch_size" << YAML::Value << optimizer.batch_size;
    out << YAML::Key << "patience" << YAML::Value << optimizer.patience;
    out << YAML::Key << "max_epochs" << YAML::Value << optimizer.max_epochs;
    out << YAML::EndMap;
    out << YAML::Key << "cvt" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "drop_rate" << YAML::Value << cvt.drop_rate;
    out << YAML::Key << "unlabeled_batches" << YAML::Value << cvt.unlabeled_batches;
    out << YAML::Key << "unlabeled_input_dropout" << YAML::Value << cvt.unlabeled_input_dropout;
    out << YAML::EndMap;
    out << YAML::Key << "vocab" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "c_word" << YAML::Value << vocab.c_word;
    out << YAML::Key << "c_ngram" << YAML::Value << vocab.c_ngram;
    out << YAML::EndMap;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

void RunConfig::validate() const {
    model.validate();
    optimizer.validate();
    cvt.validate();
    vocab.validate();
    if (seq_len == 0) throw ConfigError("seq_len must be positive");
}

}  // namespace nseg
