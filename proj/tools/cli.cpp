#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <streambuf>

#include "nseg/config.hpp"
#include "nseg/corpus.hpp"
#include "nseg/errors.hpp"
#include "nseg/metrics.hpp"
#include "nseg/model.hpp"
#include "nseg/trainer.hpp"

namespace nseg::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Duplicates everything written to it onto two stream buffers.
class TeeBuf : public std::streambuf {
public:
    TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

protected:
    int overflow(int c) override {
        if (c == traits_type::eof()) return traits_type::not_eof(c);
        const auto ch = traits_type::to_char_type(c);
        if (a_->sputc(ch) == traits_type::eof() || b_->sputc(ch) == traits_type::eof()) return traits_type::eof();
        return c;
    }
    int sync() override { return a_->pubsync() == 0 && b_->pubsync() == 0 ? 0 : -1; }

private:
    std::streambuf* a_;
    std::streambuf* b_;
};

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string run_dir;
    std::string preset;
    std::string run_name;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "YAML run configuration");
    cmd->add_option("--seed", c.seed, "Random seed, overriding the config");
    cmd->add_option("--run-dir", c.run_dir, "Parent directory of run directories");
    cmd->add_option("--preset", c.preset, "Hyperparameter preset: orchid, ugwc or iwslt");
    cmd->add_option("--run-name", c.run_name, "Run directory name instead of <timestamp>-seed<seed>");
}

RunConfig load_config(const Common& c) {
    std::optional<Preset> preset;
    if (!c.preset.empty()) preset = parse_preset(c.preset);
    RunConfig cfg = c.config.empty() ? RunConfig::from_preset(preset.value_or(Preset::Orchid))
                                     : RunConfig::from_file(c.config, preset);
    if (c.seed) cfg.seed = *c.seed;
    cfg.optimizer.seed = cfg.seed;
    if (!c.run_dir.empty()) cfg.paths.run_dir = c.run_dir;
    cfg.validate();
    return cfg;
}

std::string timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    std::ostringstream s;
    s << std::put_time(&utc, "%Y%m%d-%H%M%S");
    return s.str();
}

fs::path make_run_dir(const RunConfig& cfg, const Common& c) {
    fs::path dir;
    if (!c.run_name.empty()) {
        dir = fs::path(cfg.paths.run_dir) / c.run_name;
    } else {
        const std::string base = timestamp() + "-seed" + std::to_string(cfg.seed);
        dir = fs::path(cfg.paths.run_dir) / base;
        for (int n = 2; fs::exists(dir); ++n) dir = fs::path(cfg.paths.run_dir) / (base + "-" + std::to_string(n));
    }
    fs::create_directories(dir);
    std::ofstream(dir / "config.yaml") << cfg.to_yaml();
    return dir;
}

const std::string& require_path(const std::string& path, const std::string& what) {
    if (path.empty()) throw ConfigError("no " + what + " path given");
    if (!fs::exists(path)) throw InvalidInput(what + " file '" + path + "' does not exist");
    return path;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

std::vector<TaggedSequence> sequences_of(const std::vector<PackedSequence>& packed) {
    std::vector<TaggedSequence> out;
    out.reserve(packed.size());
    for (const auto& p : packed) out.push_back(p.sequence);
    return out;
}

struct FoldPassages {
    std::vector<TaggedSequence> train;
    std::vector<TaggedSequence> dev;
    std::vector<TaggedSequence> test;
};

// Fold f is the test split, fold f+1 (mod k) the development split and the
// remaining folds the training split.
FoldPassages fold_passages(const std::vector<TaggedSequence>& passages, const FoldSplit& split, std::size_t fold) {
    FoldPassages out;
    const std::size_t dev_fold = (fold + 1) % split.fold_count;
    for (std::size_t i = 0; i < passages.size(); ++i) {
        const std::size_t f = split.assignments[i];
        if (f == fold) out.test.push_back(passages[i]);
        else if (f == dev_fold) out.dev.push_back(passages[i]);
        else out.train.push_back(passages[i]);
    }
    return out;
}

void require_folds(std::size_t k) {
    if (k < 3) throw ConfigError("--folds must be at least 3 so that train, dev and test folds differ");
}

json split_summary(const std::vector<TaggedSequence>& passages, const std::vector<PackedSequence>& packed) {
    std::size_t tokens = 0, duplicated = 0, source = 0;
    for (const auto& p : packed) {
        tokens += p.sequence.size();
        duplicated += p.duplicated_prefix;
    }
    for (const auto& p : passages) source += p.size();
    return json{{"passages", passages.size()},
                {"source_tokens", source},
                {"sequences", packed.size()},
                {"tokens", tokens},
                {"duplicated_prefix_tokens", duplicated}};
}

struct TrainOutcome {
    TrainHistory history;
    fs::path checkpoint;
};

TrainOutcome train_into(const fs::path& dir, const RunConfig& cfg, std::uint64_t model_seed,
                        const std::vector<TaggedSequence>& train, const std::vector<TaggedSequence>& dev,
                        const std::vector<TaggedSequence>* unlabeled, std::ostream& out) {
    SegmenterModel model(cfg.model, Vocab::build(train, cfg.vocab), model_seed);
    std::ofstream history_file(dir / "history.jsonl");
    if (!history_file) throw InvalidInput("cannot write history in '" + dir.string() + "'");
    TeeBuf tee(out.rdbuf(), history_file.rdbuf());
    std::ostream log(&tee);
    TrainOutcome outcome;
    outcome.history = unlabeled != nullptr ? train_cvt(model, train, dev, *unlabeled, cfg.cvt, cfg.optimizer, &log)
                                           : train_supervised(model, train, dev, cfg.optimizer, &log);
    outcome.checkpoint = dir / "model.ckpt";
    save_checkpoint(outcome.checkpoint.string(), model);
    return outcome;
}

std::vector<TaggedSequence> load_unlabeled(const std::string& path, const RunConfig& cfg) {
    require_path(path, "unlabeled corpus");
    return chunk_sequences(parse_corpus_file(path, Schema::Unlabeled, TagSet(cfg.task())), cfg.seq_len);
}

// Prepared files hold one packed sequence per passage.
std::vector<TaggedSequence> load_labeled(const std::string& path, const std::string& what, Task task) {
    return parse_corpus_file(require_path(path, what), Schema::Labeled, TagSet(task));
}

int cmd_prepare(const Common& common, const std::string& input, std::size_t folds, std::ostream& out) {
    const RunConfig cfg = load_config(common);
    require_folds(folds);
    const TagSet tags(cfg.task());
    const auto passages = parse_corpus_file(require_path(input, "input corpus"), Schema::Labeled, tags);
    const FoldSplit split = split_folds(passages.size(), folds, cfg.seed);
    const fs::path dir = make_run_dir(cfg, common);

    std::size_t input_tokens = 0;
    for (const auto& p : passages) input_tokens += p.size();
    json manifest{{"input", input},
                  {"input_passages", passages.size()},
                  {"input_tokens", input_tokens},
                  {"policy", std::string(packing_policy_name(cfg.policy))},
                  {"seq_len", cfg.seq_len},
                  {"seed", cfg.seed},
                  {"folds", json::array()}};
    for (std::size_t f = 0; f < folds; ++f) {
        const auto parts = fold_passages(passages, split, f);
        const fs::path fold_dir = dir / ("fold_" + std::to_string(f));
        fs::create_directories(fold_dir);
        json entry{{"fold", f}, {"splits", json::object()}};
        const std::pair<const char*, const std::vector<TaggedSequence>*> named[] = {
            {"train", &parts.train}, {"dev", &parts.dev}, {"test", &parts.test}};
        for (const auto& [name, split_passages] : named) {
            const auto packed = build_sequences(*split_passages, cfg.policy, cfg.seq_len, tags);
            write_corpus_file((fold_dir / (std::string(name) + ".tsv")).string(), sequences_of(packed), tags);
            entry["splits"][name] = split_summary(*split_passages, packed);
        }
        manifest["folds"].push_back(entry);
    }
    write_json(dir / "manifest.json", manifest);
    out << json{{"command", "prepare"}, {"run_dir", dir.string()}, {"folds", folds}}.dump() << '\n';
    return 0;
}

int cmd_train(const Common& common, RunPaths overrides, bool cvt, std::ostream& out) {
    RunConfig cfg = load_config(common);
    if (!overrides.train.empty()) cfg.paths.train = overrides.train;
    if (!overrides.dev.empty()) cfg.paths.dev = overrides.dev;
    if (!overrides.unlabeled.empty()) cfg.paths.unlabeled = overrides.unlabeled;
    const auto train = load_labeled(cfg.paths.train, "training", cfg.task());
    const auto dev = load_labeled(cfg.paths.dev, "development", cfg.task());
    std::optional<std::vector<TaggedSequence>> unlabeled;
    if (cvt) {
        if (cfg.paths.unlabeled.empty()) {
            throw ConfigError("cvt-train needs an unlabeled corpus (--unlabeled or paths.unlabeled)");
        }
        unlabeled = load_unlabeled(cfg.paths.unlabeled, cfg);
    }
    const fs::path dir = make_run_dir(cfg, common);
    const auto outcome = train_into(dir, cfg, cfg.seed, train, dev, unlabeled ? &*unlabeled : nullptr, out);
    out << json{{"command", cvt ? "cvt-train" : "train"},
                {"run_dir", dir.string()},
                {"checkpoint", outcome.checkpoint.string()},
                {"epochs", outcome.history.epochs.size()},
                {"best_epoch", outcome.history.best_epoch},
                {"best_validation", outcome.history.best_validation}}
               .dump()
        << '\n';
    return 0;
}

int cmd_evaluate(const Common& common, std::string checkpoint, std::string test, std::ostream& out) {
    const RunConfig cfg = load_config(common);
    if (checkpoint.empty()) checkpoint = cfg.paths.checkpoint;
    if (test.empty()) test = cfg.paths.test;
    const SegmenterModel model = load_checkpoint(require_path(checkpoint, "checkpoint"));
    const Task task = model.config().task;
    const auto sequences = load_labeled(test, "test", task);
    const auto gold = gold_flat(sequences);
    const auto pred = predict_flat(model, sequences);
    const json report{{"command", "evaluate"},
                      {"checkpoint", checkpoint},
                      {"test", test},
                      {"task", std::string(task_name(task))},
                      {"metric", task_metric(task, pred, gold)},
                      {"reports", reports_to_json(evaluate_task(task, pred, gold))}};
    const fs::path dir = make_run_dir(cfg, common);
    write_json(dir / "metrics.json", report);
    out << report.dump() << '\n';
    return 0;
}

int cmd_predict(const Common& common, std::string checkpoint, const std::string& input, const std::string& output,
                std::ostream& out) {
    const RunConfig cfg = load_config(common);
    if (checkpoint.empty()) checkpoint = cfg.paths.checkpoint;
    const SegmenterModel model = load_checkpoint(require_path(checkpoint, "checkpoint"));
    const TagSet tags = model.tags();
    auto passages = parse_corpus_file(require_path(input, "input corpus"), Schema::Unlabeled, tags);
    for (auto& p : passages) p.tags = model.predict(p.tokens);
    if (output.empty()) {
        write_corpus(out, passages, tags);
    } else {
        write_corpus_file(output, passages, tags);
    }
    return 0;
}

int cmd_gridsearch(const Common& common, RunPaths overrides, const std::vector<std::size_t>& c_words,
                   const std::vector<std::size_t>& c_ngrams, std::ostream& out) {
    RunConfig cfg = load_config(common);
    if (!overrides.train.empty()) cfg.paths.train = overrides.train;
    if (!overrides.dev.empty()) cfg.paths.dev = overrides.dev;
    const auto train = load_labeled(cfg.paths.train, "training", cfg.task());
    const auto dev = load_labeled(cfg.paths.dev, "development", cfg.task());
    const fs::path dir = make_run_dir(cfg, common);
    const auto result = grid_search(train, dev, c_words, c_ngrams, cfg.model, cfg.optimizer, cfg.seed);

    json table = json::array();
    out << "c_word\tc_ngram\tmetric\n";
    for (const auto& cell : result.table) {
        out << cell.c_word << '\t' << cell.c_ngram << '\t';
        if (cell.metric) {
            out << std::setprecision(6) << std::fixed << *cell.metric << '\n';
            table.push_back({{"c_word", cell.c_word}, {"c_ngram", cell.c_ngram}, {"metric", *cell.metric}});
        } else {
            out << "error: " << cell.error << '\n';
            table.push_back({{"c_word", cell.c_word}, {"c_ngram", cell.c_ngram}, {"error", cell.error}});
        }
    }
    out << "best\t" << result.best_c_word << '\t' << result.best_c_ngram << '\t' << result.best_metric << '\n';
    write_json(dir / "grid.json", json{{"table", table},
                                       {"best", {{"c_word", result.best_c_word},
                                                 {"c_ngram", result.best_c_ngram},
                                                 {"metric", result.best_metric}}}});
    return 0;
}

std::vector<double> baseline_scores(const std::string& path) {
    std::ifstream in(require_path(path, "baseline"));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidInput("baseline '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.contains("folds") || !j["folds"].is_array()) {
        throw InvalidInput("baseline '" + path + "' has no folds array");
    }
    std::vector<double> scores;
    for (const auto& f : j["folds"]) scores.push_back(f.at("metric").get<double>());
    return scores;
}

int cmd_crossval(const Common& common, const std::string& input, std::size_t folds, const std::string& baseline,
                 bool cvt, std::string unlabeled_path, std::ostream& out) {
    RunConfig cfg = load_config(common);
    require_folds(folds);
    if (!unlabeled_path.empty()) cfg.paths.unlabeled = unlabeled_path;
    const TagSet tags(cfg.task());
    const auto passages = parse_corpus_file(require_path(input, "input corpus"), Schema::Labeled, tags);
    std::optional<std::vector<double>> reference;
    if (!baseline.empty()) {
        reference = baseline_scores(baseline);
        if (reference->size() != folds) {
            throw InvalidInput("baseline has " + std::to_string(reference->size()) + " folds, expected " +
                               std::to_string(folds));
        }
    }
    std::optional<std::vector<TaggedSequence>> unlabeled;
    if (cvt) {
        if (cfg.paths.unlabeled.empty()) throw ConfigError("crossval --cvt needs an unlabeled corpus");
        unlabeled = load_unlabeled(cfg.paths.unlabeled, cfg);
    }
    const FoldSplit split = split_folds(passages.size(), folds, cfg.seed);
    const fs::path dir = make_run_dir(cfg, common);

    std::vector<double> scores;
    json rows = json::array();
    std::ostringstream training_log;
    for (std::size_t f = 0; f < folds; ++f) {
        const auto parts = fold_passages(passages, split, f);
        const auto train = sequences_of(build_sequences(parts.train, cfg.policy, cfg.seq_len, tags));
        const auto dev = sequences_of(build_sequences(parts.dev, cfg.policy, cfg.seq_len, tags));
        const auto test = sequences_of(build_sequences(parts.test, cfg.policy, cfg.seq_len, tags));
        const fs::path fold_dir = dir / ("fold_" + std::to_string(f));
        fs::create_directories(fold_dir);
        RunConfig fold_cfg = cfg;
        fold_cfg.optimizer.seed = cfg.seed + f;
        const auto outcome =
            train_into(fold_dir, fold_cfg, cfg.seed + f, train, dev, unlabeled ? &*unlabeled : nullptr, training_log);
        const SegmenterModel model = load_checkpoint(outcome.checkpoint.string());
        const double metric = evaluate_sequences(model, test);
        scores.push_back(metric);
        rows.push_back({{"fold", f}, {"metric", metric}, {"best_epoch", outcome.history.best_epoch}});
    }
    const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(folds);

    out << std::setprecision(6) << std::fixed;
    out << "fold\tmetric" << (reference ? "\tbaseline" : "") << '\n';
    for (std::size_t f = 0; f < folds; ++f) {
        out << f << '\t' << scores[f];
        if (reference) out << '\t' << (*reference)[f];
        out << '\n';
    }
    out << "mean\t" << mean;
    json result{{"folds", rows}, {"mean", mean}};
    if (reference) {
        out << '\t' << std::accumulate(reference->begin(), reference->end(), 0.0) / static_cast<double>(folds);
        const auto t = paired_t_test(scores, *reference);
        out << "\nt_test\tmean_difference=" << t.mean_difference << "\tt=" << t.t << "\tdf=" << t.df
            << "\tp=" << t.p_value << (t.degenerate ? "\tdegenerate" : "");
        result["t_test"] = {{"baseline", baseline},
                            {"mean_difference", t.mean_difference},
                            {"t", t.t},
                            {"df", t.df},
                            {"p_value", t.p_value},
                            {"degenerate", t.degenerate}};
    }
    out << '\n';
    write_json(dir / "crossval.json", result);
    return 0;
}

json error_json(const std::string& kind, const std::string& message) {
    return json{{"error", kind}, {"message", message}};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Thai sentence segmentation and punctuation restoration", "nseg"};
    app.require_subcommand(1);

    Common common;
    std::string input, output, checkpoint, test, baseline;
    std::size_t folds = 10;
    RunPaths overrides;
    bool use_cvt = false;
    std::vector<std::size_t> c_words = {1, 2, 3}, c_ngrams = {1, 2, 3};

    auto* prepare = app.add_subcommand("prepare", "Pack a labeled corpus into cross-validation folds");
    add_common(prepare, common);
    prepare->add_option("--input", input, "Labeled TSV corpus")->required();
    prepare->add_option("--folds", folds, "Number of folds");

    auto* train = app.add_subcommand("train", "Supervised training");
    add_common(train, common);
    train->add_option("--train", overrides.train, "Prepared training file");
    train->add_option("--dev", overrides.dev, "Prepared development file");

    auto* cvt = app.add_subcommand("cvt-train", "Cross-view training with unlabeled data");
    add_common(cvt, common);
    cvt->add_option("--train", overrides.train, "Prepared training file");
    cvt->add_option("--dev", overrides.dev, "Prepared development file");
    cvt->add_option("--unlabeled", overrides.unlabeled, "Unlabeled TSV corpus");

    auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a labeled file");
    add_common(evaluate, common);
    evaluate->add_option("--checkpoint", checkpoint, "Model checkpoint");
    evaluate->add_option("--test", test, "Labeled test file");

    auto* predict = app.add_subcommand("predict", "Tag an unlabeled file");
    add_common(predict, common);
    predict->add_option("--checkpoint", checkpoint, "Model checkpoint");
    predict->add_option("--input", input, "Unlabeled TSV corpus")->required();
    predict->add_option("--output", output, "Output TSV (default: standard output)");

    auto* grid = app.add_subcommand("gridsearch", "Search the vocabulary cutoffs");
    add_common(grid, common);
    grid->add_option("--train", overrides.train, "Prepared training file");
    grid->add_option("--dev", overrides.dev, "Prepared development file");
    grid->add_option("--c-word", c_words, "Unigram cutoff candidates")->delimiter(',');
    grid->add_option("--c-ngram", c_ngrams, "Bigram/trigram cutoff candidates")->delimiter(',');

    auto* crossval = app.add_subcommand("crossval", "k-fold cross-validation");
    add_common(crossval, common);
    crossval->add_option("--input", input, "Labeled TSV corpus")->required();
    crossval->add_option("--folds", folds, "Number of folds");
    crossval->add_option("--baseline", baseline, "crossval.json of a baseline run for a paired t-test");
    crossval->add_flag("--cvt", use_cvt, "Use cross-view training in every fold");
    crossval->add_option("--unlabeled", overrides.unlabeled, "Unlabeled TSV corpus for --cvt");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << error_json("usage", e.what()).dump() << '\n';
        return 2;
    }

    try {
        if (*prepare) return cmd_prepare(common, input, folds, out);
        if (*train) return cmd_train(common, overrides, false, out);
        if (*cvt) return cmd_train(common, overrides, true, out);
        if (*evaluate) return cmd_evaluate(common, checkpoint, test, out);
        if (*predict) return cmd_predict(common, checkpoint, input, output, out);
        if (*grid) return cmd_gridsearch(common, overrides, c_words, c_ngrams, out);
        if (*crossval) return cmd_crossval(common, input, folds, baseline, use_cvt, overrides.unlabeled, out);
    } catch (const ParseError& e) {
        json j = error_json(e.kind(), e.what());
        j["file"] = e.file();
        j["line"] = e.line();
        err << j.dump() << '\n';
        return 1;
    } catch (const TrainingError& e) {
        json j = error_json(e.kind(), e.what());
        j["epoch"] = e.epoch();
        j["batch"] = e.batch();
        err << j.dump() << '\n';
        return 1;
    } catch (const Error& e) {
        err << error_json(e.kind(), e.what()).dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << error_json("internal", e.what()).dump() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace nseg::cli
