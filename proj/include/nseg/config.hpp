#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "nseg/corpus.hpp"
#include "nseg/cvt.hpp"
#include "nseg/model.hpp"
#include "nseg/trainer.hpp"
#include "nseg/vocab.hpp"

namespace nseg {

enum class Preset { Orchid, Ugwc, Iwslt };

Preset parse_preset(std::string_view name);
std::string_view preset_name(Preset preset);

struct RunPaths {
    std::string train;
    std::string dev;
    std::string test;
    std::string unlabeled;
    std::string checkpoint;
    std::string run_dir = "runs";
};

struct RunConfig {
    Preset preset = Preset::Orchid;
    RunPaths paths;
    ModelConfig model;
    OptimizerConfig optimizer;
    CvtConfig cvt;
    VocabConfig vocab;
    std::size_t seq_len = 200;
    PackingPolicy policy = PackingPolicy::Orchid;
    std::uint64_t seed = 1;

    Task task() const { return model.task; }

    // Dataset columns of the published hyperparameter table.
    static RunConfig from_preset(Preset preset);

    // YAML document: top-level `preset`, `task`, `seed`, `seq_len`, `policy`,
    // plus sections `paths`, `model`, `optimizer`, `cvt`, `vocab`. The preset
    // is applied first, then every other key overrides it. A given
    // preset_override replaces the document's preset key.
    static RunConfig from_yaml(const std::string& text, std::optional<Preset> preset_override = std::nullopt);
    static RunConfig from_file(const std::string& path, std::optional<Preset> preset_override = std::nullopt);

    std::string to_yaml() const;

    void validate() const;
};

}  // namespace nseg
