#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>

#include "attnconv/model.hpp"
#include "attnconv/synth.hpp"
#include "attnconv/trainer.hpp"

namespace attnconv {

// Everything a CLI run needs. Text form is flat `key = value` lines with '#'
// comments; `seed` feeds the synthesizer, model init and training streams.
struct RunConfig {
    uint64_t seed = 7;
    SynthConfig synth;
    SplitCounts counts;
    ModelConfig model;
    TrainConfig train;
    double threshold = 0.5;  // detection confidence for detect/eval
    std::string augment_policy;  // optional policy file path

    // "paper" or "desk".
    static RunConfig preset(const std::string& name);

    void set(const std::string& key, const std::string& value);
    void parse(std::istream& is, const std::string& source = "<config>");
    void load(const std::filesystem::path& path);
    std::string to_text() const;

    // Pushes `seed` into the component configs and validates them.
    void finalize();
};

// Model-only subset of the keys, used inside checkpoints.
std::string model_config_text(const ModelConfig& cfg);
ModelConfig parse_model_config(const std::string& text);

}  // namespace attnconv
