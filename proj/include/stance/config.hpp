#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stance/corpus.hpp"
#include "stance/trainer.hpp"

namespace stance::config {

struct EvalOptions {
    std::size_t seeds = 5;  // runs use seed, seed+1, ...
    std::vector<double> lambda_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<double> gamma_grid = {0.05, 0.15, 0.30, 0.45};
    double ablation_gamma = 0.30;
};

/// Everything a pipeline run needs. The top-level seed drives the synthetic
/// corpus, the split, and training; per-stage streams are derived from it.
struct GlobalConfig {
    std::uint64_t seed = 7;
    corpus::SplitSpec split{"domain_a", "domain_b"};
    corpus::SynthConfig synth;
    trainer::TrainConfig train;
    EvalOptions eval;

    void validate() const;
    /// Copies with `seed` pushed into synth, split and train.
    corpus::SynthConfig synth_config() const;
    corpus::SplitSpec split_spec() const;
    trainer::TrainConfig train_config() const;
};

nlohmann::ordered_json to_json(const GlobalConfig& config);
nlohmann::ordered_json to_json(const trainer::TrainConfig& config);

/// Fields missing from `j` keep their defaults; unknown keys and wrongly
/// typed values raise ValidationError.
GlobalConfig from_json(const nlohmann::json& j);
GlobalConfig load(const std::string& path);

/// Applies "dotted.path=value"; the value is parsed as JSON when possible and
/// as a bare string otherwise. The path must name an existing field.
void apply_override(GlobalConfig& config, std::string_view assignment);

}  // namespace stance::config
