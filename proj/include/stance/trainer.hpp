#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stance/corpus.hpp"
#include "stance/encoder.hpp"
#include "stance/objective.hpp"
#include "stance/reconstructor.hpp"

namespace stance::trainer {

struct CounterfactualConfig {
    bool enabled = true;
    std::size_t iterations = 1;
    double tau_mask = 0.2;
    double max_mask_frac = 0.5;
    reconstructor::GeneratorSpec generator;
    double alpha = 0.1;
    std::size_t min_count = affinity::kDefaultMinCount;
    std::size_t orientation_size = reconstructor::kDefaultOrientationSize;
    /// Documents per domain for the infiller's self-reconstruction check
    /// (0 = all).
    std::size_t sanity_limit = 200;
};

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    encoder::OptimizerConfig optimizer;
    objective::LossConfig loss;
    CounterfactualConfig counterfactual;
    /// d_feat, d_h, d_z, hash_seed and init_seed; k is taken from the labels.
    encoder::Hyper model;
    std::uint64_t seed = 0;
    std::size_t patience = 5;  // 0 disables early stopping
    double validation_fraction = 0.1;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t steps = 0;
    double loss_total = 0.0;
    double loss_ce = 0.0;
    double loss_cont = 0.0;
    std::optional<double> validation_accuracy;
};

struct RunManifest {
    nlohmann::ordered_json config;
    std::string source_domain, target_domain;
    std::uint64_t train_fingerprint = 0;
    std::uint64_t validation_fingerprint = 0;
    std::uint64_t total_fingerprint = 0;
    std::size_t train_size = 0;
    std::size_t validation_size = 0;
    std::size_t d_total_size = 0;
    std::size_t counterfactuals = 0;
    std::size_t parents = 0;
    std::size_t skipped_unmasked = 0;
    std::optional<reconstructor::InfillerReport> infiller;
    std::vector<EpochRecord> epochs;
    std::size_t steps = 0;
    std::size_t best_epoch = 0;
    std::optional<double> best_validation_accuracy;
    std::string checkpoint_path;
    double wall_clock_seconds = 0.0;

    /// Timing fields live under "timing" so they can be dropped before hashing.
    nlohmann::ordered_json to_json(bool include_timing = true) const;
};

struct TrainResult {
    encoder::ModelState state;
    std::vector<Stance> labels;
    RunManifest manifest;
    corpus::Corpus counterfactuals;
};

/// Stage 1 generates counterfactuals from the source domain toward the target
/// domain; stage 2 optimizes the combined loss over originals plus
/// counterfactuals. Returns the best state by held-out source accuracy.
/// `batch_log` receives one JSON record per batch when given.
TrainResult train(const corpus::Corpus& train_corpus, const corpus::SplitSpec& split, const TrainConfig& config,
                  std::ostream* batch_log = nullptr);

struct BatchInput {
    std::vector<const encoder::FeatureVector*> features;
    std::vector<std::size_t> labels;
    std::vector<std::uint8_t> anchor;
};

struct BatchLoss {
    double total = 0.0;
    double ce = 0.0;
    double cont = 0.0;
    objective::LossDiagnostics diagnostics;
    bool degenerate = false;  // pair loss undefined for this batch, counted as 0
};

/// Combined loss for one batch: mean cross-entropy over items and the pair
/// loss averaged over anchors. Accumulates parameter gradients when `grads`
/// is given.
BatchLoss compute_batch_loss(const encoder::ModelState& state, const BatchInput& batch,
                             const objective::LossConfig& loss, encoder::Gradients* grads);

struct Prediction {
    std::vector<double> p;
    std::size_t label_index = 0;
    Stance label = Stance::Favor;
    std::vector<double> z;
};

/// Argmax ties go to the lower class index.
std::vector<Prediction> predict(const encoder::ModelState& state, const corpus::Corpus& corpus,
                                const std::vector<Stance>& labels);

/// Seeded carve-out for early stopping, stratified by (domain, label).
std::pair<corpus::Corpus, corpus::Corpus> carve_validation(const corpus::Corpus& train, double fraction,
                                                           std::uint64_t seed);

}  // namespace stance::trainer
