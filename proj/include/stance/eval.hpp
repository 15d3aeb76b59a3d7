#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stance/config.hpp"
#include "stance/corpus.hpp"
#include "stance/encoder.hpp"

namespace stance::eval {

double accuracy(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& gold);

/// Mann-Whitney AUC with midranks; gold entries are 1 (positive) or 0.
double auc(const std::vector<double>& scores, const std::vector<int>& gold);

/// Source-test minus target-test accuracy, rounded to 12 decimals so that
/// values given to three places subtract exactly.
double degradation(double acc_source_test, double acc_target_test);

struct McNemarResult {
    std::size_t b = 0;  // a correct, b wrong
    std::size_t c = 0;  // a wrong, b correct
    double statistic = 0.0;
    double p_value = 1.0;
    bool exact = false;  // exact binomial p-value (b + c < 25)
};

McNemarResult mcnemar(const std::vector<std::size_t>& preds_a, const std::vector<std::size_t>& preds_b,
                      const std::vector<std::size_t>& gold);
/// Same test from the discordant counts alone.
McNemarResult mcnemar_counts(std::size_t b, std::size_t c);

inline constexpr std::size_t kExactBelow = 25;

struct CorpusMetrics {
    std::size_t n = 0;
    double accuracy = 0.0;
    std::optional<double> auc;  // absent when the corpus holds one class
    std::vector<std::size_t> preds, gold;
};

/// AUC scores the FAVOR probability against FAVOR-vs-rest gold labels.
CorpusMetrics evaluate(const encoder::ModelState& state, const corpus::Corpus& corpus,
                       const std::vector<Stance>& labels);

nlohmann::ordered_json to_json(const CorpusMetrics& m);
nlohmann::ordered_json to_json(const McNemarResult& m);

struct RunResult {
    std::uint64_t seed = 0;
    CorpusMetrics source;
    CorpusMetrics target;
    double degradation = 0.0;
    std::size_t d_total_size = 0;
    std::size_t train_size = 0;
    std::size_t validation_size = 0;  // carved out of train_size before D_total
    std::size_t counterfactuals = 0;
    std::size_t best_epoch = 0;
};

/// Split, train and evaluate once with every seed set to `seed`.
RunResult run_once(const corpus::Corpus& data, const config::GlobalConfig& config, std::uint64_t seed);

struct Summary {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation
};

Summary summarize(const std::vector<double>& values);

struct VariantRow {
    std::string name;
    std::string param;  // grid label, e.g. "lambda=0.5"
    double value = 0.0;
    std::vector<RunResult> runs;
    Summary target_accuracy, target_auc, source_accuracy, degradation;
    std::optional<McNemarResult> mcnemar_vs_full;  // pooled over seeds
};

struct AblationReport {
    std::vector<VariantRow> rows;  // full, no_contrastive, no_counterfactual, triplet
};

struct SweepReport {
    std::vector<VariantRow> lambda;
    std::vector<VariantRow> gamma;
};

/// The four ablation variants share seeds and splits.
AblationReport run_ablations(const corpus::Corpus& data, const config::GlobalConfig& config, std::size_t jobs = 1);
SweepReport run_sweeps(const corpus::Corpus& data, const config::GlobalConfig& config, std::size_t jobs = 1);

nlohmann::ordered_json to_json(const VariantRow& row);
nlohmann::ordered_json to_json(const AblationReport& report);
nlohmann::ordered_json to_json(const SweepReport& report);

/// CSV with columns param,seed,accuracy,auc (target-domain test metrics).
void write_csv(std::ostream& out, const std::vector<VariantRow>& rows);

/// Runs `n` independent jobs on up to `jobs` threads; results are indexed so
/// the outcome does not depend on scheduling.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body);

}  // namespace stance::eval
