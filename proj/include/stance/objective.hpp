#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "stance/corpus.hpp"

namespace stance::objective {

enum class LossVariant { ModifiedSupCon, SupConPlain, Triplet };

std::string_view to_string(LossVariant v);
LossVariant parse_loss_variant(std::string_view s);

struct LossConfig {
    double tau_temp = 0.08;
    double lambda = 0.5;
    double sim_floor = 1e-6;
    LossVariant variant = LossVariant::ModifiedSupCon;
    double margin = 0.5;

    void validate() const;
};

/// Embeddings with labels; only items flagged as anchors contribute anchor
/// terms, but every item can serve as a positive or negative.
struct ContrastiveBatch {
    std::vector<std::vector<double>> z;
    std::vector<std::size_t> labels;
    std::vector<std::uint8_t> anchor;  // empty = every item is an anchor

    bool is_anchor(std::size_t i) const { return anchor.empty() || anchor[i] != 0; }
};

struct LossDiagnostics {
    std::size_t anchors = 0;
    std::size_t empty_positive = 0;
    std::size_t empty_negative = 0;
    double min_cos = 0.0;
    double max_cos = 0.0;
};

struct LossResult {
    double loss = 0.0;
    std::vector<std::vector<double>> grad_z;
    LossDiagnostics diagnostics;
};

/// Similarity-weighted supervised contrastive loss summed over anchors, with
/// an explicit negative-pair term. SupConPlain drops both the weight and the
/// negative term. Embeddings must be unit norm.
LossResult contrastive_loss(const ContrastiveBatch& batch, const LossConfig& config);

/// Hardest-positive / hardest-negative triplet loss averaged over anchors
/// that have both. Throws "degenerate batch" when no anchor qualifies.
LossResult triplet_loss(const ContrastiveBatch& batch, double margin);

/// Dispatches on config.variant.
LossResult pair_loss(const ContrastiveBatch& batch, const LossConfig& config);

struct CrossEntropy {
    double loss = 0.0;
    std::vector<double> grad_logits;  // p - onehot(y)
};

CrossEntropy cross_entropy_from_logits(const std::vector<double>& logits, std::size_t y);
/// -log p_y for a probability vector.
double cross_entropy(const std::vector<double>& p, std::size_t y);

double total_loss(double l_cont, double l_ce, double lambda);

enum class Origin { SourceTarget, DestinationTarget, Counterfactual };

struct BatchSpec {
    std::vector<std::size_t> items;  // indices into CdSampler::total()
    std::vector<std::string> ids;
};

/// Contrastive data: originals plus counterfactuals, served as seeded
/// shuffled epochs. Each batch is repaired to hold at least two items of
/// every label when the inventory allows it.
class CdSampler {
public:
    CdSampler(const corpus::Corpus& originals, const corpus::Corpus& counterfactuals, std::string_view source_domain,
              std::size_t batch_size, std::uint64_t seed);

    const corpus::Corpus& total() const { return total_; }
    const std::vector<Origin>& origins() const { return origins_; }
    const std::vector<std::size_t>& labels() const { return labels_; }
    bool is_anchor(std::size_t item) const { return origins_[item] == Origin::SourceTarget; }
    std::size_t batch_size() const { return batch_size_; }
    std::size_t batches_per_epoch() const;

    std::vector<BatchSpec> epoch(std::size_t e) const;

private:
    corpus::Corpus total_;
    std::vector<Origin> origins_;
    std::vector<std::size_t> labels_;
    std::size_t num_labels_ = 0;
    std::size_t batch_size_;
    std::uint64_t seed_;
};

}  // namespace stance::objective
