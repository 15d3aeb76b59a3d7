#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stance/corpus.hpp"

namespace stance::encoder {

inline constexpr std::uint32_t kDefaultFeatureDim = 1u << 16;
inline constexpr std::uint64_t kDefaultHashSeed = 0x5eedf00dULL;

/// Sparse signed hashed bag of 1- and 2-grams, L2 normalized. Indices are
/// strictly increasing; zero entries are dropped.
struct FeatureVector {
    std::uint32_t dim = 0;
    std::vector<std::uint32_t> index;
    std::vector<double> value;
};

struct FeatureHash {
    std::uint32_t bucket;
    int sign;
};

/// Bucket and sign for one n-gram feature key ("1:tok" or "2:tok tok").
FeatureHash hash_feature(std::string_view key, std::uint32_t dim, std::uint64_t hash_seed);

/// Sequence used for featurization: statement tokens, <sep>, target tokens.
std::vector<std::string> feature_sequence(const corpus::Example& x);

FeatureVector featurize(const corpus::Example& x, std::uint32_t dim = kDefaultFeatureDim,
                        std::uint64_t hash_seed = kDefaultHashSeed);

struct Hyper {
    std::uint32_t d_feat = kDefaultFeatureDim;
    std::uint32_t d_h = 128;
    std::uint32_t d_z = 64;
    std::uint32_t k = 2;
    std::uint64_t hash_seed = kDefaultHashSeed;
    std::uint64_t init_seed = 1;

    bool operator==(const Hyper&) const = default;
};

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double momentum = 0.9;

    void validate() const;
};

/// First/second moments. W1 moments are kept per touched row (lazy update).
struct OptimizerState {
    std::uint64_t step = 0;
    std::map<std::uint32_t, std::vector<double>> w1_m, w1_v;
    std::vector<double> b1_m, b1_v, w2_m, w2_v, b2_m, b2_v, wc_m, wc_v, bc_m, bc_v;
};

/// Parameters of the classifier. Row-major: W1 is d_feat x d_h, W2 is
/// d_h x d_z, Wc is d_z x k.
struct ModelState {
    Hyper hyper;
    std::vector<double> W1, b1, W2, b2, Wc, bc;
    OptimizerState opt;
    /// Per W1 row: nonzero once the row may differ from its seeded initial value.
    std::vector<std::uint8_t> dirty;

    /// Kaiming-uniform weights from init_seed, zero biases.
    static ModelState initialize(const Hyper& hyper);

    /// Initial value of W1[row][col] for the given hyper parameters.
    static double initial_w1(const Hyper& hyper, std::uint32_t row, std::uint32_t col);

    void mark_dirty(std::uint32_t row);
    bool all_finite() const;
};

/// Cached activations of one forward pass.
struct Forward {
    std::vector<double> h_pre, h, u, z, logits, p;
    double u_norm = 0.0;
};

Forward forward(const ModelState& state, const FeatureVector& fv);

/// z = u / |u| with h = relu(W1^T fv + b1), u = W2^T h + b2.
std::vector<double> encode(const ModelState& state, const FeatureVector& fv);
std::vector<double> logits(const ModelState& state, std::span<const double> z);
/// softmax(Wc^T z + bc).
std::vector<double> classify(const ModelState& state, std::span<const double> z);
std::vector<double> softmax(std::span<const double> logits);

struct Gradients {
    std::map<std::uint32_t, std::vector<double>> W1_rows;
    std::vector<double> b1, W2, b2, Wc, bc;

    explicit Gradients(const Hyper& hyper);
    void clear();
};

/// Accumulates parameter gradients for one example given upstream gradients
/// with respect to its embedding z and its logits.
void backward(const ModelState& state, const FeatureVector& fv, const Forward& fwd, std::span<const double> grad_z,
              std::span<const double> grad_logits, Gradients& grads);

/// Gradient of a loss with respect to u, given the gradient with respect to
/// z = u / |u|: (I - z z^T) g / |u|.
std::vector<double> normalize_backward(std::span<const double> z, double u_norm, std::span<const double> grad_z);

void apply_update(ModelState& state, const Gradients& grads, const OptimizerConfig& config);

/// Versioned binary checkpoint (layout in docs/checkpoint.md).
void save_checkpoint(std::ostream& out, const ModelState& state, const std::vector<Stance>& labels);
void save_checkpoint(const std::string& path, const ModelState& state, const std::vector<Stance>& labels);
ModelState load_checkpoint(std::istream& in, std::vector<Stance>* labels = nullptr);
ModelState load_checkpoint(const std::string& path, std::vector<Stance>* labels = nullptr);

/// Hash of the serialized checkpoint bytes.
std::uint64_t checkpoint_hash(const ModelState& state, const std::vector<Stance>& labels);

}  // namespace stance::encoder
