#include "stance/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stance::objective {

std::string_view to_string(LossVariant v) {
    switch (v) {
        case LossVariant::ModifiedSupCon: return "MODIFIED_SUPCON";
        case LossVariant::SupConPlain: return "SUPCON_PLAIN";
        case LossVariant::Triplet: return "TRIPLET";
    }
    return "?";
}

LossVariant parse_loss_variant(std::string_view s) {
    if (s == "MODIFIED_SUPCON") return LossVariant::ModifiedSupCon;
    if (s == "SUPCON_PLAIN") return LossVariant::SupConPlain;
    if (s == "TRIPLET") return LossVariant::Triplet;
    throw ValidationError("unknown loss variant '" + std::string(s) + "'");
}

void LossConfig::validate() const {
    if (!(tau_temp > 0.0)) throw ValidationError("tau_temp must be positive");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
    if (!(sim_floor > 0.0)) throw ValidationError("sim_floor must be positive");
    if (!(margin >= 0.0)) throw ValidationError("margin must be non-negative");
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_batch(const ContrastiveBatch& batch) {
    const std::size_t n = batch.z.size();
    if (n < 2) throw ValidationError("contrastive batch needs at least 2 items");
    if (batch.labels.size() != n || (!batch.anchor.empty() && batch.anchor.size() != n))
        throw ValidationError("contrastive batch fields have mismatched lengths");
    for (std::size_t i = 0; i < n; ++i) {
        if (batch.z[i].size() != batch.z[0].size()) throw ValidationError("embeddings differ in dimension");
        if (std::abs(std::sqrt(dot(batch.z[i], batch.z[i])) - 1.0) > 1e-6)
            throw ValidationError("embedding " + std::to_string(i) + " is not unit norm");
    }
}

std::vector<std::vector<double>> pairwise_dots(const ContrastiveBatch& batch, LossDiagnostics& diag) {
    const std::size_t n = batch.z.size();
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    diag.min_cos = std::numeric_limits<double>::infinity();
    diag.max_cos = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            d[i][j] = d[j][i] = dot(batch.z[i], batch.z[j]);
            diag.min_cos = std::min(diag.min_cos, d[i][j]);
            diag.max_cos = std::max(diag.max_cos, d[i][j]);
        }
    return d;
}

}  // namespace

LossResult contrastive_loss(const ContrastiveBatch& batch, const LossConfig& cfg) {
    check_batch(batch);
    const std::size_t n = batch.z.size();
    const std::size_t dim = batch.z[0].size();
    const bool weighted = cfg.variant == LossVariant::ModifiedSupCon;
    const double tau = cfg.tau_temp;

    LossResult out;
    out.grad_z.assign(n, std::vector<double>(dim, 0.0));
    const auto d = pairwise_dots(batch, out.diagnostics);

    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!batch.is_anchor(i)) continue;
        ++out.diagnostics.anchors;
        std::size_t np = 0, nn = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) (batch.labels[j] == batch.labels[i] ? np : nn)++;
        const bool use_neg = weighted && nn > 0;
        if (np == 0) ++out.diagnostics.empty_positive;
        if (nn == 0) ++out.diagnostics.empty_negative;
        if (np == 0 && !use_neg) continue;

        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < n; ++a)
            if (a != i) top = std::max(top, d[i][a] / tau);
        double sum = 0.0;
        for (std::size_t a = 0; a < n; ++a)
            if (a != i) sum += (q[a] = std::exp(d[i][a] / tau - top));
        const double lse = top + std::log(sum);
        for (std::size_t a = 0; a < n; ++a)
            if (a != i) q[a] /= sum;

        const double c_lse = (np > 0 ? 1.0 : 0.0) - (use_neg ? 1.0 : 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const bool pos = batch.labels[j] == batch.labels[i];
            const double cos = d[i][j];
            const double s = weighted ? std::max(cos, cfg.sim_floor) : 1.0;
            const double ds = (weighted && cos > cfg.sim_floor) ? 1.0 / s : 0.0;
            const double log_ratio = cos / tau + std::log(s) - lse;
            double w = c_lse * q[j] / tau;
            if (pos) {
                out.loss -= log_ratio / static_cast<double>(np);
                w -= (1.0 / tau + ds) / static_cast<double>(np);
            } else if (use_neg) {
                out.loss += log_ratio / static_cast<double>(nn);
                w += (1.0 / tau + ds) / static_cast<double>(nn);
            }
            for (std::size_t k = 0; k < dim; ++k) {
                out.grad_z[i][k] += w * batch.z[j][k];
                out.grad_z[j][k] += w * batch.z[i][k];
            }
        }
    }
    return out;
}

LossResult triplet_loss(const ContrastiveBatch& batch, double margin) {
    check_batch(batch);
    const std::size_t n = batch.z.size();
    const std::size_t dim = batch.z[0].size();
    LossResult out;
    out.grad_z.assign(n, std::vector<double>(dim, 0.0));
    pairwise_dots(batch, out.diagnostics);
    std::vector<std::vector<double>> sq(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
            double s = 0.0;
            for (std::size_t k = 0; k < dim; ++k) s += (batch.z[a][k] - batch.z[b][k]) * (batch.z[a][k] - batch.z[b][k]);
            sq[a][b] = sq[b][a] = s;
        }
    auto dist = [&](std::size_t a, std::size_t b) { return sq[a][b]; };

    struct Active {
        std::size_t i, p, n;
    };
    std::vector<Active> active;
    std::size_t valid = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!batch.is_anchor(i)) continue;
        ++out.diagnostics.anchors;
        std::size_t p = n, m = n;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (batch.labels[j] == batch.labels[i]) {
                if (p == n || dist(i, j) > dist(i, p)) p = j;
            } else if (m == n || dist(i, j) < dist(i, m)) {
                m = j;
            }
        }
        if (p == n) ++out.diagnostics.empty_positive;
        if (m == n) ++out.diagnostics.empty_negative;
        if (p == n || m == n) continue;
        ++valid;
        const double term = dist(i, p) - dist(i, m) + margin;
        if (term > 0.0) {
            out.loss += term;
            active.push_back({i, p, m});
        }
    }
    if (valid == 0) throw Error("degenerate batch");
    const double scale = 1.0 / static_cast<double>(valid);
    out.loss *= scale;
    for (const auto& a : active)
        for (std::size_t k = 0; k < dim; ++k) {
            const double gp = 2.0 * (batch.z[a.i][k] - batch.z[a.p][k]) * scale;
            const double gn = 2.0 * (batch.z[a.i][k] - batch.z[a.n][k]) * scale;
            out.grad_z[a.i][k] += gp - gn;
            out.grad_z[a.p][k] -= gp;
            out.grad_z[a.n][k] += gn;
        }
    return out;
}

LossResult pair_loss(const ContrastiveBatch& batch, const LossConfig& config) {
    if (config.variant == LossVariant::Triplet) return triplet_loss(batch, config.margin);
    return contrastive_loss(batch, config);
}

CrossEntropy cross_entropy_from_logits(const std::vector<double>& logits, std::size_t y) {
    if (y >= logits.size()) throw ValidationError("class index out of range");
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - top);
    const double lse = top + std::log(sum);
    CrossEntropy ce;
    ce.loss = lse - logits[y];
    ce.grad_logits.resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) ce.grad_logits[c] = std::exp(logits[c] - lse) - (c == y ? 1.0 : 0.0);
    return ce;
}

double cross_entropy(const std::vector<double>& p, std::size_t y) {
    if (y >= p.size()) throw ValidationError("class index out of range");
    return -std::log(std::max(p[y], std::numeric_limits<double>::min()));
}

double total_loss(double l_cont, double l_ce, double lambda) { return lambda * l_cont + (1.0 - lambda) * l_ce; }

// ---- sampler ---------------------------------------------------------------

CdSampler::CdSampler(const corpus::Corpus& originals, const corpus::Corpus& counterfactuals,
                     std::string_view source_domain, std::size_t batch_size, std::uint64_t seed)
    : total_(originals.domains()), batch_size_(batch_size), seed_(seed) {
    if (batch_size == 0) throw ValidationError("batch size must be positive");
    for (const auto& ex : originals.examples()) {
        origins_.push_back(ex.domain == source_domain ? Origin::SourceTarget : Origin::DestinationTarget);
        total_.add(ex);
    }
    for (const auto& ex : counterfactuals.examples()) {
        origins_.push_back(Origin::Counterfactual);
        total_.add(ex);
    }
    if (total_.empty()) throw ValidationError("contrastive data is empty");
    num_labels_ = total_.label_set().size();
    std::vector<std::size_t> seen(num_labels_, 0);
    for (const auto& ex : total_.examples()) {
        labels_.push_back(total_.label_index(ex.stance));
        ++seen[labels_.back()];
    }
    if (std::count_if(seen.begin(), seen.end(), [](std::size_t c) { return c > 0; }) < 2)
        throw ValidationError("contrastive data holds a single stance label");
    batch_size_ = std::min(batch_size_, total_.size());
}

std::size_t CdSampler::batches_per_epoch() const { return (total_.size() + batch_size_ - 1) / batch_size_; }

std::vector<BatchSpec> CdSampler::epoch(std::size_t e) const {
    const std::size_t m = total_.size();
    const std::size_t nb = batches_per_epoch();
    auto first = iota_indices(m);
    Rng(derive_seed(seed_, {e, 1})).shuffle(first);

    std::vector<std::vector<std::size_t>> batches(nb);
    for (std::size_t i = 0; i < m; ++i) batches[i / batch_size_].push_back(first[i]);
    auto& tail = batches.back();
    if (tail.size() < batch_size_) {
        auto second = iota_indices(m);
        Rng(derive_seed(seed_, {e, 2})).shuffle(second);
        for (std::size_t x : second) {
            if (tail.size() == batch_size_) break;
            if (std::find(tail.begin(), tail.end(), x) == tail.end()) tail.push_back(x);
        }
    }

    std::vector<std::size_t> inventory(num_labels_, 0);
    for (std::size_t l : labels_) ++inventory[l];
    auto count = [&](const std::vector<std::size_t>& b, std::size_t l) {
        return static_cast<std::size_t>(
            std::count_if(b.begin(), b.end(), [&](std::size_t x) { return labels_[x] == l; }));
    };
    auto contains = [](const std::vector<std::size_t>& b, std::size_t x) {
        return std::find(b.begin(), b.end(), x) != b.end();
    };
    for (std::size_t bi = 0; bi < nb; ++bi) {
        auto& b = batches[bi];
        for (std::size_t l = 0; l < num_labels_; ++l) {
            if (inventory[l] < 2) continue;
            while (count(b, l) < 2) {
                bool swapped = false;
                for (std::size_t ci = 0; ci < nb && !swapped; ++ci) {
                    if (ci == bi) continue;
                    auto& c = batches[ci];
                    if (count(c, l) <= 2) continue;
                    for (std::size_t xi = 0; xi < c.size() && !swapped; ++xi) {
                        if (labels_[c[xi]] != l || contains(b, c[xi])) continue;
                        for (std::size_t yi = 0; yi < b.size(); ++yi) {
                            const std::size_t other = labels_[b[yi]];
                            if (other == l || count(b, other) <= 2 || contains(c, b[yi])) continue;
                            std::swap(c[xi], b[yi]);
                            swapped = true;
                            break;
                        }
                    }
                }
                if (!swapped) break;
            }
        }
    }

    std::vector<BatchSpec> out(nb);
    for (std::size_t bi = 0; bi < nb; ++bi) {
        out[bi].items = std::move(batches[bi]);
        for (std::size_t x : out[bi].items) out[bi].ids.push_back(total_.examples()[x].id);
    }
    return out;
}

}  // namespace stance::objective
