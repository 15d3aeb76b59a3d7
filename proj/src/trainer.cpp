#include "stance/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "stance/affinity.hpp"
#include "stance/config.hpp"

namespace stance::trainer {

using encoder::FeatureVector;
using encoder::ModelState;

void TrainConfig::validate() const {
    if (batch_size == 0) throw ValidationError("batch_size must be positive");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw ValidationError("validation_fraction must lie in [0, 1)");
    if (model.d_feat == 0 || model.d_h == 0 || model.d_z == 0) throw ValidationError("model dimensions must be positive");
    optimizer.validate();
    loss.validate();
    if (counterfactual.enabled) {
        if (counterfactual.iterations == 0) throw ValidationError("counterfactual iterations must be positive");
        if (!(counterfactual.max_mask_frac > 0.0 && counterfactual.max_mask_frac <= 1.0))
            throw ValidationError("max_mask_frac must lie in (0, 1]");
        if (!(counterfactual.alpha > 0.0)) throw ValidationError("alpha must be positive");
        if (!(counterfactual.generator.temperature > 0.0)) throw ValidationError("temperature must be positive");
    }
}

nlohmann::ordered_json RunManifest::to_json(bool include_timing) const {
    nlohmann::ordered_json j;
    j["config"] = config;
    j["source_domain"] = source_domain;
    j["target_domain"] = target_domain;
    j["fingerprints"] = {{"train", hex64(train_fingerprint)},
                         {"validation", hex64(validation_fingerprint)},
                         {"d_total", hex64(total_fingerprint)}};
    j["train_size"] = train_size;
    j["validation_size"] = validation_size;
    j["d_total_size"] = d_total_size;
    j["counterfactuals"] = {{"generated", counterfactuals}, {"parents", parents}, {"skipped_unmasked", skipped_unmasked}};
    if (infiller)
        j["infiller"] = {{"documents", infiller->documents},
                         {"slots", infiller->slots},
                         {"tokens_total", infiller->tokens_total},
                         {"tokens_correct", infiller->tokens_correct},
                         {"fill_accuracy", infiller->fill_accuracy()}};
    j["steps"] = steps;
    j["best_epoch"] = best_epoch;
    j["best_validation_accuracy"] = best_validation_accuracy ? nlohmann::ordered_json(*best_validation_accuracy) : nlohmann::ordered_json(nullptr);
    auto& curve = j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : epochs)
        curve.push_back({{"epoch", e.epoch},
                         {"steps", e.steps},
                         {"loss_total", e.loss_total},
                         {"loss_ce", e.loss_ce},
                         {"loss_cont", e.loss_cont},
                         {"validation_accuracy",
                          e.validation_accuracy ? nlohmann::ordered_json(*e.validation_accuracy) : nlohmann::ordered_json(nullptr)}});
    j["checkpoint_path"] = checkpoint_path;
    if (include_timing) j["timing"] = {{"wall_clock_seconds", wall_clock_seconds}};
    return j;
}

std::pair<corpus::Corpus, corpus::Corpus> carve_validation(const corpus::Corpus& train, double fraction,
                                                           std::uint64_t seed) {
    const std::size_t k = train.label_set().size();
    std::vector<std::vector<std::size_t>> strata(train.domains().size() * k);
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto& ex = train.examples()[i];
        strata[train.domain_index(ex.domain) * k + train.label_index(ex.stance)].push_back(i);
    }
    std::vector<char> held(train.size(), 0);
    Rng rng(derive_seed(seed, {0x7a11d}));
    for (auto& idx : strata) {
        rng.shuffle(idx);
        const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(idx.size()) + 1e-9));
        for (std::size_t i = 0; i < n; ++i) held[idx[i]] = 1;
    }
    corpus::Corpus fit(train.domains()), validation(train.domains());
    for (std::size_t i = 0; i < train.size(); ++i) (held[i] ? validation : fit).add(train.examples()[i]);
    return {std::move(fit), std::move(validation)};
}

BatchLoss compute_batch_loss(const ModelState& state, const BatchInput& batch, const objective::LossConfig& loss,
                             encoder::Gradients* grads) {
    const std::size_t n = batch.features.size();
    if (n == 0) throw ValidationError("empty batch");
    std::vector<encoder::Forward> fwd;
    fwd.reserve(n);
    for (const auto* fv : batch.features) fwd.push_back(encoder::forward(state, *fv));

    BatchLoss out;
    std::vector<std::vector<double>> grad_logits(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto ce = objective::cross_entropy_from_logits(fwd[i].logits, batch.labels[i]);
        out.ce += ce.loss / static_cast<double>(n);
        grad_logits[i] = std::move(ce.grad_logits);
        for (double& g : grad_logits[i]) g *= (1.0 - loss.lambda) / static_cast<double>(n);
    }

    std::vector<std::vector<double>> grad_z;
    if (n >= 2) {
        objective::ContrastiveBatch cb;
        for (auto& f : fwd) cb.z.push_back(f.z);
        cb.labels = batch.labels;
        cb.anchor = batch.anchor;
        try {
            auto r = objective::pair_loss(cb, loss);
            out.diagnostics = r.diagnostics;
            // The triplet loss is already a mean over anchors.
            const double scale = loss.variant == objective::LossVariant::Triplet || r.diagnostics.anchors == 0
                                     ? 1.0
                                     : 1.0 / static_cast<double>(r.diagnostics.anchors);
            out.cont = r.loss * scale;
            grad_z = std::move(r.grad_z);
            for (auto& g : grad_z)
                for (double& v : g) v *= loss.lambda * scale;
        } catch (const ValidationError&) {
            throw;
        } catch (const Error&) {
            out.degenerate = true;
        }
    } else {
        out.degenerate = true;
    }
    out.total = objective::total_loss(out.cont, out.ce, loss.lambda);

    if (grads) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::span<const double> gz = grad_z.empty() ? std::span<const double>() : std::span<const double>(grad_z[i]);
            encoder::backward(state, *batch.features[i], fwd[i], gz, grad_logits[i], *grads);
        }
    }
    return out;
}

std::vector<Prediction> predict(const ModelState& state, const corpus::Corpus& corpus,
                                const std::vector<Stance>& labels) {
    if (labels.size() != state.hyper.k) throw ValidationError("label set does not match the model's class count");
    std::vector<Prediction> out;
    out.reserve(corpus.size());
    for (const auto& ex : corpus.examples()) {
        const auto f = encoder::forward(state, encoder::featurize(ex, state.hyper.d_feat, state.hyper.hash_seed));
        Prediction p;
        p.p = f.p;
        p.label_index = static_cast<std::size_t>(std::max_element(f.p.begin(), f.p.end()) - f.p.begin());
        p.label = labels[p.label_index];
        p.z = f.z;
        out.push_back(std::move(p));
    }
    return out;
}

namespace {

double accuracy_on(const ModelState& state, const std::vector<FeatureVector>& features,
                   const std::vector<std::size_t>& gold) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto f = encoder::forward(state, features[i]);
        const auto arg = static_cast<std::size_t>(std::max_element(f.p.begin(), f.p.end()) - f.p.begin());
        hit += arg == gold[i];
    }
    return static_cast<double>(hit) / static_cast<double>(features.size());
}

}  // namespace

TrainResult train(const corpus::Corpus& train_corpus, const corpus::SplitSpec& split, const TrainConfig& cfg,
                  std::ostream* batch_log) {
    const auto started = std::chrono::steady_clock::now();
    cfg.validate();
    if (train_corpus.empty()) throw ValidationError("training corpus is empty");
    if (!train_corpus.has_domain(split.source_domain) || !train_corpus.has_domain(split.target_domain))
        throw ValidationError("training corpus lacks the source or target domain");

    TrainResult result{ModelState{}, train_corpus.label_set(), RunManifest{}, corpus::Corpus(train_corpus.domains())};
    auto& m = result.manifest;
    m.config = config::to_json(cfg);
    m.source_domain = split.source_domain;
    m.target_domain = split.target_domain;
    m.train_fingerprint = train_corpus.fingerprint();
    m.train_size = train_corpus.size();

    encoder::Hyper hyper = cfg.model;
    hyper.k = static_cast<std::uint32_t>(result.labels.size());
    hyper.init_seed = derive_seed(cfg.seed, {0x1a17, cfg.model.init_seed});

    auto [fit, validation] = carve_validation(train_corpus, cfg.validation_fraction, cfg.seed);
    m.validation_fingerprint = validation.fingerprint();
    m.validation_size = validation.size();

    // Stage 1: counterfactual generation toward the target domain.
    if (cfg.counterfactual.enabled) {
        const auto& cc = cfg.counterfactual;
        const auto table = affinity::NgramTable::build(fit, cc.min_count);
        reconstructor::InfillerOptions io;
        io.alpha = cc.alpha;
        io.tau_mask_train = cc.tau_mask;
        io.max_mask_frac = cc.max_mask_frac;
        io.orientation_size = cc.orientation_size;
        io.min_count = cc.min_count;
        io.sanity_limit = cc.sanity_limit;
        reconstructor::InfillerReport report;
        const auto model = reconstructor::train_infiller(fit, table, io, &report);
        m.infiller = report;
        auto spec = cc.generator;
        spec.seed = derive_seed(cfg.seed, {0xcf, cc.generator.seed});
        const reconstructor::Generator gen(spec, model, table);
        const auto orientation = reconstructor::make_orientation(table, split.target_domain, cc.orientation_size);
        const reconstructor::PassOptions po{cc.iterations, cc.tau_mask, cc.max_mask_frac};
        auto pass = reconstructor::counterfactual_pass(fit, table, gen, orientation, split.source_domain,
                                                       split.target_domain, po);
        m.parents = pass.parents;
        m.skipped_unmasked = pass.skipped_unmasked;
        m.counterfactuals = pass.corpus.size();
        result.counterfactuals = std::move(pass.corpus);
    }

    // Stage 2: contrastive data and mini-batch optimization.
    const objective::CdSampler sampler(fit, result.counterfactuals, split.source_domain, cfg.batch_size,
                                       derive_seed(cfg.seed, {0x5a3}));
    m.d_total_size = sampler.total().size();
    m.total_fingerprint = sampler.total().fingerprint();

    std::vector<std::size_t> class_of(sampler.total().size());
    std::vector<FeatureVector> features;
    features.reserve(sampler.total().size());
    for (std::size_t i = 0; i < sampler.total().size(); ++i) {
        const auto& ex = sampler.total().examples()[i];
        features.push_back(encoder::featurize(ex, hyper.d_feat, hyper.hash_seed));
        const auto it = std::find(result.labels.begin(), result.labels.end(), ex.stance);
        if (it == result.labels.end()) throw ValidationError("example '" + ex.id + "' has a label outside the label set");
        class_of[i] = static_cast<std::size_t>(it - result.labels.begin());
    }
    std::vector<FeatureVector> val_features;
    std::vector<std::size_t> val_gold;
    for (const auto& ex : validation.examples()) {
        val_features.push_back(encoder::featurize(ex, hyper.d_feat, hyper.hash_seed));
        val_gold.push_back(
            static_cast<std::size_t>(std::find(result.labels.begin(), result.labels.end(), ex.stance) - result.labels.begin()));
    }

    ModelState state = ModelState::initialize(hyper);
    ModelState best = state;
    std::optional<double> best_acc;
    std::size_t stale = 0;
    encoder::Gradients grads(hyper);

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        EpochRecord rec;
        rec.epoch = e + 1;
        const auto batches = sampler.epoch(e);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& spec = batches[b];
            BatchInput in;
            for (std::size_t item : spec.items) {
                in.features.push_back(&features[item]);
                in.labels.push_back(class_of[item]);
                in.anchor.push_back(sampler.is_anchor(item) ? 1 : 0);
            }
            grads.clear();
            const auto loss = compute_batch_loss(state, in, cfg.loss, &grads);
            if (!std::isfinite(loss.total)) {
                std::string ids;
                for (const auto& id : spec.ids) ids += (ids.empty() ? "" : ",") + id;
                throw Error("non-finite loss in epoch " + std::to_string(e + 1) + " batch [" + ids + "]");
            }
            encoder::apply_update(state, grads, cfg.optimizer);
            ++rec.steps;
            rec.loss_total += loss.total;
            rec.loss_ce += loss.ce;
            rec.loss_cont += loss.cont;
            if (batch_log) {
                nlohmann::ordered_json j{{"epoch", e + 1},
                                         {"batch", b},
                                         {"l_cont", loss.cont},
                                         {"l_ce", loss.ce},
                                         {"l_total", loss.total},
                                         {"anchors", loss.diagnostics.anchors},
                                         {"empty_positive", loss.diagnostics.empty_positive},
                                         {"empty_negative", loss.diagnostics.empty_negative},
                                         {"min_cos", loss.diagnostics.min_cos},
                                         {"max_cos", loss.diagnostics.max_cos},
                                         {"degenerate", loss.degenerate}};
                *batch_log << j.dump() << '\n';
            }
        }
        if (rec.steps) {
            const auto s = static_cast<double>(rec.steps);
            rec.loss_total /= s;
            rec.loss_ce /= s;
            rec.loss_cont /= s;
        }
        m.steps += rec.steps;
        if (!state.all_finite()) throw Error("parameters became non-finite in epoch " + std::to_string(e + 1));

        if (!val_features.empty()) {
            const double acc = accuracy_on(state, val_features, val_gold);
            rec.validation_accuracy = acc;
            if (!best_acc || acc > *best_acc) {
                best_acc = acc;
                best = state;
                m.best_epoch = e + 1;
                stale = 0;
            } else {
                ++stale;
            }
        } else {
            best = state;
            m.best_epoch = e + 1;
        }
        m.epochs.push_back(rec);
        if (cfg.patience && stale >= cfg.patience) break;
    }

    m.best_validation_accuracy = best_acc;
    result.state = std::move(best);
    m.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

}  // namespace stance::trainer
