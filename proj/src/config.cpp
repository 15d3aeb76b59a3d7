#include "stance/config.hpp"

#include <algorithm>
#include <fstream>
#include <type_traits>

namespace stance::config {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string_view optimizer_name(encoder::OptimizerKind k) { return k == encoder::OptimizerKind::Adam ? "ADAM" : "SGD"; }

encoder::OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "ADAM") return encoder::OptimizerKind::Adam;
    if (s == "SGD") return encoder::OptimizerKind::Sgd;
    throw ValidationError("unknown optimizer kind '" + s + "'");
}

ordered_json section_train(const trainer::TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"patience", t.patience},
            {"validation_fraction", t.validation_fraction}};
}

ordered_json section_optimizer(const encoder::OptimizerConfig& o) {
    return {{"kind", optimizer_name(o.kind)}, {"lr", o.lr},   {"beta1", o.beta1},
            {"beta2", o.beta2},               {"eps", o.eps}, {"momentum", o.momentum}};
}

ordered_json section_loss(const objective::LossConfig& l) {
    return {{"variant", objective::to_string(l.variant)},
            {"tau_temp", l.tau_temp},
            {"lambda", l.lambda},
            {"sim_floor", l.sim_floor},
            {"margin", l.margin}};
}

ordered_json section_counterfactual(const trainer::CounterfactualConfig& c) {
    return {{"enabled", c.enabled},
            {"iterations", c.iterations},
            {"tau_mask", c.tau_mask},
            {"max_mask_frac", c.max_mask_frac},
            {"alpha", c.alpha},
            {"min_count", c.min_count},
            {"orientation_size", c.orientation_size},
            {"sanity_limit", c.sanity_limit}};
}

ordered_json section_generator(const reconstructor::GeneratorSpec& g) {
    return {{"kind", reconstructor::to_string(g.kind)},
            {"sampling", reconstructor::to_string(g.sampling)},
            {"temperature", g.temperature}};
}

ordered_json section_model(const encoder::Hyper& h) {
    return {{"d_feat", h.d_feat}, {"d_h", h.d_h}, {"d_z", h.d_z}, {"hash_seed", h.hash_seed}};
}

// Every key of `given` must exist in `schema`; objects are checked recursively.
void check_keys(const json& given, const ordered_json& schema, const std::string& path) {
    if (!given.is_object()) throw ValidationError("config '" + (path.empty() ? "<root>" : path) + "' must be an object");
    for (auto it = given.begin(); it != given.end(); ++it) {
        const std::string full = path.empty() ? it.key() : path + "." + it.key();
        if (!schema.contains(it.key())) throw ValidationError("unknown config key '" + full + "'");
        if (schema.at(it.key()).is_object()) check_keys(it.value(), schema.at(it.key()), full);
    }
}

void merge(ordered_json& base, const json& patch) {
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (base[it.key()].is_object() && it.value().is_object())
            merge(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

// nlohmann converts negative numbers to unsigned types silently.
bool unsigned_ok(const ordered_json& v) {
    if (v.is_array()) return std::all_of(v.begin(), v.end(), [](const ordered_json& e) { return unsigned_ok(e); });
    return !v.is_number() || v.is_number_unsigned();
}

template <typename T>
T read(const ordered_json& tree, const char* section, const char* key) {
    try {
        const auto& v = tree.at(section).at(key);
        if constexpr (std::is_unsigned_v<T> || std::is_same_v<T, std::vector<std::size_t>>)
            if (!unsigned_ok(v)) throw ValidationError(std::string("config '") + section + "." + key + "' must be non-negative");
        return v.get<T>();
    } catch (const json::exception&) {
        throw ValidationError(std::string("config '") + section + "." + key + "' has the wrong type");
    }
}

GlobalConfig from_tree(const ordered_json& t) {
    GlobalConfig c;
    try {
        if (!t.at("seed").is_number_unsigned()) throw ValidationError("config 'seed' must be a non-negative integer");
        c.seed = t.at("seed").get<std::uint64_t>();
    } catch (const json::exception&) {
        throw ValidationError("config 'seed' must be a non-negative integer");
    }

    c.split.source_domain = read<std::string>(t, "split", "source_domain");
    c.split.target_domain = read<std::string>(t, "split", "target_domain");
    c.split.gamma = read<double>(t, "split", "gamma");
    c.split.holdout = read<double>(t, "split", "holdout");
    c.split.include_none = read<bool>(t, "split", "include_none");

    auto& s = c.synth;
    s.docs_per_domain = read<std::size_t>(t, "synth", "docs_per_domain");
    s.domain_doc_counts = read<std::vector<std::size_t>>(t, "synth", "domain_doc_counts");
    s.domain_marker_vocab_size = read<std::size_t>(t, "synth", "domain_marker_vocab_size");
    s.stance_marker_vocab_size = read<std::size_t>(t, "synth", "stance_marker_vocab_size");
    s.shared_vocab_size = read<std::size_t>(t, "synth", "shared_vocab_size");
    s.tokens_min = read<std::size_t>(t, "synth", "tokens_min");
    s.tokens_max = read<std::size_t>(t, "synth", "tokens_max");
    s.marker_injection_rate = read<double>(t, "synth", "marker_injection_rate");
    s.stance_marker_rates = read<std::vector<double>>(t, "synth", "stance_marker_rates");
    s.shortcut_rates = read<std::vector<double>>(t, "synth", "shortcut_rates");
    s.foreign_marker_rates = read<std::vector<double>>(t, "synth", "foreign_marker_rates");
    s.domain_markers_min = read<std::size_t>(t, "synth", "domain_markers_min");
    s.domain_markers_max = read<std::size_t>(t, "synth", "domain_markers_max");
    s.marker_zipf = read<double>(t, "synth", "marker_zipf");
    s.domain_names = read<std::vector<std::string>>(t, "synth", "domain_names");
    s.target_phrases = read<std::vector<std::string>>(t, "synth", "target_phrases");

    auto& tr = c.train;
    tr.epochs = read<std::size_t>(t, "train", "epochs");
    tr.batch_size = read<std::size_t>(t, "train", "batch_size");
    tr.patience = read<std::size_t>(t, "train", "patience");
    tr.validation_fraction = read<double>(t, "train", "validation_fraction");

    tr.optimizer.kind = parse_optimizer(read<std::string>(t, "optimizer", "kind"));
    tr.optimizer.lr = read<double>(t, "optimizer", "lr");
    tr.optimizer.beta1 = read<double>(t, "optimizer", "beta1");
    tr.optimizer.beta2 = read<double>(t, "optimizer", "beta2");
    tr.optimizer.eps = read<double>(t, "optimizer", "eps");
    tr.optimizer.momentum = read<double>(t, "optimizer", "momentum");

    tr.loss.variant = objective::parse_loss_variant(read<std::string>(t, "loss", "variant"));
    tr.loss.tau_temp = read<double>(t, "loss", "tau_temp");
    tr.loss.lambda = read<double>(t, "loss", "lambda");
    tr.loss.sim_floor = read<double>(t, "loss", "sim_floor");
    tr.loss.margin = read<double>(t, "loss", "margin");

    auto& cf = tr.counterfactual;
    cf.enabled = read<bool>(t, "counterfactual", "enabled");
    cf.iterations = read<std::size_t>(t, "counterfactual", "iterations");
    cf.tau_mask = read<double>(t, "counterfactual", "tau_mask");
    cf.max_mask_frac = read<double>(t, "counterfactual", "max_mask_frac");
    cf.alpha = read<double>(t, "counterfactual", "alpha");
    cf.min_count = read<std::size_t>(t, "counterfactual", "min_count");
    cf.orientation_size = read<std::size_t>(t, "counterfactual", "orientation_size");
    cf.sanity_limit = read<std::size_t>(t, "counterfactual", "sanity_limit");

    cf.generator.kind = reconstructor::parse_generator_kind(read<std::string>(t, "generator", "kind"));
    cf.generator.sampling = reconstructor::parse_sampling(read<std::string>(t, "generator", "sampling"));
    cf.generator.temperature = read<double>(t, "generator", "temperature");

    tr.model.d_feat = read<std::uint32_t>(t, "model", "d_feat");
    tr.model.d_h = read<std::uint32_t>(t, "model", "d_h");
    tr.model.d_z = read<std::uint32_t>(t, "model", "d_z");
    tr.model.hash_seed = read<std::uint64_t>(t, "model", "hash_seed");

    c.eval.seeds = read<std::size_t>(t, "eval", "seeds");
    c.eval.lambda_grid = read<std::vector<double>>(t, "eval", "lambda_grid");
    c.eval.gamma_grid = read<std::vector<double>>(t, "eval", "gamma_grid");
    c.eval.ablation_gamma = read<double>(t, "eval", "ablation_gamma");
    c.validate();
    return c;
}

}  // namespace

void GlobalConfig::validate() const {
    split_spec().validate();
    synth_config().validate();
    train_config().validate();
    if (eval.seeds == 0) throw ValidationError("eval.seeds must be positive");
    for (double l : eval.lambda_grid)
        if (!(l >= 0.0 && l <= 1.0)) throw ValidationError("eval.lambda_grid values must lie in [0, 1]");
    for (double g : eval.gamma_grid)
        if (!(g >= 0.0 && g <= 1.0)) throw ValidationError("eval.gamma_grid values must lie in [0, 1]");
    if (!(eval.ablation_gamma >= 0.0 && eval.ablation_gamma <= 1.0))
        throw ValidationError("eval.ablation_gamma must lie in [0, 1]");
}

corpus::SynthConfig GlobalConfig::synth_config() const {
    auto s = synth;
    s.seed = seed;
    return s;
}

corpus::SplitSpec GlobalConfig::split_spec() const {
    auto s = split;
    s.seed = seed;
    return s;
}

trainer::TrainConfig GlobalConfig::train_config() const {
    auto t = train;
    t.seed = seed;
    return t;
}

ordered_json to_json(const trainer::TrainConfig& t) {
    ordered_json j;
    j["seed"] = t.seed;
    j["train"] = section_train(t);
    j["optimizer"] = section_optimizer(t.optimizer);
    j["loss"] = section_loss(t.loss);
    j["counterfactual"] = section_counterfactual(t.counterfactual);
    j["generator"] = section_generator(t.counterfactual.generator);
    j["model"] = section_model(t.model);
    return j;
}

ordered_json to_json(const GlobalConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["split"] = {{"source_domain", c.split.source_domain},
                  {"target_domain", c.split.target_domain},
                  {"gamma", c.split.gamma},
                  {"holdout", c.split.holdout},
                  {"include_none", c.split.include_none}};
    const auto& s = c.synth;
    j["synth"] = {{"docs_per_domain", s.docs_per_domain},
                  {"domain_doc_counts", s.domain_doc_counts},
                  {"domain_marker_vocab_size", s.domain_marker_vocab_size},
                  {"stance_marker_vocab_size", s.stance_marker_vocab_size},
                  {"shared_vocab_size", s.shared_vocab_size},
                  {"tokens_min", s.tokens_min},
                  {"tokens_max", s.tokens_max},
                  {"marker_injection_rate", s.marker_injection_rate},
                  {"stance_marker_rates", s.stance_marker_rates},
                  {"shortcut_rates", s.shortcut_rates},
                  {"foreign_marker_rates", s.foreign_marker_rates},
                  {"domain_markers_min", s.domain_markers_min},
                  {"domain_markers_max", s.domain_markers_max},
                  {"marker_zipf", s.marker_zipf},
                  {"domain_names", s.domain_names},
                  {"target_phrases", s.target_phrases}};
    j["train"] = section_train(c.train);
    j["optimizer"] = section_optimizer(c.train.optimizer);
    j["loss"] = section_loss(c.train.loss);
    j["counterfactual"] = section_counterfactual(c.train.counterfactual);
    j["generator"] = section_generator(c.train.counterfactual.generator);
    j["model"] = section_model(c.train.model);
    j["eval"] = {{"seeds", c.eval.seeds},
                 {"lambda_grid", c.eval.lambda_grid},
                 {"gamma_grid", c.eval.gamma_grid},
                 {"ablation_gamma", c.eval.ablation_gamma}};
    return j;
}

GlobalConfig from_json(const json& j) {
    auto tree = to_json(GlobalConfig{});
    check_keys(j, tree, "");
    merge(tree, j);
    return from_tree(tree);
}

GlobalConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

void apply_override(GlobalConfig& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) throw ValidationError("override must look like path=value");
    const std::string path(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));

    auto tree = to_json(config);
    ordered_json* node = &tree;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(key)) throw ValidationError("unknown config key '" + path + "'");
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (node->is_object()) throw ValidationError("config key '" + path + "' names a section");
    ordered_json value;
    try {
        value = ordered_json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    *node = value;
    config = from_tree(tree);
}

}  // namespace stance::config
