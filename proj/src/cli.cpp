#include "stance/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <thread>

#include "stance/affinity.hpp"
#include "stance/config.hpp"
#include "stance/corpus.hpp"
#include "stance/encoder.hpp"
#include "stance/eval.hpp"
#include "stance/reconstructor.hpp"
#include "stance/trainer.hpp"

namespace stance::cli {

using nlohmann::ordered_json;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<double> gamma, lambda;
    std::optional<std::size_t> epochs;
    std::optional<std::string> source, target;
    std::size_t jobs = 1;
    bool pretty = false;

    config::GlobalConfig resolve() const {
        auto cfg = config_path.empty() ? config::GlobalConfig{} : config::load(config_path);
        for (const auto& o : overrides) config::apply_override(cfg, o);
        if (seed) cfg.seed = *seed;
        if (gamma) cfg.split.gamma = *gamma;
        if (lambda) cfg.train.loss.lambda = *lambda;
        if (epochs) cfg.train.epochs = *epochs;
        if (source) cfg.split.source_domain = *source;
        if (target) cfg.split.target_domain = *target;
        cfg.validate();
        return cfg;
    }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--set", c.overrides, "Override a config field: dotted.path=value (repeatable)");
    app->add_option("--seed", c.seed, "Seed for every random stream");
    app->add_option("--gamma", c.gamma, "Fraction of the target training pool admitted");
    app->add_option("--lambda", c.lambda, "Weight of the pair loss in the combined objective");
    app->add_option("--epochs", c.epochs, "Training epochs");
    app->add_option("--source", c.source, "Source domain name");
    app->add_option("--target", c.target, "Target domain name");
    app->add_option("--jobs", c.jobs, "Worker threads for independent runs")->check(CLI::PositiveNumber);
    app->add_flag("--pretty", c.pretty, "Print a human-readable summary");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path + "'");
    f << text;
    if (!f) throw Error("failed writing '" + path + "'");
}

void emit_json(const std::optional<std::string>& path, const ordered_json& j, std::ostream& out) {
    const std::string text = j.dump(2) + "\n";
    if (path)
        write_text(*path, text);
    else
        out << text;
}

void write_split(const corpus::Corpus& data, const config::GlobalConfig& cfg, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const auto split = corpus::make_split(data, cfg.split_spec());
    corpus::save_jsonl(dir + "/train.jsonl", split.train, "train");
    corpus::save_jsonl(dir + "/test_source.jsonl", split.test_source, "test_source");
    corpus::save_jsonl(dir + "/test_target.jsonl", split.test_target, "test_target");
}

ordered_json data_block(const corpus::Corpus& c) {
    return {{"size", c.size()}, {"fingerprint", hex64(c.fingerprint())}};
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void print_rows(std::ostream& out, const std::vector<eval::VariantRow>& rows) {
    out << "param                 target_acc        target_auc        source_acc        degradation\n";
    for (const auto& r : rows) {
        std::string name = r.param;
        name.resize(std::max<std::size_t>(name.size(), 20), ' ');
        out << name << "  " << fmt("%.4f", r.target_accuracy.mean) << " +- " << fmt("%.4f", r.target_accuracy.sd)
            << "   " << fmt("%.4f", r.target_auc.mean) << " +- " << fmt("%.4f", r.target_auc.sd) << "   "
            << fmt("%.4f", r.source_accuracy.mean) << " +- " << fmt("%.4f", r.source_accuracy.sd) << "   "
            << fmt("%+.4f", r.degradation.mean) << '\n';
    }
}

corpus::Corpus data_or_synth(const std::optional<std::string>& path, const config::GlobalConfig& cfg) {
    return path ? corpus::load_jsonl(*path) : corpus::synth_benchmark(cfg.synth_config());
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cross-target stance detection with domain counterfactuals and contrastive training", "stance"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    Common common;
    std::optional<std::string> in_path, out_path, data_path, split_dir, records_path, label_spec;
    std::optional<std::string> train_path, test_source_path, test_target_path, manifest_path, batch_log_path;
    std::optional<std::string> checkpoint_path, compare_path, csv_path;
    std::size_t limit = 0;

    auto* synth = app.add_subcommand("synth", "Write the synthetic two-domain benchmark as JSONL");
    add_common(synth, common);
    synth->add_option("--out", out_path, "Output JSONL")->required();
    synth->add_option("--split-dir", split_dir, "Also write train/test_source/test_target JSONL here");

    auto* ingest = app.add_subcommand("ingest", "Validate and normalize a JSONL corpus");
    add_common(ingest, common);
    ingest->add_option("--in", in_path, "Input JSONL")->required()->check(CLI::ExistingFile);
    ingest->add_option("--out", out_path, "Normalized JSONL")->required();
    ingest->add_option("--labels", label_spec, "Label aliases, e.g. pro=FAVOR,anti=AGAINST");
    ingest->add_option("--split-dir", split_dir, "Also write train/test_source/test_target JSONL here");

    auto* aff = app.add_subcommand("affinity", "Score n-grams by domain affinity (TSV)");
    add_common(aff, common);
    aff->add_option("--in", in_path, "Input JSONL")->required()->check(CLI::ExistingFile);
    aff->add_option("--out", out_path, "Output TSV (default stdout)");

    auto* corrupt = app.add_subcommand("corrupt", "Preview masked source-domain texts (JSONL)");
    add_common(corrupt, common);
    corrupt->add_option("--in", in_path, "Input JSONL")->required()->check(CLI::ExistingFile);
    corrupt->add_option("--out", out_path, "Output JSONL (default stdout)");
    corrupt->add_option("--limit", limit, "Maximum records (0 = all)");

    auto* augment = app.add_subcommand("augment", "Generate target-domain counterfactuals (JSONL)");
    add_common(augment, common);
    augment->add_option("--in", in_path, "Input JSONL")->required()->check(CLI::ExistingFile);
    augment->add_option("--out", out_path, "Counterfactual JSONL")->required();
    augment->add_option("--records", records_path, "Per-counterfactual fill records (JSONL)");

    auto* train = app.add_subcommand("train", "Train the classifier");
    add_common(train, common);
    train->add_option("--train", train_path, "Training JSONL")->required()->check(CLI::ExistingFile);
    train->add_option("--test-source", test_source_path, "Source-domain test JSONL")->check(CLI::ExistingFile);
    train->add_option("--test-target", test_target_path, "Target-domain test JSONL")->check(CLI::ExistingFile);
    train->add_option("--out", checkpoint_path, "Checkpoint path")->required();
    train->add_option("--manifest", manifest_path, "Run manifest JSON");
    train->add_option("--batch-log", batch_log_path, "Per-batch loss records (JSONL)");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_common(ev, common);
    ev->add_option("--checkpoint", checkpoint_path, "Checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--test-source", test_source_path, "Source-domain test JSONL")->check(CLI::ExistingFile);
    ev->add_option("--test-target", test_target_path, "Target-domain test JSONL")->check(CLI::ExistingFile);
    ev->add_option("--compare", compare_path, "Second checkpoint for McNemar on the target test")
        ->check(CLI::ExistingFile);
    ev->add_option("--out", out_path, "Report JSON (default stdout)");

    auto* ablate = app.add_subcommand("ablate", "Run the four ablation variants over seeds");
    add_common(ablate, common);
    ablate->add_option("--data", data_path, "Corpus JSONL (default: synthetic benchmark)")->check(CLI::ExistingFile);
    ablate->add_option("--out", out_path, "Report JSON (default stdout)");
    ablate->add_option("--csv", csv_path, "Per-seed CSV");

    auto* sweep = app.add_subcommand("sweep", "Run the lambda and gamma grids over seeds");
    add_common(sweep, common);
    sweep->add_option("--data", data_path, "Corpus JSONL (default: synthetic benchmark)")->check(CLI::ExistingFile);
    sweep->add_option("--out", out_path, "Report JSON (default stdout)");
    sweep->add_option("--csv", csv_path, "Per-seed CSV");

    auto* show = app.add_subcommand("config", "Print the resolved configuration as JSON");
    add_common(show, common);

    if (args.empty()) {
        err << app.help();
        return kExitValidation;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitValidation;
    }

    try {
        const auto cfg = common.resolve();
        const auto echo = config::to_json(cfg);

        if (show->parsed()) {
            out << echo.dump(2) << '\n';
        } else if (synth->parsed()) {
            const auto data = corpus::synth_benchmark(cfg.synth_config());
            corpus::save_jsonl(*out_path, data);
            if (split_dir) write_split(data, cfg, *split_dir);
            if (common.pretty) out << "wrote " << data.size() << " examples to " << *out_path << '\n';
        } else if (ingest->parsed()) {
            const auto map = label_spec ? corpus::parse_label_map(*label_spec) : corpus::LabelMap{};
            const auto data = corpus::load_jsonl(*in_path, map);
            corpus::save_jsonl(*out_path, data);
            if (split_dir) write_split(data, cfg, *split_dir);
            if (common.pretty) out << "validated " << data.size() << " examples\n";
        } else if (aff->parsed()) {
            const auto data = corpus::load_jsonl(*in_path);
            const auto table = affinity::NgramTable::build(data, cfg.train.counterfactual.min_count);
            if (out_path) {
                std::ofstream f(*out_path);
                if (!f) throw Error("cannot write '" + *out_path + "'");
                affinity::write_tsv(f, table, cfg.split.source_domain, cfg.split.target_domain);
            } else {
                affinity::write_tsv(out, table, cfg.split.source_domain, cfg.split.target_domain);
            }
        } else if (corrupt->parsed()) {
            const auto data = corpus::load_jsonl(*in_path);
            const auto table = affinity::NgramTable::build(data, cfg.train.counterfactual.min_count);
            std::string text;
            std::size_t written = 0;
            for (const auto& ex : data.examples()) {
                if (ex.domain != cfg.split.source_domain) continue;
                if (limit && written >= limit) break;
                const auto m = affinity::corrupt(table, ex, cfg.split.source_domain, cfg.split.target_domain,
                                                 cfg.train.counterfactual.tau_mask,
                                                 cfg.train.counterfactual.max_mask_frac);
                ordered_json slots = ordered_json::array();
                for (const auto& s : m.slots)
                    slots.push_back({{"position", s.position}, {"original", corpus::join_tokens(s.original)}, {"score", s.score}});
                text += ordered_json{{"id", ex.id}, {"masked", corpus::join_tokens(m.tokens)}, {"slots", slots}}.dump() +
                        "\n";
                ++written;
            }
            if (out_path)
                write_text(*out_path, text);
            else
                out << text;
        } else if (augment->parsed()) {
            const auto data = corpus::load_jsonl(*in_path);
            const auto& cc = cfg.train.counterfactual;
            const auto table = affinity::NgramTable::build(data, cc.min_count);
            reconstructor::InfillerOptions io;
            io.alpha = cc.alpha;
            io.min_count = cc.min_count;
            const auto model = reconstructor::train_infiller(data, table, io);
            auto spec = cc.generator;
            spec.seed = derive_seed(cfg.seed, {0xcf, cc.generator.seed});
            const reconstructor::Generator gen(spec, model, table);
            const auto orientation = reconstructor::make_orientation(table, cfg.split.target_domain, cc.orientation_size);
            const auto pass = reconstructor::counterfactual_pass(
                data, table, gen, orientation, cfg.split.source_domain, cfg.split.target_domain,
                reconstructor::PassOptions{cc.iterations, cc.tau_mask, cc.max_mask_frac});
            corpus::save_jsonl(*out_path, pass.corpus, "counterfactual");
            if (records_path) {
                std::string text;
                for (const auto& r : pass.records) {
                    ordered_json fills = ordered_json::array();
                    for (const auto& f : r.fills)
                        fills.push_back({{"position", f.output_position},
                                         {"tokens", corpus::join_tokens(f.tokens)},
                                         {"original", corpus::join_tokens(f.original)}});
                    text += ordered_json{{"id", r.example.id}, {"parent_id", r.parent_id}, {"fills", fills}}.dump() + "\n";
                }
                write_text(*records_path, text);
            }
            if (common.pretty)
                out << "generated " << pass.corpus.size() << " counterfactuals from " << pass.parents << " parents ("
                    << pass.skipped_unmasked << " without masked spans)\n";
        } else if (train->parsed()) {
            const auto data = corpus::load_jsonl(*train_path);
            std::unique_ptr<std::ofstream> log;
            if (batch_log_path) {
                log = std::make_unique<std::ofstream>(*batch_log_path);
                if (!*log) throw Error("cannot write '" + *batch_log_path + "'");
            }
            auto result = trainer::train(data, cfg.split_spec(), cfg.train_config(), log.get());
            encoder::save_checkpoint(*checkpoint_path, result.state, result.labels);
            auto& m = result.manifest;
            m.config = echo;
            m.checkpoint_path = *checkpoint_path;
            auto j = m.to_json();
            j["checkpoint_hash"] = hex64(encoder::checkpoint_hash(result.state, result.labels));
            if (test_source_path || test_target_path) {
                ordered_json e;
                std::optional<double> src_acc, tgt_acc;
                if (test_source_path) {
                    const auto mt = eval::evaluate(result.state, corpus::load_jsonl(*test_source_path), result.labels);
                    e["source"] = eval::to_json(mt);
                    src_acc = mt.accuracy;
                }
                if (test_target_path) {
                    const auto mt = eval::evaluate(result.state, corpus::load_jsonl(*test_target_path), result.labels);
                    e["target"] = eval::to_json(mt);
                    tgt_acc = mt.accuracy;
                }
                if (src_acc && tgt_acc) e["degradation"] = eval::degradation(*src_acc, *tgt_acc);
                j["evaluation"] = e;
            }
            if (manifest_path) write_text(*manifest_path, j.dump(2) + "\n");
            if (common.pretty)
                out << "trained " << m.steps << " steps, best epoch " << m.best_epoch << ", D_total " << m.d_total_size
                    << " (" << m.counterfactuals << " counterfactuals)\n";
        } else if (ev->parsed()) {
            std::vector<Stance> labels;
            const auto state = encoder::load_checkpoint(*checkpoint_path, &labels);
            ordered_json report;
            report["config"] = echo;
            report["checkpoint_hash"] = hex64(encoder::checkpoint_hash(state, labels));
            std::optional<eval::CorpusMetrics> src, tgt;
            if (test_source_path) {
                const auto c = corpus::load_jsonl(*test_source_path);
                src = eval::evaluate(state, c, labels);
                report["source"] = eval::to_json(*src);
                report["source"]["data"] = data_block(c);
            }
            if (test_target_path) {
                const auto c = corpus::load_jsonl(*test_target_path);
                tgt = eval::evaluate(state, c, labels);
                report["target"] = eval::to_json(*tgt);
                report["target"]["data"] = data_block(c);
                if (compare_path) {
                    std::vector<Stance> other_labels;
                    const auto other = encoder::load_checkpoint(*compare_path, &other_labels);
                    const auto om = eval::evaluate(other, c, other_labels);
                    report["mcnemar"] = eval::to_json(eval::mcnemar(tgt->preds, om.preds, tgt->gold));
                }
            }
            if (src && tgt) report["degradation"] = eval::degradation(src->accuracy, tgt->accuracy);
            if (!src && !tgt) throw ValidationError("eval needs --test-source and/or --test-target");
            emit_json(out_path, report, out);
            if (common.pretty) {
                if (src) out << "source accuracy " << fmt("%.4f", src->accuracy) << '\n';
                if (tgt) out << "target accuracy " << fmt("%.4f", tgt->accuracy) << '\n';
            }
        } else if (ablate->parsed()) {
            const auto data = data_or_synth(data_path, cfg);
            const auto rep = eval::run_ablations(data, cfg, common.jobs);
            ordered_json report;
            report["config"] = echo;
            report["data"] = data_block(data);
            report.update(eval::to_json(rep));
            emit_json(out_path, report, out);
            if (csv_path) {
                std::ofstream f(*csv_path);
                if (!f) throw Error("cannot write '" + *csv_path + "'");
                eval::write_csv(f, rep.rows);
            }
            if (common.pretty) print_rows(out, rep.rows);
        } else if (sweep->parsed()) {
            const auto data = data_or_synth(data_path, cfg);
            const auto rep = eval::run_sweeps(data, cfg, common.jobs);
            ordered_json report;
            report["config"] = echo;
            report["data"] = data_block(data);
            report.update(eval::to_json(rep));
            emit_json(out_path, report, out);
            if (csv_path) {
                std::ofstream f(*csv_path);
                if (!f) throw Error("cannot write '" + *csv_path + "'");
                auto rows = rep.lambda;
                rows.insert(rows.end(), rep.gamma.begin(), rep.gamma.end());
                eval::write_csv(f, rows);
            }
            if (common.pretty) {
                print_rows(out, rep.lambda);
                print_rows(out, rep.gamma);
            }
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace stance::cli
