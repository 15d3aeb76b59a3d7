#include "stance/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "stance/trainer.hpp"

namespace stance::eval {

using nlohmann::ordered_json;

double accuracy(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& gold) {
    if (preds.size() != gold.size()) throw ValidationError("prediction and gold lengths differ");
    if (preds.empty()) throw ValidationError("accuracy of an empty prediction set");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == gold[i];
    return static_cast<double>(hit) / static_cast<double>(preds.size());
}

double auc(const std::vector<double>& scores, const std::vector<int>& gold) {
    if (scores.size() != gold.size()) throw ValidationError("score and gold lengths differ");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order = iota_indices(n);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        // Ranks are 1-based; a tie group [i, j) shares the mean of i+1..j.
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) rank[order[k]] = mid;
        i = j;
    }
    double n_pos = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (gold[i] != 0 && gold[i] != 1) throw ValidationError("AUC gold labels must be 0 or 1");
        if (gold[i] == 1) {
            n_pos += 1.0;
            rank_sum += rank[i];
        }
    }
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) throw ValidationError("AUC needs both classes in gold");
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double degradation(double acc_source_test, double acc_target_test) {
    return std::round((acc_source_test - acc_target_test) * 1e12) / 1e12;
}

McNemarResult mcnemar_counts(std::size_t b, std::size_t c) {
    const std::size_t n = b + c;
    if (n == 0) throw ValidationError("no discordant pairs");
    McNemarResult r;
    r.b = b;
    r.c = c;
    const double diff = std::max(std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0, 0.0);
    r.statistic = diff * diff / static_cast<double>(n);
    if (n < kExactBelow) {
        r.exact = true;
        // Two-sided exact binomial with p = 1/2.
        double tail = 0.0, coef = 1.0;
        const std::size_t k = std::min(b, c);
        for (std::size_t i = 0; i <= k; ++i) {
            tail += coef;
            coef = coef * static_cast<double>(n - i) / static_cast<double>(i + 1);
        }
        r.p_value = std::min(1.0, 2.0 * tail * std::pow(0.5, static_cast<double>(n)));
    } else {
        r.p_value = std::erfc(std::sqrt(r.statistic / 2.0));
    }
    return r;
}

McNemarResult mcnemar(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                      const std::vector<std::size_t>& gold) {
    if (a.size() != gold.size() || b.size() != gold.size()) throw ValidationError("prediction and gold lengths differ");
    std::size_t nb = 0, nc = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const bool ra = a[i] == gold[i], rb = b[i] == gold[i];
        nb += ra && !rb;
        nc += !ra && rb;
    }
    return mcnemar_counts(nb, nc);
}

CorpusMetrics evaluate(const encoder::ModelState& state, const corpus::Corpus& corpus,
                       const std::vector<Stance>& labels) {
    CorpusMetrics m;
    m.n = corpus.size();
    if (corpus.empty()) return m;
    const auto preds = trainer::predict(state, corpus, labels);
    const auto favor = std::find(labels.begin(), labels.end(), Stance::Favor);
    std::vector<double> scores;
    std::vector<int> binary;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto& ex = corpus.examples()[i];
        const auto g = std::find(labels.begin(), labels.end(), ex.stance);
        if (g == labels.end()) throw ValidationError("example '" + ex.id + "' has a label the model does not know");
        m.preds.push_back(preds[i].label_index);
        m.gold.push_back(static_cast<std::size_t>(g - labels.begin()));
        if (favor != labels.end()) {
            scores.push_back(preds[i].p[static_cast<std::size_t>(favor - labels.begin())]);
            binary.push_back(ex.stance == Stance::Favor ? 1 : 0);
        }
    }
    m.accuracy = accuracy(m.preds, m.gold);
    const auto pos = std::count(binary.begin(), binary.end(), 1);
    if (pos > 0 && pos < static_cast<std::ptrdiff_t>(binary.size())) m.auc = auc(scores, binary);
    return m;
}

ordered_json to_json(const CorpusMetrics& m) {
    return {{"n", m.n}, {"accuracy", m.accuracy}, {"auc", m.auc ? ordered_json(*m.auc) : ordered_json(nullptr)}};
}

ordered_json to_json(const McNemarResult& m) {
    return {{"b", m.b}, {"c", m.c}, {"statistic", m.statistic}, {"p_value", m.p_value}, {"exact", m.exact}};
}

RunResult run_once(const corpus::Corpus& data, const config::GlobalConfig& cfg, std::uint64_t seed) {
    auto local = cfg;
    local.seed = seed;
    const auto split = corpus::make_split(data, local.split_spec());
    const auto trained = trainer::train(split.train, local.split_spec(), local.train_config());
    RunResult r;
    r.seed = seed;
    r.source = evaluate(trained.state, split.test_source, trained.labels);
    r.target = evaluate(trained.state, split.test_target, trained.labels);
    r.degradation = degradation(r.source.accuracy, r.target.accuracy);
    r.d_total_size = trained.manifest.d_total_size;
    r.train_size = trained.manifest.train_size;
    r.validation_size = trained.manifest.validation_size;
    r.counterfactuals = trained.manifest.counterfactuals;
    r.best_epoch = trained.manifest.best_epoch;
    return r;
}

Summary summarize(const std::vector<double>& v) {
    Summary s;
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w)
        workers.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : workers) t.join();
    if (failure) std::rethrow_exception(failure);
}

namespace {

std::string param_label(const char* name, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s=%g", name, v);
    return buf;
}

void finish_row(VariantRow& row) {
    std::vector<double> ta, tu, sa, dg;
    for (const auto& r : row.runs) {
        ta.push_back(r.target.accuracy);
        if (r.target.auc) tu.push_back(*r.target.auc);
        sa.push_back(r.source.accuracy);
        dg.push_back(r.degradation);
    }
    row.target_accuracy = summarize(ta);
    row.target_auc = summarize(tu);
    row.source_accuracy = summarize(sa);
    row.degradation = summarize(dg);
}

// Runs every (row, seed) cell; rows[i] must already carry its config.
void run_grid(const corpus::Corpus& data, std::vector<VariantRow>& rows,
              const std::vector<config::GlobalConfig>& configs, std::size_t seeds, std::size_t jobs) {
    for (auto& row : rows) row.runs.resize(seeds);
    parallel_for(rows.size() * seeds, jobs, [&](std::size_t cell) {
        const std::size_t r = cell / seeds, s = cell % seeds;
        rows[r].runs[s] = run_once(data, configs[r], configs[r].seed + s);
    });
    for (auto& row : rows) finish_row(row);
}

}  // namespace

AblationReport run_ablations(const corpus::Corpus& data, const config::GlobalConfig& cfg, std::size_t jobs) {
    cfg.validate();
    std::vector<config::GlobalConfig> configs(4, cfg);
    configs[1].train.loss.lambda = 0.0;
    configs[2].train.counterfactual.enabled = false;
    configs[2].split.gamma = cfg.eval.ablation_gamma;
    configs[3].train.loss.variant = objective::LossVariant::Triplet;

    AblationReport report;
    for (const char* name : {"full", "no_contrastive", "no_counterfactual", "triplet"}) {
        VariantRow row;
        row.name = name;
        row.param = name;
        report.rows.push_back(row);
    }
    run_grid(data, report.rows, configs, cfg.eval.seeds, jobs);

    const auto& full = report.rows[0];
    for (std::size_t v = 1; v < report.rows.size(); ++v) {
        std::vector<std::size_t> a, b, gold;
        for (std::size_t s = 0; s < full.runs.size(); ++s) {
            const auto& fr = full.runs[s].target;
            const auto& vr = report.rows[v].runs[s].target;
            a.insert(a.end(), fr.preds.begin(), fr.preds.end());
            b.insert(b.end(), vr.preds.begin(), vr.preds.end());
            gold.insert(gold.end(), fr.gold.begin(), fr.gold.end());
        }
        try {
            report.rows[v].mcnemar_vs_full = mcnemar(a, b, gold);
        } catch (const ValidationError&) {
            // identical predictions: no discordant pairs to test
        }
    }
    return report;
}

SweepReport run_sweeps(const corpus::Corpus& data, const config::GlobalConfig& cfg, std::size_t jobs) {
    cfg.validate();
    SweepReport report;
    std::vector<VariantRow> rows;
    std::vector<config::GlobalConfig> configs;
    for (double l : cfg.eval.lambda_grid) {
        VariantRow row;
        row.name = "lambda";
        row.param = param_label("lambda", l);
        row.value = l;
        rows.push_back(row);
        configs.push_back(cfg);
        configs.back().train.loss.lambda = l;
    }
    for (double g : cfg.eval.gamma_grid) {
        VariantRow row;
        row.name = "gamma";
        row.param = param_label("gamma", g);
        row.value = g;
        rows.push_back(row);
        configs.push_back(cfg);
        configs.back().split.gamma = g;
    }
    run_grid(data, rows, configs, cfg.eval.seeds, jobs);
    const std::size_t nl = cfg.eval.lambda_grid.size();
    report.lambda.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(nl));
    report.gamma.assign(rows.begin() + static_cast<std::ptrdiff_t>(nl), rows.end());
    return report;
}

ordered_json to_json(const VariantRow& row) {
    auto summary = [](const Summary& s) { return ordered_json{{"mean", s.mean}, {"sd", s.sd}}; };
    ordered_json j;
    j["name"] = row.name;
    j["param"] = row.param;
    j["value"] = row.value;
    j["target_accuracy"] = summary(row.target_accuracy);
    j["target_auc"] = summary(row.target_auc);
    j["source_accuracy"] = summary(row.source_accuracy);
    j["degradation"] = summary(row.degradation);
    if (row.mcnemar_vs_full) j["mcnemar_vs_full"] = to_json(*row.mcnemar_vs_full);
    auto& runs = j["runs"] = ordered_json::array();
    for (const auto& r : row.runs)
        runs.push_back({{"seed", r.seed},
                        {"source", to_json(r.source)},
                        {"target", to_json(r.target)},
                        {"degradation", r.degradation},
                        {"train_size", r.train_size},
                        {"validation_size", r.validation_size},
                        {"d_total_size", r.d_total_size},
                        {"counterfactuals", r.counterfactuals},
                        {"best_epoch", r.best_epoch}});
    return j;
}

ordered_json to_json(const AblationReport& report) {
    ordered_json rows = ordered_json::array();
    for (const auto& r : report.rows) rows.push_back(to_json(r));
    return {{"ablations", rows}};
}

ordered_json to_json(const SweepReport& report) {
    ordered_json l = ordered_json::array(), g = ordered_json::array();
    for (const auto& r : report.lambda) l.push_back(to_json(r));
    for (const auto& r : report.gamma) g.push_back(to_json(r));
    return {{"lambda", l}, {"gamma", g}};
}

void write_csv(std::ostream& out, const std::vector<VariantRow>& rows) {
    out << "param,seed,accuracy,auc\n";
    char buf[128];
    for (const auto& row : rows)
        for (const auto& r : row.runs) {
            std::snprintf(buf, sizeof buf, ",%.9f,", r.target.accuracy);
            out << row.param << ',' << r.seed << buf;
            if (r.target.auc) {
                std::snprintf(buf, sizeof buf, "%.9f", *r.target.auc);
                out << buf;
            }
            out << '\n';
        }
}

}  // namespace stance::eval
