#include "stance/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace stance::encoder {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'T', 'N', 'C', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

enum Tensor : std::uint64_t { kW1 = 1, kW2 = 2, kWc = 3 };

double uniform_from(std::uint64_t seed, std::uint64_t tensor, std::uint64_t index) {
    const std::uint64_t r = mix64(mix64(seed ^ (tensor * 0xd1b54a32d192ed03ULL)) + index);
    return static_cast<double>(r >> 11) * 0x1.0p-53;
}

double kaiming_bound(std::uint32_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

void check_shape(const Hyper& h) {
    if (h.d_feat == 0 || h.d_h == 0 || h.d_z == 0 || h.k < 2) throw ValidationError("invalid model dimensions");
}

void adam_dense(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
                const OptimizerConfig& c, double bc1, double bc2) {
    if (m.size() != p.size()) m.assign(p.size(), 0.0);
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
        p[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
    }
}

void sgd_dense(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& vel,
               const OptimizerConfig& c) {
    if (vel.size() != p.size()) vel.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        vel[i] = c.momentum * vel[i] + g[i];
        p[i] -= c.lr * vel[i];
    }
}

// ---- binary helpers ----

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw ValidationError("truncated checkpoint");
    return v;
}

void put_array(std::ostream& out, const std::vector<double>& a) {
    put<std::uint64_t>(out, a.size());
    out.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
}

std::vector<double> get_array(std::istream& in, std::size_t expected) {
    const auto n = get<std::uint64_t>(in);
    if (n != expected && n != 0) throw ValidationError("checkpoint tensor has unexpected size");
    std::vector<double> a(n);
    in.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw ValidationError("truncated checkpoint");
    return a;
}

void put_rows(std::ostream& out, const std::map<std::uint32_t, std::vector<double>>& rows) {
    put<std::uint64_t>(out, rows.size());
    for (const auto& [r, vals] : rows) {
        put<std::uint32_t>(out, r);
        out.write(reinterpret_cast<const char*>(vals.data()), static_cast<std::streamsize>(vals.size() * sizeof(double)));
    }
}

std::map<std::uint32_t, std::vector<double>> get_rows(std::istream& in, std::uint32_t width, std::uint32_t max_row) {
    std::map<std::uint32_t, std::vector<double>> rows;
    const auto n = get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto r = get<std::uint32_t>(in);
        if (r >= max_row) throw ValidationError("checkpoint row index out of range");
        std::vector<double> vals(width);
        in.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(width * sizeof(double)));
        if (!in) throw ValidationError("truncated checkpoint");
        rows.emplace(r, std::move(vals));
    }
    return rows;
}

}  // namespace

// ---- features --------------------------------------------------------------

FeatureHash hash_feature(std::string_view key, std::uint32_t dim, std::uint64_t hash_seed) {
    const std::uint64_t h = hash_bytes(key, hash_seed);
    return FeatureHash{static_cast<std::uint32_t>(h % dim), (h >> 63) ? -1 : 1};
}

std::vector<std::string> feature_sequence(const corpus::Example& x) {
    std::vector<std::string> seq = x.tokens;
    seq.emplace_back(corpus::kSepToken);
    seq.insert(seq.end(), x.target.begin(), x.target.end());
    return seq;
}

FeatureVector featurize(const corpus::Example& x, std::uint32_t dim, std::uint64_t hash_seed) {
    if (x.tokens.empty()) throw ValidationError("cannot featurize example '" + x.id + "' with no tokens");
    if (dim == 0) throw ValidationError("feature dimension must be positive");
    const auto seq = feature_sequence(x);
    std::vector<std::pair<std::uint32_t, double>> entries;
    entries.reserve(seq.size() * 2);
    auto add = [&](const std::string& key) {
        const auto fh = hash_feature(key, dim, hash_seed);
        entries.emplace_back(fh.bucket, static_cast<double>(fh.sign));
    };
    for (std::size_t i = 0; i < seq.size(); ++i) {
        add("1:" + seq[i]);
        if (i + 1 < seq.size()) add("2:" + seq[i] + " " + seq[i + 1]);
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    FeatureVector fv;
    fv.dim = dim;
    for (std::size_t i = 0; i < entries.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < entries.size() && entries[j].first == entries[i].first) sum += entries[j++].second;
        if (sum != 0.0) {
            fv.index.push_back(entries[i].first);
            fv.value.push_back(sum);
        }
        i = j;
    }
    double norm = 0.0;
    for (double v : fv.value) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (double& v : fv.value) v /= norm;
    return fv;
}

// ---- model -----------------------------------------------------------------

double ModelState::initial_w1(const Hyper& hyper, std::uint32_t row, std::uint32_t col) {
    const double bound = kaiming_bound(hyper.d_feat);
    const std::uint64_t idx = static_cast<std::uint64_t>(row) * hyper.d_h + col;
    return bound * (2.0 * uniform_from(hyper.init_seed, kW1, idx) - 1.0);
}

ModelState ModelState::initialize(const Hyper& hyper) {
    check_shape(hyper);
    ModelState s;
    s.hyper = hyper;
    s.W1.resize(static_cast<std::size_t>(hyper.d_feat) * hyper.d_h);
    for (std::uint32_t r = 0; r < hyper.d_feat; ++r)
        for (std::uint32_t c = 0; c < hyper.d_h; ++c)
            s.W1[static_cast<std::size_t>(r) * hyper.d_h + c] = initial_w1(hyper, r, c);
    s.b1.assign(hyper.d_h, 0.0);
    s.W2.resize(static_cast<std::size_t>(hyper.d_h) * hyper.d_z);
    const double b2 = kaiming_bound(hyper.d_h);
    for (std::size_t i = 0; i < s.W2.size(); ++i) s.W2[i] = b2 * (2.0 * uniform_from(hyper.init_seed, kW2, i) - 1.0);
    s.b2.assign(hyper.d_z, 0.0);
    s.Wc.resize(static_cast<std::size_t>(hyper.d_z) * hyper.k);
    const double bc = kaiming_bound(hyper.d_z);
    for (std::size_t i = 0; i < s.Wc.size(); ++i) s.Wc[i] = bc * (2.0 * uniform_from(hyper.init_seed, kWc, i) - 1.0);
    s.bc.assign(hyper.k, 0.0);
    s.dirty.assign(hyper.d_feat, 0);
    return s;
}

void ModelState::mark_dirty(std::uint32_t row) { dirty.at(row) = 1; }

bool ModelState::all_finite() const {
    for (const auto* t : {&W1, &b1, &W2, &b2, &Wc, &bc})
        for (double v : *t)
            if (!std::isfinite(v)) return false;
    return true;
}

std::vector<double> softmax(std::span<const double> l) {
    const double top = *std::max_element(l.begin(), l.end());
    std::vector<double> p(l.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) sum += (p[i] = std::exp(l[i] - top));
    for (double& v : p) v /= sum;
    return p;
}

std::vector<double> logits(const ModelState& state, std::span<const double> z) {
    const auto& hp = state.hyper;
    std::vector<double> out(state.bc);
    for (std::uint32_t i = 0; i < hp.d_z; ++i)
        for (std::uint32_t c = 0; c < hp.k; ++c) out[c] += z[i] * state.Wc[static_cast<std::size_t>(i) * hp.k + c];
    return out;
}

std::vector<double> classify(const ModelState& state, std::span<const double> z) {
    return softmax(logits(state, z));
}

Forward forward(const ModelState& state, const FeatureVector& fv) {
    const auto& hp = state.hyper;
    if (fv.dim != hp.d_feat) throw ValidationError("feature dimension does not match the model");
    Forward f;
    f.h_pre = state.b1;
    for (std::size_t j = 0; j < fv.index.size(); ++j) {
        const double* row = &state.W1[static_cast<std::size_t>(fv.index[j]) * hp.d_h];
        const double v = fv.value[j];
        for (std::uint32_t c = 0; c < hp.d_h; ++c) f.h_pre[c] += v * row[c];
    }
    f.h.resize(hp.d_h);
    for (std::uint32_t c = 0; c < hp.d_h; ++c) f.h[c] = f.h_pre[c] > 0.0 ? f.h_pre[c] : 0.0;
    f.u = state.b2;
    for (std::uint32_t i = 0; i < hp.d_h; ++i) {
        if (f.h[i] == 0.0) continue;
        const double* row = &state.W2[static_cast<std::size_t>(i) * hp.d_z];
        for (std::uint32_t k = 0; k < hp.d_z; ++k) f.u[k] += f.h[i] * row[k];
    }
    double n2 = 0.0;
    for (double v : f.u) n2 += v * v;
    f.u_norm = std::sqrt(n2);
    if (!(f.u_norm >= 1e-12)) throw Error("collapsed embedding");
    f.z.resize(hp.d_z);
    for (std::uint32_t k = 0; k < hp.d_z; ++k) f.z[k] = f.u[k] / f.u_norm;
    f.logits = logits(state, f.z);
    f.p = softmax(f.logits);
    return f;
}

std::vector<double> encode(const ModelState& state, const FeatureVector& fv) { return forward(state, fv).z; }

Gradients::Gradients(const Hyper& hp)
    : b1(hp.d_h, 0.0),
      W2(static_cast<std::size_t>(hp.d_h) * hp.d_z, 0.0),
      b2(hp.d_z, 0.0),
      Wc(static_cast<std::size_t>(hp.d_z) * hp.k, 0.0),
      bc(hp.k, 0.0) {}

void Gradients::clear() {
    W1_rows.clear();
    for (auto* t : {&b1, &W2, &b2, &Wc, &bc}) std::fill(t->begin(), t->end(), 0.0);
}

std::vector<double> normalize_backward(std::span<const double> z, double u_norm, std::span<const double> grad_z) {
    double dot = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) dot += z[i] * grad_z[i];
    std::vector<double> g(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) g[i] = (grad_z[i] - dot * z[i]) / u_norm;
    return g;
}

void backward(const ModelState& state, const FeatureVector& fv, const Forward& fwd, std::span<const double> grad_z,
              std::span<const double> grad_logits, Gradients& grads) {
    const auto& hp = state.hyper;
    std::vector<double> gz(hp.d_z, 0.0);
    if (!grad_z.empty())
        for (std::uint32_t i = 0; i < hp.d_z; ++i) gz[i] = grad_z[i];
    if (!grad_logits.empty()) {
        for (std::uint32_t i = 0; i < hp.d_z; ++i) {
            const double* row = &state.Wc[static_cast<std::size_t>(i) * hp.k];
            double* grow = &grads.Wc[static_cast<std::size_t>(i) * hp.k];
            for (std::uint32_t c = 0; c < hp.k; ++c) {
                grow[c] += fwd.z[i] * grad_logits[c];
                gz[i] += row[c] * grad_logits[c];
            }
        }
        for (std::uint32_t c = 0; c < hp.k; ++c) grads.bc[c] += grad_logits[c];
    }
    const auto gu = normalize_backward(fwd.z, fwd.u_norm, gz);
    for (std::uint32_t k = 0; k < hp.d_z; ++k) grads.b2[k] += gu[k];

    std::vector<double> gh_pre(hp.d_h, 0.0);
    for (std::uint32_t i = 0; i < hp.d_h; ++i) {
        const double* row = &state.W2[static_cast<std::size_t>(i) * hp.d_z];
        double* grow = &grads.W2[static_cast<std::size_t>(i) * hp.d_z];
        double acc = 0.0;
        for (std::uint32_t k = 0; k < hp.d_z; ++k) {
            grow[k] += fwd.h[i] * gu[k];
            acc += row[k] * gu[k];
        }
        gh_pre[i] = fwd.h_pre[i] > 0.0 ? acc : 0.0;
    }
    for (std::uint32_t c = 0; c < hp.d_h; ++c) grads.b1[c] += gh_pre[c];
    for (std::size_t j = 0; j < fv.index.size(); ++j) {
        auto& row = grads.W1_rows[fv.index[j]];
        if (row.empty()) row.assign(hp.d_h, 0.0);
        const double v = fv.value[j];
        for (std::uint32_t c = 0; c < hp.d_h; ++c) row[c] += v * gh_pre[c];
    }
}

void OptimizerConfig::validate() const {
    if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
    if (kind == OptimizerKind::Adam) {
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("Adam betas must lie in [0, 1)");
        if (!(eps > 0.0)) throw ValidationError("Adam eps must be positive");
    } else if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ValidationError("SGD momentum must lie in [0, 1)");
    }
}

void apply_update(ModelState& state, const Gradients& grads, const OptimizerConfig& c) {
    auto& o = state.opt;
    const std::uint32_t d_h = state.hyper.d_h;
    ++o.step;
    if (c.kind == OptimizerKind::Adam) {
        const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(o.step));
        const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(o.step));
        adam_dense(state.b1, grads.b1, o.b1_m, o.b1_v, c, bc1, bc2);
        adam_dense(state.W2, grads.W2, o.w2_m, o.w2_v, c, bc1, bc2);
        adam_dense(state.b2, grads.b2, o.b2_m, o.b2_v, c, bc1, bc2);
        adam_dense(state.Wc, grads.Wc, o.wc_m, o.wc_v, c, bc1, bc2);
        adam_dense(state.bc, grads.bc, o.bc_m, o.bc_v, c, bc1, bc2);
        // Lazy rows: only W1 rows present in this batch are touched.
        for (const auto& [r, g] : grads.W1_rows) {
            auto& m = o.w1_m[r];
            auto& v = o.w1_v[r];
            if (m.empty()) m.assign(d_h, 0.0);
            if (v.empty()) v.assign(d_h, 0.0);
            double* p = &state.W1[static_cast<std::size_t>(r) * d_h];
            for (std::uint32_t i = 0; i < d_h; ++i) {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                p[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
            }
            state.mark_dirty(r);
        }
    } else {
        sgd_dense(state.b1, grads.b1, o.b1_m, c);
        sgd_dense(state.W2, grads.W2, o.w2_m, c);
        sgd_dense(state.b2, grads.b2, o.b2_m, c);
        sgd_dense(state.Wc, grads.Wc, o.wc_m, c);
        sgd_dense(state.bc, grads.bc, o.bc_m, c);
        for (const auto& [r, g] : grads.W1_rows) {
            auto& vel = o.w1_m[r];
            if (vel.empty()) vel.assign(d_h, 0.0);
            double* p = &state.W1[static_cast<std::size_t>(r) * d_h];
            for (std::uint32_t i = 0; i < d_h; ++i) {
                vel[i] = c.momentum * vel[i] + g[i];
                p[i] -= c.lr * vel[i];
            }
            state.mark_dirty(r);
        }
    }
}

// ---- checkpoint ------------------------------------------------------------

void save_checkpoint(std::ostream& out, const ModelState& state, const std::vector<Stance>& labels) {
    std::ostringstream body;
    const auto& hp = state.hyper;
    nlohmann::ordered_json header;
    header["hyper"] = {{"d_feat", hp.d_feat}, {"d_h", hp.d_h},         {"d_z", hp.d_z},
                       {"k", hp.k},           {"hash_seed", hp.hash_seed}, {"init_seed", hp.init_seed}};
    header["labels"] = nlohmann::ordered_json::array();
    for (auto l : labels) header["labels"].push_back(stance_name(l));
    header["optimizer_step"] = state.opt.step;
    const std::string hs = header.dump();

    body.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(body, kVersion);
    put<std::uint32_t>(body, static_cast<std::uint32_t>(hs.size()));
    body.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    const auto& o = state.opt;
    for (const auto* t : {&state.b1, &state.W2, &state.b2, &state.Wc, &state.bc, &o.b1_m, &o.b1_v, &o.w2_m, &o.w2_v,
                          &o.b2_m, &o.b2_v, &o.wc_m, &o.wc_v, &o.bc_m, &o.bc_v})
        put_array(body, *t);
    std::map<std::uint32_t, std::vector<double>> rows;
    for (std::uint32_t r = 0; r < hp.d_feat; ++r)
        if (state.dirty[r])
            rows.emplace(r, std::vector<double>(state.W1.begin() + static_cast<std::ptrdiff_t>(r) * hp.d_h,
                                                state.W1.begin() + static_cast<std::ptrdiff_t>(r + 1) * hp.d_h));
    put_rows(body, rows);
    put_rows(body, o.w1_m);
    put_rows(body, o.w1_v);

    const std::string bytes = body.str();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    put<std::uint64_t>(out, hash_bytes(bytes, 0));
    if (!out) throw Error("failed to write checkpoint");
}

void save_checkpoint(const std::string& path, const ModelState& state, const std::vector<Stance>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    save_checkpoint(out, state, labels);
}

ModelState load_checkpoint(std::istream& in, std::vector<Stance>* labels) {
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < sizeof kMagic + 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw ValidationError("not a checkpoint file");
    std::uint64_t stored = 0;
    std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
    bytes.resize(bytes.size() - 8);
    if (hash_bytes(bytes, 0) != stored) throw ValidationError("checkpoint checksum mismatch");

    std::istringstream body(bytes);
    body.ignore(sizeof kMagic);
    if (get<std::uint32_t>(body) != kVersion) throw ValidationError("unsupported checkpoint version");
    const auto hlen = get<std::uint32_t>(body);
    std::string hs(hlen, '\0');
    body.read(hs.data(), hlen);
    const auto header = nlohmann::json::parse(hs);
    Hyper hp;
    const auto& h = header.at("hyper");
    hp.d_feat = h.at("d_feat").get<std::uint32_t>();
    hp.d_h = h.at("d_h").get<std::uint32_t>();
    hp.d_z = h.at("d_z").get<std::uint32_t>();
    hp.k = h.at("k").get<std::uint32_t>();
    hp.hash_seed = h.at("hash_seed").get<std::uint64_t>();
    hp.init_seed = h.at("init_seed").get<std::uint64_t>();
    if (labels) {
        labels->clear();
        for (const auto& l : header.at("labels")) {
            const auto name = l.get<std::string>();
            labels->push_back(name == "FAVOR" ? Stance::Favor : name == "AGAINST" ? Stance::Against : Stance::None);
        }
    }

    ModelState s = ModelState::initialize(hp);
    s.opt.step = header.at("optimizer_step").get<std::uint64_t>();
    auto& o = s.opt;
    const std::size_t sizes[] = {hp.d_h, static_cast<std::size_t>(hp.d_h) * hp.d_z, hp.d_z,
                                 static_cast<std::size_t>(hp.d_z) * hp.k, hp.k};
    std::vector<double>* params[] = {&s.b1, &s.W2, &s.b2, &s.Wc, &s.bc};
    for (int i = 0; i < 5; ++i) *params[i] = get_array(body, sizes[i]);
    std::vector<double>* moments[] = {&o.b1_m, &o.b1_v, &o.w2_m, &o.w2_v, &o.b2_m,
                                      &o.b2_v, &o.wc_m, &o.wc_v, &o.bc_m, &o.bc_v};
    for (int i = 0; i < 10; ++i) *moments[i] = get_array(body, sizes[i / 2]);
    for (const auto& [r, vals] : get_rows(body, hp.d_h, hp.d_feat)) {
        std::copy(vals.begin(), vals.end(), s.W1.begin() + static_cast<std::ptrdiff_t>(r) * hp.d_h);
        s.mark_dirty(r);
    }
    o.w1_m = get_rows(body, hp.d_h, hp.d_feat);
    o.w1_v = get_rows(body, hp.d_h, hp.d_feat);
    return s;
}

ModelState load_checkpoint(const std::string& path, std::vector<Stance>* labels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
    return load_checkpoint(in, labels);
}

std::uint64_t checkpoint_hash(const ModelState& state, const std::vector<Stance>& labels) {
    std::ostringstream out;
    save_checkpoint(out, state, labels);
    return hash_bytes(out.str(), 0);
}

}  // namespace stance::encoder
