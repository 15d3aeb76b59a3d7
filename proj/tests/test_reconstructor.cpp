#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "stance/reconstructor.hpp"

using namespace stance;
using namespace stance::reconstructor;

namespace {

corpus::Example doc(const std::string& id, const std::string& domain, std::vector<std::string> tokens,
                    Stance y = Stance::Favor) {
    corpus::Example x;
    x.id = id;
    x.domain = domain;
    x.tokens = std::move(tokens);
    x.target = {"t", domain};
    x.stance = y;
    return x;
}

corpus::Corpus marker_corpus() {
    corpus::Corpus c({"S", "T"});
    for (int i = 0; i < 8; ++i) {
        const Stance y = i % 2 ? Stance::Against : Stance::Favor;
        c.add(doc("s" + std::to_string(i), "S", {"the", "d1", "is", "very", "much", "d2", "here", "now"}, y));
        c.add(doc("t" + std::to_string(i), "T", {"the", "e1", "is", "very", "much", "e2", "here", "now"}, y));
    }
    return c;
}

struct Bench {
    corpus::Split split;
    affinity::NgramTable table;
    InfillerModel model;
    Orientation orientation;
};

Bench synthetic_bench() {
    corpus::SynthConfig s;
    s.docs_per_domain = 300;
    auto split = corpus::make_split(corpus::synth_benchmark(s), corpus::SplitSpec{"domain_a", "domain_b", 0.3, 7});
    auto table = affinity::NgramTable::build(split.train);
    InfillerOptions io;
    io.sanity_limit = 50;
    auto model = train_infiller(split.train, table, io);
    auto orientation = make_orientation(table, "domain_b");
    return {std::move(split), std::move(table), std::move(model), std::move(orientation)};
}

PassResult synthetic_pass(const Bench& b, GeneratorSpec spec, std::size_t iterations = 1) {
    const Generator gen(spec, b.model, b.table);
    return counterfactual_pass(b.split.train, b.table, gen, b.orientation, "domain_a", "domain_b",
                               PassOptions{iterations, 0.2, 0.5});
}

const corpus::Example& parent_of(const corpus::Corpus& c, const std::string& id) {
    const auto it = std::find_if(c.examples().begin(), c.examples().end(),
                                 [&](const corpus::Example& x) { return x.id == id; });
    if (it == c.examples().end()) throw std::runtime_error("missing parent " + id);
    return *it;
}

}  // namespace

TEST(AddAlpha, SmoothsCounts) {
    const auto p = add_alpha({2, 0, 0}, 0.1);
    ASSERT_EQ(p.size(), 3u);
    EXPECT_NEAR(p[0], 2.1 / 2.3, 1e-15);
    EXPECT_NEAR(p[1], 0.1 / 2.3, 1e-15);
    EXPECT_NEAR(p[2], 0.1 / 2.3, 1e-15);
}

TEST(InfillerModel, SingleDocumentUnigrams) {
    InfillerModel m({"X"}, 0.1);
    m.add_document({"a", "b", "c"}, 0);
    EXPECT_EQ(m.vocab_size(), 3u);
    EXPECT_EQ(m.unigram_total(0), 3u);
    for (const char* t : {"a", "b", "c"}) EXPECT_EQ(m.unigram_count(0, m.id(t)), 1u);
    EXPECT_EQ(m.id("zzz"), InfillerModel::kUnknown);
}

TEST(InfillerModel, ConditionalsSumToOne) {
    const auto b = synthetic_bench();
    const auto& m = b.model;
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto d = static_cast<std::size_t>(rng.below(2));
        const auto u = static_cast<InfillerModel::TokenId>(rng.below(m.vocab_size() + 1));
        const auto v = static_cast<InfillerModel::TokenId>(1 + rng.below(m.vocab_size()));
        double sum = 0.0;
        for (InfillerModel::TokenId w = 1; w <= m.vocab_size(); ++w) sum += m.prob(d, u, v, w);
        EXPECT_NEAR(sum, 1.0, 1e-9) << "domain " << d << " context " << u << "," << v;
    }
}

TEST(InfillerModel, RebuildSerializesIdentically) {
    const auto c = marker_corpus();
    const auto table = affinity::NgramTable::build(c);
    InfillerReport r1, r2;
    const auto a = train_infiller(c, table, InfillerOptions{}, &r1);
    const auto b = train_infiller(c, table, InfillerOptions{}, &r2);
    EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
    EXPECT_EQ(r1.tokens_correct, r2.tokens_correct);
    EXPECT_GT(r1.slots, 0u);
}

TEST(Orientation, TopByRhoAndRetained) {
    const auto c = marker_corpus();
    const auto table = affinity::NgramTable::build(c);
    const auto o = make_orientation(table, "T", 4);
    EXPECT_EQ(o.domain, "T");
    EXPECT_EQ(o.representative_ngrams, table.top_by_rho(table.domain_index("T"), 4));
    for (const auto& g : o.representative_ngrams) {
        EXPECT_TRUE(table.retained(g));
        EXPECT_EQ(table.rho(g, "T"), 1.0);
    }
}

TEST(Generator, ZeroSlotsIsIdentityWithTargetDomain) {
    const auto c = marker_corpus();
    const auto table = affinity::NgramTable::build(c);
    const auto model = train_infiller(c, table, InfillerOptions{});
    const auto& parent = c.examples()[0];
    affinity::MaskedText m;
    m.tokens = parent.tokens;
    m.source_example_id = parent.id;
    Rng rng(1);
    for (auto kind : {GeneratorKind::NgramInfiller, GeneratorKind::LexiconSwapper}) {
        const Generator gen(GeneratorSpec{kind}, model, table);
        const auto cf = gen.generate(m, make_orientation(table, "T"), parent, 3, rng);
        EXPECT_EQ(cf.example.tokens, parent.tokens);
        EXPECT_EQ(cf.example.domain, "T");
        EXPECT_EQ(cf.example.stance, parent.stance);
        EXPECT_EQ(cf.example.target, parent.target);
        EXPECT_EQ(cf.example.id, parent.id + "#cf3");
        EXPECT_TRUE(cf.fills.empty());
    }
}

TEST(Generator, LexiconSwapperUsesRepresentativesInOrder) {
    const auto c = marker_corpus();
    const auto table = affinity::NgramTable::build(c);
    const auto model = train_infiller(c, table, InfillerOptions{});
    const auto parent = doc("p", "S", {"x", "d1", "y", "d2"});
    affinity::MaskedText m;
    m.tokens = {"x", "<mask_1>", "y", "<mask_2>"};
    m.slots = {{1, {"d1"}, 1.0}, {3, {"d2"}, 1.0}};
    const Orientation o{"T", {"face", "masks", "mandate"}};
    const Generator gen(GeneratorSpec{GeneratorKind::LexiconSwapper}, model, table);
    Rng rng(1);
    const auto cf = gen.generate(m, o, parent, 1, rng);
    EXPECT_EQ(cf.example.tokens, (std::vector<std::string>{"x", "face", "y", "masks"}));
    ASSERT_EQ(cf.fills.size(), 2u);
    EXPECT_EQ(cf.fills[1].output_position, 3u);
    EXPECT_EQ(cf.fills[1].original, (std::vector<std::string>{"d2"}));
}

TEST(Generator, InfillerFillsExclusiveMarkersWithTargetVocabulary) {
    const auto c = marker_corpus();
    const auto table = affinity::NgramTable::build(c);
    const auto model = train_infiller(c, table, InfillerOptions{});
    const auto& parent = c.examples()[0];
    const auto m = affinity::corrupt(table, parent, "S", "T", 0.2, 0.5);
    ASSERT_FALSE(m.slots.empty());
    const Generator gen(GeneratorSpec{GeneratorKind::NgramInfiller, Sampling::Argmax}, model, table);
    Rng rng(1);
    const auto cf = gen.generate(m, make_orientation(table, "T"), parent, 1, rng);
    for (const auto& f : cf.fills) EXPECT_GT(max_span_rho(table, f.tokens, table.domain_index("T")), 0.0);
}

TEST(CounterfactualPass, ZeroIterationsIsEmpty) {
    const auto b = synthetic_bench();
    const auto r = synthetic_pass(b, GeneratorSpec{}, 0);
    EXPECT_TRUE(r.corpus.empty());
    EXPECT_TRUE(r.records.empty());
}

TEST(CounterfactualPass, TwoDrawsBoundedAndStanceEqual) {
    const auto b = synthetic_bench();
    GeneratorSpec spec;
    spec.seed = 9;
    const auto r = synthetic_pass(b, spec, 2);
    EXPECT_LE(r.corpus.size(), 2 * r.parents);
    EXPECT_GT(r.corpus.size(), r.parents);
    std::set<std::string> ids;
    for (const auto& rec : r.records) {
        EXPECT_EQ(rec.example.stance, parent_of(b.split.train, rec.parent_id).stance);
        EXPECT_TRUE(ids.insert(rec.example.id).second) << rec.example.id;
    }
}

TEST(CounterfactualPass, ArgmaxDeduplicatesToOne) {
    const auto b = synthetic_bench();
    GeneratorSpec spec;
    spec.sampling = Sampling::Argmax;
    const auto r = synthetic_pass(b, spec, 3);
    EXPECT_EQ(r.corpus.size(), r.parents - r.skipped_unmasked);
}

TEST(CounterfactualPass, StanceAndStructurePreserved) {
    const auto b = synthetic_bench();
    const auto r = synthetic_pass(b, GeneratorSpec{});
    ASSERT_FALSE(r.records.empty());
    for (const auto& rec : r.records) {
        const auto& parent = parent_of(b.split.train, rec.parent_id);
        const auto& out = rec.example.tokens;
        EXPECT_EQ(rec.example.stance, parent.stance);
        EXPECT_EQ(rec.example.domain, "domain_b");
        // Undo every fill; the remainder must be the parent token for token.
        std::vector<std::string> undone;
        std::size_t i = 0;
        for (const auto& f : rec.fills) {
            ASSERT_LE(f.output_position + f.tokens.size(), out.size());
            undone.insert(undone.end(), out.begin() + static_cast<std::ptrdiff_t>(i),
                          out.begin() + static_cast<std::ptrdiff_t>(f.output_position));
            EXPECT_TRUE(std::equal(f.tokens.begin(), f.tokens.end(),
                                   out.begin() + static_cast<std::ptrdiff_t>(f.output_position)));
            undone.insert(undone.end(), f.original.begin(), f.original.end());
            i = f.output_position + f.tokens.size();
        }
        undone.insert(undone.end(), out.begin() + static_cast<std::ptrdiff_t>(i), out.end());
        EXPECT_EQ(undone, parent.tokens) << rec.example.id;
    }
}

TEST(CounterfactualPass, ShiftsTowardTargetDomain) {
    const auto b = synthetic_bench();
    const auto r = synthetic_pass(b, GeneratorSpec{});
    const std::size_t t = b.table.domain_index("domain_b");
    double filled = 0.0, replaced = 0.0;
    std::size_t n = 0;
    for (const auto& rec : r.records) {
        if (rec.fills.empty()) continue;
        double f = 0.0, o = 0.0;
        for (const auto& fill : rec.fills) {
            f = std::max(f, max_span_rho(b.table, fill.tokens, t));
            o = std::max(o, max_span_rho(b.table, fill.original, t));
        }
        filled += f;
        replaced += o;
        ++n;
    }
    ASSERT_GT(n, 0u);
    EXPECT_GT(filled / static_cast<double>(n), replaced / static_cast<double>(n));
}

TEST(CounterfactualPass, RaisesTargetMarkerShare) {
    const auto b = synthetic_bench();
    const auto r = synthetic_pass(b, GeneratorSpec{});
    auto share = [](const std::vector<const corpus::Example*>& xs) {
        std::size_t hit = 0, total = 0;
        for (const auto* x : xs)
            for (const auto& tok : x->tokens) {
                hit += tok.rfind("bm", 0) == 0;
                ++total;
            }
        return static_cast<double>(hit) / static_cast<double>(total);
    };
    std::vector<const corpus::Example*> cfs, parents;
    for (const auto& rec : r.records) {
        cfs.push_back(&rec.example);
        parents.push_back(&parent_of(b.split.train, rec.parent_id));
    }
    EXPECT_GT(share(cfs), share(parents));
}

TEST(CounterfactualPass, SeededDeterminism) {
    const auto b = synthetic_bench();
    GeneratorSpec spec;
    spec.seed = 5;
    const auto a = synthetic_pass(b, spec);
    const auto c = synthetic_pass(b, spec);
    EXPECT_EQ(a.corpus.fingerprint(), c.corpus.fingerprint());
    spec.seed = 6;
    EXPECT_NE(synthetic_pass(b, spec).corpus.fingerprint(), a.corpus.fingerprint());
}
