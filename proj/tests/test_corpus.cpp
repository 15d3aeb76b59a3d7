#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "stance/corpus.hpp"

using namespace stance;
using namespace stance::corpus;

namespace {

std::set<std::string> ids(const Corpus& c) {
    std::set<std::string> s;
    for (const auto& x : c.examples()) s.insert(x.id);
    return s;
}

std::size_t count_domain(const Corpus& c, const std::string& d) {
    return static_cast<std::size_t>(
        std::count_if(c.examples().begin(), c.examples().end(), [&](const Example& x) { return x.domain == d; }));
}

Corpus two_domain_corpus(std::size_t per_domain) {
    Corpus c;
    for (const char* d : {"src", "tgt"})
        for (std::size_t i = 0; i < per_domain; ++i) {
            Example x;
            x.id = std::string(d) + std::to_string(i);
            x.tokens = {"tok", std::to_string(i)};
            x.target = {"t"};
            x.stance = i % 2 ? Stance::Against : Stance::Favor;
            x.domain = d;
            c.add(x);
        }
    return c;
}

}  // namespace

TEST(Normalize, LowercasesSplitsAndReplacesSentinels) {
    EXPECT_EQ(normalize("Got my FIRST dose! https://x.co/a @nurse_1"),
              (std::vector<std::string>{"got", "my", "first", "dose", "!", "<url>", "<user>"}));
    EXPECT_TRUE(normalize("   ").empty());
    EXPECT_EQ(normalize("x <mask_1> <sep>"), (std::vector<std::string>{"x", "<", "mask_1", ">", "<", "sep", ">"}));
}

TEST(Normalize, IdempotentOnOwnOutput) {
    for (const char* text : {"Masks, please!! www.cdc.gov", "@cdc says: WEAR them.", "a<b>c <url> <mask_1>"}) {
        const auto once = normalize(text);
        EXPECT_EQ(normalize(join_tokens(once)), once) << text;
    }
}

TEST(Sentinel, Recognized) {
    EXPECT_TRUE(is_sentinel("<url>"));
    EXPECT_TRUE(is_sentinel("<user>"));
    EXPECT_TRUE(is_sentinel("<sep>"));
    EXPECT_TRUE(is_sentinel("<mask_12>"));
    EXPECT_FALSE(is_sentinel("<mask_>"));
    EXPECT_FALSE(is_sentinel("mask"));
}

TEST(Jsonl, AliasMapsLabel) {
    std::istringstream in(
        R"({"text": "Got my first vaccine dose today", "target": "COVID-19 vaccination", "stance": "pro", "domain": "covax_pre"})"
        "\n");
    const auto c = read_jsonl(in, parse_label_map("pro=FAVOR,anti=AGAINST"));
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c.examples()[0].stance, Stance::Favor);
    EXPECT_EQ(c.examples()[0].target, (std::vector<std::string>{"covid", "-", "19", "vaccination"}));
}

TEST(Jsonl, UnknownLabelNamesLine) {
    std::istringstream in(R"({"text": "a", "target": "t", "stance": "FAVOR", "domain": "d"})"
                          "\n"
                          R"({"text": "b", "target": "t", "stance": "AGAINST", "domain": "d"})"
                          "\n"
                          R"({"text": "c", "target": "t", "stance": "maybe", "domain": "d"})"
                          "\n");
    try {
        read_jsonl(in);
        FAIL() << "expected an error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("unknown label 'maybe' at line 3"), std::string::npos) << e.what();
    }
}

TEST(Jsonl, MalformedLineRejected) {
    std::istringstream in("{\"text\": \"a\"\n");
    EXPECT_THROW(read_jsonl(in), ValidationError);
}

TEST(Jsonl, EmptyFileGivesEmptyCorpusAndSplitFails) {
    std::istringstream in("");
    const auto c = read_jsonl(in);
    EXPECT_TRUE(c.empty());
    EXPECT_THROW(make_split(c, SplitSpec{"a", "b"}), ValidationError);
}

TEST(Jsonl, RoundTrip) {
    const auto c = synth_benchmark([] {
        SynthConfig s;
        s.docs_per_domain = 30;
        return s;
    }());
    std::stringstream buf;
    write_jsonl(buf, c);
    const auto back = read_jsonl(buf);
    EXPECT_EQ(back.fingerprint(), c.fingerprint());
}

TEST(Corpus, DuplicateIdRejected) {
    Corpus c;
    Example x;
    x.id = "a";
    x.tokens = {"t"};
    x.domain = "d";
    c.add(x);
    EXPECT_THROW(c.add(x), ValidationError);
    x.id = "b";
    x.tokens.clear();
    EXPECT_THROW(c.add(x), ValidationError);
    x.tokens = {"a", "<mask_2>"};
    EXPECT_THROW(c.add(x), ValidationError);
}

TEST(Split, GammaCountAndPartition) {
    const auto c = two_domain_corpus(1000);
    SplitSpec spec{"src", "tgt", 0.30, 5};
    const auto s = make_split(c, spec);
    EXPECT_EQ(count_domain(s.train, "tgt"), 240u);
    EXPECT_EQ(count_domain(s.train, "src"), 800u);
    EXPECT_EQ(s.test_source.size(), 200u);
    EXPECT_EQ(s.test_target.size(), 200u);
    const auto train = ids(s.train);
    for (const auto& id : ids(s.test_source)) EXPECT_EQ(train.count(id), 0u);
    for (const auto& id : ids(s.test_target)) EXPECT_EQ(train.count(id), 0u);
}

TEST(Split, GammaZeroAdmitsNoTarget) {
    const auto s = make_split(two_domain_corpus(50), SplitSpec{"src", "tgt", 0.0, 5});
    EXPECT_EQ(count_domain(s.train, "tgt"), 0u);
}

TEST(Split, DeterministicAndNested) {
    const auto c = two_domain_corpus(300);
    const auto a = make_split(c, SplitSpec{"src", "tgt", 0.05, 9});
    const auto b = make_split(c, SplitSpec{"src", "tgt", 0.15, 9});
    const auto a2 = make_split(c, SplitSpec{"src", "tgt", 0.05, 9});
    EXPECT_EQ(ids(a.train), ids(a2.train));
    EXPECT_EQ(ids(a.test_target), ids(b.test_target));
    const auto big = ids(b.train);
    for (const auto& id : ids(a.train)) EXPECT_EQ(big.count(id), 1u) << id;
}

TEST(Split, InsufficientExamplesReported) {
    EXPECT_THROW(make_split(two_domain_corpus(5), SplitSpec{"src", "tgt"}), ValidationError);
}

TEST(Synth, DeterministicAndSeedSensitive) {
    SynthConfig s;
    s.docs_per_domain = 100;
    EXPECT_EQ(synth_benchmark(s).fingerprint(), synth_benchmark(s).fingerprint());
    s.seed = 8;
    const auto other = synth_benchmark(s).fingerprint();
    s.seed = 7;
    EXPECT_NE(synth_benchmark(s).fingerprint(), other);
}

TEST(Synth, PerDomainCounts) {
    SynthConfig s;
    s.domain_doc_counts = {40, 15};
    const auto c = synth_benchmark(s);
    EXPECT_EQ(count_domain(c, "domain_a"), 40u);
    EXPECT_EQ(count_domain(c, "domain_b"), 15u);
}

TEST(Synth, DomainsSeparableByUnigramFrequency) {
    const SynthConfig s;
    const auto c = synth_benchmark(s);
    // Leave-one-out frequency classifier over unigram counts per domain.
    std::map<std::string, std::array<double, 2>> freq;
    std::array<double, 2> total{0, 0};
    for (const auto& x : c.examples()) {
        const int d = x.domain == "domain_a" ? 0 : 1;
        for (const auto& t : x.tokens) {
            freq[t][static_cast<std::size_t>(d)] += 1;
            total[static_cast<std::size_t>(d)] += 1;
        }
    }
    std::size_t correct = 0;
    for (const auto& x : c.examples()) {
        const std::size_t d = x.domain == "domain_a" ? 0 : 1;
        std::array<double, 2> score{0, 0};
        for (std::size_t k = 0; k < 2; ++k) {
            for (const auto& t : x.tokens) {
                const double own = freq[t][k] - (k == d ? 1.0 : 0.0);
                score[k] += std::log((own + 1.0) / (total[k] + static_cast<double>(freq.size())));
            }
        }
        correct += (score[0] > score[1] ? 0u : 1u) == d;
    }
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(c.size()), 0.99);
}

TEST(Synth, NoCuesMeansNoSignal) {
    SynthConfig s;
    s.marker_injection_rate = 0.0;
    s.docs_per_domain = 400;
    const auto c = synth_benchmark(s);
    for (const auto& x : c.examples())
        for (const auto& t : x.tokens) {
            EXPECT_NE(t.rfind("yea", 0), 0u);
            EXPECT_NE(t.rfind("nay", 0), 0u);
        }
}
