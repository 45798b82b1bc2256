#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "qgen/corpus.hpp"
#include "qgen/eval.hpp"

using namespace qgen;

namespace {

// Brute-force corpus BLEU-4: counts n-grams with ordered maps keyed by token
// vectors and follows the textbook formula step by step.
double bleu4_oracle(const std::vector<std::vector<std::string>>& cands,
                    const std::vector<std::vector<std::string>>& refs) {
    double log_precision_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        double matched = 0.0, total = 0.0;
        for (std::size_t s = 0; s < cands.size(); ++s) {
            std::map<std::vector<std::string>, int> cand_grams, ref_grams;
            const auto& cand = cands[s];
            const auto& ref = refs[s];
            for (int i = 0; i + n <= static_cast<int>(cand.size()); ++i) {
                cand_grams[std::vector<std::string>(cand.begin() + i, cand.begin() + i + n)]++;
            }
            for (int i = 0; i + n <= static_cast<int>(ref.size()); ++i) {
                ref_grams[std::vector<std::string>(ref.begin() + i, ref.begin() + i + n)]++;
            }
            for (const auto& [gram, count] : cand_grams) {
                total += count;
                auto it = ref_grams.find(gram);
                if (it != ref_grams.end()) matched += std::min(count, it->second);
            }
        }
        double p = total > 0.0 ? matched / total : 0.0;
        if (p == 0.0) p = 1e-9;
        log_precision_sum += std::log(p) / 4.0;
    }
    double c = 0.0, r = 0.0;
    for (const auto& s : cands) c += static_cast<double>(s.size());
    for (const auto& s : refs) r += static_cast<double>(s.size());
    if (c == 0.0) return 0.0;
    const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::exp(log_precision_sum);
}

// Brute-force repetition scan: every n-gram of every admissible length,
// counted greedily left to right without overlap.
bool repetition_oracle(const std::vector<std::string>& tokens, int min_ngram, int min_repeats) {
    const int len = static_cast<int>(tokens.size());
    for (int n = min_ngram; n * min_repeats <= len; ++n) {
        std::map<std::vector<std::string>, bool> seen;
        for (int start = 0; start + n <= len; ++start) {
            std::vector<std::string> gram(tokens.begin() + start, tokens.begin() + start + n);
            if (seen.count(gram)) continue;
            seen[gram] = true;
            int repeats = 0, at = 0;
            while (at + n <= len) {
                if (std::equal(gram.begin(), gram.end(), tokens.begin() + at)) {
                    ++repeats;
                    at += n;
                } else {
                    ++at;
                }
            }
            if (repeats >= min_repeats) return true;
        }
    }
    return false;
}

std::vector<std::string> words(std::initializer_list<const char*> init) {
    std::vector<std::string> out;
    for (const char* w : init) out.emplace_back(w);
    return out;
}

std::vector<std::string> random_sentence(Rng& rng, int max_len, int alphabet) {
    static const char* pool[] = {"a", "b", "c", "d", "e", "f", "g", "h"};
    const int len = static_cast<int>(rng.randint(static_cast<std::uint64_t>(max_len + 1)));
    std::vector<std::string> out;
    for (int i = 0; i < len; ++i) {
        out.emplace_back(pool[rng.randint(static_cast<std::uint64_t>(alphabet))]);
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

TEST_CASE("bleu4 is exactly one on identical corpora") {
    std::vector<std::vector<std::string>> corpus = {
        words({"who", "founded", "the", "order", "?"}),
        words({"when", "did", "the", "treaty", "take", "effect", "?"}),
    };
    CHECK(bleu4(corpus, corpus) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bleu4 vanishes without any overlap") {
    auto cands = std::vector<std::vector<std::string>>{words({"x", "y", "z", "w", "v"})};
    auto refs = std::vector<std::vector<std::string>>{words({"a", "b", "c", "d", "e"})};
    CHECK(bleu4(cands, refs) < 1e-6);
}

TEST_CASE("bleu4 matches the brute-force oracle on random corpora") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int sentences = 1 + static_cast<int>(rng.randint(5));
        std::vector<std::vector<std::string>> cands, refs;
        for (int s = 0; s < sentences; ++s) {
            cands.push_back(random_sentence(rng, 10, 4));
            refs.push_back(random_sentence(rng, 10, 4));
        }
        CHECK(bleu4(cands, refs) == doctest::Approx(bleu4_oracle(cands, refs)).epsilon(1e-9));
    }
}

TEST_CASE("bleu4 is invariant to a shared corpus permutation") {
    Rng rng(9);
    std::vector<std::vector<std::string>> cands, refs;
    for (int s = 0; s < 6; ++s) {
        cands.push_back(random_sentence(rng, 8, 3));
        refs.push_back(random_sentence(rng, 8, 3));
    }
    const double base = bleu4(cands, refs);
    std::vector<std::size_t> order = {5, 2, 0, 4, 1, 3};
    std::vector<std::vector<std::string>> pc, pr;
    for (std::size_t i : order) {
        pc.push_back(cands[i]);
        pr.push_back(refs[i]);
    }
    CHECK(bleu4(pc, pr) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("bleu4 rejects malformed corpora") {
    CHECK_THROWS_AS(bleu4({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(bleu4({words({"a"})}, {}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Pearson and correlate
// ---------------------------------------------------------------------------

TEST_CASE("pearson recovers exact linear relationships") {
    std::vector<double> x = {0.5, 1.0, 2.0, 3.5, 7.0};
    std::vector<double> y, neg;
    for (double v : x) {
        y.push_back(2.0 * v + 1.0);
        neg.push_back(-v);
    }
    CHECK(pearson(x, y) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson(x, neg) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("pearson hand-computed four-point case gives 0.8") {
    CHECK(pearson({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("pearson is affine invariant and flips sign under negation") {
    Rng rng(21);
    std::vector<double> x, y;
    for (int i = 0; i < 40; ++i) {
        x.push_back(rng.normal());
        y.push_back(rng.normal() + 0.5 * x.back());
    }
    const double base = pearson(x, y);
    std::vector<double> ax, ny;
    for (double v : x) ax.push_back(3.0 * v + 7.0);
    for (double v : y) ny.push_back(-v);
    CHECK(pearson(ax, y) == doctest::Approx(base).epsilon(1e-9));
    CHECK(pearson(x, ny) == doctest::Approx(-base).epsilon(1e-9));
}

TEST_CASE("pearson rejects degenerate inputs") {
    CHECK_THROWS_AS(pearson({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(pearson({1.0, 2.0}, {5.0, 5.0}), std::invalid_argument);
    CHECK_THROWS_AS(pearson({1.0}, {2.0}), std::invalid_argument);
    CHECK_THROWS_AS(pearson({1.0, 2.0}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("correlate averages raters and recovers a noiseless relation") {
    std::vector<ScoredQuestion> questions;
    std::vector<RatingRecord> ratings;
    for (int i = 0; i < 8; ++i) {
        ScoredQuestion q;
        q.id = "q" + std::to_string(i);
        q.qa = 0.1 * i;
        q.lm = 40.0 - 3.0 * i;
        questions.push_back(q);
        // relevance rises with qa; fluency falls with lm (higher ppl = worse).
        // two raters whose scores differ but average to the clean value
        const int relevance = 1 + i / 2;
        const int fluency = 1 + i / 2;
        for (int rater = 0; rater < 2; ++rater) {
            RatingRecord r;
            r.question_id = q.id;
            r.rater_id = "rater" + std::to_string(rater);
            r.relevance = relevance;
            r.fluency = fluency;
            ratings.push_back(r);
        }
    }
    CorrelationReport report = correlate(ratings, questions);
    CHECK(report.relevance_vs_qa > 0.95);
    CHECK(report.fluency_vs_lm < -0.95);
    REQUIRE(report.scatter.size() == 8);
    CHECK(report.scatter.front().question_id == "q0");
    // mean of the two identical raters is the value itself
    CHECK(report.scatter[3].relevance == doctest::Approx(2.0));
}

TEST_CASE("correlate averages disagreeing raters arithmetically") {
    std::vector<ScoredQuestion> questions = {{"a", 0.2, 10.0}, {"b", 0.9, 5.0}};
    std::vector<RatingRecord> ratings = {
        {"a", "r1", 1, 2}, {"a", "r2", 4, 3}, {"a", "r3", 4, 4}, {"b", "r1", 5, 5},
        {"b", "r2", 4, 4},
    };
    CorrelationReport report = correlate(ratings, questions);
    CHECK(report.scatter[0].fluency == doctest::Approx(3.0));
    CHECK(report.scatter[0].relevance == doctest::Approx(3.0));
    CHECK(report.scatter[1].fluency == doctest::Approx(4.5));
    CHECK(report.scatter[1].relevance == doctest::Approx(4.5));
}

TEST_CASE("correlate decorrelates permuted ratings") {
    Rng rng(31);
    std::vector<ScoredQuestion> questions;
    std::vector<int> scores;
    for (int i = 0; i < 1000; ++i) {
        ScoredQuestion q;
        q.id = "q" + std::to_string(i);
        q.qa = rng.uniform();
        q.lm = rng.uniform(5.0, 50.0);
        questions.push_back(q);
        scores.push_back(1 + static_cast<int>(rng.randint(5)));
    }
    rng.shuffle(scores);  // ratings carry no relation to the scores
    std::vector<RatingRecord> ratings;
    for (int i = 0; i < 1000; ++i) {
        ratings.push_back({"q" + std::to_string(i), "r", scores[i], scores[i]});
    }
    CorrelationReport report = correlate(ratings, questions);
    CHECK(std::fabs(report.relevance_vs_qa) < 0.1);
    CHECK(std::fabs(report.fluency_vs_lm) < 0.1);
}

TEST_CASE("correlate names an unresolvable rating id") {
    std::vector<ScoredQuestion> questions = {{"known", 0.5, 12.0}, {"other", 0.7, 9.0}};
    std::vector<RatingRecord> ratings = {{"known", "r1", 3, 3}, {"ghost-17", "r1", 2, 2}};
    try {
        correlate(ratings, questions);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("ghost-17") != std::string::npos);
    }
}

// ---------------------------------------------------------------------------
// Ratings and report files
// ---------------------------------------------------------------------------

TEST_CASE("ratings round trip through their file format") {
    std::vector<RatingRecord> ratings = {
        {"q0", "alice", 4, 5},
        {"q1", "bob", 1, 2},
        {"q0", "bob", 3, 3},
    };
    const std::string path = "ratings_test.jsonl";
    save_ratings(ratings, path);
    auto back = load_ratings(path);
    std::remove(path.c_str());
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].question_id == ratings[i].question_id);
        CHECK(back[i].rater_id == ratings[i].rater_id);
        CHECK(back[i].fluency == ratings[i].fluency);
        CHECK(back[i].relevance == ratings[i].relevance);
    }
}

TEST_CASE("ratings loader rejects out-of-range scores") {
    const std::string path = "ratings_bad_test.jsonl";
    {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs(R"({"question_id":"q","rater_id":"r","fluency":6,"relevance":3})", f);
        std::fputs("\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_ratings(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("metric reports round trip including absent metrics") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    MetricValues a{2.5, 0.41, 0.6, 18.0, 0.35};
    MetricValues b{2.9, 0.38, nan, nan, nan};
    std::vector<MetricReport> reports;
    MetricReport plain;
    plain.name = "baseline";
    plain.values = a;
    plain.deltas = MetricValues{nan, nan, nan, nan, nan};
    reports.push_back(plain);
    reports.push_back(with_baseline("qa-only", b, "baseline", a));

    const std::string path = "reports_test.jsonl";
    save_reports(reports, path);
    auto back = load_reports(path);
    std::remove(path.c_str());

    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "baseline");
    CHECK(back[0].baseline.empty());
    CHECK(back[0].values.nll == 2.5);
    CHECK(std::isnan(back[0].deltas.nll));
    CHECK(back[1].baseline == "baseline");
    CHECK(back[1].values.nll == 2.9);
    CHECK(std::isnan(back[1].values.qa_f1));
    CHECK(back[1].deltas.nll == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(std::isnan(back[1].deltas.lm_ppl));

    const std::string table = render_report_table(back);
    CHECK(table.find("baseline") != std::string::npos);
    CHECK(table.find("qa-only") != std::string::npos);
    CHECK(table.find("-") != std::string::npos);
}

TEST_CASE("scatter file and svg render") {
    std::vector<ScatterRow> rows = {
        {"q0", 0.2, 30.0, 2.0, 1.5},
        {"q1", 0.8, 12.0, 4.5, 4.0},
    };
    const std::string path = "scatter_test.txt";
    save_scatter(rows, path);
    {
        std::FILE* f = std::fopen(path.c_str(), "r");
        REQUIRE(f != nullptr);
        char line[256];
        REQUIRE(std::fgets(line, sizeof(line), f) != nullptr);
        CHECK(line[0] == '#');
        REQUIRE(std::fgets(line, sizeof(line), f) != nullptr);
        double qa = 0, rel = 0, lm = 0, fl = 0;
        char id[64];
        REQUIRE(std::sscanf(line, "%lf %lf %lf %lf %63s", &qa, &rel, &lm, &fl, id) == 5);
        CHECK(qa == doctest::Approx(0.2));
        CHECK(rel == doctest::Approx(2.0));
        CHECK(std::string(id) == "q0");
        std::fclose(f);
    }
    std::remove(path.c_str());

    const std::string svg = scatter_svg(rows);
    CHECK(svg.rfind("<svg", 0) == 0);
    std::size_t circles = 0, at = 0;
    while ((at = svg.find("<circle", at)) != std::string::npos) {
        ++circles;
        ++at;
    }
    CHECK(circles == rows.size() * 2);  // one point per row per panel
}

// ---------------------------------------------------------------------------
// Degeneracy detectors
// ---------------------------------------------------------------------------

TEST_CASE("repetition detector flags a doubled phrase and names the longest loop") {
    const auto looped =
        words({"according", "to", "the", "writings", "of", "the", "church", "'s", "founders",
               ",", "according", "to", "the", "writings", "of", "the", "church", "'s",
               "founders", ","});
    RepetitionResult r = detect_repetition(looped);
    CHECK(r.flagged);
    CHECK(r.ngram.size() == 10);
    CHECK(r.ngram.front() == "according");

    CHECK_FALSE(detect_repetition(words({"who", "founded", "the", "church", "?"})).flagged);
}

TEST_CASE("repetition detector matches a brute-force scan on random sequences") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const auto tokens = random_sentence(rng, 14, 3);
        const int min_ngram = 1 + static_cast<int>(rng.randint(3));
        const int min_repeats = 2 + static_cast<int>(rng.randint(2));
        RepetitionResult got = detect_repetition(tokens, min_ngram, min_repeats);
        CHECK(got.flagged == repetition_oracle(tokens, min_ngram, min_repeats));
        if (got.flagged) {
            CHECK(static_cast<int>(got.ngram.size()) >= min_ngram);
        }
    }
}

TEST_CASE("repetition detector never flags sequences shorter than the floor") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        auto tokens = random_sentence(rng, 5, 2);  // < 2 * min_ngram for min_ngram 3
        CHECK_FALSE(detect_repetition(tokens, 3, 2).flagged);
    }
}

TEST_CASE("answer pointing flags questions built from the answer neighborhood") {
    const auto context = words({"the", "treaty", "was", "signed", "in", "paris", "by", "both",
                                "delegations", "after", "long", "negotiation"});
    // span "paris" at 5; window 4 covers positions 1..9
    CHECK(detect_answer_pointing(words({"signed", "delegations", "?"}), context, 5, 5));
    CHECK_FALSE(detect_answer_pointing(words({"negotiation", "era", "?"}), context, 5, 5));
    // all function words: never flagged
    CHECK_FALSE(detect_answer_pointing(words({"who", "was", "the", "?"}), context, 5, 5));
    // threshold boundary: one of two content tokens nearby = 0.5
    CHECK(detect_answer_pointing(words({"signed", "zeppelin"}), context, 5, 5, 4, 0.5));
    CHECK_FALSE(detect_answer_pointing(words({"signed", "zeppelin"}), context, 5, 5, 4, 0.6));
    CHECK_THROWS_AS(detect_answer_pointing(words({"x"}), context, 5, 99),
                    std::invalid_argument);
}

TEST_CASE("answer pointing reproduces the published hand count") {
    const auto context = words(
        {"although", "united", "methodist", "practices", "and", "interpretation", "of",
         "beliefs", "have", "evolved", "over", "time", ",", "these", "practices", "and",
         "beliefs", "can", "be", "traced", "to", "the", "writings", "of", "the", "church",
         "'s", "founders", ",", "especially", "john", "wesley", "and", "charles", "wesley",
         "(", "anglicans", ")", ",", "but", "also", "philip", "william", "otterbein", "and",
         "martin", "boehm", "(", "united", "brethren", ")", ",", "and", "jacob", "albright",
         "(", "evangelical", "association", ")", "."});
    const int answer_start = 30, answer_end = 34;  // "john wesley and charles wesley"
    const auto question = words({"who", "in", "anglicans", "?"});
    // the only content token sits inside the +-4 window: fraction exactly 1
    CHECK(detect_answer_pointing(question, context, answer_start, answer_end));
    CHECK(detect_answer_pointing(question, context, answer_start, answer_end, 4, 1.0));
    // a paraphrase pulling words from outside the window is not flagged
    CHECK_FALSE(detect_answer_pointing(words({"who", "founded", "the", "church", "?"}), context,
                                       answer_start, answer_end));
}

// ---------------------------------------------------------------------------
// score_model
// ---------------------------------------------------------------------------

TEST_CASE("score_model is deterministic and total on a small corpus") {
    auto triples = synth_corpus(51, 12);
    Vocabulary vocab = build_vocab(triples, 512);
    Rng grng(7);
    GeneratorConfig gc;
    gc.emb_dim = 12;
    gc.enc_hidden = 14;
    gc.dec_hidden = 16;
    gc.attn_dim = 10;
    gc.max_len = 12;
    GeneratorModel gen = GeneratorModel::init(vocab.size(), gc, grng);

    Rng lrng(8);
    LanguageModel lm = LanguageModel::init(vocab.size(), LmConfig{8, 10}, lrng);
    Rng qrng(9);
    QaModel qa = QaModel::init(vocab.size(), QaConfig{8, 10, 6}, qrng);
    Rng drng(10);
    DiscriminatorModel disc =
        DiscriminatorModel::init(vocab.size(), DiscConfig{8, 8, 6, 10, 12}, drng);

    RewardModels models;
    models.lm = &lm;
    models.qa = &qa;
    models.disc = &disc;

    MetricValues a = score_model(gen, vocab, models, triples);
    MetricValues b = score_model(gen, vocab, models, triples);
    CHECK(a.nll == b.nll);
    CHECK(a.bleu == b.bleu);
    CHECK(a.qa_f1 == b.qa_f1);
    CHECK(a.lm_ppl == b.lm_ppl);
    CHECK(a.disc_fool == b.disc_fool);

    CHECK(std::isfinite(a.nll));
    CHECK(std::isfinite(a.bleu));
    CHECK(std::isfinite(a.qa_f1));
    CHECK(std::isfinite(a.lm_ppl));
    CHECK(a.nll > 0.0);
    CHECK(a.bleu >= 0.0);
    CHECK(a.bleu <= 1.0);
    CHECK(a.qa_f1 >= 0.0);
    CHECK(a.qa_f1 <= 1.0);
    CHECK(a.lm_ppl > 1.0);
    CHECK(a.disc_fool >= 0.0);
    CHECK(a.disc_fool <= 1.0);

    // a model scored against itself as baseline has all-zero deltas
    MetricReport self = with_baseline("model", a, "model", b);
    CHECK(self.deltas.nll == 0.0);
    CHECK(self.deltas.bleu == 0.0);
    CHECK(self.deltas.qa_f1 == 0.0);
    CHECK(self.deltas.lm_ppl == 0.0);
    CHECK(self.deltas.disc_fool == 0.0);
}

TEST_CASE("score_model marks absent reward models as missing") {
    auto triples = synth_corpus(52, 6);
    Vocabulary vocab = build_vocab(triples, 512);
    Rng grng(7);
    GeneratorConfig gc;
    gc.emb_dim = 10;
    gc.enc_hidden = 12;
    gc.dec_hidden = 12;
    gc.attn_dim = 8;
    gc.max_len = 10;
    GeneratorModel gen = GeneratorModel::init(vocab.size(), gc, grng);

    MetricValues v = score_model(gen, vocab, RewardModels{}, triples);
    CHECK(std::isfinite(v.nll));
    CHECK(std::isfinite(v.bleu));
    CHECK(std::isnan(v.qa_f1));
    CHECK(std::isnan(v.lm_ppl));
    CHECK(std::isnan(v.disc_fool));

    std::vector<Triple> questionless = triples;
    for (Triple& t : questionless) t.question.clear();
    CHECK_THROWS_AS(score_model(gen, vocab, RewardModels{}, questionless),
                    std::invalid_argument);
}
