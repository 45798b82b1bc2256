#include "qgen/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace qgen {

namespace {

using nlohmann::json;

// n-gram key: tokens joined on a separator that tokenized text cannot contain
std::string gram_key(const std::vector<std::string>& tokens, std::size_t at, int n) {
    std::string key;
    for (int k = 0; k < n; ++k) {
        if (k) key.push_back('\x1f');
        key += tokens[at + static_cast<std::size_t>(k)];
    }
    return key;
}

json number_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

double json_number(const json& j, const char* field) {
    const json& v = j.at(field);
    if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return v.get<double>();
}

json values_to_json(const MetricValues& v) {
    return json{{"nll", number_or_null(v.nll)},
                {"bleu", number_or_null(v.bleu)},
                {"qa_f1", number_or_null(v.qa_f1)},
                {"lm_ppl", number_or_null(v.lm_ppl)},
                {"disc_fool", number_or_null(v.disc_fool)}};
}

MetricValues values_from_json(const json& j) {
    MetricValues v;
    v.nll = json_number(j, "nll");
    v.bleu = json_number(j, "bleu");
    v.qa_f1 = json_number(j, "qa_f1");
    v.lm_ppl = json_number(j, "lm_ppl");
    v.disc_fool = json_number(j, "disc_fool");
    return v;
}

std::string format_cell(double v) {
    char buf[32];
    if (!std::isfinite(v)) {
        std::snprintf(buf, sizeof(buf), "%10s", "-");
    } else {
        std::snprintf(buf, sizeof(buf), "%10.4f", v);
    }
    return buf;
}

const std::unordered_set<std::string>& function_words() {
    static const std::unordered_set<std::string> words = {
        "a",     "an",    "the",   "of",    "in",    "on",    "at",    "to",    "by",
        "for",   "with",  "from",  "as",    "and",   "or",    "but",   "is",    "are",
        "was",   "were",  "be",    "been",  "being", "do",    "does",  "did",   "done",
        "can",   "could", "will",  "would", "shall", "should", "may",  "might", "must",
        "has",   "have",  "had",   "who",   "whom",  "whose", "what",  "when",  "where",
        "which", "why",   "how",   "that",  "this",  "these", "those", "it",    "its",
        "he",    "she",   "they",  "them",  "his",   "her",   "their", "not",   "no",
        "'s",    "s",     "t"};
    return words;
}

}  // namespace

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

double bleu4(const std::vector<std::vector<std::string>>& candidates,
             const std::vector<std::vector<std::string>>& references) {
    if (candidates.empty()) throw std::invalid_argument("bleu4: empty corpus");
    if (candidates.size() != references.size()) {
        throw std::invalid_argument("bleu4: candidate and reference counts differ");
    }

    long long cand_len = 0, ref_len = 0;
    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        long long matched = 0, total = 0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto& cand = candidates[i];
            const auto& ref = references[i];
            if (static_cast<int>(cand.size()) < n) continue;
            std::unordered_map<std::string, long long> ref_counts;
            if (static_cast<int>(ref.size()) >= n) {
                for (std::size_t at = 0; at + n <= ref.size(); ++at) {
                    ++ref_counts[gram_key(ref, at, n)];
                }
            }
            std::unordered_map<std::string, long long> cand_counts;
            for (std::size_t at = 0; at + n <= cand.size(); ++at) {
                ++cand_counts[gram_key(cand, at, n)];
            }
            for (const auto& [key, count] : cand_counts) {
                total += count;
                auto it = ref_counts.find(key);
                if (it != ref_counts.end()) matched += std::min(count, it->second);
            }
        }
        double precision = total > 0 ? static_cast<double>(matched) / static_cast<double>(total)
                                     : 0.0;
        if (precision <= 0.0) precision = 1e-9;  // smoothing keeps the mean defined
        log_sum += 0.25 * std::log(precision);
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        cand_len += static_cast<long long>(candidates[i].size());
        ref_len += static_cast<long long>(references[i].size());
    }
    if (cand_len == 0) return 0.0;
    const double bp =
        cand_len >= ref_len
            ? 1.0
            : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    return bp * std::exp(log_sum);
}

// ---------------------------------------------------------------------------
// Model scoring
// ---------------------------------------------------------------------------

std::vector<std::string> decoded_question(const GeneratedSequence& seq, const Vocabulary& vocab,
                                          const EncodedExample& ex) {
    std::vector<int> ids = seq.tokens;
    if (!ids.empty() && ids.back() == Vocabulary::kEos) ids.pop_back();
    return decode_extended(ids, vocab, ex.oov_map);
}

MetricValues score_model(const GeneratorModel& gen, const Vocabulary& vocab,
                         const RewardModels& models, const std::vector<Triple>& triples,
                         const EvalConfig& cfg) {
    std::vector<const Triple*> scored;
    for (const Triple& t : triples) {
        if (t.has_question()) scored.push_back(&t);
    }
    if (scored.empty()) {
        throw std::invalid_argument("score_model: no triples with ground-truth questions");
    }
    const int max_len = cfg.max_len > 0 ? cfg.max_len : gen.cfg.max_len;

    std::vector<Triple> gold;
    gold.reserve(scored.size());
    for (const Triple* t : scored) gold.push_back(*t);

    MetricValues out;
    out.nll = nll(gen, vocab, gold);

    std::vector<std::vector<std::string>> cands, refs;
    double qa_sum = 0.0, ppl_sum = 0.0;
    int fooled = 0;
    for (const Triple* t : scored) {
        const EncodedExample ex = encode_example(*t, vocab);
        auto beam = beam_search(gen, vocab, *t, cfg.beam_width, max_len);
        const std::vector<std::string> q = decoded_question(beam.front(), vocab, ex);
        cands.push_back(q);
        refs.push_back(t->question);
        if (models.qa) qa_sum += qa_reward(*models.qa, vocab, *t, q);
        if (models.lm) ppl_sum += lm_perplexity(*models.lm, vocab, q);
        if (models.disc && disc_score(*models.disc, vocab, *t, q) > 0.5) ++fooled;
    }
    const double n = static_cast<double>(scored.size());
    out.bleu = bleu4(cands, refs);
    out.qa_f1 = models.qa ? qa_sum / n : std::numeric_limits<double>::quiet_NaN();
    out.lm_ppl = models.lm ? ppl_sum / n : std::numeric_limits<double>::quiet_NaN();
    out.disc_fool =
        models.disc ? static_cast<double>(fooled) / n : std::numeric_limits<double>::quiet_NaN();
    return out;
}

MetricReport with_baseline(const std::string& name, const MetricValues& values,
                           const std::string& baseline_name, const MetricValues& baseline) {
    MetricReport r;
    r.name = name;
    r.values = values;
    r.baseline = baseline_name;
    r.deltas.nll = values.nll - baseline.nll;
    r.deltas.bleu = values.bleu - baseline.bleu;
    r.deltas.qa_f1 = values.qa_f1 - baseline.qa_f1;
    r.deltas.lm_ppl = values.lm_ppl - baseline.lm_ppl;
    r.deltas.disc_fool = values.disc_fool - baseline.disc_fool;
    return r;
}

std::string render_report_table(const std::vector<MetricReport>& reports) {
    std::ostringstream out;
    std::size_t name_width = 13;
    for (const auto& r : reports) name_width = std::max(name_width, r.name.size() + 1);

    auto pad_name = [&](const std::string& s) {
        std::string padded = s;
        padded.resize(name_width, ' ');
        return padded;
    };
    out << pad_name("configuration");
    char head[128];
    std::snprintf(head, sizeof(head), "%10s%10s%10s%10s%10s", "nll", "bleu4", "qa_f1", "lm_ppl",
                  "fooled");
    out << head << "\n";
    const bool any_baseline =
        std::any_of(reports.begin(), reports.end(),
                    [](const MetricReport& r) { return !r.baseline.empty(); });
    for (const auto& r : reports) {
        out << pad_name(r.name) << format_cell(r.values.nll) << format_cell(r.values.bleu)
            << format_cell(r.values.qa_f1) << format_cell(r.values.lm_ppl)
            << format_cell(r.values.disc_fool) << "\n";
        if (any_baseline && !r.baseline.empty()) {
            out << pad_name("  vs " + r.baseline) << format_cell(r.deltas.nll)
                << format_cell(r.deltas.bleu) << format_cell(r.deltas.qa_f1)
                << format_cell(r.deltas.lm_ppl) << format_cell(r.deltas.disc_fool) << "\n";
        }
    }
    return out.str();
}

void save_reports(const std::vector<MetricReport>& reports, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_reports: cannot open " + path);
    for (const auto& r : reports) {
        json j{{"name", r.name}, {"values", values_to_json(r.values)}};
        if (!r.baseline.empty()) {
            j["baseline"] = r.baseline;
            j["deltas"] = values_to_json(r.deltas);
        }
        out << j.dump() << "\n";
    }
}

std::vector<MetricReport> load_reports(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_reports: cannot open " + path);
    std::vector<MetricReport> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("load_reports: line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
        MetricReport r;
        r.name = j.at("name").get<std::string>();
        r.values = values_from_json(j.at("values"));
        if (j.contains("baseline")) {
            r.baseline = j.at("baseline").get<std::string>();
            r.deltas = values_from_json(j.at("deltas"));
        } else {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            r.deltas = MetricValues{nan, nan, nan, nan, nan};
        }
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: zero variance input");
    return sxy / std::sqrt(sxx * syy);
}

CorrelationReport correlate(const std::vector<RatingRecord>& ratings,
                            const std::vector<ScoredQuestion>& questions) {
    std::unordered_map<std::string, const ScoredQuestion*> by_id;
    for (const ScoredQuestion& q : questions) by_id[q.id] = &q;

    struct Sums {
        double relevance = 0.0, fluency = 0.0;
        int count = 0;
    };
    std::map<std::string, Sums> grouped;  // ordered: deterministic output rows
    for (const RatingRecord& r : ratings) {
        if (!by_id.count(r.question_id)) {
            throw std::invalid_argument("correlate: rating references unknown question id '" +
                                        r.question_id + "'");
        }
        Sums& s = grouped[r.question_id];
        s.relevance += r.relevance;
        s.fluency += r.fluency;
        ++s.count;
    }
    if (grouped.size() < 2) {
        throw std::invalid_argument("correlate: need ratings for at least two questions");
    }

    CorrelationReport report;
    std::vector<double> qa, lm, relevance, fluency;
    for (const auto& [id, sums] : grouped) {
        const ScoredQuestion* q = by_id.at(id);
        ScatterRow row;
        row.question_id = id;
        row.qa = q->qa;
        row.lm = q->lm;
        row.relevance = sums.relevance / sums.count;
        row.fluency = sums.fluency / sums.count;
        report.scatter.push_back(row);
        qa.push_back(row.qa);
        lm.push_back(row.lm);
        relevance.push_back(row.relevance);
        fluency.push_back(row.fluency);
    }
    report.relevance_vs_qa = pearson(relevance, qa);
    report.fluency_vs_lm = pearson(fluency, lm);
    return report;
}

std::vector<RatingRecord> load_ratings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_ratings: cannot open " + path);
    std::vector<RatingRecord> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("load_ratings: line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
        RatingRecord r;
        r.question_id = j.at("question_id").get<std::string>();
        r.rater_id = j.at("rater_id").get<std::string>();
        r.fluency = j.at("fluency").get<int>();
        r.relevance = j.at("relevance").get<int>();
        if (r.fluency < 1 || r.fluency > 5 || r.relevance < 1 || r.relevance > 5) {
            throw std::runtime_error("load_ratings: line " + std::to_string(line_no) +
                                     ": scores must be in 1..5");
        }
        out.push_back(std::move(r));
    }
    return out;
}

void save_ratings(const std::vector<RatingRecord>& ratings, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_ratings: cannot open " + path);
    for (const RatingRecord& r : ratings) {
        json j{{"question_id", r.question_id},
               {"rater_id", r.rater_id},
               {"fluency", r.fluency},
               {"relevance", r.relevance}};
        out << j.dump() << "\n";
    }
}

void save_scatter(const std::vector<ScatterRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_scatter: cannot open " + path);
    out << "# qa relevance lm fluency question_id\n";
    char buf[160];
    for (const ScatterRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %.6f %s\n", r.qa, r.relevance, r.lm,
                      r.fluency, r.question_id.c_str());
        out << buf;
    }
}

std::string scatter_svg(const std::vector<ScatterRow>& rows) {
    // two fixed panels: QA score vs relevance, LM score vs fluency
    const double width = 420.0, height = 320.0, margin = 45.0;
    struct Panel {
        const char* x_label;
        const char* y_label;
        double x_off;
    };
    const Panel panels[2] = {{"qa score", "relevance", 0.0}, {"lm score", "fluency", width}};

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << 2 * width << " " << height << "\">\n";
    svg << "<rect width=\"" << 2 * width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

    for (int p = 0; p < 2; ++p) {
        double xmin = 1e300, xmax = -1e300;
        for (const ScatterRow& r : rows) {
            const double v = p == 0 ? r.qa : r.lm;
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        if (rows.empty() || xmin > xmax) {
            xmin = 0.0;
            xmax = 1.0;
        }
        if (xmax == xmin) xmax = xmin + 1.0;
        const double ymin = 1.0, ymax = 5.0;
        const double x0 = panels[p].x_off + margin, x1 = panels[p].x_off + width - margin;
        const double y0 = height - margin, y1 = margin;

        svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
            << "\" stroke=\"black\"/>\n";
        svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
            << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << height - 10
            << "\" text-anchor=\"middle\" font-size=\"12\">" << panels[p].x_label << "</text>\n";
        svg << "<text x=\"" << panels[p].x_off + 14 << "\" y=\"" << (y0 + y1) / 2
            << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 "
            << panels[p].x_off + 14 << " " << (y0 + y1) / 2 << ")\">" << panels[p].y_label
            << "</text>\n";

        for (const ScatterRow& r : rows) {
            const double xv = p == 0 ? r.qa : r.lm;
            const double yv = p == 0 ? r.relevance : r.fluency;
            const double px = x0 + (xv - xmin) / (xmax - xmin) * (x1 - x0);
            const double py = y0 - (yv - ymin) / (ymax - ymin) * (y0 - y1);
            svg << "<circle cx=\"" << px << "\" cy=\"" << py
                << "\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.6\"/>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

// ---------------------------------------------------------------------------
// Degeneracy detectors
// ---------------------------------------------------------------------------

RepetitionResult detect_repetition(const std::vector<std::string>& tokens, int min_ngram,
                                   int min_repeats) {
    RepetitionResult result;
    const int len = static_cast<int>(tokens.size());
    if (min_ngram < 1 || min_repeats < 1) return result;
    const int max_n = len / min_repeats;  // non-overlapping occurrences must fit
    for (int n = max_n; n >= min_ngram; --n) {
        for (int start = 0; start + n <= len; ++start) {
            const std::string key = gram_key(tokens, static_cast<std::size_t>(start), n);
            int repeats = 0;
            for (int at = 0; at + n <= len;) {
                if (gram_key(tokens, static_cast<std::size_t>(at), n) == key) {
                    ++repeats;
                    at += n;  // non-overlapping
                } else {
                    ++at;
                }
            }
            if (repeats >= min_repeats) {
                result.flagged = true;
                result.ngram.assign(tokens.begin() + start, tokens.begin() + start + n);
                return result;
            }
        }
    }
    return result;
}

bool is_content_token(const std::string& token) {
    const bool has_alnum = std::any_of(token.begin(), token.end(), [](unsigned char ch) {
        return std::isalnum(ch) != 0;
    });
    if (!has_alnum) return false;  // pure punctuation
    return function_words().count(token) == 0;
}

bool detect_answer_pointing(const std::vector<std::string>& question,
                            const std::vector<std::string>& context, int answer_start,
                            int answer_end, int window, double threshold) {
    const int T = static_cast<int>(context.size());
    if (T == 0 || answer_start < 0 || answer_start > answer_end || answer_end >= T) {
        throw std::invalid_argument("detect_answer_pointing: invalid answer span");
    }
    if (window < 0) throw std::invalid_argument("detect_answer_pointing: negative window");

    const int lo = std::max(0, answer_start - window);
    const int hi = std::min(T - 1, answer_end + window);
    std::unordered_set<std::string> nearby;
    for (int i = lo; i <= hi; ++i) nearby.insert(context[static_cast<std::size_t>(i)]);

    int content = 0, pointed = 0;
    for (const std::string& tok : question) {
        if (!is_content_token(tok)) continue;
        ++content;
        if (nearby.count(tok)) ++pointed;
    }
    if (content == 0) return false;
    return static_cast<double>(pointed) / static_cast<double>(content) >= threshold;
}

}  // namespace qgen
