#pragma once

#include <string>
#include <vector>

#include "qgen/corpus.hpp"
#include "qgen/generator.hpp"
#include "qgen/rewards.hpp"

namespace qgen {

// ---------------------------------------------------------------------------
// Corpus BLEU-4
// ---------------------------------------------------------------------------

// Corpus-level BLEU with modified n-gram precisions for n = 1..4, geometric
// mean, and brevity penalty. One reference per candidate. Zero precisions are
// replaced by 1e-9 so the geometric mean stays defined on tiny corpora.
// Throws std::invalid_argument on an empty corpus or mismatched sizes.
double bleu4(const std::vector<std::vector<std::string>>& candidates,
             const std::vector<std::vector<std::string>>& references);

// ---------------------------------------------------------------------------
// Model scoring
// ---------------------------------------------------------------------------

// The frozen reward models a scoring or fine-tuning run evaluates against.
// Null members simply disable the corresponding metric.
struct RewardModels {
    const LanguageModel* lm = nullptr;
    const QaModel* qa = nullptr;
    const DiscriminatorModel* disc = nullptr;
};

struct MetricValues {
    double nll = 0.0;        // teacher-forced mean per-token NLL on gold questions
    double bleu = 0.0;       // corpus BLEU-4 of beam-1 outputs vs gold questions
    double qa_f1 = 0.0;      // mean QA reward of beam-1 outputs (NaN without a QA model)
    double lm_ppl = 0.0;     // mean LM perplexity of beam-1 outputs (NaN without an LM)
    double disc_fool = 0.0;  // fraction of outputs with disc_score > 0.5 (NaN without a disc)
};

struct MetricReport {
    std::string name;
    MetricValues values;
    std::string baseline;  // empty when the report carries no baseline
    MetricValues deltas;   // value - baseline value, fieldwise (NaN without baseline)
};

struct EvalConfig {
    int beam_width = 5;
    int max_len = 0;  // 0 -> the generator's configured maximum
};

// The generated question of a decoded sequence: extended ids mapped back to
// tokens with the trailing EOS dropped.
std::vector<std::string> decoded_question(const GeneratedSequence& seq, const Vocabulary& vocab,
                                          const EncodedExample& ex);

// Beam-decodes every triple once and computes all metrics over the outputs.
// Deterministic: same model and data give an identical report.
MetricValues score_model(const GeneratorModel& gen, const Vocabulary& vocab,
                         const RewardModels& models, const std::vector<Triple>& triples,
                         const EvalConfig& cfg = {});

// Attaches a named baseline, filling deltas = values - baseline fieldwise.
MetricReport with_baseline(const std::string& name, const MetricValues& values,
                           const std::string& baseline_name, const MetricValues& baseline);

// Fixed-width text table over report rows (values and deltas when present).
std::string render_report_table(const std::vector<MetricReport>& reports);

// Machine-readable report file keyed by configuration name (one JSON record
// per line). Non-finite fields round-trip as nulls.
void save_reports(const std::vector<MetricReport>& reports, const std::string& path);
std::vector<MetricReport> load_reports(const std::string& path);

// ---------------------------------------------------------------------------
// Correlation with human ratings
// ---------------------------------------------------------------------------

// One human judgment of one generated question.
struct RatingRecord {
    std::string question_id;
    std::string rater_id;
    int fluency = 0;    // 1..5
    int relevance = 0;  // 1..5
};

// Automatic scores attached to a generated question.
struct ScoredQuestion {
    std::string id;
    double qa = 0.0;
    double lm = 0.0;
};

struct ScatterRow {
    std::string question_id;
    double qa = 0.0;
    double lm = 0.0;
    double relevance = 0.0;  // mean over raters
    double fluency = 0.0;    // mean over raters
};

struct CorrelationReport {
    double relevance_vs_qa = 0.0;
    double fluency_vs_lm = 0.0;
    std::vector<ScatterRow> scatter;
};

// Sample Pearson correlation. Throws std::invalid_argument when lengths
// differ, fewer than two points are given, or either side has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Averages multiple raters per question, pairs the means with automatic
// scores, and correlates relevance with QA score and fluency with LM score.
// Throws std::invalid_argument naming any rating id that matches no question.
CorrelationReport correlate(const std::vector<RatingRecord>& ratings,
                            const std::vector<ScoredQuestion>& questions);

// Ratings file: one JSON record per line with question_id, rater_id,
// fluency, relevance. Loading validates the 1..5 score range.
std::vector<RatingRecord> load_ratings(const std::string& path);
void save_ratings(const std::vector<RatingRecord>& ratings, const std::string& path);

// Scatter rows as columnar text (qa, relevance, lm, fluency per line) for
// external plotting, and a minimal self-contained SVG scatter plot.
void save_scatter(const std::vector<ScatterRow>& rows, const std::string& path);
std::string scatter_svg(const std::vector<ScatterRow>& rows);

// ---------------------------------------------------------------------------
// Degeneracy detectors
// ---------------------------------------------------------------------------

struct RepetitionResult {
    bool flagged = false;
    std::vector<std::string> ngram;  // longest repeated n-gram when flagged
};

// Flags a token sequence when any n-gram of length >= min_ngram occurs at
// least min_repeats times without overlap. Never flags sequences shorter
// than min_ngram * min_repeats tokens.
RepetitionResult detect_repetition(const std::vector<std::string>& tokens, int min_ngram = 3,
                                   int min_repeats = 2);

// True for tokens that carry content: not punctuation and not a function
// word (articles, prepositions, auxiliaries, question words, ...).
bool is_content_token(const std::string& token);

// Flags a question when at least `threshold` of its content tokens appear in
// the context within `window` tokens of the answer span. Questions with no
// content tokens are never flagged. Throws on an invalid span.
bool detect_answer_pointing(const std::vector<std::string>& question,
                            const std::vector<std::string>& context, int answer_start,
                            int answer_end, int window = 4, double threshold = 0.6);

}  // namespace qgen
