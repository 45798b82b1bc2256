#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qgen/checkpoint.hpp"
#include "qgen/corpus.hpp"
#include "qgen/rng.hpp"
#include "qgen/tape.hpp"
#include "qgen/tensor.hpp"

namespace qgen {

// ---------------------------------------------------------------------------
// Language model reward: negative perplexity of the question under a small
// recurrent language model (single LSTM layer over learned embeddings).
// ---------------------------------------------------------------------------

struct LmConfig {
    int emb_dim = 32;
    int hidden = 64;
};

struct LanguageModel {
    LmConfig cfg;
    int vocab_size = 0;

    Tensor embedding;      // [V, emb]
    Tensor w_ih;           // [4H, emb]
    Tensor w_hh;           // [4H, H]
    Tensor b;              // [4H]
    Tensor out_w;          // [V, H]
    Tensor out_b;          // [V]

    static LanguageModel init(int vocab_size, const LmConfig& cfg, Rng& rng);
    NamedTensors named() const;
    static LanguageModel from_named(const NamedTensors& ts);
    void save(const std::string& path) const;
    static LanguageModel load(const std::string& path);
};

struct LmVars {
    std::vector<Var> all;  // embedding, w_ih, w_hh, b, out_w, out_b
};

LmVars make_lm_vars(Tape& tape, const LanguageModel& m);
std::vector<Tensor*> lm_params(LanguageModel& m);

// Mean per-token cross-entropy of the id sequence, EOS appended internally;
// inputs are SOS followed by the ids. Throws on empty input or bad ids.
Var lm_sequence_ce(Tape& tape, const LanguageModel& m, const LmVars& vars,
                   const std::vector<int>& ids);

struct LmTrainConfig {
    int epochs = 8;
    int batch_size = 16;
    double learning_rate = 0.1;
    double clip = 5.0;
    std::uint64_t seed = 1;
    bool verbose = false;
};

// Trains on the token sequences (words mapped through the vocabulary, OOV to
// UNK). Returns mean training cross-entropy per epoch.
std::vector<double> train_lm(LanguageModel& m, const Vocabulary& vocab,
                             const std::vector<std::vector<std::string>>& questions,
                             const LmTrainConfig& cfg);

// exp(mean per-token cross-entropy including EOS). Throws on empty input.
double lm_perplexity(const LanguageModel& m, const Vocabulary& vocab,
                     const std::vector<std::string>& question);

// Reward = -perplexity; strictly negative, higher is better.
double lm_reward(const LanguageModel& m, const Vocabulary& vocab,
                 const std::vector<std::string>& question);

// ---------------------------------------------------------------------------
// QA reward: span-extraction model scored by token-multiset F1 against the
// gold answer span, plus a deterministic oracle variant.
// ---------------------------------------------------------------------------

struct QaConfig {
    int emb_dim = 32;
    int hidden = 48;
    int max_span = 8;  // prediction window: end in [start, start + max_span)
};

struct QaModel {
    QaConfig cfg;
    int vocab_size = 0;

    Tensor embedding;                    // [V, emb]
    Tensor q_w_ih, q_w_hh, q_b;          // question encoder LSTM
    Tensor cf_w_ih, cf_w_hh, cf_b;       // context forward LSTM
    Tensor cb_w_ih, cb_w_hh, cb_b;       // context backward LSTM
    Tensor w_start;                      // [2H, H] bilinear start scorer
    Tensor w_end;                        // [2H, H] bilinear end scorer

    static QaModel init(int vocab_size, const QaConfig& cfg, Rng& rng);
    NamedTensors named() const;
    static QaModel from_named(const NamedTensors& ts);
    void save(const std::string& path) const;
    static QaModel load(const std::string& path);
};

struct QaVars {
    std::vector<Var> all;  // same order as qa_params
};

QaVars make_qa_vars(Tape& tape, const QaModel& m);
std::vector<Tensor*> qa_params(QaModel& m);

struct QaSpan {
    int start = 0;
    int end = 0;  // inclusive
};

// Start/end distributions over context positions (each sums to 1).
std::pair<Var, Var> qa_span_dists(Tape& tape, const QaModel& m, const QaVars& vars,
                                  const std::vector<int>& context_ids,
                                  const std::vector<int>& question_ids);

// Cross-entropy of the gold start plus gold end under the span distributions.
Var qa_example_loss(Tape& tape, const QaModel& m, const QaVars& vars,
                    const std::vector<int>& context_ids,
                    const std::vector<int>& question_ids, const QaSpan& gold);

struct QaTrainConfig {
    int epochs = 10;
    int batch_size = 16;
    double learning_rate = 0.1;
    double clip = 5.0;
    std::uint64_t seed = 1;
    bool verbose = false;
};

// Trains on triples that carry questions. Returns mean training loss per epoch.
std::vector<double> train_qa(QaModel& m, const Vocabulary& vocab,
                             const std::vector<Triple>& triples, const QaTrainConfig& cfg);

// Argmax start, then argmax end among positions >= start within the window.
QaSpan qa_predict(const QaModel& m, const Vocabulary& vocab,
                  const std::vector<std::string>& context,
                  const std::vector<std::string>& question);

// Token-multiset overlap F1 between two token sequences.
double token_f1(const std::vector<std::string>& predicted,
                const std::vector<std::string>& gold);

// F1 between the predicted span's tokens and the gold span's tokens when the
// model answers `question` against the triple's context.
double qa_reward(const QaModel& m, const Vocabulary& vocab, const Triple& triple,
                 const std::vector<std::string>& question);

// Deterministic stand-in: predicts the gold span iff at least `min_matches`
// distinct question tokens occur in the context within `window` positions of
// the span; reward is the resulting F1 (1.0 or 0.0).
double oracle_qa_reward(const Triple& triple, const std::vector<std::string>& question,
                        int min_matches = 2, int window = 6);

// ---------------------------------------------------------------------------
// Discriminator reward: probability that a context-question-answer triple is
// real training data. Attention fuses each context position with the encoded
// question; three stacked recurrent blocks feed a pooled fusion head.
// ---------------------------------------------------------------------------

struct DiscConfig {
    int emb_dim = 32;
    int q_hidden = 32;
    int attn_dim = 32;
    int block_hidden = 48;
    int head_hidden = 64;
};

struct DiscriminatorModel {
    DiscConfig cfg;
    int vocab_size = 0;

    Tensor embedding;                    // [V, emb]
    Tensor q_w_ih, q_w_hh, q_b;          // question encoder LSTM
    Tensor att_wq, att_wk, att_b, att_v; // context-over-question attention
    Tensor b1_w_ih, b1_w_hh, b1_b;       // encoder block 1
    Tensor b2_w_ih, b2_w_hh, b2_b;       // encoder block 2
    Tensor b3_w_ih, b3_w_hh, b3_b;       // encoder block 3
    Tensor head_w, head_b;               // [64, 3H], [64]
    Tensor out_w, out_b;                 // [1, 64], [1]

    static DiscriminatorModel init(int vocab_size, const DiscConfig& cfg, Rng& rng);
    NamedTensors named() const;
    static DiscriminatorModel from_named(const NamedTensors& ts);
    void save(const std::string& path) const;
    static DiscriminatorModel load(const std::string& path);
};

struct DiscVars {
    std::vector<Var> all;  // same order as disc_params
};

DiscVars make_disc_vars(Tape& tape, const DiscriminatorModel& m);
std::vector<Tensor*> disc_params(DiscriminatorModel& m);

struct DiscExample {
    std::vector<int> context_ids;
    std::vector<int> question_ids;
    int answer_start = 0;
    int answer_end = 0;  // inclusive
    double label = 0.0;  // 1 = real, 0 = generated
};

// Probability the example is real (scalar strictly in (0,1)).
Var disc_forward(Tape& tape, const DiscriminatorModel& m, const DiscVars& vars,
                 const DiscExample& ex);

// Mean binary cross-entropy over the batch.
Var disc_batch_loss(Tape& tape, const DiscriminatorModel& m, const DiscVars& vars,
                    const std::vector<DiscExample>& batch);

DiscExample make_disc_example(const Vocabulary& vocab, const Triple& triple,
                              const std::vector<std::string>& question, double label);

double disc_score(const DiscriminatorModel& m, const Vocabulary& vocab,
                  const Triple& triple, const std::vector<std::string>& question);

struct DiscTrainConfig {
    int epochs = 6;
    int batch_size = 16;
    double learning_rate = 0.1;
    double clip = 5.0;
    double heldout_fraction = 0.2;
    std::uint64_t seed = 1;
    bool verbose = false;
};

// Trains real (label 1, questions from the triples) against fake (label 0,
// questions supplied alongside their triples). Returns held-out accuracy on a
// split carved from both classes. Throws if either class is empty.
double pretrain_discriminator(DiscriminatorModel& m, const Vocabulary& vocab,
                              const std::vector<Triple>& real,
                              const std::vector<Triple>& fake,
                              const DiscTrainConfig& cfg);

// One gradient step on a mixed batch; returns the batch loss. Used by the
// adversarial fine-tuning loop.
double disc_train_batch(DiscriminatorModel& m, const std::vector<DiscExample>& batch,
                        double learning_rate, double clip);

// ---------------------------------------------------------------------------
// Reward combination and normalization.
// ---------------------------------------------------------------------------

struct RewardConfig {
    double lambda_qa = 1.0;
    double lambda_lm = 1.0;
    double lambda_disc = 1.0;
    bool use_qa = false;
    bool use_lm = false;
    bool use_disc = false;
    bool adversarial = false;  // discriminator keeps training during fine-tuning

    bool any_enabled() const { return use_qa || use_lm || use_disc; }
};

struct RewardValues {
    double qa = 0.0;
    double lm = 0.0;
    double disc = 0.0;
};

// Weighted sum over the enabled sources. Throws when no enabled source has a
// positive weight.
double combine(const RewardValues& values, const RewardConfig& cfg);

// Online reward normalization: exponential moving averages of the first two
// moments, sigma floored, first observation initializes mu to the value.
struct RewardStats {
    double mu = 0.0;
    double nu = 0.0;  // second raw moment
    long long count = 0;
    double beta = 0.999;

    double sigma() const;
};

// Updates the stats with r and returns (r - mu)/sigma using the post-update
// statistics. Throws on non-finite r.
double popart_update(RewardStats& stats, double r);

}  // namespace qgen
