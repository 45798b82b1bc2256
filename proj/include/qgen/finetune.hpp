#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "qgen/corpus.hpp"
#include "qgen/eval.hpp"
#include "qgen/generator.hpp"
#include "qgen/rewards.hpp"
#include "qgen/rng.hpp"
#include "qgen/tape.hpp"

namespace qgen {

// ---------------------------------------------------------------------------
// Policy-gradient fine-tuning of the generator against frozen reward models,
// with per-source online reward normalization, a retained teacher-forced
// maximum-likelihood term, and optional interleaved discriminator updates.
// ---------------------------------------------------------------------------

struct FinetuneConfig {
    RewardConfig rewards;
    double ml_weight = 0.5;    // weight of the retained ML objective
    double learning_rate = 0.01;
    double clip = 5.0;
    int batch_size = 8;
    int steps = 100;
    bool stochastic = false;   // default: fine-tune on beam outputs
    int beam_width = 4;
    int max_len = 0;           // 0 -> use the generator's configured maximum
    int disc_update_ratio = 1; // discriminator updates per generator update
    std::uint64_t seed = 1;
    bool verbose = false;
};

// One record per optimizer step. Rewards appear only for enabled sources and
// the discriminator loss only in adversarial mode; absent values are NaN.
struct StepLog {
    int step = 0;
    double qa_reward = std::numeric_limits<double>::quiet_NaN();
    double lm_reward = std::numeric_limits<double>::quiet_NaN();
    double disc_reward = std::numeric_limits<double>::quiet_NaN();
    double mean_advantage = 0.0;
    double rl_loss = 0.0;
    double ml_loss = std::numeric_limits<double>::quiet_NaN();
    double disc_loss = std::numeric_limits<double>::quiet_NaN();
    double grad_norm = 0.0;
};

void save_step_logs(const std::vector<StepLog>& logs, const std::string& path);
std::vector<StepLog> load_step_logs(const std::string& path);

// One normalizer per reward source; snapshots make runs resumable.
struct RewardStatsSet {
    RewardStats qa;
    RewardStats lm;
    RewardStats disc;
};

void save_stats(const RewardStatsSet& stats, const std::string& path);
RewardStatsSet load_stats(const std::string& path);

// Reward models used during fine-tuning. The discriminator is mutable because
// adversarial mode keeps training it; the others stay frozen.
struct FinetuneModels {
    const LanguageModel* lm = nullptr;
    const QaModel* qa = nullptr;
    DiscriminatorModel* disc = nullptr;
};

// Policy-gradient surrogate for one generated sequence:
//   loss = -(1/l) * advantage * sum_t log p(y_t | y_<t, context, answer)
// The advantage enters as a constant, so minimizing the loss moves probability
// mass toward (advantage > 0) or away from (advantage < 0) the sequence, and
// no gradient flows through the reward side. Throws on an empty sequence.
Var rl_loss(Tape& tape, const ForcedReplay& replay, double advantage);

// One fine-tuning update on a batch: generate (beam or stochastic), score
// each question with the enabled reward sources, normalize each source
// online, combine the normalized values into an advantage, replay the
// generated tokens differentiably, and take one clipped SGD step on
//   mean rl_loss + ml_weight * teacher-forced cross-entropy.
// When no enabled source carries a positive weight the step degenerates to a
// pure weighted ML step (nothing is generated or scored). `generated`, when
// non-null, receives the decoded question for each batch example (empty in
// the degenerate mode). Throws on an empty batch.
StepLog finetune_step(GeneratorModel& gen, const Vocabulary& vocab,
                      const std::vector<const Triple*>& batch, const FinetuneModels& models,
                      RewardStatsSet& stats, const FinetuneConfig& cfg, Rng& sample_rng,
                      int step_index = 0,
                      std::vector<std::vector<std::string>>* generated = nullptr);

// One binary cross-entropy update on the concatenation of a real batch
// (label 1) and a generated batch (label 0). Returns the batch loss. Throws
// when either side is empty.
double disc_update(DiscriminatorModel& disc, const std::vector<DiscExample>& real_batch,
                   const std::vector<DiscExample>& fake_batch, const FinetuneConfig& cfg);

struct FinetuneResult {
    std::vector<StepLog> history;
    MetricValues before;
    MetricValues after;
    MetricReport report;     // "finetuned" scored against the "baseline" start
    RewardStatsSet stats;    // normalizer state at the end of the run
};

// Runs finetune_step for cfg.steps batches drawn from the question-bearing
// triples (reshuffled each pass), interleaving cfg.disc_update_ratio
// discriminator updates per generator step in adversarial mode, and scores
// the generator on eval_triples before and after. Deterministic given the
// seed. A previous run's normalizer snapshot can be passed to continue its
// reward statistics. Throws when an enabled source lacks its model, when
// adversarial mode lacks an effective discriminator reward, when no triple
// carries a question, or when the config asks for nothing to optimize.
FinetuneResult finetune_loop(GeneratorModel& gen, const Vocabulary& vocab,
                             const FinetuneModels& models, const std::vector<Triple>& train,
                             const std::vector<Triple>& eval_triples, const FinetuneConfig& cfg,
                             const RewardStatsSet* initial_stats = nullptr);

}  // namespace qgen
