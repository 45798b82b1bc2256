#include "qgen/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "qgen/optim.hpp"

namespace qgen {

namespace {

using nlohmann::json;

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double json_number(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

// A source only shapes the advantage when it is both enabled and positively
// weighted; otherwise the objective degenerates to the retained ML term.
bool rl_enabled(const RewardConfig& c) {
    return (c.use_qa && c.lambda_qa > 0.0) || (c.use_lm && c.lambda_lm > 0.0) ||
           (c.use_disc && c.lambda_disc > 0.0);
}

json stats_to_json(const RewardStats& s) {
    return json{{"mu", s.mu}, {"nu", s.nu}, {"count", s.count}, {"beta", s.beta}};
}

RewardStats stats_from_json(const json& j) {
    RewardStats s;
    s.mu = j.at("mu").get<double>();
    s.nu = j.at("nu").get<double>();
    s.count = j.at("count").get<long long>();
    s.beta = j.at("beta").get<double>();
    return s;
}

}  // namespace

void save_step_logs(const std::vector<StepLog>& logs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_step_logs: cannot write " + path);
    for (const StepLog& log : logs) {
        json j{{"step", log.step},
               {"qa_reward", number_or_null(log.qa_reward)},
               {"lm_reward", number_or_null(log.lm_reward)},
               {"disc_reward", number_or_null(log.disc_reward)},
               {"advantage", log.mean_advantage},
               {"rl_loss", log.rl_loss},
               {"ml_loss", number_or_null(log.ml_loss)},
               {"disc_loss", number_or_null(log.disc_loss)},
               {"grad_norm", log.grad_norm}};
        out << j.dump() << "\n";
    }
}

std::vector<StepLog> load_step_logs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_step_logs: cannot read " + path);
    std::vector<StepLog> logs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        StepLog log;
        log.step = j.at("step").get<int>();
        log.qa_reward = json_number(j.at("qa_reward"));
        log.lm_reward = json_number(j.at("lm_reward"));
        log.disc_reward = json_number(j.at("disc_reward"));
        log.mean_advantage = j.at("advantage").get<double>();
        log.rl_loss = j.at("rl_loss").get<double>();
        log.ml_loss = json_number(j.at("ml_loss"));
        log.disc_loss = json_number(j.at("disc_loss"));
        log.grad_norm = j.at("grad_norm").get<double>();
        logs.push_back(log);
    }
    return logs;
}

void save_stats(const RewardStatsSet& stats, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_stats: cannot write " + path);
    json j{{"qa", stats_to_json(stats.qa)},
           {"lm", stats_to_json(stats.lm)},
           {"disc", stats_to_json(stats.disc)}};
    out << j.dump(2) << "\n";
}

RewardStatsSet load_stats(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_stats: cannot read " + path);
    json j = json::parse(in);
    RewardStatsSet stats;
    stats.qa = stats_from_json(j.at("qa"));
    stats.lm = stats_from_json(j.at("lm"));
    stats.disc = stats_from_json(j.at("disc"));
    return stats;
}

Var rl_loss(Tape& tape, const ForcedReplay& replay, double advantage) {
    const int l = replay.seq.length();
    if (l == 0) throw std::invalid_argument("rl_loss: empty sequence");
    if (!std::isfinite(advantage)) throw std::invalid_argument("rl_loss: non-finite advantage");
    return tape.scale(replay.sum_logprob, -advantage / static_cast<double>(l));
}

StepLog finetune_step(GeneratorModel& gen, const Vocabulary& vocab,
                      const std::vector<const Triple*>& batch, const FinetuneModels& models,
                      RewardStatsSet& stats, const FinetuneConfig& cfg, Rng& sample_rng,
                      int step_index, std::vector<std::vector<std::string>>* generated) {
    if (batch.empty()) throw std::invalid_argument("finetune_step: empty batch");
    const bool rl = rl_enabled(cfg.rewards);
    if (!rl && cfg.ml_weight <= 0.0) {
        throw std::invalid_argument("finetune_step: nothing to optimize");
    }
    if (generated) generated->clear();

    StepLog log;
    log.step = step_index;
    const double batch_size = static_cast<double>(batch.size());

    Tape tape;
    GenVars gv = make_gen_vars(tape, gen);
    std::vector<Var> loss_terms;

    if (rl) {
        const int max_len = cfg.max_len > 0 ? cfg.max_len : gen.cfg.max_len;
        if (max_len < 2) {
            throw std::invalid_argument("finetune_step: max_len must be at least 2");
        }
        double qa_sum = 0.0, lm_sum = 0.0, disc_sum = 0.0, adv_sum = 0.0;
        std::vector<Var> rl_terms;
        for (const Triple* t : batch) {
            GeneratedSequence seq =
                cfg.stochastic ? sample_sequence(gen, vocab, *t, max_len, sample_rng)
                               : beam_search(gen, vocab, *t, cfg.beam_width, max_len).front();
            const EncodedExample ex = encode_example(*t, vocab);
            std::vector<std::string> question = decoded_question(seq, vocab, ex);

            RewardValues normalized;
            if (cfg.rewards.use_qa) {
                const double r = qa_reward(*models.qa, vocab, *t, question);
                qa_sum += r;
                normalized.qa = popart_update(stats.qa, r);
            }
            if (cfg.rewards.use_lm) {
                const double r = lm_reward(*models.lm, vocab, question);
                lm_sum += r;
                normalized.lm = popart_update(stats.lm, r);
            }
            if (cfg.rewards.use_disc) {
                const double r = disc_score(*models.disc, vocab, *t, question);
                disc_sum += r;
                normalized.disc = popart_update(stats.disc, r);
            }
            const double advantage = combine(normalized, cfg.rewards);
            adv_sum += advantage;

            const ForcedReplay replay = forced_logprobs(tape, gen, gv, ex, t->answer_start,
                                                        t->answer_end, seq.tokens);
            rl_terms.push_back(rl_loss(tape, replay, advantage));
            if (generated) generated->push_back(std::move(question));
        }
        Var rl_mean = tape.scale(tape.add_n(rl_terms), 1.0 / batch_size);
        log.rl_loss = tape.val(rl_mean).scalar_value();
        log.mean_advantage = adv_sum / batch_size;
        if (cfg.rewards.use_qa) log.qa_reward = qa_sum / batch_size;
        if (cfg.rewards.use_lm) log.lm_reward = lm_sum / batch_size;
        if (cfg.rewards.use_disc) log.disc_reward = disc_sum / batch_size;
        loss_terms.push_back(rl_mean);
    }

    if (cfg.ml_weight > 0.0) {
        Var ml = batch_ml_loss(tape, gen, gv, vocab, batch);
        log.ml_loss = tape.val(ml).scalar_value();
        loss_terms.push_back(tape.scale(ml, cfg.ml_weight));
    }

    Var total = loss_terms.size() == 1 ? loss_terms[0] : tape.add(loss_terms[0], loss_terms[1]);
    tape.backward(total);
    std::vector<Tensor> grads;
    grads.reserve(gv.all.size());
    for (Var v : gv.all) grads.push_back(tape.grad(v));
    log.grad_norm = clip_global_norm(grads, cfg.clip);
    sgd_step(gen_params(gen), grads, cfg.learning_rate);

    if (cfg.verbose) {
        std::fprintf(stderr, "step %d advantage %.4f rl %.4f ml %.4f grad_norm %.4f\n",
                     step_index, log.mean_advantage, log.rl_loss, log.ml_loss, log.grad_norm);
    }
    return log;
}

double disc_update(DiscriminatorModel& disc, const std::vector<DiscExample>& real_batch,
                   const std::vector<DiscExample>& fake_batch, const FinetuneConfig& cfg) {
    if (real_batch.empty() || fake_batch.empty()) {
        throw std::invalid_argument("disc_update: both batches must be non-empty");
    }
    std::vector<DiscExample> merged = real_batch;
    merged.insert(merged.end(), fake_batch.begin(), fake_batch.end());
    return disc_train_batch(disc, merged, cfg.learning_rate, cfg.clip);
}

FinetuneResult finetune_loop(GeneratorModel& gen, const Vocabulary& vocab,
                             const FinetuneModels& models, const std::vector<Triple>& train,
                             const std::vector<Triple>& eval_triples, const FinetuneConfig& cfg,
                             const RewardStatsSet* initial_stats) {
    if (cfg.steps < 0) throw std::invalid_argument("finetune_loop: steps must be >= 0");
    if (cfg.batch_size < 1) throw std::invalid_argument("finetune_loop: batch_size must be >= 1");
    if (cfg.beam_width < 1) throw std::invalid_argument("finetune_loop: beam_width must be >= 1");
    if (cfg.disc_update_ratio < 0) {
        throw std::invalid_argument("finetune_loop: disc_update_ratio must be >= 0");
    }
    if (cfg.ml_weight < 0.0) throw std::invalid_argument("finetune_loop: ml_weight must be >= 0");
    const bool rl = rl_enabled(cfg.rewards);
    if (!rl && cfg.ml_weight <= 0.0) {
        throw std::invalid_argument("finetune_loop: nothing to optimize");
    }
    if (cfg.rewards.use_qa && models.qa == nullptr) {
        throw std::invalid_argument("finetune_loop: QA reward enabled but no QA model given");
    }
    if (cfg.rewards.use_lm && models.lm == nullptr) {
        throw std::invalid_argument("finetune_loop: LM reward enabled but no language model given");
    }
    if (cfg.rewards.use_disc && models.disc == nullptr) {
        throw std::invalid_argument(
            "finetune_loop: discriminator reward enabled but no discriminator given");
    }
    if (cfg.rewards.adversarial && !(cfg.rewards.use_disc && cfg.rewards.lambda_disc > 0.0)) {
        throw std::invalid_argument(
            "finetune_loop: adversarial mode needs an effective discriminator reward");
    }
    const bool adversarial =
        cfg.rewards.adversarial && cfg.disc_update_ratio >= 1 && models.disc != nullptr;

    std::vector<const Triple*> pool;
    for (const Triple& t : train) {
        if (t.has_question()) pool.push_back(&t);
    }
    if (pool.empty()) {
        throw std::invalid_argument("finetune_loop: no training triples with questions");
    }

    const RewardModels reward_models{models.lm, models.qa, models.disc};
    FinetuneResult result;
    result.before = score_model(gen, vocab, reward_models, eval_triples);

    Rng root(cfg.seed);
    Rng shuffle_rng = root.split(1);
    Rng sample_rng = root.split(2);

    RewardStatsSet stats = initial_stats ? *initial_stats : RewardStatsSet{};
    std::vector<const Triple*> order = pool;
    shuffle_rng.shuffle(order);
    std::size_t cursor = 0;
    const std::size_t batch_size = std::min<std::size_t>(
        static_cast<std::size_t>(cfg.batch_size), order.size());

    for (int step = 0; step < cfg.steps; ++step) {
        if (cursor + batch_size > order.size()) {
            shuffle_rng.shuffle(order);
            cursor = 0;
        }
        std::vector<const Triple*> batch(order.begin() + cursor,
                                         order.begin() + cursor + batch_size);
        cursor += batch_size;

        std::vector<std::vector<std::string>> fakes;
        StepLog log = finetune_step(gen, vocab, batch, models, stats, cfg, sample_rng, step,
                                    adversarial ? &fakes : nullptr);

        if (adversarial) {
            std::vector<DiscExample> real_batch, fake_batch;
            real_batch.reserve(batch.size());
            fake_batch.reserve(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i) {
                real_batch.push_back(make_disc_example(vocab, *batch[i], batch[i]->question, 1.0));
                fake_batch.push_back(make_disc_example(vocab, *batch[i], fakes[i], 0.0));
            }
            double loss_sum = 0.0;
            for (int k = 0; k < cfg.disc_update_ratio; ++k) {
                loss_sum += disc_update(*models.disc, real_batch, fake_batch, cfg);
            }
            log.disc_loss = loss_sum / static_cast<double>(cfg.disc_update_ratio);
            if (cfg.verbose) {
                std::fprintf(stderr, "step %d disc_loss %.4f\n", step, log.disc_loss);
            }
        }
        result.history.push_back(log);
    }

    result.after = score_model(gen, vocab, reward_models, eval_triples);
    result.report = with_baseline("finetuned", result.after, "baseline", result.before);
    result.stats = stats;
    return result;
}

}  // namespace qgen
