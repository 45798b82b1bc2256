#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qgen/checkpoint.hpp"
#include "qgen/corpus.hpp"
#include "qgen/rng.hpp"
#include "qgen/tape.hpp"

namespace qgen {

struct GeneratorConfig {
    int emb_dim = 64;
    int enc_hidden = 128;  // per direction
    int dec_hidden = 128;
    int attn_dim = 64;
    int beam_width = 4;
    int max_len = 24;
};

// Seq2Seq question generator: bidirectional recurrent context encoder, a
// recurrent encoder over the answer span, additive attention, and a decoder
// whose output mixes a vocabulary softmax with a copy distribution through a
// sigmoid gate.
struct GeneratorModel {
    GeneratorConfig cfg;
    int vocab_size = 0;

    Tensor embedding;                              // [V, emb]
    Tensor enc_fwd_w_ih, enc_fwd_w_hh, enc_fwd_b;  // context encoder, forward
    Tensor enc_bwd_w_ih, enc_bwd_w_hh, enc_bwd_b;  // context encoder, backward
    Tensor ans_w_ih, ans_w_hh, ans_b;              // answer encoder
    Tensor init_w, init_b;                         // decoder init projection
    Tensor dec_w_ih, dec_w_hh, dec_b;              // decoder cell
    Tensor att_wq, att_wk, att_b, att_v;           // additive attention
    Tensor out_w, out_b;                           // vocabulary projection
    Tensor gate_w, gate_b;                         // copy gate

    static GeneratorModel init(int vocab_size, const GeneratorConfig& cfg, Rng& rng);

    NamedTensors named() const;
    static GeneratorModel from_named(const NamedTensors& ts);
    void save(const std::string& path) const;
    static GeneratorModel load(const std::string& path);
};

// A sampled or decoded output: extended-vocabulary ids ending in EOS with the
// log-probability of each emitted token.
struct GeneratedSequence {
    std::vector<int> tokens;
    std::vector<double> token_logprobs;

    int length() const { return static_cast<int>(tokens.size()); }
    double cumulative_logprob() const {
        double s = 0.0;
        for (double lp : token_logprobs) s += lp;
        return s;
    }
    // Length-normalized beam score.
    double score() const { return cumulative_logprob() / length(); }
};

struct BeamHypothesis {
    std::vector<int> tokens;
    std::vector<double> token_logprobs;
    double cum_logprob = 0.0;
    Var h, c;  // decoder state on the search tape
    bool finished = false;
};

// Generator parameters mirrored onto a tape as leaves, in the order used for
// gradient collection.
struct GenVars {
    std::vector<Var> all;
    Var embedding() const { return all[0]; }
};

GenVars make_gen_vars(Tape& tape, const GeneratorModel& m);

// Pointers to the model's parameter tensors in the same order as GenVars.
std::vector<Tensor*> gen_params(GeneratorModel& m);

// Per-example encoder outputs living on a tape.
struct EncoderOut {
    std::vector<int> context_ext_ids;
    int ext_size = 0;
    Var values;     // [T, 2*enc] encoder states
    Var proj_keys;  // [T, attn]
    Var h0, c0;     // initial decoder state
};

// Runs the context and answer encoders and builds the initial decoder state
// from the projected concatenation of their final states.
EncoderOut encode(Tape& tape, const GeneratorModel& m, const GenVars& gv,
                  const EncodedExample& ex, int answer_start, int answer_end);

struct DecodeStepOut {
    Var dist;          // distribution over the extended vocabulary
    Var h, c;          // next decoder state
    Var attn_weights;  // [T]
};

// One decoder step: attends with the current state, feeds [embedding;
// context] to the cell, and mixes vocabulary and copy distributions.
DecodeStepOut decode_step(Tape& tape, const GeneratorModel& m, const GenVars& gv,
                          const EncoderOut& enc, Var h, Var c, int prev_ext_id);

struct MlTrainConfig {
    int epochs = 10;
    int batch_size = 16;
    double learning_rate = 0.1;
    double clip = 5.0;
    std::uint64_t seed = 1;
    bool verbose = false;
};

struct EpochStats {
    double train_nll = 0.0;
    double heldout_nll = 0.0;  // NaN when no held-out set was given
};

// Teacher-forced cross-entropy on extended-vocabulary targets, as a
// mean-per-token scalar on the tape. Used by both ML training and the
// fine-tuning loop's retained ML objective.
Var batch_ml_loss(Tape& tape, const GeneratorModel& m, const GenVars& gv,
                  const Vocabulary& vocab, const std::vector<const Triple*>& batch);

// Maximum-likelihood pretraining with teacher forcing. Returns per-epoch NLL.
std::vector<EpochStats> train_ml(GeneratorModel& m, const Vocabulary& vocab,
                                 const std::vector<Triple>& triples, const MlTrainConfig& cfg,
                                 const std::vector<Triple>* heldout = nullptr);

// Mean per-token negative log-likelihood (teacher forcing, EOS included).
double nll(const GeneratorModel& m, const Vocabulary& vocab, const std::vector<Triple>& triples);

// Length-normalized beam search. Returns finished hypotheses sorted by
// normalized score, best first. PAD and SOS are never emitted; EOS is never
// proposed on the opening step (so outputs carry at least one real token
// whenever max_len > 1); hypotheses still open at max_len are closed with EOS.
std::vector<GeneratedSequence> beam_search(const GeneratorModel& m, const Vocabulary& vocab,
                                           const Triple& triple, int beam_width, int max_len);

// Ancestral sampling from the same decoder (used for stochastic exploration).
// Emission rules match beam_search: no PAD/SOS, no opening EOS, EOS forced at
// max_len. Recorded log-probabilities are the raw model values, so a forced
// replay of the sampled tokens reproduces them.
GeneratedSequence sample_sequence(const GeneratorModel& m, const Vocabulary& vocab,
                                  const Triple& triple, int max_len, Rng& rng);

// Replays a fixed token sequence through the decoder on the caller's tape,
// recording differentiable per-token log-probabilities. Matches the
// log-probabilities beam search reported for its own outputs.
struct ForcedReplay {
    GeneratedSequence seq;
    Var sum_logprob;  // differentiable sum of per-token log-probs
};

ForcedReplay forced_logprobs(Tape& tape, const GeneratorModel& m, const GenVars& gv,
                             const EncodedExample& ex, int answer_start, int answer_end,
                             const std::vector<int>& tokens);

// Convenience wrapper on a private tape (no gradients kept).
GeneratedSequence forced_logprobs(const GeneratorModel& m, const Vocabulary& vocab,
                                  const Triple& triple, const std::vector<int>& tokens);

}  // namespace qgen
