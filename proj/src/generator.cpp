#include "qgen/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "qgen/optim.hpp"

namespace qgen {

namespace {

constexpr double kLogFloor = 1e-300;

// Parameter order shared by make_gen_vars and gen_params.
enum ParamIx {
    kEmb = 0,
    kEncFwdWih, kEncFwdWhh, kEncFwdB,
    kEncBwdWih, kEncBwdWhh, kEncBwdB,
    kAnsWih, kAnsWhh, kAnsB,
    kInitW, kInitB,
    kDecWih, kDecWhh, kDecB,
    kAttWq, kAttWk, kAttB, kAttV,
    kOutW, kOutB,
    kGateW, kGateB,
    kParamCount,
};

Tensor lstm_bias(int hidden) {
    // forget-gate slice starts at one so early training keeps cell memory
    Tensor b({4 * hidden});
    for (int i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
    return b;
}

Tensor mat(int rows, int cols, Rng& rng) {
    return init_params({rows, cols}, 1.0 / std::sqrt(static_cast<double>(cols)), rng);
}

LstmVars lstm_vars(const GenVars& gv, int wih, int whh, int b) {
    return LstmVars{gv.all[wih], gv.all[whh], gv.all[b]};
}

AttentionVars attn_vars(const GenVars& gv) {
    return AttentionVars{gv.all[kAttWq], gv.all[kAttWk], gv.all[kAttB], gv.all[kAttV]};
}

}  // namespace

GeneratorModel GeneratorModel::init(int vocab_size, const GeneratorConfig& cfg, Rng& rng) {
    if (vocab_size < 4) throw std::invalid_argument("generator: vocab_size must be at least 4");
    GeneratorModel m;
    m.cfg = cfg;
    m.vocab_size = vocab_size;
    const int e = cfg.emb_dim, H = cfg.enc_hidden, D = cfg.dec_hidden, A = cfg.attn_dim;
    const int enc2 = 2 * H;

    m.embedding = init_params({vocab_size, e}, 0.05, rng);
    m.enc_fwd_w_ih = mat(4 * H, e, rng);
    m.enc_fwd_w_hh = mat(4 * H, H, rng);
    m.enc_fwd_b = lstm_bias(H);
    m.enc_bwd_w_ih = mat(4 * H, e, rng);
    m.enc_bwd_w_hh = mat(4 * H, H, rng);
    m.enc_bwd_b = lstm_bias(H);
    m.ans_w_ih = mat(4 * H, e, rng);
    m.ans_w_hh = mat(4 * H, H, rng);
    m.ans_b = lstm_bias(H);
    m.init_w = mat(D, enc2 + H, rng);
    m.init_b = Tensor({D});
    m.dec_w_ih = mat(4 * D, e + enc2, rng);
    m.dec_w_hh = mat(4 * D, D, rng);
    m.dec_b = lstm_bias(D);
    m.att_wq = mat(A, D, rng);
    m.att_wk = mat(A, enc2, rng);
    m.att_b = Tensor({A});
    m.att_v = init_params({A}, 1.0 / std::sqrt(static_cast<double>(A)), rng);
    m.out_w = mat(vocab_size, D + enc2, rng);
    m.out_b = Tensor({vocab_size});
    m.gate_w = mat(1, D + enc2 + e, rng);
    m.gate_b = Tensor({1});
    return m;
}

std::vector<Tensor*> gen_params(GeneratorModel& m) {
    return {&m.embedding,
            &m.enc_fwd_w_ih, &m.enc_fwd_w_hh, &m.enc_fwd_b,
            &m.enc_bwd_w_ih, &m.enc_bwd_w_hh, &m.enc_bwd_b,
            &m.ans_w_ih, &m.ans_w_hh, &m.ans_b,
            &m.init_w, &m.init_b,
            &m.dec_w_ih, &m.dec_w_hh, &m.dec_b,
            &m.att_wq, &m.att_wk, &m.att_b, &m.att_v,
            &m.out_w, &m.out_b,
            &m.gate_w, &m.gate_b};
}

GenVars make_gen_vars(Tape& tape, const GeneratorModel& m) {
    GenVars gv;
    auto params = gen_params(const_cast<GeneratorModel&>(m));
    gv.all.reserve(params.size());
    for (Tensor* t : params) gv.all.push_back(tape.leaf(*t));
    return gv;
}

NamedTensors GeneratorModel::named() const {
    const auto& c = cfg;
    Tensor meta = Tensor::vec({static_cast<double>(c.emb_dim), static_cast<double>(c.enc_hidden),
                               static_cast<double>(c.dec_hidden), static_cast<double>(c.attn_dim),
                               static_cast<double>(c.beam_width), static_cast<double>(c.max_len),
                               static_cast<double>(vocab_size)});
    NamedTensors ts;
    ts.emplace_back("meta", std::move(meta));
    static const char* names[kParamCount] = {
        "embedding",
        "enc_fwd.w_ih", "enc_fwd.w_hh", "enc_fwd.b",
        "enc_bwd.w_ih", "enc_bwd.w_hh", "enc_bwd.b",
        "ans.w_ih", "ans.w_hh", "ans.b",
        "init.w", "init.b",
        "dec.w_ih", "dec.w_hh", "dec.b",
        "att.wq", "att.wk", "att.b", "att.v",
        "out.w", "out.b",
        "gate.w", "gate.b"};
    auto params = gen_params(const_cast<GeneratorModel&>(*this));
    for (int i = 0; i < kParamCount; ++i) ts.emplace_back(names[i], *params[i]);
    return ts;
}

GeneratorModel GeneratorModel::from_named(const NamedTensors& ts) {
    const Tensor& meta = find_tensor(ts, "meta");
    if (meta.size() != 7) throw std::runtime_error("generator: bad checkpoint meta");
    GeneratorModel m;
    m.cfg.emb_dim = static_cast<int>(meta[0]);
    m.cfg.enc_hidden = static_cast<int>(meta[1]);
    m.cfg.dec_hidden = static_cast<int>(meta[2]);
    m.cfg.attn_dim = static_cast<int>(meta[3]);
    m.cfg.beam_width = static_cast<int>(meta[4]);
    m.cfg.max_len = static_cast<int>(meta[5]);
    m.vocab_size = static_cast<int>(meta[6]);
    NamedTensors rest(ts.begin() + 1, ts.end());
    auto params = gen_params(m);
    if (rest.size() != params.size()) {
        throw std::runtime_error("generator: checkpoint tensor count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = rest[i].second;
    return m;
}

void GeneratorModel::save(const std::string& path) const { save_checkpoint(path, named()); }

GeneratorModel GeneratorModel::load(const std::string& path) {
    return from_named(load_checkpoint(path));
}

EncoderOut encode(Tape& tape, const GeneratorModel& m, const GenVars& gv,
                  const EncodedExample& ex, int answer_start, int answer_end) {
    const int T = static_cast<int>(ex.context_ids.size());
    if (T == 0) throw std::invalid_argument("encode: empty context");
    if (answer_start < 0 || answer_start > answer_end || answer_end >= T) {
        throw std::invalid_argument("encode: answer span out of bounds");
    }
    const int H = m.cfg.enc_hidden;

    Var emb_rows = tape.rows(gv.all[kEmb], ex.context_ids);  // [T, emb]

    const LstmVars fwd = lstm_vars(gv, kEncFwdWih, kEncFwdWhh, kEncFwdB);
    const LstmVars bwd = lstm_vars(gv, kEncBwdWih, kEncBwdWhh, kEncBwdB);
    const LstmVars ans = lstm_vars(gv, kAnsWih, kAnsWhh, kAnsB);

    std::vector<Var> fwd_states(T), bwd_states(T);
    Var h = tape.leaf(Tensor({H})), c = tape.leaf(Tensor({H}));
    for (int t = 0; t < T; ++t) {
        auto [h2, c2] = tape.lstm_cell(tape.row(emb_rows, t), h, c, fwd);
        h = h2;
        c = c2;
        fwd_states[t] = h;
    }
    const Var fwd_final = h;

    h = tape.leaf(Tensor({H}));
    c = tape.leaf(Tensor({H}));
    for (int t = T - 1; t >= 0; --t) {
        auto [h2, c2] = tape.lstm_cell(tape.row(emb_rows, t), h, c, bwd);
        h = h2;
        c = c2;
        bwd_states[t] = h;
    }
    const Var bwd_final = h;

    std::vector<Var> states(T);
    for (int t = 0; t < T; ++t) states[t] = tape.concat({fwd_states[t], bwd_states[t]});

    Var ha = tape.leaf(Tensor({H})), ca = tape.leaf(Tensor({H}));
    for (int t = answer_start; t <= answer_end; ++t) {
        auto [h2, c2] = tape.lstm_cell(tape.row(emb_rows, t), ha, ca, ans);
        ha = h2;
        ca = c2;
    }

    EncoderOut out;
    out.context_ext_ids = ex.context_ext_ids;
    out.ext_size = m.vocab_size + static_cast<int>(ex.oov_map.size());
    out.values = tape.stack_rows(states);
    out.proj_keys = tape.attn_precompute(out.values, attn_vars(gv));
    Var init_in = tape.concat({fwd_final, bwd_final, ha});
    out.h0 = tape.tanh_(tape.linear(init_in, gv.all[kInitW], gv.all[kInitB]));
    out.c0 = tape.leaf(Tensor({m.cfg.dec_hidden}));
    return out;
}

DecodeStepOut decode_step(Tape& tape, const GeneratorModel& m, const GenVars& gv,
                          const EncoderOut& enc, Var h, Var c, int prev_ext_id) {
    if (prev_ext_id < 0 || prev_ext_id >= enc.ext_size) {
        throw std::invalid_argument("decode_step: previous token id outside extended vocabulary");
    }
    // copy-produced OOV tokens have no embedding; they feed back as UNK
    const int emb_id = prev_ext_id < m.vocab_size ? prev_ext_id : Vocabulary::kUnk;
    Var x_emb = tape.row(gv.all[kEmb], emb_id);

    auto [ctx, weights] = tape.attn_step(h, enc.proj_keys, enc.values, attn_vars(gv));

    Var x = tape.concat({x_emb, ctx});
    auto [h2, c2] = tape.lstm_cell(x, h, c, lstm_vars(gv, kDecWih, kDecWhh, kDecB));

    Var feat = tape.concat({h2, ctx});
    Var p_vocab = tape.softmax(tape.linear(feat, gv.all[kOutW], gv.all[kOutB]));
    Var gate = tape.sigmoid(tape.linear(tape.concat({h2, ctx, x_emb}), gv.all[kGateW],
                                        gv.all[kGateB]));
    Var dist = tape.copy_mixture(p_vocab, gate, weights, enc.context_ext_ids, enc.ext_size);
    return DecodeStepOut{dist, h2, c2, weights};
}

Var batch_ml_loss(Tape& tape, const GeneratorModel& m, const GenVars& gv,
                  const Vocabulary& vocab, const std::vector<const Triple*>& batch) {
    if (batch.empty()) throw std::invalid_argument("batch_ml_loss: empty batch");
    std::vector<Var> terms;
    long long total_tokens = 0;
    for (const Triple* t : batch) {
        if (!t->has_question()) {
            throw std::invalid_argument("batch_ml_loss: triple " + t->id + " has no question");
        }
        EncodedExample ex = encode_example(*t, vocab);
        EncoderOut enc = encode(tape, m, gv, ex, t->answer_start, t->answer_end);
        std::vector<int> targets = ex.extended_ids;
        targets.push_back(Vocabulary::kEos);
        Var h = enc.h0, c = enc.c0;
        int prev = Vocabulary::kSos;
        for (int target : targets) {
            DecodeStepOut step = decode_step(tape, m, gv, enc, h, c, prev);
            terms.push_back(tape.neg_log_pick(step.dist, target));
            h = step.h;
            c = step.c;
            prev = target;
        }
        total_tokens += static_cast<long long>(targets.size());
    }
    return tape.scale(tape.add_n(terms), 1.0 / static_cast<double>(total_tokens));
}

std::vector<EpochStats> train_ml(GeneratorModel& m, const Vocabulary& vocab,
                                 const std::vector<Triple>& triples, const MlTrainConfig& cfg,
                                 const std::vector<Triple>* heldout) {
    if (triples.empty()) throw std::invalid_argument("train_ml: empty corpus");
    if (cfg.batch_size < 1) throw std::invalid_argument("train_ml: batch_size must be positive");
    Rng rng(cfg.seed);
    std::vector<const Triple*> order;
    order.reserve(triples.size());
    for (const Triple& t : triples) order.push_back(&t);

    std::vector<EpochStats> history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double nll_weighted = 0.0;
        long long tokens = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), at + cfg.batch_size);
            std::vector<const Triple*> batch(order.begin() + at, order.begin() + end);
            long long batch_tokens = 0;
            for (const Triple* t : batch) {
                batch_tokens += static_cast<long long>(t->question.size()) + 1;
            }

            Tape tape;
            GenVars gv = make_gen_vars(tape, m);
            Var loss = batch_ml_loss(tape, m, gv, vocab, batch);
            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(gv.all.size());
            for (Var v : gv.all) grads.push_back(tape.grad(v));
            clip_global_norm(grads, cfg.clip);
            sgd_step(gen_params(m), grads, cfg.learning_rate);

            nll_weighted += tape.val(loss).scalar_value() * static_cast<double>(batch_tokens);
            tokens += batch_tokens;
        }
        EpochStats s;
        s.train_nll = nll_weighted / static_cast<double>(tokens);
        s.heldout_nll =
            heldout ? nll(m, vocab, *heldout) : std::numeric_limits<double>::quiet_NaN();
        if (cfg.verbose) {
            std::fprintf(stderr, "epoch %d train_nll %.4f heldout_nll %.4f\n", epoch + 1,
                         s.train_nll, s.heldout_nll);
        }
        history.push_back(s);
    }
    return history;
}

double nll(const GeneratorModel& m, const Vocabulary& vocab, const std::vector<Triple>& triples) {
    if (triples.empty()) throw std::invalid_argument("nll: empty corpus");
    double total = 0.0;
    long long tokens = 0;
    for (const Triple& t : triples) {
        Tape tape;
        GenVars gv = make_gen_vars(tape, m);
        std::vector<const Triple*> one = {&t};
        Var loss = batch_ml_loss(tape, m, gv, vocab, one);
        const long long n = static_cast<long long>(t.question.size()) + 1;
        total += tape.val(loss).scalar_value() * static_cast<double>(n);
        tokens += n;
    }
    return total / static_cast<double>(tokens);
}

namespace {

// Highest-probability tokens, ties broken toward the smaller id. PAD and SOS
// are never candidates.
std::vector<std::pair<double, int>> top_tokens(const Tensor& dist, int k) {
    std::vector<std::pair<double, int>> best;  // kept sorted descending
    best.reserve(static_cast<std::size_t>(k) + 1);
    for (int id = 0; id < dist.size(); ++id) {
        if (id == Vocabulary::kPad || id == Vocabulary::kSos) continue;
        const double p = dist[id];
        if (static_cast<int>(best.size()) == k && p <= best.back().first) continue;
        auto pos = best.begin();
        while (pos != best.end() && pos->first >= p) ++pos;  // strict: earlier id wins ties
        best.insert(pos, {p, id});
        if (static_cast<int>(best.size()) > k) best.pop_back();
    }
    return best;
}

double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

}  // namespace

std::vector<GeneratedSequence> beam_search(const GeneratorModel& m, const Vocabulary& vocab,
                                           const Triple& triple, int beam_width, int max_len) {
    if (beam_width < 1) throw std::invalid_argument("beam_search: beam_width must be positive");
    if (max_len < 1) throw std::invalid_argument("beam_search: max_len must be positive");

    Tape tape;
    GenVars gv = make_gen_vars(tape, m);
    EncodedExample ex = encode_example(triple, vocab);
    EncoderOut enc = encode(tape, m, gv, ex, triple.answer_start, triple.answer_end);

    std::vector<BeamHypothesis> active(1);
    active[0].h = enc.h0;
    active[0].c = enc.c0;

    std::vector<GeneratedSequence> finished;

    struct Cand {
        double cum;
        double lp;
        int tok;
        int hyp;
        Var h, c;
    };

    for (int step = 0; step < max_len && !active.empty(); ++step) {
        std::vector<Cand> cands;
        for (std::size_t i = 0; i < active.size(); ++i) {
            BeamHypothesis& hyp = active[i];
            const int prev = hyp.tokens.empty() ? Vocabulary::kSos : hyp.tokens.back();
            DecodeStepOut out = decode_step(tape, m, gv, enc, hyp.h, hyp.c, prev);
            const Tensor& d = tape.val(out.dist);
            if (step == max_len - 1) {
                // out of room: close every hypothesis with EOS
                const double lp = safe_log(d[Vocabulary::kEos]);
                cands.push_back({hyp.cum_logprob + lp, lp, Vocabulary::kEos,
                                 static_cast<int>(i), out.h, out.c});
            } else {
                // a sequence carries at least one real token, so the opening
                // step never proposes EOS (one extra slot compensates)
                const int take = step == 0 ? beam_width + 1 : beam_width;
                int pushed = 0;
                for (const auto& [p, id] : top_tokens(d, take)) {
                    if (step == 0 && id == Vocabulary::kEos) continue;
                    if (pushed == beam_width) break;
                    ++pushed;
                    cands.push_back({hyp.cum_logprob + safe_log(p), safe_log(p), id,
                                     static_cast<int>(i), out.h, out.c});
                }
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.cum != b.cum) return a.cum > b.cum;
            if (a.tok != b.tok) return a.tok < b.tok;
            return a.hyp < b.hyp;
        });

        std::vector<BeamHypothesis> next;
        for (const Cand& cd : cands) {
            const BeamHypothesis& src = active[static_cast<std::size_t>(cd.hyp)];
            if (cd.tok == Vocabulary::kEos) {
                GeneratedSequence seq;
                seq.tokens = src.tokens;
                seq.tokens.push_back(Vocabulary::kEos);
                seq.token_logprobs = src.token_logprobs;
                seq.token_logprobs.push_back(cd.lp);
                finished.push_back(std::move(seq));
            } else if (static_cast<int>(next.size()) < beam_width) {
                BeamHypothesis h = src;
                h.tokens.push_back(cd.tok);
                h.token_logprobs.push_back(cd.lp);
                h.cum_logprob = cd.cum;
                h.h = cd.h;
                h.c = cd.c;
                next.push_back(std::move(h));
            }
        }
        active = std::move(next);
    }

    std::sort(finished.begin(), finished.end(),
              [](const GeneratedSequence& a, const GeneratedSequence& b) {
                  const double sa = a.score(), sb = b.score();
                  if (sa != sb) return sa > sb;
                  return a.tokens < b.tokens;
              });
    return finished;
}

GeneratedSequence sample_sequence(const GeneratorModel& m, const Vocabulary& vocab,
                                  const Triple& triple, int max_len, Rng& rng) {
    if (max_len < 1) throw std::invalid_argument("sample_sequence: max_len must be positive");
    Tape tape;
    GenVars gv = make_gen_vars(tape, m);
    EncodedExample ex = encode_example(triple, vocab);
    EncoderOut enc = encode(tape, m, gv, ex, triple.answer_start, triple.answer_end);

    GeneratedSequence seq;
    Var h = enc.h0, c = enc.c0;
    int prev = Vocabulary::kSos;
    for (int step = 0; step < max_len; ++step) {
        DecodeStepOut out = decode_step(tape, m, gv, enc, h, c, prev);
        const Tensor& d = tape.val(out.dist);
        int tok = Vocabulary::kEos;
        if (step < max_len - 1) {
            // PAD and SOS are never emitted; EOS is additionally excluded on
            // the opening step so every sequence carries a real token
            auto excluded = [&](int id) {
                if (id == Vocabulary::kPad || id == Vocabulary::kSos) return true;
                return step == 0 && id == Vocabulary::kEos;
            };
            double z = 0.0;
            for (int id = 0; id < d.size(); ++id) {
                if (!excluded(id)) z += d[id];
            }
            double u = rng.uniform() * z;
            tok = -1;
            for (int id = 0; id < d.size(); ++id) {
                if (excluded(id)) continue;
                u -= d[id];
                if (u <= 0.0) {
                    tok = id;
                    break;
                }
            }
            if (tok < 0) {
                // numerical tail: fall back to the last admissible token
                for (int id = d.size() - 1; id >= 0; --id) {
                    if (!excluded(id)) {
                        tok = id;
                        break;
                    }
                }
            }
        }
        seq.tokens.push_back(tok);
        seq.token_logprobs.push_back(safe_log(d[tok]));
        if (tok == Vocabulary::kEos) break;
        h = out.h;
        c = out.c;
        prev = tok;
    }
    return seq;
}

ForcedReplay forced_logprobs(Tape& tape, const GeneratorModel& m, const GenVars& gv,
                             const EncodedExample& ex, int answer_start, int answer_end,
                             const std::vector<int>& tokens) {
    if (tokens.empty() || tokens.back() != Vocabulary::kEos) {
        throw std::invalid_argument("forced_logprobs: token sequence must end with EOS");
    }
    EncoderOut enc = encode(tape, m, gv, ex, answer_start, answer_end);
    ForcedReplay rep;
    std::vector<Var> terms;
    terms.reserve(tokens.size());
    Var h = enc.h0, c = enc.c0;
    int prev = Vocabulary::kSos;
    for (int tok : tokens) {
        DecodeStepOut step = decode_step(tape, m, gv, enc, h, c, prev);
        Var lp = tape.scale(tape.neg_log_pick(step.dist, tok), -1.0);
        terms.push_back(lp);
        rep.seq.token_logprobs.push_back(tape.val(lp).scalar_value());
        h = step.h;
        c = step.c;
        prev = tok;
    }
    rep.seq.tokens = tokens;
    rep.sum_logprob = tape.add_n(terms);
    return rep;
}

GeneratedSequence forced_logprobs(const GeneratorModel& m, const Vocabulary& vocab,
                                  const Triple& triple, const std::vector<int>& tokens) {
    Tape tape;
    GenVars gv = make_gen_vars(tape, m);
    EncodedExample ex = encode_example(triple, vocab);
    return forced_logprobs(tape, m, gv, ex, triple.answer_start, triple.answer_end, tokens).seq;
}

}  // namespace qgen
