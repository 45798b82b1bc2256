#include "qgen/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "qgen/optim.hpp"

namespace qgen {

namespace {

Tensor lstm_bias(int hidden) {
    // forget-gate slice starts at one so early training keeps cell memory
    Tensor b({4 * hidden});
    for (int i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
    return b;
}

Tensor mat(int rows, int cols, Rng& rng) {
    return init_params({rows, cols}, 1.0 / std::sqrt(static_cast<double>(cols)), rng);
}

std::vector<int> ids_of(const Vocabulary& vocab, const std::vector<std::string>& tokens) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) ids.push_back(vocab.id_of(t));
    return ids;
}

// Runs an LSTM over embedded rows, returning every hidden state.
std::vector<Var> run_lstm(Tape& tape, Var emb_rows, int count, int hidden, const LstmVars& p,
                          bool backward = false) {
    std::vector<Var> states(static_cast<std::size_t>(count));
    Var h = tape.leaf(Tensor({hidden})), c = tape.leaf(Tensor({hidden}));
    for (int i = 0; i < count; ++i) {
        const int t = backward ? count - 1 - i : i;
        auto [h2, c2] = tape.lstm_cell(tape.row(emb_rows, t), h, c, p);
        h = h2;
        c = c2;
        states[static_cast<std::size_t>(t)] = h;
    }
    return states;
}

}  // namespace

// ---------------------------------------------------------------------------
// Language model
// ---------------------------------------------------------------------------

LanguageModel LanguageModel::init(int vocab_size, const LmConfig& cfg, Rng& rng) {
    if (vocab_size < 4) throw std::invalid_argument("language model: vocab_size must be at least 4");
    LanguageModel m;
    m.cfg = cfg;
    m.vocab_size = vocab_size;
    const int e = cfg.emb_dim, H = cfg.hidden;
    m.embedding = init_params({vocab_size, e}, 0.05, rng);
    m.w_ih = mat(4 * H, e, rng);
    m.w_hh = mat(4 * H, H, rng);
    m.b = lstm_bias(H);
    m.out_w = mat(vocab_size, H, rng);
    m.out_b = Tensor({vocab_size});
    return m;
}

std::vector<Tensor*> lm_params(LanguageModel& m) {
    return {&m.embedding, &m.w_ih, &m.w_hh, &m.b, &m.out_w, &m.out_b};
}

LmVars make_lm_vars(Tape& tape, const LanguageModel& m) {
    LmVars v;
    for (Tensor* t : lm_params(const_cast<LanguageModel&>(m))) v.all.push_back(tape.leaf(*t));
    return v;
}

NamedTensors LanguageModel::named() const {
    NamedTensors ts;
    ts.emplace_back("meta", Tensor::vec({static_cast<double>(cfg.emb_dim),
                                         static_cast<double>(cfg.hidden),
                                         static_cast<double>(vocab_size)}));
    static const char* names[] = {"embedding", "lstm.w_ih", "lstm.w_hh", "lstm.b",
                                  "out.w", "out.b"};
    auto params = lm_params(const_cast<LanguageModel&>(*this));
    for (std::size_t i = 0; i < params.size(); ++i) ts.emplace_back(names[i], *params[i]);
    return ts;
}

LanguageModel LanguageModel::from_named(const NamedTensors& ts) {
    const Tensor& meta = find_tensor(ts, "meta");
    if (meta.size() != 3) throw std::runtime_error("language model: bad checkpoint meta");
    LanguageModel m;
    m.cfg.emb_dim = static_cast<int>(meta[0]);
    m.cfg.hidden = static_cast<int>(meta[1]);
    m.vocab_size = static_cast<int>(meta[2]);
    NamedTensors rest(ts.begin() + 1, ts.end());
    auto params = lm_params(m);
    if (rest.size() != params.size()) {
        throw std::runtime_error("language model: checkpoint tensor count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = rest[i].second;
    return m;
}

void LanguageModel::save(const std::string& path) const { save_checkpoint(path, named()); }

LanguageModel LanguageModel::load(const std::string& path) {
    return from_named(load_checkpoint(path));
}

Var lm_sequence_ce(Tape& tape, const LanguageModel& m, const LmVars& vars,
                   const std::vector<int>& ids) {
    if (ids.empty()) throw std::invalid_argument("lm_sequence_ce: empty sequence");
    for (int id : ids) {
        if (id < 0 || id >= m.vocab_size) {
            throw std::invalid_argument("lm_sequence_ce: token id outside vocabulary");
        }
    }
    const LstmVars lstm{vars.all[1], vars.all[2], vars.all[3]};
    std::vector<int> targets = ids;
    targets.push_back(Vocabulary::kEos);
    Var h = tape.leaf(Tensor({m.cfg.hidden})), c = tape.leaf(Tensor({m.cfg.hidden}));
    int prev = Vocabulary::kSos;
    std::vector<Var> terms;
    terms.reserve(targets.size());
    for (int target : targets) {
        Var x = tape.row(vars.all[0], prev);
        auto [h2, c2] = tape.lstm_cell(x, h, c, lstm);
        h = h2;
        c = c2;
        Var logits = tape.linear(h, vars.all[4], vars.all[5]);
        terms.push_back(tape.cross_entropy(logits, target));
        prev = target;
    }
    return tape.scale(tape.add_n(terms), 1.0 / static_cast<double>(targets.size()));
}

std::vector<double> train_lm(LanguageModel& m, const Vocabulary& vocab,
                             const std::vector<std::vector<std::string>>& questions,
                             const LmTrainConfig& cfg) {
    if (questions.empty()) throw std::invalid_argument("train_lm: no training sequences");
    if (cfg.batch_size < 1) throw std::invalid_argument("train_lm: batch_size must be positive");
    std::vector<std::vector<int>> encoded;
    encoded.reserve(questions.size());
    for (const auto& q : questions) {
        if (q.empty()) throw std::invalid_argument("train_lm: empty training sequence");
        encoded.push_back(ids_of(vocab, q));
    }

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(encoded.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double ce_sum = 0.0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), at + cfg.batch_size);
            Tape tape;
            LmVars vars = make_lm_vars(tape, m);
            std::vector<Var> losses;
            for (std::size_t i = at; i < end; ++i) {
                losses.push_back(lm_sequence_ce(tape, m, vars, encoded[order[i]]));
            }
            Var loss = tape.scale(tape.add_n(losses), 1.0 / static_cast<double>(losses.size()));
            tape.backward(loss);
            std::vector<Tensor> grads;
            for (Var v : vars.all) grads.push_back(tape.grad(v));
            clip_global_norm(grads, cfg.clip);
            sgd_step(lm_params(m), grads, cfg.learning_rate);
            ce_sum += tape.val(loss).scalar_value() * static_cast<double>(end - at);
        }
        const double epoch_ce = ce_sum / static_cast<double>(encoded.size());
        if (cfg.verbose) std::fprintf(stderr, "lm epoch %d ce %.4f\n", epoch + 1, epoch_ce);
        history.push_back(epoch_ce);
    }
    return history;
}

double lm_perplexity(const LanguageModel& m, const Vocabulary& vocab,
                     const std::vector<std::string>& question) {
    if (question.empty()) throw std::invalid_argument("lm_perplexity: empty question");
    Tape tape;
    LmVars vars = make_lm_vars(tape, m);
    Var ce = lm_sequence_ce(tape, m, vars, ids_of(vocab, question));
    return std::exp(tape.val(ce).scalar_value());
}

double lm_reward(const LanguageModel& m, const Vocabulary& vocab,
                 const std::vector<std::string>& question) {
    return -lm_perplexity(m, vocab, question);
}

// ---------------------------------------------------------------------------
// QA model
// ---------------------------------------------------------------------------

QaModel QaModel::init(int vocab_size, const QaConfig& cfg, Rng& rng) {
    if (vocab_size < 4) throw std::invalid_argument("qa model: vocab_size must be at least 4");
    if (cfg.max_span < 1) throw std::invalid_argument("qa model: max_span must be positive");
    QaModel m;
    m.cfg = cfg;
    m.vocab_size = vocab_size;
    const int e = cfg.emb_dim, H = cfg.hidden;
    // larger than the language model's embedding init: the span scorer sits
    // behind two recurrent encoders and needs non-degenerate inputs to start
    m.embedding = init_params({vocab_size, e}, 0.5, rng);
    m.q_w_ih = mat(4 * H, e, rng);
    m.q_w_hh = mat(4 * H, H, rng);
    m.q_b = lstm_bias(H);
    m.cf_w_ih = mat(4 * H, e, rng);
    m.cf_w_hh = mat(4 * H, H, rng);
    m.cf_b = lstm_bias(H);
    m.cb_w_ih = mat(4 * H, e, rng);
    m.cb_w_hh = mat(4 * H, H, rng);
    m.cb_b = lstm_bias(H);
    m.w_start = mat(2 * H, H, rng);
    m.w_end = mat(2 * H, H, rng);
    return m;
}

std::vector<Tensor*> qa_params(QaModel& m) {
    return {&m.embedding, &m.q_w_ih, &m.q_w_hh, &m.q_b,   &m.cf_w_ih, &m.cf_w_hh, &m.cf_b,
            &m.cb_w_ih,   &m.cb_w_hh, &m.cb_b,  &m.w_start, &m.w_end};
}

QaVars make_qa_vars(Tape& tape, const QaModel& m) {
    QaVars v;
    for (Tensor* t : qa_params(const_cast<QaModel&>(m))) v.all.push_back(tape.leaf(*t));
    return v;
}

NamedTensors QaModel::named() const {
    NamedTensors ts;
    ts.emplace_back("meta", Tensor::vec({static_cast<double>(cfg.emb_dim),
                                         static_cast<double>(cfg.hidden),
                                         static_cast<double>(cfg.max_span),
                                         static_cast<double>(vocab_size)}));
    static const char* names[] = {"embedding", "q.w_ih",  "q.w_hh",  "q.b",
                                  "ctx_fwd.w_ih", "ctx_fwd.w_hh", "ctx_fwd.b",
                                  "ctx_bwd.w_ih", "ctx_bwd.w_hh", "ctx_bwd.b",
                                  "start.w",   "end.w"};
    auto params = qa_params(const_cast<QaModel&>(*this));
    for (std::size_t i = 0; i < params.size(); ++i) ts.emplace_back(names[i], *params[i]);
    return ts;
}

QaModel QaModel::from_named(const NamedTensors& ts) {
    const Tensor& meta = find_tensor(ts, "meta");
    if (meta.size() != 4) throw std::runtime_error("qa model: bad checkpoint meta");
    QaModel m;
    m.cfg.emb_dim = static_cast<int>(meta[0]);
    m.cfg.hidden = static_cast<int>(meta[1]);
    m.cfg.max_span = static_cast<int>(meta[2]);
    m.vocab_size = static_cast<int>(meta[3]);
    NamedTensors rest(ts.begin() + 1, ts.end());
    auto params = qa_params(m);
    if (rest.size() != params.size()) {
        throw std::runtime_error("qa model: checkpoint tensor count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = rest[i].second;
    return m;
}

void QaModel::save(const std::string& path) const { save_checkpoint(path, named()); }

QaModel QaModel::load(const std::string& path) { return from_named(load_checkpoint(path)); }

namespace {

// Start/end scores (pre-softmax) over context positions: the question encoding
// picks out span boundaries through one bilinear form per side.
std::pair<Var, Var> qa_span_scores(Tape& tape, const QaModel& m, const QaVars& vars,
                                   const std::vector<int>& context_ids,
                                   const std::vector<int>& question_ids) {
    if (context_ids.empty()) throw std::invalid_argument("qa: empty context");
    if (question_ids.empty()) throw std::invalid_argument("qa: empty question");
    const int T = static_cast<int>(context_ids.size());
    const int H = m.cfg.hidden;

    Var ctx_emb = tape.rows(vars.all[0], context_ids);
    Var q_emb = tape.rows(vars.all[0], question_ids);

    const LstmVars q_lstm{vars.all[1], vars.all[2], vars.all[3]};
    const LstmVars cf{vars.all[4], vars.all[5], vars.all[6]};
    const LstmVars cb{vars.all[7], vars.all[8], vars.all[9]};

    std::vector<Var> q_states =
        run_lstm(tape, q_emb, static_cast<int>(question_ids.size()), H, q_lstm);
    Var q_repr = q_states.back();

    std::vector<Var> fwd = run_lstm(tape, ctx_emb, T, H, cf);
    std::vector<Var> bwd = run_lstm(tape, ctx_emb, T, H, cb, /*backward=*/true);
    std::vector<Var> states(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        states[static_cast<std::size_t>(t)] =
            tape.concat({fwd[static_cast<std::size_t>(t)], bwd[static_cast<std::size_t>(t)]});
    }
    Var ctx_matrix = tape.stack_rows(states);  // [T, 2H]

    Var start_scores = tape.matvec(ctx_matrix, tape.matvec(vars.all[10], q_repr));
    Var end_scores = tape.matvec(ctx_matrix, tape.matvec(vars.all[11], q_repr));
    return {start_scores, end_scores};
}

}  // namespace

std::pair<Var, Var> qa_span_dists(Tape& tape, const QaModel& m, const QaVars& vars,
                                  const std::vector<int>& context_ids,
                                  const std::vector<int>& question_ids) {
    auto [s, e] = qa_span_scores(tape, m, vars, context_ids, question_ids);
    return {tape.softmax(s), tape.softmax(e)};
}

Var qa_example_loss(Tape& tape, const QaModel& m, const QaVars& vars,
                    const std::vector<int>& context_ids,
                    const std::vector<int>& question_ids, const QaSpan& gold) {
    const int T = static_cast<int>(context_ids.size());
    if (gold.start < 0 || gold.start > gold.end || gold.end >= T) {
        throw std::invalid_argument("qa_example_loss: gold span out of bounds");
    }
    auto [s, e] = qa_span_scores(tape, m, vars, context_ids, question_ids);
    return tape.add(tape.cross_entropy(s, gold.start), tape.cross_entropy(e, gold.end));
}

std::vector<double> train_qa(QaModel& m, const Vocabulary& vocab,
                             const std::vector<Triple>& triples, const QaTrainConfig& cfg) {
    if (cfg.batch_size < 1) throw std::invalid_argument("train_qa: batch_size must be positive");
    struct Enc {
        std::vector<int> ctx, q;
        QaSpan gold;
    };
    std::vector<Enc> data;
    for (const Triple& t : triples) {
        if (!t.has_question()) continue;
        data.push_back({ids_of(vocab, t.context), ids_of(vocab, t.question),
                        {t.answer_start, t.answer_end}});
    }
    if (data.empty()) throw std::invalid_argument("train_qa: no triples with questions");

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), at + cfg.batch_size);
            Tape tape;
            QaVars vars = make_qa_vars(tape, m);
            std::vector<Var> losses;
            for (std::size_t i = at; i < end; ++i) {
                const Enc& ex = data[order[i]];
                losses.push_back(qa_example_loss(tape, m, vars, ex.ctx, ex.q, ex.gold));
            }
            Var loss = tape.scale(tape.add_n(losses), 1.0 / static_cast<double>(losses.size()));
            tape.backward(loss);
            std::vector<Tensor> grads;
            for (Var v : vars.all) grads.push_back(tape.grad(v));
            clip_global_norm(grads, cfg.clip);
            sgd_step(qa_params(m), grads, cfg.learning_rate);
            loss_sum += tape.val(loss).scalar_value() * static_cast<double>(end - at);
        }
        const double epoch_loss = loss_sum / static_cast<double>(data.size());
        if (cfg.verbose) std::fprintf(stderr, "qa epoch %d loss %.4f\n", epoch + 1, epoch_loss);
        history.push_back(epoch_loss);
    }
    return history;
}

QaSpan qa_predict(const QaModel& m, const Vocabulary& vocab,
                  const std::vector<std::string>& context,
                  const std::vector<std::string>& question) {
    Tape tape;
    QaVars vars = make_qa_vars(tape, m);
    auto [s_var, e_var] =
        qa_span_scores(tape, m, vars, ids_of(vocab, context), ids_of(vocab, question));
    const Tensor& s = tape.val(s_var);
    const Tensor& e = tape.val(e_var);
    const int T = s.size();
    int start = 0;
    for (int i = 1; i < T; ++i) {
        if (s[i] > s[start]) start = i;
    }
    const int limit = std::min(T, start + m.cfg.max_span);
    int end = start;
    for (int i = start + 1; i < limit; ++i) {
        if (e[i] > e[end]) end = i;
    }
    return {start, end};
}

double token_f1(const std::vector<std::string>& predicted,
                const std::vector<std::string>& gold) {
    if (predicted.empty() || gold.empty()) return 0.0;
    std::map<std::string, int> gold_counts;
    for (const std::string& t : gold) ++gold_counts[t];
    int common = 0;
    for (const std::string& t : predicted) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / static_cast<double>(predicted.size());
    const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
    return 2.0 * precision * recall / (precision + recall);
}

double qa_reward(const QaModel& m, const Vocabulary& vocab, const Triple& triple,
                 const std::vector<std::string>& question) {
    if (question.empty()) return 0.0;
    QaSpan pred = qa_predict(m, vocab, triple.context, question);
    std::vector<std::string> pred_tokens(triple.context.begin() + pred.start,
                                         triple.context.begin() + pred.end + 1);
    std::vector<std::string> gold_tokens(triple.context.begin() + triple.answer_start,
                                         triple.context.begin() + triple.answer_end + 1);
    return token_f1(pred_tokens, gold_tokens);
}

double oracle_qa_reward(const Triple& triple, const std::vector<std::string>& question,
                        int min_matches, int window) {
    if (min_matches < 1) throw std::invalid_argument("oracle_qa_reward: min_matches must be positive");
    if (window < 0) throw std::invalid_argument("oracle_qa_reward: window must be non-negative");
    const int T = static_cast<int>(triple.context.size());
    const int lo = std::max(0, triple.answer_start - window);
    const int hi = std::min(T - 1, triple.answer_end + window);
    std::map<std::string, bool> nearby;
    for (int i = lo; i <= hi; ++i) nearby[triple.context[static_cast<std::size_t>(i)]] = true;
    std::map<std::string, bool> counted;
    int matches = 0;
    for (const std::string& t : question) {
        if (nearby.count(t) && !counted.count(t)) {
            counted[t] = true;
            ++matches;
        }
    }
    return matches >= min_matches ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

DiscriminatorModel DiscriminatorModel::init(int vocab_size, const DiscConfig& cfg, Rng& rng) {
    if (vocab_size < 4) {
        throw std::invalid_argument("discriminator: vocab_size must be at least 4");
    }
    DiscriminatorModel m;
    m.cfg = cfg;
    m.vocab_size = vocab_size;
    const int e = cfg.emb_dim, Hq = cfg.q_hidden, A = cfg.attn_dim, H = cfg.block_hidden;
    // embeddings need enough magnitude to drive five stacked nonlinear layers;
    // at small scales the whole classifier collapses into its biases
    m.embedding = init_params({vocab_size, e}, 0.5, rng);
    m.q_w_ih = mat(4 * Hq, e, rng);
    m.q_w_hh = mat(4 * Hq, Hq, rng);
    m.q_b = lstm_bias(Hq);
    m.att_wq = mat(A, e, rng);
    m.att_wk = mat(A, Hq, rng);
    m.att_b = Tensor({A});
    m.att_v = init_params({A}, 1.0 / std::sqrt(static_cast<double>(A)), rng);
    m.b1_w_ih = mat(4 * H, e + Hq, rng);
    m.b1_w_hh = mat(4 * H, H, rng);
    m.b1_b = lstm_bias(H);
    m.b2_w_ih = mat(4 * H, H, rng);
    m.b2_w_hh = mat(4 * H, H, rng);
    m.b2_b = lstm_bias(H);
    m.b3_w_ih = mat(4 * H, H, rng);
    m.b3_w_hh = mat(4 * H, H, rng);
    m.b3_b = lstm_bias(H);
    m.head_w = mat(cfg.head_hidden, 3 * H, rng);
    m.head_b = Tensor({cfg.head_hidden});
    m.out_w = mat(1, cfg.head_hidden, rng);
    m.out_b = Tensor({1});
    return m;
}

std::vector<Tensor*> disc_params(DiscriminatorModel& m) {
    return {&m.embedding, &m.q_w_ih, &m.q_w_hh, &m.q_b,    &m.att_wq, &m.att_wk, &m.att_b,
            &m.att_v,     &m.b1_w_ih, &m.b1_w_hh, &m.b1_b, &m.b2_w_ih, &m.b2_w_hh, &m.b2_b,
            &m.b3_w_ih,   &m.b3_w_hh, &m.b3_b,   &m.head_w, &m.head_b, &m.out_w,  &m.out_b};
}

DiscVars make_disc_vars(Tape& tape, const DiscriminatorModel& m) {
    DiscVars v;
    for (Tensor* t : disc_params(const_cast<DiscriminatorModel&>(m))) {
        v.all.push_back(tape.leaf(*t));
    }
    return v;
}

NamedTensors DiscriminatorModel::named() const {
    NamedTensors ts;
    ts.emplace_back("meta", Tensor::vec({static_cast<double>(cfg.emb_dim),
                                         static_cast<double>(cfg.q_hidden),
                                         static_cast<double>(cfg.attn_dim),
                                         static_cast<double>(cfg.block_hidden),
                                         static_cast<double>(cfg.head_hidden),
                                         static_cast<double>(vocab_size)}));
    static const char* names[] = {"embedding", "q.w_ih", "q.w_hh", "q.b",
                                  "att.wq", "att.wk", "att.b", "att.v",
                                  "b1.w_ih", "b1.w_hh", "b1.b",
                                  "b2.w_ih", "b2.w_hh", "b2.b",
                                  "b3.w_ih", "b3.w_hh", "b3.b",
                                  "head.w", "head.b", "out.w", "out.b"};
    auto params = disc_params(const_cast<DiscriminatorModel&>(*this));
    for (std::size_t i = 0; i < params.size(); ++i) ts.emplace_back(names[i], *params[i]);
    return ts;
}

DiscriminatorModel DiscriminatorModel::from_named(const NamedTensors& ts) {
    const Tensor& meta = find_tensor(ts, "meta");
    if (meta.size() != 6) throw std::runtime_error("discriminator: bad checkpoint meta");
    DiscriminatorModel m;
    m.cfg.emb_dim = static_cast<int>(meta[0]);
    m.cfg.q_hidden = static_cast<int>(meta[1]);
    m.cfg.attn_dim = static_cast<int>(meta[2]);
    m.cfg.block_hidden = static_cast<int>(meta[3]);
    m.cfg.head_hidden = static_cast<int>(meta[4]);
    m.vocab_size = static_cast<int>(meta[5]);
    NamedTensors rest(ts.begin() + 1, ts.end());
    auto params = disc_params(m);
    if (rest.size() != params.size()) {
        throw std::runtime_error("discriminator: checkpoint tensor count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = rest[i].second;
    return m;
}

void DiscriminatorModel::save(const std::string& path) const { save_checkpoint(path, named()); }

DiscriminatorModel DiscriminatorModel::load(const std::string& path) {
    return from_named(load_checkpoint(path));
}

Var disc_forward(Tape& tape, const DiscriminatorModel& m, const DiscVars& vars,
                 const DiscExample& ex) {
    const int T = static_cast<int>(ex.context_ids.size());
    if (T == 0) throw std::invalid_argument("disc_forward: empty context");
    if (ex.question_ids.empty()) throw std::invalid_argument("disc_forward: empty question");
    if (ex.answer_start < 0 || ex.answer_start > ex.answer_end || ex.answer_end >= T) {
        throw std::invalid_argument("disc_forward: answer span out of bounds");
    }
    const int Hq = m.cfg.q_hidden, H = m.cfg.block_hidden;

    Var ctx_emb = tape.rows(vars.all[0], ex.context_ids);
    Var q_emb = tape.rows(vars.all[0], ex.question_ids);

    const LstmVars q_lstm{vars.all[1], vars.all[2], vars.all[3]};
    const AttentionVars att{vars.all[4], vars.all[5], vars.all[6], vars.all[7]};
    const LstmVars b1{vars.all[8], vars.all[9], vars.all[10]};
    const LstmVars b2{vars.all[11], vars.all[12], vars.all[13]};
    const LstmVars b3{vars.all[14], vars.all[15], vars.all[16]};

    std::vector<Var> q_states =
        run_lstm(tape, q_emb, static_cast<int>(ex.question_ids.size()), Hq, q_lstm);
    Var q_matrix = tape.stack_rows(q_states);
    Var proj_q = tape.attn_precompute(q_matrix, att);

    // fuse every context position with its question view
    std::vector<Var> fused(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        Var e_t = tape.row(ctx_emb, t);
        auto [q_view, w] = tape.attn_step(e_t, proj_q, q_matrix, att);
        (void)w;
        fused[static_cast<std::size_t>(t)] = tape.concat({e_t, q_view});
    }

    std::vector<Var> s1(static_cast<std::size_t>(T)), s2(static_cast<std::size_t>(T)),
        s3(static_cast<std::size_t>(T));
    Var h = tape.leaf(Tensor({H})), c = tape.leaf(Tensor({H}));
    for (int t = 0; t < T; ++t) {
        auto [h2, c2] = tape.lstm_cell(fused[static_cast<std::size_t>(t)], h, c, b1);
        h = h2;
        c = c2;
        s1[static_cast<std::size_t>(t)] = h;
    }
    h = tape.leaf(Tensor({H}));
    c = tape.leaf(Tensor({H}));
    for (int t = 0; t < T; ++t) {
        auto [h2, c2] = tape.lstm_cell(s1[static_cast<std::size_t>(t)], h, c, b2);
        h = h2;
        c = c2;
        s2[static_cast<std::size_t>(t)] = h;
    }
    h = tape.leaf(Tensor({H}));
    c = tape.leaf(Tensor({H}));
    for (int t = 0; t < T; ++t) {
        auto [h2, c2] = tape.lstm_cell(s2[static_cast<std::size_t>(t)], h, c, b3);
        h = h2;
        c = c2;
        s3[static_cast<std::size_t>(t)] = h;
    }

    Var pooled = tape.concat({tape.max_over_time(s1), tape.max_over_time(s2),
                              tape.mean_over_span(s3, ex.answer_start, ex.answer_end)});
    Var hidden = tape.relu(tape.linear(pooled, vars.all[17], vars.all[18]));
    return tape.sigmoid(tape.linear(hidden, vars.all[19], vars.all[20]));
}

Var disc_batch_loss(Tape& tape, const DiscriminatorModel& m, const DiscVars& vars,
                    const std::vector<DiscExample>& batch) {
    if (batch.empty()) throw std::invalid_argument("disc_batch_loss: empty batch");
    std::vector<Var> terms;
    terms.reserve(batch.size());
    for (const DiscExample& ex : batch) {
        Var p = disc_forward(tape, m, vars, ex);
        terms.push_back(tape.binary_cross_entropy(p, ex.label));
    }
    return tape.scale(tape.add_n(terms), 1.0 / static_cast<double>(terms.size()));
}

DiscExample make_disc_example(const Vocabulary& vocab, const Triple& triple,
                              const std::vector<std::string>& question, double label) {
    DiscExample ex;
    ex.context_ids = ids_of(vocab, triple.context);
    ex.question_ids = ids_of(vocab, question);
    ex.answer_start = triple.answer_start;
    ex.answer_end = triple.answer_end;
    ex.label = label;
    return ex;
}

double disc_score(const DiscriminatorModel& m, const Vocabulary& vocab,
                  const Triple& triple, const std::vector<std::string>& question) {
    Tape tape;
    DiscVars vars = make_disc_vars(tape, m);
    DiscExample ex = make_disc_example(vocab, triple, question, 0.0);
    return tape.val(disc_forward(tape, m, vars, ex)).scalar_value();
}

double disc_train_batch(DiscriminatorModel& m, const std::vector<DiscExample>& batch,
                        double learning_rate, double clip) {
    Tape tape;
    DiscVars vars = make_disc_vars(tape, m);
    Var loss = disc_batch_loss(tape, m, vars, batch);
    tape.backward(loss);
    std::vector<Tensor> grads;
    for (Var v : vars.all) grads.push_back(tape.grad(v));
    clip_global_norm(grads, clip);
    sgd_step(disc_params(m), grads, learning_rate);
    return tape.val(loss).scalar_value();
}

double pretrain_discriminator(DiscriminatorModel& m, const Vocabulary& vocab,
                              const std::vector<Triple>& real,
                              const std::vector<Triple>& fake,
                              const DiscTrainConfig& cfg) {
    if (real.empty() || fake.empty()) {
        throw std::invalid_argument("pretrain_discriminator: both classes must be non-empty");
    }
    if (cfg.batch_size < 1) {
        throw std::invalid_argument("pretrain_discriminator: batch_size must be positive");
    }
    if (cfg.heldout_fraction < 0.0 || cfg.heldout_fraction >= 1.0) {
        throw std::invalid_argument("pretrain_discriminator: heldout_fraction must be in [0,1)");
    }

    auto build = [&](const std::vector<Triple>& src, double label) {
        std::vector<DiscExample> out;
        out.reserve(src.size());
        for (const Triple& t : src) {
            if (!t.has_question()) {
                throw std::invalid_argument("pretrain_discriminator: triple " + t.id +
                                            " has no question");
            }
            out.push_back(make_disc_example(vocab, t, t.question, label));
        }
        return out;
    };
    std::vector<DiscExample> reals = build(real, 1.0);
    std::vector<DiscExample> fakes = build(fake, 0.0);

    Rng rng(cfg.seed);
    rng.shuffle(reals);
    rng.shuffle(fakes);
    // held-out carved per class so both labels appear in the evaluation set
    const std::size_t hr = static_cast<std::size_t>(cfg.heldout_fraction * reals.size());
    const std::size_t hf = static_cast<std::size_t>(cfg.heldout_fraction * fakes.size());
    std::vector<DiscExample> heldout(reals.begin(), reals.begin() + hr);
    heldout.insert(heldout.end(), fakes.begin(), fakes.begin() + hf);
    std::vector<DiscExample> train(reals.begin() + hr, reals.end());
    train.insert(train.end(), fakes.begin() + hf, fakes.end());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(train);
        double loss_sum = 0.0;
        for (std::size_t at = 0; at < train.size(); at += cfg.batch_size) {
            const std::size_t end = std::min(train.size(), at + cfg.batch_size);
            std::vector<DiscExample> batch(train.begin() + at, train.begin() + end);
            loss_sum +=
                disc_train_batch(m, batch, cfg.learning_rate, cfg.clip) * batch.size();
        }
        if (cfg.verbose) {
            std::fprintf(stderr, "disc epoch %d loss %.4f\n", epoch + 1,
                         loss_sum / static_cast<double>(train.size()));
        }
    }

    if (heldout.empty()) return 1.0;
    int correct = 0;
    for (const DiscExample& ex : heldout) {
        Tape tape;
        DiscVars vars = make_disc_vars(tape, m);
        const double p = tape.val(disc_forward(tape, m, vars, ex)).scalar_value();
        if ((p > 0.5) == (ex.label > 0.5)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(heldout.size());
}

// ---------------------------------------------------------------------------
// Combination and normalization
// ---------------------------------------------------------------------------

double combine(const RewardValues& values, const RewardConfig& cfg) {
    double weight_mass = 0.0;
    double total = 0.0;
    if (cfg.use_qa) {
        weight_mass += cfg.lambda_qa;
        total += cfg.lambda_qa * values.qa;
    }
    if (cfg.use_lm) {
        weight_mass += cfg.lambda_lm;
        total += cfg.lambda_lm * values.lm;
    }
    if (cfg.use_disc) {
        weight_mass += cfg.lambda_disc;
        total += cfg.lambda_disc * values.disc;
    }
    if (weight_mass <= 0.0) {
        throw std::invalid_argument("combine: no enabled reward source has positive weight");
    }
    return total;
}

double RewardStats::sigma() const {
    const double var = nu - mu * mu;
    return std::max(std::sqrt(std::max(var, 0.0)), 1e-4);
}

double popart_update(RewardStats& stats, double r) {
    if (!std::isfinite(r)) throw std::invalid_argument("popart_update: non-finite reward");
    if (stats.count == 0) {
        stats.mu = r;
        stats.nu = r * r + 1.0;  // first sigma is exactly one
        stats.count = 1;
        return 0.0;
    }
    stats.mu = stats.beta * stats.mu + (1.0 - stats.beta) * r;
    stats.nu = stats.beta * stats.nu + (1.0 - stats.beta) * r * r;
    ++stats.count;
    return (r - stats.mu) / stats.sigma();
}

}  // namespace qgen
