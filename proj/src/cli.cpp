#include "qgen/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qgen/corpus.hpp"

namespace qgen::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Stage seeds are fixed offsets from the experiment seed so that every
// pipeline stage draws from its own deterministic stream.
constexpr std::uint64_t kSeedGenInit = 101;
constexpr std::uint64_t kSeedGenTrain = 102;
constexpr std::uint64_t kSeedLmInit = 103;
constexpr std::uint64_t kSeedLmTrain = 104;
constexpr std::uint64_t kSeedQaInit = 105;
constexpr std::uint64_t kSeedQaTrain = 106;
constexpr std::uint64_t kSeedDiscInit = 107;
constexpr std::uint64_t kSeedDiscTrain = 108;
constexpr std::uint64_t kSeedFinetune = 109;

// ---------------------------------------------------------------------------
// Config file parsing
// ---------------------------------------------------------------------------

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& value, const char* want) {
    throw ConfigError("invalid value '" + value + "' for [" + section + "] " + key +
                      " (expected " + want + ")");
}

int parse_int(const std::string& section, const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) bad_value(section, key, value, "an integer");
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        bad_value(section, key, value, "an integer");
    }
}

double parse_double(const std::string& section, const std::string& key,
                    const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) bad_value(section, key, value, "a number");
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        bad_value(section, key, value, "a number");
    }
}

std::uint64_t parse_seed(const std::string& section, const std::string& key,
                         const std::string& value) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) bad_value(section, key, value, "a non-negative integer");
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        bad_value(section, key, value, "a non-negative integer");
    }
}

bool parse_bool(const std::string& section, const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    bad_value(section, key, value, "a boolean");
}

void set_key(RunConfig& cfg, const std::string& section, const std::string& key,
             const std::string& value) {
    auto i = [&] { return parse_int(section, key, value); };
    auto d = [&] { return parse_double(section, key, value); };
    auto b = [&] { return parse_bool(section, key, value); };

    if (section == "experiment") {
        if (key == "name") cfg.name = value;
        else if (key == "root") cfg.root = value;
        else if (key == "seed") cfg.seed = parse_seed(section, key, value);
        else throw ConfigError("unknown key [" + section + "] " + key);
    } else if (section == "corpus") {
        if (key == "n") cfg.corpus_n = i();
        else if (key == "heldout_fraction") cfg.corpus_heldout_fraction = d();
        else if (key == "vocab_limit") cfg.vocab_limit = i();
        else throw ConfigError("unknown key [" + section + "] " + key);
    } else if (section == "generator") {
        if (key == "emb_dim") cfg.generator.emb_dim = i();
        else if (key == "enc_hidden") cfg.generator.enc_hidden = i();
        else if (key == "dec_hidden") cfg.generator.dec_hidden = i();
        else if (key == "attn_dim") cfg.generator.attn_dim = i();
        else if (key == "beam_width") cfg.generator.beam_width = i();
        else if (key == "max_len") cfg.generator.max_len = i();
        else if (key == "epochs") cfg.generator_train.epochs = i();
        else if (key == "batch_size") cfg.generator_train.batch_size = i();
        else if (key == "learning_rate") cfg.generator_train.learning_rate = d();
        else if (key == "clip") cfg.generator_train.clip = d();
        else throw ConfigError("unknown key [" + section + "] " + key);
    } else if (section == "lm") {
        if (key == "emb_dim") cfg.lm.emb_dim = i();
        else if (key == "hidden") cfg.lm.hidden = i();
        else if (key == "epochs") cfg.lm_train.epochs = i();
        else if (key == "batch_size") cfg.lm_train.batch_size = i();
        else if (key == "learning_rate") cfg.lm_train.learning_rate = d();
        else if (key == "clip") cfg.lm_train.clip = d();
        else throw ConfigError("unknown key [" + section + "] " + key);
    } else if (section == "qa") {
        if (key == "emb_dim") cfg.qa.emb_dim = i();
        else if (key == "hidden") cfg.qa.hidden = i();
        else if (key == "max_span") cfg.qa.max_span = i();
        else if (key == "epochs") cfg.qa_train.epochs = i();
        else if (key == "batch_size") cfg.qa_train.batch_size = i();
        else if (key == "learning_rate") cfg.qa_train.learning_rate = d();
        else if (key == "clip") cfg.qa_train.clip = d();
        else throw ConfigError("unknown key [" + section + "] " + key);
    } else if (section == "disc") {
        if (key == "emb_dim") cfg.disc.emb_dim = i();
        else if (key == "q_hidden") cfg.disc.q_hidden = i();
        else if (key == "attn_dim") cfg.disc.attn_dim = i();
        else if (key == "block_hidden") cfg.disc.block_hidden = i();
        else if (key == "head_hidden") cfg.disc.head_hidden = i();
        else if (key == "epochs") cfg.disc_train.epochs = i();
        else if (key == "batch_size") cfg.disc_train.batch_size = i();
        else if (key == "learning_rate") cfg.disc_train.learning_rate = d();
        else if (key == "clip") cfg.disc_train.clip = d();
        else if (key == "heldout_fraction") cfg.disc_train.heldout_fraction = d();
        else throw ConfigError("unknown key [" + section + "] " + key);
    } else if (section == "finetune") {
        if (key == "use_qa") cfg.finetune.rewards.use_qa = b();
        else if (key == "use_lm") cfg.finetune.rewards.use_lm = b();
        else if (key == "use_disc") cfg.finetune.rewards.use_disc = b();
        else if (key == "adversarial") cfg.finetune.rewards.adversarial = b();
        else if (key == "lambda_qa") cfg.finetune.rewards.lambda_qa = d();
        else if (key == "lambda_lm") cfg.finetune.rewards.lambda_lm = d();
        else if (key == "lambda_disc") cfg.finetune.rewards.lambda_disc = d();
        else if (key == "ml_weight") cfg.finetune.ml_weight = d();
        else if (key == "learning_rate") cfg.finetune.learning_rate = d();
        else if (key == "clip") cfg.finetune.clip = d();
        else if (key == "batch_size") cfg.finetune.batch_size = i();
        else if (key == "steps") cfg.finetune.steps = i();
        else if (key == "stochastic") cfg.finetune.stochastic = b();
        else if (key == "beam_width") cfg.finetune.beam_width = i();
        else if (key == "max_len") cfg.finetune.max_len = i();
        else if (key == "disc_update_ratio") cfg.finetune.disc_update_ratio = i();
        else throw ConfigError("unknown key [" + section + "] " + key);
    } else if (section == "eval") {
        if (key == "beam_width") cfg.eval.beam_width = i();
        else if (key == "max_len") cfg.eval.max_len = i();
        else throw ConfigError("unknown key [" + section + "] " + key);
    } else {
        throw ConfigError("unknown section [" + section + "]");
    }
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

}  // namespace

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') {
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": malformed section header '" + t + "'");
            }
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected key = value, got '" + t + "'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (section.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": key '" + key +
                              "' appears before any [section]");
        }
        if (key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        set_key(cfg, section, key, value);
    }
}

void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    apply_config_text(cfg, buf.str(), path);
}

std::string render_config(const RunConfig& cfg) {
    std::ostringstream out;
    out << "[experiment]\n";
    out << "name = " << cfg.name << "\n";
    out << "root = " << cfg.root << "\n";
    out << "seed = " << cfg.seed << "\n\n";

    out << "[corpus]\n";
    out << "n = " << cfg.corpus_n << "\n";
    out << "heldout_fraction = " << fmt_double(cfg.corpus_heldout_fraction) << "\n";
    out << "vocab_limit = " << cfg.vocab_limit << "\n\n";

    out << "[generator]\n";
    out << "emb_dim = " << cfg.generator.emb_dim << "\n";
    out << "enc_hidden = " << cfg.generator.enc_hidden << "\n";
    out << "dec_hidden = " << cfg.generator.dec_hidden << "\n";
    out << "attn_dim = " << cfg.generator.attn_dim << "\n";
    out << "beam_width = " << cfg.generator.beam_width << "\n";
    out << "max_len = " << cfg.generator.max_len << "\n";
    out << "epochs = " << cfg.generator_train.epochs << "\n";
    out << "batch_size = " << cfg.generator_train.batch_size << "\n";
    out << "learning_rate = " << fmt_double(cfg.generator_train.learning_rate) << "\n";
    out << "clip = " << fmt_double(cfg.generator_train.clip) << "\n\n";

    out << "[lm]\n";
    out << "emb_dim = " << cfg.lm.emb_dim << "\n";
    out << "hidden = " << cfg.lm.hidden << "\n";
    out << "epochs = " << cfg.lm_train.epochs << "\n";
    out << "batch_size = " << cfg.lm_train.batch_size << "\n";
    out << "learning_rate = " << fmt_double(cfg.lm_train.learning_rate) << "\n";
    out << "clip = " << fmt_double(cfg.lm_train.clip) << "\n\n";

    out << "[qa]\n";
    out << "emb_dim = " << cfg.qa.emb_dim << "\n";
    out << "hidden = " << cfg.qa.hidden << "\n";
    out << "max_span = " << cfg.qa.max_span << "\n";
    out << "epochs = " << cfg.qa_train.epochs << "\n";
    out << "batch_size = " << cfg.qa_train.batch_size << "\n";
    out << "learning_rate = " << fmt_double(cfg.qa_train.learning_rate) << "\n";
    out << "clip = " << fmt_double(cfg.qa_train.clip) << "\n\n";

    out << "[disc]\n";
    out << "emb_dim = " << cfg.disc.emb_dim << "\n";
    out << "q_hidden = " << cfg.disc.q_hidden << "\n";
    out << "attn_dim = " << cfg.disc.attn_dim << "\n";
    out << "block_hidden = " << cfg.disc.block_hidden << "\n";
    out << "head_hidden = " << cfg.disc.head_hidden << "\n";
    out << "epochs = " << cfg.disc_train.epochs << "\n";
    out << "batch_size = " << cfg.disc_train.batch_size << "\n";
    out << "learning_rate = " << fmt_double(cfg.disc_train.learning_rate) << "\n";
    out << "clip = " << fmt_double(cfg.disc_train.clip) << "\n";
    out << "heldout_fraction = " << fmt_double(cfg.disc_train.heldout_fraction) << "\n\n";

    out << "[finetune]\n";
    out << "use_qa = " << fmt_bool(cfg.finetune.rewards.use_qa) << "\n";
    out << "use_lm = " << fmt_bool(cfg.finetune.rewards.use_lm) << "\n";
    out << "use_disc = " << fmt_bool(cfg.finetune.rewards.use_disc) << "\n";
    out << "adversarial = " << fmt_bool(cfg.finetune.rewards.adversarial) << "\n";
    out << "lambda_qa = " << fmt_double(cfg.finetune.rewards.lambda_qa) << "\n";
    out << "lambda_lm = " << fmt_double(cfg.finetune.rewards.lambda_lm) << "\n";
    out << "lambda_disc = " << fmt_double(cfg.finetune.rewards.lambda_disc) << "\n";
    out << "ml_weight = " << fmt_double(cfg.finetune.ml_weight) << "\n";
    out << "learning_rate = " << fmt_double(cfg.finetune.learning_rate) << "\n";
    out << "clip = " << fmt_double(cfg.finetune.clip) << "\n";
    out << "batch_size = " << cfg.finetune.batch_size << "\n";
    out << "steps = " << cfg.finetune.steps << "\n";
    out << "stochastic = " << fmt_bool(cfg.finetune.stochastic) << "\n";
    out << "beam_width = " << cfg.finetune.beam_width << "\n";
    out << "max_len = " << cfg.finetune.max_len << "\n";
    out << "disc_update_ratio = " << cfg.finetune.disc_update_ratio << "\n\n";

    out << "[eval]\n";
    out << "beam_width = " << cfg.eval.beam_width << "\n";
    out << "max_len = " << cfg.eval.max_len << "\n";
    return out.str();
}

namespace {

// ---------------------------------------------------------------------------
// Experiment directory helpers
// ---------------------------------------------------------------------------

struct Ctx {
    RunConfig cfg;
    fs::path dir;
    bool verbose = false;

    std::string p(const std::string& file) const { return (dir / file).string(); }
};

void write_snapshot(const Ctx& ctx) {
    std::ofstream out(ctx.p("config.ini"));
    if (!out) throw std::runtime_error("cannot write " + ctx.p("config.ini"));
    out << render_config(ctx.cfg);
}

std::vector<Triple> load_split(const Ctx& ctx, const std::string& split) {
    if (split != "train" && split != "heldout") {
        throw ConfigError("unknown corpus split '" + split + "' (expected train or heldout)");
    }
    const std::string path = ctx.p(split + ".jsonl");
    if (!fs::exists(path)) {
        throw std::runtime_error("missing corpus file " + path + "; run make-corpus first");
    }
    return load_triples(path);
}

// Resolve a checkpoint argument: bare names live in the experiment directory,
// anything with a path separator is taken as given.
std::string ckpt_path(const Ctx& ctx, const std::string& name) {
    if (name.find('/') != std::string::npos) return name;
    return ctx.p(name);
}

GeneratorModel load_generator_ckpt(const Ctx& ctx, const std::string& name) {
    const std::string path = ckpt_path(ctx, name);
    if (!fs::exists(path)) {
        throw std::runtime_error("missing generator checkpoint " + path +
                                 "; run train-generator first");
    }
    return GeneratorModel::load(path);
}

std::string default_generator_ckpt(const Ctx& ctx) {
    return fs::exists(ctx.p("generator_finetuned.ckpt")) ? "generator_finetuned.ckpt"
                                                         : "generator.ckpt";
}

// ---------------------------------------------------------------------------
// Pipeline stages shared between the subcommands and reproduce-table2
// ---------------------------------------------------------------------------

void stage_make_corpus(const Ctx& ctx) {
    const RunConfig& cfg = ctx.cfg;
    if (cfg.corpus_n < 2) throw ConfigError("[corpus] n must be at least 2");
    if (cfg.corpus_heldout_fraction < 0.0 || cfg.corpus_heldout_fraction >= 1.0) {
        throw ConfigError("[corpus] heldout_fraction must be in [0, 1)");
    }
    std::vector<Triple> triples = synth_corpus(cfg.seed, cfg.corpus_n);
    const std::size_t heldout_n =
        static_cast<std::size_t>(std::llround(cfg.corpus_heldout_fraction * cfg.corpus_n));
    const std::size_t train_n = triples.size() - heldout_n;
    std::vector<Triple> train(triples.begin(), triples.begin() + train_n);
    std::vector<Triple> heldout(triples.begin() + train_n, triples.end());
    save_triples(train, ctx.p("train.jsonl"));
    save_triples(heldout, ctx.p("heldout.jsonl"));
    std::printf("wrote %zu train and %zu held-out triples to %s\n", train.size(), heldout.size(),
                ctx.dir.string().c_str());
}

void ensure_corpus(const Ctx& ctx) {
    if (!fs::exists(ctx.p("train.jsonl")) || !fs::exists(ctx.p("heldout.jsonl"))) {
        stage_make_corpus(ctx);
    }
}

GeneratorModel stage_train_generator(const Ctx& ctx, const std::vector<Triple>& train,
                                     const std::vector<Triple>& heldout,
                                     const Vocabulary& vocab) {
    Rng rng(ctx.cfg.seed + kSeedGenInit);
    GeneratorModel m = GeneratorModel::init(vocab.size(), ctx.cfg.generator, rng);
    MlTrainConfig tc = ctx.cfg.generator_train;
    tc.seed = ctx.cfg.seed + kSeedGenTrain;
    tc.verbose = ctx.verbose;
    std::vector<EpochStats> history = train_ml(m, vocab, train, tc, &heldout);
    m.save(ctx.p("generator.ckpt"));
    std::ofstream log(ctx.p("generator_train_log.jsonl"));
    for (std::size_t e = 0; e < history.size(); ++e) {
        json j{{"epoch", static_cast<int>(e) + 1},
               {"train_nll", history[e].train_nll},
               {"heldout_nll", std::isfinite(history[e].heldout_nll)
                                   ? json(history[e].heldout_nll)
                                   : json(nullptr)}};
        log << j.dump() << "\n";
    }
    std::printf("trained generator for %d epochs; train nll %.4f, held-out nll %.4f\n",
                tc.epochs, history.back().train_nll, history.back().heldout_nll);
    return m;
}

LanguageModel stage_train_lm(const Ctx& ctx, const std::vector<Triple>& train,
                             const std::vector<Triple>& heldout, const Vocabulary& vocab) {
    std::vector<std::vector<std::string>> questions;
    for (const Triple& t : train) {
        if (t.has_question()) questions.push_back(t.question);
    }
    Rng rng(ctx.cfg.seed + kSeedLmInit);
    LanguageModel m = LanguageModel::init(vocab.size(), ctx.cfg.lm, rng);
    LmTrainConfig tc = ctx.cfg.lm_train;
    tc.seed = ctx.cfg.seed + kSeedLmTrain;
    tc.verbose = ctx.verbose;
    std::vector<double> history = train_lm(m, vocab, questions, tc);
    m.save(ctx.p("lm.ckpt"));
    double ppl = 0.0;
    int counted = 0;
    for (const Triple& t : heldout) {
        if (!t.has_question()) continue;
        ppl += lm_perplexity(m, vocab, t.question);
        ++counted;
    }
    std::printf("trained language model for %d epochs; final ce %.4f, held-out ppl %.2f\n",
                tc.epochs, history.back(), counted > 0 ? ppl / counted : 0.0);
    return m;
}

QaModel stage_train_qa(const Ctx& ctx, const std::vector<Triple>& train,
                       const std::vector<Triple>& heldout, const Vocabulary& vocab) {
    Rng rng(ctx.cfg.seed + kSeedQaInit);
    QaModel m = QaModel::init(vocab.size(), ctx.cfg.qa, rng);
    QaTrainConfig tc = ctx.cfg.qa_train;
    tc.seed = ctx.cfg.seed + kSeedQaTrain;
    tc.verbose = ctx.verbose;
    std::vector<double> history = train_qa(m, vocab, train, tc);
    m.save(ctx.p("qa.ckpt"));
    double f1 = 0.0;
    int counted = 0;
    for (const Triple& t : heldout) {
        if (!t.has_question()) continue;
        f1 += qa_reward(m, vocab, t, t.question);
        ++counted;
    }
    std::printf("trained qa model for %d epochs; final loss %.4f, held-out f1 %.3f\n", tc.epochs,
                history.back(), counted > 0 ? f1 / counted : 0.0);
    return m;
}

std::vector<std::string> beam_question(const Ctx& ctx, const GeneratorModel& gen,
                                       const Vocabulary& vocab, const Triple& t) {
    const int max_len = ctx.cfg.eval.max_len > 0 ? ctx.cfg.eval.max_len : gen.cfg.max_len;
    GeneratedSequence seq = beam_search(gen, vocab, t, ctx.cfg.eval.beam_width, max_len).front();
    return decoded_question(seq, vocab, encode_example(t, vocab));
}

DiscriminatorModel stage_pretrain_disc(const Ctx& ctx, const std::vector<Triple>& train,
                                       const Vocabulary& vocab, const GeneratorModel& gen) {
    std::vector<Triple> real, fake;
    for (const Triple& t : train) {
        if (!t.has_question()) continue;
        real.push_back(t);
        Triple f = t;
        f.question = beam_question(ctx, gen, vocab, t);
        fake.push_back(std::move(f));
    }
    Rng rng(ctx.cfg.seed + kSeedDiscInit);
    DiscriminatorModel m = DiscriminatorModel::init(vocab.size(), ctx.cfg.disc, rng);
    DiscTrainConfig tc = ctx.cfg.disc_train;
    tc.seed = ctx.cfg.seed + kSeedDiscTrain;
    tc.verbose = ctx.verbose;
    const double acc = pretrain_discriminator(m, vocab, real, fake, tc);
    m.save(ctx.p("disc.ckpt"));
    std::printf("pretrained discriminator on %zu real vs %zu generated; held-out accuracy %.3f\n",
                real.size(), fake.size(), acc);
    return m;
}

// Loads the named model if its checkpoint exists, otherwise runs its stage.
GeneratorModel ensure_generator(const Ctx& ctx, const std::vector<Triple>& train,
                                const std::vector<Triple>& heldout, const Vocabulary& vocab) {
    if (fs::exists(ctx.p("generator.ckpt"))) return GeneratorModel::load(ctx.p("generator.ckpt"));
    return stage_train_generator(ctx, train, heldout, vocab);
}

LanguageModel ensure_lm(const Ctx& ctx, const std::vector<Triple>& train,
                        const std::vector<Triple>& heldout, const Vocabulary& vocab) {
    if (fs::exists(ctx.p("lm.ckpt"))) return LanguageModel::load(ctx.p("lm.ckpt"));
    return stage_train_lm(ctx, train, heldout, vocab);
}

QaModel ensure_qa(const Ctx& ctx, const std::vector<Triple>& train,
                  const std::vector<Triple>& heldout, const Vocabulary& vocab) {
    if (fs::exists(ctx.p("qa.ckpt"))) return QaModel::load(ctx.p("qa.ckpt"));
    return stage_train_qa(ctx, train, heldout, vocab);
}

DiscriminatorModel ensure_disc(const Ctx& ctx, const std::vector<Triple>& train,
                               const Vocabulary& vocab, const GeneratorModel& gen) {
    if (fs::exists(ctx.p("disc.ckpt"))) return DiscriminatorModel::load(ctx.p("disc.ckpt"));
    return stage_pretrain_disc(ctx, train, vocab, gen);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_train_generator(const Ctx& ctx) {
    const auto train = load_split(ctx, "train");
    const auto heldout = load_split(ctx, "heldout");
    const Vocabulary vocab = build_vocab(train, ctx.cfg.vocab_limit);
    stage_train_generator(ctx, train, heldout, vocab);
}

void cmd_train_lm(const Ctx& ctx) {
    const auto train = load_split(ctx, "train");
    const auto heldout = load_split(ctx, "heldout");
    const Vocabulary vocab = build_vocab(train, ctx.cfg.vocab_limit);
    stage_train_lm(ctx, train, heldout, vocab);
}

void cmd_train_qa(const Ctx& ctx) {
    const auto train = load_split(ctx, "train");
    const auto heldout = load_split(ctx, "heldout");
    const Vocabulary vocab = build_vocab(train, ctx.cfg.vocab_limit);
    stage_train_qa(ctx, train, heldout, vocab);
}

void cmd_pretrain_disc(const Ctx& ctx) {
    const auto train = load_split(ctx, "train");
    const Vocabulary vocab = build_vocab(train, ctx.cfg.vocab_limit);
    const GeneratorModel gen = load_generator_ckpt(ctx, "generator.ckpt");
    stage_pretrain_disc(ctx, train, vocab, gen);
}

void cmd_finetune(const Ctx& ctx, bool resume) {
    const FinetuneConfig& fc = ctx.cfg.finetune;
    if (!fc.rewards.any_enabled()) {
        throw ConfigError(
            "finetune: no reward source enabled; pass --qa, --lm and/or --disc "
            "(or set use_qa/use_lm/use_disc in [finetune])");
    }
    const auto train = load_split(ctx, "train");
    const auto heldout = load_split(ctx, "heldout");
    const Vocabulary vocab = build_vocab(train, ctx.cfg.vocab_limit);

    GeneratorModel gen = resume ? load_generator_ckpt(ctx, "generator_finetuned.ckpt")
                                : load_generator_ckpt(ctx, "generator.ckpt");

    LanguageModel lm;
    QaModel qa;
    DiscriminatorModel disc;
    FinetuneModels models;
    if (fc.rewards.use_lm) {
        if (!fs::exists(ctx.p("lm.ckpt"))) {
            throw std::runtime_error("missing " + ctx.p("lm.ckpt") + "; run train-lm first");
        }
        lm = LanguageModel::load(ctx.p("lm.ckpt"));
        models.lm = &lm;
    }
    if (fc.rewards.use_qa) {
        if (!fs::exists(ctx.p("qa.ckpt"))) {
            throw std::runtime_error("missing " + ctx.p("qa.ckpt") + "; run train-qa first");
        }
        qa = QaModel::load(ctx.p("qa.ckpt"));
        models.qa = &qa;
    }
    if (fc.rewards.use_disc) {
        const std::string disc_file = resume && fs::exists(ctx.p("disc_finetuned.ckpt"))
                                          ? ctx.p("disc_finetuned.ckpt")
                                          : ctx.p("disc.ckpt");
        if (!fs::exists(disc_file)) {
            throw std::runtime_error("missing " + disc_file + "; run pretrain-disc first");
        }
        disc = DiscriminatorModel::load(disc_file);
        models.disc = &disc;
    }

    RewardStatsSet initial;
    std::vector<StepLog> previous;
    if (resume) {
        if (!fs::exists(ctx.p("reward_stats.json"))) {
            throw std::runtime_error("missing " + ctx.p("reward_stats.json") +
                                     "; nothing to resume");
        }
        initial = load_stats(ctx.p("reward_stats.json"));
        if (fs::exists(ctx.p("step_logs.jsonl"))) {
            previous = load_step_logs(ctx.p("step_logs.jsonl"));
        }
    }

    FinetuneConfig run_cfg = fc;
    run_cfg.seed = ctx.cfg.seed + kSeedFinetune + (resume ? previous.size() : 0);
    run_cfg.verbose = ctx.verbose;
    FinetuneResult result =
        finetune_loop(gen, vocab, models, train, heldout, run_cfg, resume ? &initial : nullptr);

    gen.save(ctx.p("generator_finetuned.ckpt"));
    if (fc.rewards.adversarial && models.disc != nullptr) {
        disc.save(ctx.p("disc_finetuned.ckpt"));
    }
    for (StepLog& log : result.history) log.step += static_cast<int>(previous.size());
    previous.insert(previous.end(), result.history.begin(), result.history.end());
    save_step_logs(previous, ctx.p("step_logs.jsonl"));
    save_stats(result.stats, ctx.p("reward_stats.json"));

    MetricReport base;
    base.name = "baseline";
    base.values = result.before;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    base.deltas = MetricValues{nan, nan, nan, nan, nan};
    std::vector<MetricReport> rows = {base, result.report};
    save_reports(rows, ctx.p("finetune_reports.jsonl"));
    std::ofstream table(ctx.p("finetune_report.txt"));
    table << render_report_table(rows);

    std::printf(
        "fine-tuned for %d steps; deltas: nll %+0.4f bleu %+0.4f qa %+0.4f lm_ppl %+0.4f "
        "fooled %+0.4f\n",
        run_cfg.steps, result.report.deltas.nll, result.report.deltas.bleu,
        result.report.deltas.qa_f1, result.report.deltas.lm_ppl, result.report.deltas.disc_fool);
}

void cmd_generate(const Ctx& ctx, const std::string& checkpoint, const std::string& split,
                  const std::string& out_name) {
    const auto train = load_split(ctx, "train");
    const Vocabulary vocab = build_vocab(train, ctx.cfg.vocab_limit);
    const auto triples = split == "train" ? train : load_split(ctx, split);
    const GeneratorModel gen =
        load_generator_ckpt(ctx, checkpoint.empty() ? default_generator_ckpt(ctx) : checkpoint);

    const std::string out_path = ctx.p(out_name);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    for (const Triple& t : triples) {
        const std::vector<std::string> q = beam_question(ctx, gen, vocab, t);
        json j{{"id", t.id}, {"question", join_tokens(q)}};
        out << j.dump() << "\n";
    }
    std::printf("generated %zu questions to %s\n", triples.size(), out_path.c_str());
}

void cmd_evaluate(const Ctx& ctx, const std::string& checkpoint, std::string label,
                  const std::string& baseline, const std::string& split) {
    const auto train = load_split(ctx, "train");
    const Vocabulary vocab = build_vocab(train, ctx.cfg.vocab_limit);
    const auto triples = split == "train" ? train : load_split(ctx, split);

    const std::string ckpt = checkpoint.empty() ? default_generator_ckpt(ctx) : checkpoint;
    const GeneratorModel gen = load_generator_ckpt(ctx, ckpt);
    if (label.empty()) label = fs::path(ckpt).stem().string();

    LanguageModel lm;
    QaModel qa;
    DiscriminatorModel disc;
    RewardModels models;
    if (fs::exists(ctx.p("lm.ckpt"))) {
        lm = LanguageModel::load(ctx.p("lm.ckpt"));
        models.lm = &lm;
    }
    if (fs::exists(ctx.p("qa.ckpt"))) {
        qa = QaModel::load(ctx.p("qa.ckpt"));
        models.qa = &qa;
    }
    if (fs::exists(ctx.p("disc.ckpt"))) {
        disc = DiscriminatorModel::load(ctx.p("disc.ckpt"));
        models.disc = &disc;
    }

    const MetricValues values = score_model(gen, vocab, models, triples, ctx.cfg.eval);

    std::vector<MetricReport> rows;
    if (fs::exists(ctx.p("reports.jsonl"))) rows = load_reports(ctx.p("reports.jsonl"));

    MetricReport row;
    if (!baseline.empty()) {
        const auto it = std::find_if(rows.begin(), rows.end(),
                                     [&](const MetricReport& r) { return r.name == baseline; });
        if (it == rows.end()) {
            throw ConfigError("unknown baseline '" + baseline + "' in " + ctx.p("reports.jsonl"));
        }
        row = with_baseline(label, values, baseline, it->values);
    } else {
        row.name = label;
        row.values = values;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.deltas = MetricValues{nan, nan, nan, nan, nan};
    }

    // re-running with the same label replaces the row, keeping reruns identical
    const auto old = std::find_if(rows.begin(), rows.end(),
                                  [&](const MetricReport& r) { return r.name == row.name; });
    if (old != rows.end()) {
        *old = row;
    } else {
        rows.push_back(row);
    }
    save_reports(rows, ctx.p("reports.jsonl"));
    std::ofstream table(ctx.p("report.txt"));
    table << render_report_table(rows);
    std::printf("%s", render_report_table({row}).c_str());
}

void cmd_correlate(const Ctx& ctx, const std::string& ratings_path,
                   const std::string& checkpoint, const std::string& split) {
    if (!fs::exists(ratings_path)) {
        throw ConfigError("ratings file not found: " + ratings_path);
    }
    const auto train = load_split(ctx, "train");
    const Vocabulary vocab = build_vocab(train, ctx.cfg.vocab_limit);
    const auto triples = split == "train" ? train : load_split(ctx, split);
    const GeneratorModel gen =
        load_generator_ckpt(ctx, checkpoint.empty() ? default_generator_ckpt(ctx) : checkpoint);
    for (const char* file : {"lm.ckpt", "qa.ckpt"}) {
        if (!fs::exists(ctx.p(file))) {
            throw std::runtime_error("missing " + ctx.p(file) +
                                     "; correlate needs the LM and QA reward models");
        }
    }
    const LanguageModel lm = LanguageModel::load(ctx.p("lm.ckpt"));
    const QaModel qa = QaModel::load(ctx.p("qa.ckpt"));

    std::vector<ScoredQuestion> scored;
    std::ofstream qfile(ctx.p("scored_questions.jsonl"));
    for (const Triple& t : triples) {
        const std::vector<std::string> q = beam_question(ctx, gen, vocab, t);
        ScoredQuestion s;
        s.id = t.id;
        s.qa = qa_reward(qa, vocab, t, q);
        s.lm = lm_perplexity(lm, vocab, q);
        scored.push_back(s);
        json j{{"id", s.id}, {"question", join_tokens(q)}, {"qa", s.qa}, {"lm", s.lm}};
        qfile << j.dump() << "\n";
    }

    const std::vector<RatingRecord> ratings = load_ratings(ratings_path);
    CorrelationReport report;
    try {
        report = correlate(ratings, scored);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());  // bad ids or too little data: user-fixable
    }

    std::ofstream out(ctx.p("correlation.txt"));
    out << "relevance_vs_qa = " << fmt_double(report.relevance_vs_qa) << "\n";
    out << "fluency_vs_lm = " << fmt_double(report.fluency_vs_lm) << "\n";
    save_scatter(report.scatter, ctx.p("scatter.txt"));
    std::ofstream svg(ctx.p("scatter.svg"));
    svg << scatter_svg(report.scatter);
    std::printf("correlations over %zu rated questions: relevance vs qa %.3f, fluency vs lm %.3f\n",
                report.scatter.size(), report.relevance_vs_qa, report.fluency_vs_lm);
}

struct TableRow {
    std::string name;
    bool use_qa, use_lm, use_disc, adversarial;
};

void cmd_reproduce_table2(const Ctx& ctx) {
    ensure_corpus(ctx);
    const auto train = load_split(ctx, "train");
    const auto heldout = load_split(ctx, "heldout");
    const Vocabulary vocab = build_vocab(train, ctx.cfg.vocab_limit);

    const GeneratorModel gen = ensure_generator(ctx, train, heldout, vocab);
    LanguageModel lm = ensure_lm(ctx, train, heldout, vocab);
    QaModel qa = ensure_qa(ctx, train, heldout, vocab);
    const DiscriminatorModel disc = ensure_disc(ctx, train, vocab, gen);

    const RewardModels reward_models{&lm, &qa, &disc};
    const MetricValues before = score_model(gen, vocab, reward_models, heldout, ctx.cfg.eval);

    const std::vector<TableRow> table_rows = {
        {"lm-only", false, true, false, false},
        {"qa-only", true, false, false, false},
        {"qa+lm", true, true, false, false},
        {"disc-only", false, false, true, false},
        {"disc-adversarial", false, false, true, true},
        {"all", true, true, true, true},
    };

    std::vector<MetricReport> reports;
    MetricReport base;
    base.name = "baseline";
    base.values = before;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    base.deltas = MetricValues{nan, nan, nan, nan, nan};
    reports.push_back(base);

    for (const TableRow& row : table_rows) {
        GeneratorModel g = gen;
        DiscriminatorModel d = disc;
        FinetuneConfig fc = ctx.cfg.finetune;
        fc.rewards.use_qa = row.use_qa;
        fc.rewards.use_lm = row.use_lm;
        fc.rewards.use_disc = row.use_disc;
        fc.rewards.adversarial = row.adversarial;
        fc.seed = ctx.cfg.seed + kSeedFinetune;
        fc.verbose = ctx.verbose;
        FinetuneModels models{&lm, &qa, &d};
        finetune_loop(g, vocab, models, train, heldout, fc);
        // Score every row against the same frozen pretrained evaluators the
        // baseline row used, so the adversarial rows' fool rates are
        // comparable rather than measured against their own updated copy.
        const MetricValues after = score_model(g, vocab, reward_models, heldout, ctx.cfg.eval);
        reports.push_back(with_baseline(row.name, after, "baseline", before));
        if (ctx.verbose) {
            std::fprintf(stderr, "finished %s\n", row.name.c_str());
        }
    }

    // feature-flag layout with signed metric deltas
    std::ostringstream out;
    out << "configuration       qa  lm  disc  adv |       nll      bleu     qa_f1    lm_ppl"
           "    fooled\n";
    for (std::size_t r = 0; r < table_rows.size(); ++r) {
        const TableRow& row = table_rows[r];
        const MetricValues& d = reports[r + 1].deltas;
        char line[256];
        std::snprintf(line, sizeof(line),
                      "%-18s %3s %3s %5s %4s | %+9.4f %+9.4f %+9.4f %+9.4f %+9.4f\n",
                      row.name.c_str(), row.use_qa ? "x" : "-", row.use_lm ? "x" : "-",
                      row.use_disc ? "x" : "-", row.adversarial ? "x" : "-", d.nll, d.bleu,
                      d.qa_f1, d.lm_ppl, d.disc_fool);
        out << line;
    }

    save_reports(reports, ctx.p("table2.jsonl"));
    std::ofstream table(ctx.p("table2.txt"));
    table << out.str();
    std::printf("%s", out.str().c_str());
}

}  // namespace

// ---------------------------------------------------------------------------
// Argument parsing and dispatch
// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args) {
    CLI::App app{"seq2seq question generation: pretraining, reward fine-tuning, evaluation"};
    app.name("qgen");
    app.require_subcommand(1);

    std::string config_flag, name_flag, root_flag;
    std::uint64_t seed_flag = 0;
    bool verbose_flag = false;
    app.add_option("--config", config_flag, "configuration file (key = value, [module] sections)");
    app.add_option("--name", name_flag, "experiment name");
    app.add_option("--root", root_flag, "experiment root directory");
    app.add_option("--seed", seed_flag, "global seed");
    app.add_flag("--verbose", verbose_flag, "per-epoch and per-step progress on stderr");

    auto* sc_corpus = app.add_subcommand("make-corpus", "write a synthetic train/held-out corpus");
    int n_flag = 0;
    double heldout_flag = -1.0;
    sc_corpus->add_option("--n", n_flag, "number of triples");
    sc_corpus->add_option("--heldout-fraction", heldout_flag, "held-out fraction");

    auto* sc_gen = app.add_subcommand("train-generator", "maximum-likelihood pretraining");
    auto* sc_lm = app.add_subcommand("train-lm", "train the language-model reward");
    auto* sc_qa = app.add_subcommand("train-qa", "train the question-answering reward");
    auto* sc_disc =
        app.add_subcommand("pretrain-disc", "train the discriminator against generator output");
    int epochs_flag = 0;
    double lr_flag = -1.0;
    int batch_flag = 0;
    for (CLI::App* sc : {sc_gen, sc_lm, sc_qa, sc_disc}) {
        sc->add_option("--epochs", epochs_flag, "training epochs");
        sc->add_option("--learning-rate", lr_flag, "learning rate");
        sc->add_option("--batch-size", batch_flag, "batch size");
    }

    auto* sc_ft = app.add_subcommand("finetune", "policy-gradient fine-tuning of the generator");
    bool ft_qa = false, ft_lm = false, ft_disc = false, ft_adv = false, ft_stochastic = false;
    bool ft_resume = false;
    int ft_steps = 0, ft_batch = 0, ft_ratio = -1;
    double ft_ml_weight = -1.0, ft_lr = -1.0;
    double ft_lambda_qa = -1.0, ft_lambda_lm = -1.0, ft_lambda_disc = -1.0;
    sc_ft->add_flag("--qa", ft_qa, "enable the QA reward");
    sc_ft->add_flag("--lm", ft_lm, "enable the LM reward");
    sc_ft->add_flag("--disc", ft_disc, "enable the discriminator reward");
    sc_ft->add_flag("--adversarial", ft_adv, "keep training the discriminator");
    sc_ft->add_flag("--stochastic", ft_stochastic, "sample instead of beam search");
    sc_ft->add_flag("--resume", ft_resume, "continue from the fine-tuned checkpoint and stats");
    sc_ft->add_option("--steps", ft_steps, "fine-tuning steps");
    sc_ft->add_option("--batch-size", ft_batch, "batch size");
    sc_ft->add_option("--disc-update-ratio", ft_ratio, "discriminator updates per step");
    sc_ft->add_option("--ml-weight", ft_ml_weight, "weight of the retained ML objective");
    sc_ft->add_option("--learning-rate", ft_lr, "learning rate");
    sc_ft->add_option("--lambda-qa", ft_lambda_qa, "QA reward weight");
    sc_ft->add_option("--lambda-lm", ft_lambda_lm, "LM reward weight");
    sc_ft->add_option("--lambda-disc", ft_lambda_disc, "discriminator reward weight");

    auto* sc_generate = app.add_subcommand("generate", "beam-decode questions for a corpus split");
    std::string gen_ckpt, gen_split = "heldout", gen_out = "questions.jsonl";
    sc_generate->add_option("--checkpoint", gen_ckpt,
                            "generator checkpoint (default: fine-tuned if present)");
    sc_generate->add_option("--split", gen_split, "train or heldout");
    sc_generate->add_option("--out", gen_out, "output file name");

    auto* sc_eval = app.add_subcommand("evaluate", "score a generator on a corpus split");
    std::string eval_ckpt, eval_label, eval_baseline, eval_split = "heldout";
    sc_eval->add_option("--checkpoint", eval_ckpt,
                        "generator checkpoint (default: fine-tuned if present)");
    sc_eval->add_option("--label", eval_label, "report row name (default: checkpoint stem)");
    sc_eval->add_option("--baseline", eval_baseline, "existing report row to diff against");
    sc_eval->add_option("--split", eval_split, "train or heldout");

    auto* sc_corr = app.add_subcommand("correlate", "correlate human ratings with reward scores");
    std::string corr_ratings, corr_ckpt, corr_split = "heldout";
    sc_corr->add_option("--ratings", corr_ratings, "ratings file (jsonl)")->required();
    sc_corr->add_option("--checkpoint", corr_ckpt,
                        "generator checkpoint (default: fine-tuned if present)");
    sc_corr->add_option("--split", corr_split, "train or heldout");

    auto* sc_table2 =
        app.add_subcommand("reproduce-table2", "run all six fine-tuning configurations");
    int t2_steps = 0;
    sc_table2->add_option("--steps", t2_steps, "fine-tuning steps per configuration");

    for (CLI::App* sc : app.get_subcommands({})) sc->fallthrough();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        Ctx ctx;
        ctx.verbose = verbose_flag;

        // precedence: defaults < config file (explicit or snapshot) < flags
        if (!config_flag.empty()) {
            load_config_file(ctx.cfg, config_flag);
        }
        if (app.count("--name") > 0) ctx.cfg.name = name_flag;
        if (app.count("--root") > 0) ctx.cfg.root = root_flag;
        if (ctx.cfg.root.empty()) {
            const char* env_root = std::getenv("QGEN_EXPERIMENT_ROOT");
            ctx.cfg.root = env_root != nullptr && *env_root != '\0' ? env_root : "experiments";
        }
        ctx.dir = fs::path(ctx.cfg.root) / ctx.cfg.name;
        if (config_flag.empty() && fs::exists(ctx.dir / "config.ini")) {
            // the snapshot written by an earlier run; identity stays put
            const std::string keep_name = ctx.cfg.name;
            const std::string keep_root = ctx.cfg.root;
            load_config_file(ctx.cfg, (ctx.dir / "config.ini").string());
            ctx.cfg.name = keep_name;
            ctx.cfg.root = keep_root;
        }
        if (app.count("--seed") > 0) ctx.cfg.seed = seed_flag;

        // subcommand flag overrides
        if (sc_corpus->count("--n") > 0) ctx.cfg.corpus_n = n_flag;
        if (sc_corpus->count("--heldout-fraction") > 0) {
            ctx.cfg.corpus_heldout_fraction = heldout_flag;
        }
        for (CLI::App* sc : {sc_gen, sc_lm, sc_qa, sc_disc}) {
            if (!sc->parsed()) continue;
            auto& train_cfg_epochs =
                sc == sc_gen ? ctx.cfg.generator_train.epochs
                : sc == sc_lm ? ctx.cfg.lm_train.epochs
                : sc == sc_qa ? ctx.cfg.qa_train.epochs
                              : ctx.cfg.disc_train.epochs;
            auto& train_cfg_lr = sc == sc_gen ? ctx.cfg.generator_train.learning_rate
                                 : sc == sc_lm ? ctx.cfg.lm_train.learning_rate
                                 : sc == sc_qa ? ctx.cfg.qa_train.learning_rate
                                               : ctx.cfg.disc_train.learning_rate;
            auto& train_cfg_batch = sc == sc_gen ? ctx.cfg.generator_train.batch_size
                                    : sc == sc_lm ? ctx.cfg.lm_train.batch_size
                                    : sc == sc_qa ? ctx.cfg.qa_train.batch_size
                                                  : ctx.cfg.disc_train.batch_size;
            if (sc->count("--epochs") > 0) train_cfg_epochs = epochs_flag;
            if (sc->count("--learning-rate") > 0) train_cfg_lr = lr_flag;
            if (sc->count("--batch-size") > 0) train_cfg_batch = batch_flag;
        }
        if (sc_ft->parsed()) {
            if (ft_qa) ctx.cfg.finetune.rewards.use_qa = true;
            if (ft_lm) ctx.cfg.finetune.rewards.use_lm = true;
            if (ft_disc) ctx.cfg.finetune.rewards.use_disc = true;
            if (ft_adv) {
                ctx.cfg.finetune.rewards.use_disc = true;
                ctx.cfg.finetune.rewards.adversarial = true;
            }
            if (ft_stochastic) ctx.cfg.finetune.stochastic = true;
            if (sc_ft->count("--steps") > 0) ctx.cfg.finetune.steps = ft_steps;
            if (sc_ft->count("--batch-size") > 0) ctx.cfg.finetune.batch_size = ft_batch;
            if (sc_ft->count("--disc-update-ratio") > 0) {
                ctx.cfg.finetune.disc_update_ratio = ft_ratio;
            }
            if (sc_ft->count("--ml-weight") > 0) ctx.cfg.finetune.ml_weight = ft_ml_weight;
            if (sc_ft->count("--learning-rate") > 0) ctx.cfg.finetune.learning_rate = ft_lr;
            if (sc_ft->count("--lambda-qa") > 0) ctx.cfg.finetune.rewards.lambda_qa = ft_lambda_qa;
            if (sc_ft->count("--lambda-lm") > 0) ctx.cfg.finetune.rewards.lambda_lm = ft_lambda_lm;
            if (sc_ft->count("--lambda-disc") > 0) {
                ctx.cfg.finetune.rewards.lambda_disc = ft_lambda_disc;
            }
        }
        if (sc_table2->parsed() && sc_table2->count("--steps") > 0) {
            ctx.cfg.finetune.steps = t2_steps;
        }

        fs::create_directories(ctx.dir);
        write_snapshot(ctx);

        if (sc_corpus->parsed()) {
            stage_make_corpus(ctx);
        } else if (sc_gen->parsed()) {
            cmd_train_generator(ctx);
        } else if (sc_lm->parsed()) {
            cmd_train_lm(ctx);
        } else if (sc_qa->parsed()) {
            cmd_train_qa(ctx);
        } else if (sc_disc->parsed()) {
            cmd_pretrain_disc(ctx);
        } else if (sc_ft->parsed()) {
            cmd_finetune(ctx, ft_resume);
        } else if (sc_generate->parsed()) {
            cmd_generate(ctx, gen_ckpt, gen_split, gen_out);
        } else if (sc_eval->parsed()) {
            cmd_evaluate(ctx, eval_ckpt, eval_label, eval_baseline, eval_split);
        } else if (sc_corr->parsed()) {
            cmd_correlate(ctx, corr_ratings, corr_ckpt, corr_split);
        } else if (sc_table2->parsed()) {
            cmd_reproduce_table2(ctx);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

}  // namespace qgen::cli
