#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qgen/eval.hpp"
#include "qgen/finetune.hpp"
#include "qgen/generator.hpp"
#include "qgen/rewards.hpp"

namespace qgen::cli {

// Everything tunable across the pipeline, grouped the way the config file
// sections are. Defaults live in the member initializers of the wrapped
// structs and the fields below.
struct RunConfig {
    // [experiment]
    std::string name = "default";
    std::string root;  // empty -> $QGEN_EXPERIMENT_ROOT or "experiments"
    std::uint64_t seed = 1;

    // [corpus]
    int corpus_n = 2000;
    double corpus_heldout_fraction = 0.1;
    int vocab_limit = 512;

    // [generator]
    GeneratorConfig generator;
    MlTrainConfig generator_train;

    // [lm]
    LmConfig lm;
    LmTrainConfig lm_train;

    // [qa]
    QaConfig qa;
    QaTrainConfig qa_train;

    // [disc]
    DiscConfig disc;
    DiscTrainConfig disc_train;

    // [finetune]
    FinetuneConfig finetune;

    // [eval]
    EvalConfig eval;
};

// Configuration problems: unknown keys, unparsable values, invalid state the
// user can fix. Mapped to exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Parses the sectioned key = value format. Unknown sections or keys throw
// ConfigError naming them; values that fail to parse name the key too.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);
void load_config_file(RunConfig& cfg, const std::string& path);

// Renders the fully resolved configuration back into the file format; parsing
// the output reproduces the config.
std::string render_config(const RunConfig& cfg);

// Entry point behind the binary: args without the program name. Returns the
// process exit code (0 success, 1 usage or config error, 2 runtime failure).
int run(const std::vector<std::string>& args);

}  // namespace qgen::cli
