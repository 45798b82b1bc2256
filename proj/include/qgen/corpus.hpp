#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace qgen {

// One training example: a tokenized context document, an inclusive token span
// marking the answer, and (for training data) the ground-truth question.
struct Triple {
    std::string id;
    std::vector<std::string> context;
    int answer_start = 0;
    int answer_end = 0;  // inclusive
    std::vector<std::string> question;  // empty when absent

    bool has_question() const { return !question.empty(); }
};

// Throws std::invalid_argument when the span is out of bounds or the context
// is empty.
void validate_triple(const Triple& t);

struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kSos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, int> token_to_id;

    int size() const { return static_cast<int>(id_to_token.size()); }
    bool contains(const std::string& tok) const { return token_to_id.count(tok) > 0; }
    int id_of(const std::string& tok) const {
        auto it = token_to_id.find(tok);
        return it == token_to_id.end() ? kUnk : it->second;
    }
    const std::string& token_of(int id) const { return id_to_token.at(id); }
};

// Question and context ids over the base vocabulary plus the per-example
// copy-extended vocabulary: context tokens outside the base vocabulary get
// temporary ids >= vocab size, in first-occurrence order.
struct EncodedExample {
    std::vector<int> context_ids;       // base vocabulary, OOV -> UNK
    std::vector<int> question_ids;      // base vocabulary, OOV -> UNK
    std::vector<int> extended_ids;      // question over the extended vocabulary
    std::vector<int> context_ext_ids;   // context positions over the extended vocabulary
    std::vector<std::string> oov_map;   // oov_map[i] has extended id vocab.size() + i

    int extended_size(const Vocabulary& v) const {
        return v.size() + static_cast<int>(oov_map.size());
    }
};

// Lowercases, splits punctuation into single-character tokens, collapses
// whitespace. Idempotent over its own output joined by spaces.
std::vector<std::string> tokenize(const std::string& text);

std::string join_tokens(const std::vector<std::string>& tokens);

// Most frequent tokens over contexts and questions, ties broken
// lexicographically; reserved tokens always occupy ids 0..3.
Vocabulary build_vocab(const std::vector<Triple>& triples, int max_size);

EncodedExample encode_example(const Triple& triple, const Vocabulary& vocab);

// Maps extended ids back to tokens using the per-example OOV list.
std::vector<std::string> decode_extended(const std::vector<int>& ids, const Vocabulary& vocab,
                                         const std::vector<std::string>& oov_map);

// Deterministic templated corpus: entity-relation-value facts composed into
// 2-4 sentence contexts with an answer span and a templated question.
std::vector<Triple> synth_corpus(std::uint64_t seed, int n);

// One record per line with fields id, context, answer_start, answer_end and
// optional question. Errors name the offending line.
std::vector<Triple> load_triples(const std::string& path);
void save_triples(const std::vector<Triple>& triples, const std::string& path);

}  // namespace qgen
