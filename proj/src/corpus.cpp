#include "qgen/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "qgen/rng.hpp"

namespace qgen {

void validate_triple(const Triple& t) {
    const std::string where = t.id.empty() ? "triple" : "triple " + t.id;
    if (t.context.empty()) throw std::invalid_argument(where + ": empty context");
    const int len = static_cast<int>(t.context.size());
    if (t.answer_start < 0 || t.answer_start > t.answer_end || t.answer_end >= len) {
        throw std::invalid_argument(where + ": answer span [" + std::to_string(t.answer_start) +
                                    "," + std::to_string(t.answer_end) +
                                    "] out of bounds for context of length " + std::to_string(len));
    }
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char raw : text) {
        const unsigned char c = static_cast<unsigned char>(std::tolower(raw));
        if (std::isalnum(c)) {
            cur += static_cast<char>(c);
        } else {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
            if (!std::isspace(c)) out.push_back(std::string(1, static_cast<char>(c)));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) s += ' ';
        s += tokens[i];
    }
    return s;
}

Vocabulary build_vocab(const std::vector<Triple>& triples, int max_size) {
    if (max_size < 4) throw std::invalid_argument("build_vocab: max_size must be at least 4");
    std::unordered_map<std::string, long long> counts;
    for (const Triple& t : triples) {
        for (const auto& tok : t.context) counts[tok]++;
        for (const auto& tok : t.question) counts[tok]++;
    }
    std::vector<std::pair<std::string, long long>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    for (const char* tok : {"<pad>", "<sos>", "<eos>", "<unk>"}) {
        v.token_to_id[tok] = static_cast<int>(v.id_to_token.size());
        v.id_to_token.push_back(tok);
    }
    const int keep = max_size - 4;
    for (int i = 0; i < keep && i < static_cast<int>(ranked.size()); ++i) {
        const std::string& tok = ranked[i].first;
        if (v.contains(tok)) continue;  // reserved literals never duplicated
        v.token_to_id[tok] = static_cast<int>(v.id_to_token.size());
        v.id_to_token.push_back(tok);
    }
    return v;
}

EncodedExample encode_example(const Triple& triple, const Vocabulary& vocab) {
    validate_triple(triple);
    EncodedExample e;
    std::unordered_map<std::string, int> oov_ids;
    for (const auto& tok : triple.context) {
        if (vocab.contains(tok)) {
            const int id = vocab.id_of(tok);
            e.context_ids.push_back(id);
            e.context_ext_ids.push_back(id);
        } else {
            e.context_ids.push_back(Vocabulary::kUnk);
            auto it = oov_ids.find(tok);
            if (it == oov_ids.end()) {
                const int ext = vocab.size() + static_cast<int>(e.oov_map.size());
                it = oov_ids.emplace(tok, ext).first;
                e.oov_map.push_back(tok);
            }
            e.context_ext_ids.push_back(it->second);
        }
    }
    for (const auto& tok : triple.question) {
        const int base = vocab.contains(tok) ? vocab.id_of(tok) : Vocabulary::kUnk;
        e.question_ids.push_back(base);
        if (base != Vocabulary::kUnk) {
            e.extended_ids.push_back(base);
        } else {
            auto it = oov_ids.find(tok);
            e.extended_ids.push_back(it == oov_ids.end() ? Vocabulary::kUnk : it->second);
        }
    }
    return e;
}

std::vector<std::string> decode_extended(const std::vector<int>& ids, const Vocabulary& vocab,
                                         const std::vector<std::string>& oov_map) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= vocab.size() + static_cast<int>(oov_map.size())) {
            throw std::invalid_argument("decode_extended: id " + std::to_string(id) +
                                        " outside extended vocabulary");
        }
        out.push_back(id < vocab.size() ? vocab.token_of(id)
                                        : oov_map[static_cast<std::size_t>(id - vocab.size())]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace {

using Tokens = std::vector<std::string>;

const Tokens kFirsts = {"anna",  "boris", "carla", "derek", "elena", "farid",
                        "grace", "henry", "irene", "jonas", "karim", "lena"};
const Tokens kLasts = {"abbott", "becker", "cohen",  "duval",  "eriksen", "fontaine",
                       "garcia", "hansen", "ivanov", "jansen", "keller",  "lopez"};
const Tokens kOrgAdjs = {"northern", "southern", "eastern", "western",
                         "united",   "royal",    "central", "free"};
const Tokens kOrgNouns = {"institute", "society", "company", "guild", "council", "union"};
const Tokens kRegions = {"arbona",  "belgra",  "cardia", "dormund", "elvas",  "feronia",
                         "galmont", "harlan",  "istria", "jorvik",  "kalmar", "lorvia"};
const Tokens kCities = {"ashford",  "brinton",  "calder",   "davenport", "eastgate", "fairview",
                        "grandale", "hillmont", "ironbury", "junction",  "kingsport", "lakewood"};
const Tokens kBookAdjs = {"silent", "golden", "broken", "hidden", "distant", "burning"};
const Tokens kBookNouns = {"river", "mountain", "garden", "tower", "harbor", "forest"};
const Tokens kJobs = {"engineer", "teacher", "doctor",  "merchant",
                      "farmer",   "painter", "scholar", "judge"};
const Tokens kYears = {"1821", "1833", "1845", "1852", "1867", "1874", "1889", "1896",
                       "1901", "1912", "1923", "1934", "1948", "1956", "1967", "1978"};
const Tokens kColors = {"crimson", "azure", "emerald", "amber", "ivory", "violet"};

const std::string& pick(Rng& rng, const Tokens& pool) {
    return pool[static_cast<std::size_t>(rng.randint(pool.size()))];
}

struct QaTemplate {
    Tokens question;  // ends with "?"
    int off = 0;      // answer offset within the fact sentence
    int len = 1;
};

struct Fact {
    Tokens sentence;  // ends with "."
    std::vector<QaTemplate> qas;
};

Fact make_fact(Rng& rng) {
    Fact f;
    switch (rng.randint(7)) {
        case 0: {  // founding
            const auto &p0 = pick(rng, kFirsts), &p1 = pick(rng, kLasts);
            const auto &oa = pick(rng, kOrgAdjs), &on = pick(rng, kOrgNouns);
            const auto& y = pick(rng, kYears);
            f.sentence = {p0, p1, "founded", "the", oa, on, "in", y, "."};
            f.qas = {{{"who", "founded", "the", oa, on, "?"}, 0, 2},
                     {{"when", "was", "the", oa, on, "founded", "?"}, 7, 1},
                     {{"what", "did", p0, p1, "found", "?"}, 3, 3}};
            break;
        }
        case 1: {  // leadership
            const auto &p0 = pick(rng, kFirsts), &p1 = pick(rng, kLasts);
            const auto &oa = pick(rng, kOrgAdjs), &on = pick(rng, kOrgNouns);
            f.sentence = {p0, p1, "leads", "the", oa, on, "."};
            f.qas = {{{"who", "leads", "the", oa, on, "?"}, 0, 2},
                     {{"what", "does", p0, p1, "lead", "?"}, 3, 3}};
            break;
        }
        case 2: {  // capital
            const auto& c = pick(rng, kCities);
            const auto& r = pick(rng, kRegions);
            f.sentence = {c, "is", "the", "capital", "of", r, "."};
            f.qas = {{{"what", "is", "the", "capital", "of", r, "?"}, 0, 1},
                     {{"which", "region", "has", c, "as", "its", "capital", "?"}, 5, 1}};
            break;
        }
        case 3: {  // authorship
            const auto &p0 = pick(rng, kFirsts), &p1 = pick(rng, kLasts);
            const auto &ba = pick(rng, kBookAdjs), &bn = pick(rng, kBookNouns);
            const auto& y = pick(rng, kYears);
            f.sentence = {p0, p1, "wrote", "the", ba, bn, "in", y, "."};
            f.qas = {{{"who", "wrote", "the", ba, bn, "?"}, 0, 2},
                     {{"when", "was", "the", ba, bn, "written", "?"}, 7, 1},
                     {{"what", "did", p0, p1, "write", "?"}, 3, 3}};
            break;
        }
        case 4: {  // occupation
            const auto &p0 = pick(rng, kFirsts), &p1 = pick(rng, kLasts);
            const auto& j = pick(rng, kJobs);
            const auto& c = pick(rng, kCities);
            f.sentence = {p0, p1, "works", "as", "a", j, "in", c, "."};
            f.qas = {{{"where", "does", p0, p1, "work", "?"}, 7, 1},
                     {{"what", "does", p0, p1, "do", "?"}, 5, 1}};
            break;
        }
        case 5: {  // birthplace
            const auto &p0 = pick(rng, kFirsts), &p1 = pick(rng, kLasts);
            const auto& c = pick(rng, kCities);
            const auto& y = pick(rng, kYears);
            f.sentence = {p0, p1, "was", "born", "in", c, "in", y, "."};
            f.qas = {{{"where", "was", p0, p1, "born", "?"}, 5, 1},
                     {{"when", "was", p0, p1, "born", "?"}, 7, 1}};
            break;
        }
        default: {  // flag colour
            const auto& r = pick(rng, kRegions);
            const auto& col = pick(rng, kColors);
            f.sentence = {"the", "flag", "of", r, "is", col, "."};
            f.qas = {{{"what", "color", "is", "the", "flag", "of", r, "?"}, 5, 1}};
            break;
        }
    }
    return f;
}

const Tokens kAmble = {"according", "to", "the", "passage"};

// Questions carry an optional framing phrase, mirroring how natural corpora
// mix plain questions with "according to the passage"-style variants.
Tokens decorate_question(Rng& rng, const Tokens& base) {
    const double u = rng.uniform();
    Tokens q;
    if (u < 0.25) {
        q = kAmble;
        q.push_back(",");
        q.insert(q.end(), base.begin(), base.end());
    } else if (u < 0.40) {
        q.assign(base.begin(), base.end() - 1);  // drop "?"
        q.push_back(",");
        q.insert(q.end(), kAmble.begin(), kAmble.end());
        q.push_back("?");
    } else {
        q = base;
    }
    return q;
}

}  // namespace

std::vector<Triple> synth_corpus(std::uint64_t seed, int n) {
    if (n < 1) throw std::invalid_argument("synth_corpus: n must be at least 1");
    Rng rng(seed);
    std::vector<Triple> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int nfacts = 2 + static_cast<int>(rng.randint(3));
        std::vector<Fact> facts;
        facts.reserve(static_cast<std::size_t>(nfacts));
        for (int k = 0; k < nfacts; ++k) facts.push_back(make_fact(rng));
        const int target = static_cast<int>(rng.randint(static_cast<std::uint64_t>(nfacts)));

        Triple t;
        char id[32];
        std::snprintf(id, sizeof(id), "synth-%06d", i + 1);
        t.id = id;
        int target_base = 0;
        for (int k = 0; k < nfacts; ++k) {
            if (k == target) target_base = static_cast<int>(t.context.size());
            t.context.insert(t.context.end(), facts[k].sentence.begin(),
                             facts[k].sentence.end());
        }
        const Fact& tf = facts[static_cast<std::size_t>(target)];
        const QaTemplate& qa =
            tf.qas[static_cast<std::size_t>(rng.randint(tf.qas.size()))];
        t.answer_start = target_base + qa.off;
        t.answer_end = t.answer_start + qa.len - 1;
        t.question = decorate_question(rng, qa.question);
        validate_triple(t);
        out.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Triples files
// ---------------------------------------------------------------------------

std::vector<Triple> load_triples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("triples: cannot open: " + path);
    std::vector<Triple> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error("triples: parse error at " + where + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() ||
            !j.contains("context") || !j["context"].is_string() ||
            !j.contains("answer_start") || !j["answer_start"].is_number_integer() ||
            !j.contains("answer_end") || !j["answer_end"].is_number_integer()) {
            throw std::runtime_error("triples: malformed record at " + where +
                                     " (need id, context, answer_start, answer_end)");
        }
        Triple t;
        t.id = j["id"].get<std::string>();
        t.context = tokenize(j["context"].get<std::string>());
        t.answer_start = j["answer_start"].get<int>();
        t.answer_end = j["answer_end"].get<int>();
        if (j.contains("question") && !j["question"].is_null()) {
            if (!j["question"].is_string()) {
                throw std::runtime_error("triples: question must be a string at " + where);
            }
            t.question = tokenize(j["question"].get<std::string>());
        }
        try {
            validate_triple(t);
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("triples: invalid record at " + where + ": " + e.what());
        }
        out.push_back(std::move(t));
    }
    return out;
}

void save_triples(const std::vector<Triple>& triples, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("triples: cannot open for writing: " + path);
    for (const Triple& t : triples) {
        nlohmann::json j;
        j["id"] = t.id;
        j["context"] = join_tokens(t.context);
        j["answer_start"] = t.answer_start;
        j["answer_end"] = t.answer_end;
        if (t.has_question()) j["question"] = join_tokens(t.question);
        out << j.dump() << "\n";
    }
    if (!out) throw std::runtime_error("triples: write failed: " + path);
}

}  // namespace qgen
