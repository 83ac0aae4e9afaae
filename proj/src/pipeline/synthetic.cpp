#include "bimind/pipeline/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "bimind/errors.hpp"

namespace bimind::pipe {

namespace {

const std::vector<std::string> kTrueFamily = {"confirmed", "verified", "accurate", "authentic",
                                              "documented", "genuine", "proven", "validated"};
const std::vector<std::string> kFalseFamily = {"debunked", "fabricated", "hoax", "refuted",
                                               "bogus", "misleading", "disproven", "doctored"};
const std::vector<std::string> kReliableSource = {"journal", "agency", "registry", "archive"};
const std::vector<std::string> kUnreliableSource = {"rumor", "gossip", "chainmail", "anonymous"};

const std::vector<std::string> kFiller = {
    "the",    "a",      "report", "says",   "people", "claim",  "new",    "study",  "city",    "week",
    "after",  "local",  "online", "shared", "post",   "about",  "many",   "said",   "today",   "from",
    "this",   "that",   "with",   "their",  "some",   "more",   "health", "news",   "group",   "year",
    "among",  "during", "before", "while",  "across", "still",  "again",  "first",  "public",  "recent",
    "story",  "event",  "photo",  "video",  "update", "source", "region", "nation", "company", "school",
    "market", "street", "family", "friend", "doctor", "worker", "leader", "member", "number",  "result"};

std::string pseudo_word(std::mt19937_64& rng) {
    static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr"};
    static const char* vowels[] = {"a", "e", "i", "o", "u"};
    std::uniform_int_distribution<int> syl(3, 4), on(0, 15), vo(0, 4);
    std::string w;
    const int n = syl(rng);
    for (int i = 0; i < n; ++i) {
        w += onsets[on(rng)];
        w += vowels[vo(rng)];
    }
    return w;
}

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng, std::size_t n = 0) {
    if (n == 0 || n > v.size()) n = v.size();
    return v[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)];
}

std::string join_shuffled(std::vector<std::string> words, std::mt19937_64& rng) {
    std::shuffle(words.begin(), words.end(), rng);
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

std::string make_id(char prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%05zu", prefix, i);
    return buf;
}

void add_fillers(std::vector<std::string>& words, std::size_t n, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < n; ++i) words.push_back(pick(kFiller, rng));
}

std::vector<text::Record> content_corpus(const SynthSpec& s, std::mt19937_64& rng) {
    std::vector<text::Record> out;
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<std::size_t> decisive(1, std::max<std::size_t>(1, s.decisive_per_doc));
    for (std::size_t i = 0; i < s.instances; ++i) {
        const int label = coin(rng) ? 1 : 0;
        std::vector<std::string> words;
        const std::size_t n = decisive(rng);
        for (std::size_t j = 0; j < n; ++j) words.push_back(pick(label ? kTrueFamily : kFalseFamily, rng, s.family_size));
        add_fillers(words, s.filler_per_doc + 2, rng);
        out.push_back({make_id('c', i), join_shuffled(words, rng), label});
    }
    return out;
}

std::vector<text::Record> knowledge_corpus(const SynthSpec& s, std::mt19937_64& rng) {
    std::vector<text::Record> out;
    std::bernoulli_distribution coin(0.5);
    std::set<std::string> used(kFiller.begin(), kFiller.end());
    for (const auto* fam : {&kTrueFamily, &kFalseFamily, &kReliableSource, &kUnreliableSource}) used.insert(fam->begin(), fam->end());
    auto fresh = [&] {
        for (;;) {
            auto w = pseudo_word(rng);
            if (used.insert(w).second) return w;
        }
    };
    while (out.size() < s.instances) {
        const bool truth = coin(rng);
        std::vector<std::vector<std::string>> slices(s.claims_per_cluster);
        std::vector<std::string> markers;
        for (auto& slice : slices) {
            for (std::size_t m = 0; m < s.markers_per_claim; ++m) {
                slice.push_back(fresh());
                markers.push_back(slice.back());
            }
        }
        for (const auto& slice : slices) {
            if (out.size() >= s.instances) break;
            auto words = slice;
            add_fillers(words, s.filler_per_doc, rng);
            out.push_back({make_id('k', out.size()), join_shuffled(words, rng), truth ? 1 : 0});
        }
        for (std::size_t e = 0; e < s.evidence_per_cluster && out.size() < s.instances; ++e) {
            const bool reliable = coin(rng);
            auto words = markers;
            const auto& token = pick(truth ? kTrueFamily : kFalseFamily, rng, s.family_size);
            for (std::size_t r = 0; r < s.truth_repeat; ++r) words.push_back(token);
            words.push_back(pick(reliable ? kReliableSource : kUnreliableSource, rng));
            add_fillers(words, s.filler_per_doc, rng);
            out.push_back({make_id('k', out.size()), join_shuffled(words, rng), reliable ? 1 : 0});
        }
    }
    return out;
}

} // namespace

void SynthSpec::validate() const {
    if (kind != "knowledge" && kind != "content") throw ConfigError("synthetic kind must be knowledge or content, got '" + kind + "'");
    if (instances == 0) throw ConfigError("synthetic corpus needs at least one instance");
    if (family_size == 0 || family_size > 8) throw ConfigError("family_size must be in 1..8");
    if (kind == "knowledge" && truth_repeat == 0) throw ConfigError("truth_repeat must be at least 1");
    if (kind == "knowledge" && (claims_per_cluster == 0 || markers_per_claim == 0)) {
        throw ConfigError("knowledge corpus needs claims and markers per cluster");
    }
}

SynthSpec parse_synth_spec(const std::string& name) {
    SynthSpec s;
    if (name == "knowledge") return s;
    if (name == "content") {
        s.kind = name;
        s.filler_per_doc = 3;
        s.family_size = 8;
        return s;
    }
    std::ifstream in(name);
    if (!in) throw ConfigError("'" + name + "' is neither a preset (knowledge, content) nor a readable corpus settings file");
    std::string line;
    while (std::getline(in, line)) {
        if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
        const auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos) throw ConfigError("corpus settings: expected key = value in '" + line + "'");
        auto strip = [](std::string v) {
            v.erase(0, v.find_first_not_of(" \t\r"));
            v.erase(v.find_last_not_of(" \t\r") + 1);
            return v;
        };
        const std::string key = strip(line.substr(0, eq)), value = strip(line.substr(eq + 1));
        auto count = [&] {
            try {
                return static_cast<std::size_t>(std::stoull(value));
            } catch (const std::exception&) {
                throw ConfigError("corpus settings: " + key + " expects an integer");
            }
        };
        if (key == "kind") s.kind = value;
        else if (key == "instances") s.instances = count();
        else if (key == "seed") s.seed = count();
        else if (key == "claims_per_cluster") s.claims_per_cluster = count();
        else if (key == "evidence_per_cluster") s.evidence_per_cluster = count();
        else if (key == "markers_per_claim") s.markers_per_claim = count();
        else if (key == "filler_per_doc") s.filler_per_doc = count();
        else if (key == "decisive_per_doc") s.decisive_per_doc = count();
        else if (key == "family_size") s.family_size = count();
        else if (key == "truth_repeat") s.truth_repeat = count();
        else throw ConfigError("corpus settings: unknown key '" + key + "'");
    }
    s.validate();
    return s;
}

std::vector<text::Record> generate_corpus(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    return spec.kind == "content" ? content_corpus(spec, rng) : knowledge_corpus(spec, rng);
}

} // namespace bimind::pipe
