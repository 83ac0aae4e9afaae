#include "bimind/textprep/document.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

#include "bimind/errors.hpp"
#include "json.hpp"

namespace bimind::text {

using nlohmann::json;

std::size_t TokenizedDoc::token_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

num::Tensor TokenizedDoc::pos_matrix() const {
    num::Tensor p({length(), kPosCategories});
    for (std::size_t i = 0; i < length(); ++i) p(i, static_cast<std::size_t>(pos[i])) = 1.0;
    return p;
}

TokenizedDoc TokenizedDoc::padded_to(std::size_t target) const {
    TokenizedDoc out = *this;
    while (out.token_ids.size() < target) {
        out.token_ids.push_back(Vocabulary::kPad);
        out.pos.push_back(PosCategory::Other);
        out.mask.push_back(0);
    }
    return out;
}

TokenizedDoc make_doc(const Record& record, const Vocabulary& vocab, std::size_t l_max) {
    if (l_max == 0) throw ConfigError("l_max must be positive");
    if (record.label != 0 && record.label != 1) {
        throw LabelError("record '" + record.id + "' has label " + std::to_string(record.label));
    }
    auto toks = tokenize(record.text);
    TokenizedDoc doc;
    doc.id = record.id;
    doc.text = record.text;
    doc.label = record.label;
    doc.empty_input = toks.empty_input;
    doc.truncated = toks.items.size() > l_max;
    const std::size_t n = std::min(toks.items.size(), l_max);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& tok = toks.items[i];
        doc.token_ids.push_back(vocab.lookup(tok));
        doc.pos.push_back(doc.empty_input ? PosCategory::Other : pos_category(tok));
        doc.mask.push_back(1);
    }
    return doc;
}

num::Var embed(const TokenizedDoc& doc, num::Var table) {
    const std::size_t v = table.value().rows();
    for (auto id : doc.token_ids) {
        if (id >= v) {
            throw VocabularyError("token id " + std::to_string(id) + " outside embedding table of " +
                                  std::to_string(v) + " rows");
        }
    }
    return num::gather_rows(table, doc.token_ids);
}

ContentFeatures content_features(std::string_view text, const Vocabulary* vocab, std::size_t l_max) {
    ContentFeatures f{};
    const auto tokens = split_tokens(text);
    if (tokens.empty()) {
        f[7] = 1.0;
        return f;
    }
    const double n = static_cast<double>(tokens.size());

    std::unordered_set<std::string> types;
    std::array<double, kPosCategories> pos_counts{};
    double chars = 0, punct = 0, digit_tokens = 0, word_tokens = 0, upper_words = 0, unk = 0;
    for (const auto& tok : tokens) {
        std::string lower = tok;
        for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        types.insert(lower);
        chars += static_cast<double>(tok.size());
        if (is_punctuation_token(tok)) punct += 1;
        if (std::any_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
            digit_tokens += 1;
        std::size_t letters = 0, uppers = 0;
        for (char c : tok) {
            if (std::isalpha(static_cast<unsigned char>(c))) {
                ++letters;
                if (std::isupper(static_cast<unsigned char>(c))) ++uppers;
            }
        }
        if (letters > 0) {
            word_tokens += 1;
            if (letters >= 2 && uppers == letters) upper_words += 1;
        }
        pos_counts[static_cast<std::size_t>(pos_category(lower))] += 1;
        if (vocab && !vocab->contains(lower)) unk += 1;
    }
    double pos_entropy = 0.0;
    for (double c : pos_counts) {
        if (c > 0) pos_entropy -= (c / n) * std::log(c / n);
    }

    f[0] = n / static_cast<double>(std::max<std::size_t>(l_max, 1));
    f[1] = static_cast<double>(types.size()) / n;
    f[2] = chars / n / 10.0;
    f[3] = punct / n;
    f[4] = digit_tokens / n;
    f[5] = word_tokens > 0 ? upper_words / word_tokens : 0.0;
    f[6] = pos_entropy / std::log(static_cast<double>(kPosCategories));
    f[7] = unk / n;
    for (auto& v : f) v = std::clamp(v, 0.0, 1.0);
    return f;
}

std::vector<Record> read_dataset(std::istream& in) {
    std::vector<Record> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DatasetError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j.contains("text") || !j.contains("label")) {
            throw DatasetError("line " + std::to_string(lineno) + ": expected fields id, text, label");
        }
        Record r;
        if (j["id"].is_string()) {
            r.id = j["id"].get<std::string>();
        } else if (j["id"].is_number_integer()) {
            r.id = std::to_string(j["id"].get<long long>());
        } else {
            throw DatasetError("line " + std::to_string(lineno) + ": id must be a string");
        }
        if (!j["text"].is_string()) throw DatasetError("line " + std::to_string(lineno) + ": text must be a string");
        r.text = j["text"].get<std::string>();
        if (!j["label"].is_number_integer()) {
            throw LabelError("line " + std::to_string(lineno) + ": label must be 0 or 1");
        }
        const auto label = j["label"].get<long long>();
        if (label != 0 && label != 1) {
            throw LabelError("line " + std::to_string(lineno) + ": label must be 0 or 1, got " + std::to_string(label));
        }
        r.label = static_cast<int>(label);
        if (!seen.insert(r.id).second) throw DatasetError("line " + std::to_string(lineno) + ": duplicate id " + r.id);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<Record> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open dataset " + path);
    return read_dataset(in);
}

void write_dataset(std::ostream& out, const std::vector<Record>& records) {
    for (const auto& r : records) out << json{{"id", r.id}, {"text", r.text}, {"label", r.label}}.dump() << '\n';
}

void save_dataset(const std::string& path, const std::vector<Record>& records) {
    std::ofstream out(path);
    if (!out) throw DatasetError("cannot write dataset " + path);
    write_dataset(out, records);
}

} // namespace bimind::text
