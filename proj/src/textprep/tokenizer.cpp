#include "bimind/textprep/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

namespace bimind::text {

namespace {

enum class CharClass { Space, Punct, Word };

CharClass classify(unsigned char ch) {
    if (ch >= 0x80 || std::isalnum(ch)) return CharClass::Word;
    if (std::ispunct(ch)) return CharClass::Punct;
    return CharClass::Space;
}

template <typename Emit>
void scan(std::string_view text, Emit emit) {
    std::size_t i = 0;
    while (i < text.size()) {
        const auto cls = classify(static_cast<unsigned char>(text[i]));
        if (cls == CharClass::Space) {
            ++i;
        } else if (cls == CharClass::Punct) {
            emit(text.substr(i, 1));
            ++i;
        } else {
            std::size_t j = i;
            while (j < text.size() && classify(static_cast<unsigned char>(text[j])) == CharClass::Word) ++j;
            emit(text.substr(i, j - i));
            i = j;
        }
    }
}

// Closed classes plus frequent open-class words common in news text.
const std::unordered_map<std::string_view, PosCategory>& lexicon() {
    static const std::unordered_map<std::string_view, PosCategory> table = [] {
        std::unordered_map<std::string_view, PosCategory> m;
        for (auto w : {"is", "are", "was", "were", "be", "been", "being", "am", "do", "does", "did", "have", "has",
                       "had", "will", "would", "can", "could", "shall", "should", "may", "might", "must", "say",
                       "says", "said", "make", "makes", "made", "get", "gets", "got", "go", "goes", "went",
                       "know", "knows", "knew", "think", "take", "takes", "took", "see", "sees", "saw", "come",
                       "came", "want", "wants", "use", "uses", "used", "find", "found", "give", "gave", "tell",
                       "told", "show", "shows", "showed", "claim", "claims", "claimed", "report", "reports",
                       "reported", "spread", "spreads", "cause", "causes", "caused", "kill", "kills", "killed",
                       "cure", "cures", "cured", "prove", "proves", "proved", "deny", "denies", "denied",
                       "warn", "warns", "warned", "share", "shared", "post", "posted", "become", "became",
                       "seem", "seems", "believe", "believes", "help", "helps", "need", "needs", "let", "keep"})
            m.emplace(w, PosCategory::VerbAux);
        for (auto w : {"people", "time", "year", "years", "day", "days", "man", "men", "woman", "women", "child",
                       "children", "government", "world", "country", "state", "news", "virus", "vaccine",
                       "vaccines", "study", "studies", "doctor", "doctors", "health", "hospital", "case",
                       "cases", "death", "deaths", "president", "official", "officials", "city", "week",
                       "month", "company", "law", "video", "photo", "source", "evidence", "fact",
                       "facts", "story", "data", "water", "money", "war", "school", "home", "mask", "masks",
                       "toy", "toys", "doll", "brand", "price", "market", "china", "america", "trump", "biden"})
            m.emplace(w, PosCategory::Noun);
        for (auto w : {"good", "new", "first", "last", "long", "great", "little", "own", "other", "old", "right",
                       "big", "high", "different", "small", "large", "next", "early", "young", "important",
                       "few", "public", "bad", "same", "able", "real", "true", "false", "fake", "best",
                       "better", "worse", "worst", "safe", "dangerous", "deadly", "free", "full",
                       "major", "recent", "secret", "rare", "cheap", "original", "genuine", "authentic",
                       "counterfeit", "viral", "wrong", "correct", "huge"})
            m.emplace(w, PosCategory::Adj);
        for (auto w : {"not", "very", "also", "just", "now", "then", "still", "even", "never", "always",
                       "often", "here", "there", "too", "well", "soon", "already", "almost", "again", "ever",
                       "yet", "perhaps", "maybe", "indeed", "instead", "once", "today", "tomorrow",
                       "yesterday", "n't", "away", "back", "far", "quite", "rather", "so"})
            m.emplace(w, PosCategory::Adv);
        return m;
    }();
    return table;
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() + 2 && s.substr(s.size() - suffix.size()) == suffix;
}

bool has_letter(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
}

} // namespace

Tokens tokenize(std::string_view text) {
    Tokens out;
    scan(text, [&](std::string_view tok) {
        std::string lowered(tok);
        for (auto& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        out.items.push_back(std::move(lowered));
    });
    if (out.items.empty()) {
        out.items.emplace_back(kUnkToken);
        out.empty_input = true;
    }
    return out;
}

std::vector<std::string> split_tokens(std::string_view text) {
    std::vector<std::string> out;
    scan(text, [&](std::string_view tok) { out.emplace_back(tok); });
    return out;
}

bool is_punctuation_token(std::string_view token) noexcept {
    return token.size() == 1 && classify(static_cast<unsigned char>(token[0])) == CharClass::Punct;
}

const char* pos_name(PosCategory c) noexcept {
    switch (c) {
    case PosCategory::VerbAux: return "VERB/AUX";
    case PosCategory::Noun: return "NOUN";
    case PosCategory::Adj: return "ADJ";
    case PosCategory::Adv: return "ADV";
    case PosCategory::Other: return "OTHER";
    }
    return "OTHER";
}

PosCategory pos_category(std::string_view token) {
    const auto& lex = lexicon();
    if (auto it = lex.find(token); it != lex.end()) return it->second;
    if (!has_letter(token)) return PosCategory::Other;
    if (ends_with(token, "ly")) return PosCategory::Adv;
    for (auto s : {"ous", "ful", "ive", "al"})
        if (ends_with(token, s)) return PosCategory::Adj;
    for (auto s : {"ize", "ate", "ify"})
        if (ends_with(token, s)) return PosCategory::VerbAux;
    for (auto s : {"tion", "ness", "ment", "er", "ism"})
        if (ends_with(token, s)) return PosCategory::Noun;
    return PosCategory::Other;
}

std::array<double, kPosCategories> pos_tag(std::string_view token) {
    std::array<double, kPosCategories> v{};
    v[static_cast<std::size_t>(pos_category(token))] = 1.0;
    return v;
}

} // namespace bimind::text
