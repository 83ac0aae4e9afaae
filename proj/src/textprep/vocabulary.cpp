#include "bimind/textprep/vocabulary.hpp"

#include <algorithm>
#include <map>

#include "bimind/errors.hpp"
#include "bimind/textprep/tokenizer.hpp"

namespace bimind::text {

Vocabulary::Vocabulary() {
    id_to_token_ = {kPadToken, kUnkToken};
    token_to_id_ = {{kPadToken, kPad}, {kUnkToken, kUnk}};
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& token_lists, std::size_t min_frequency) {
    std::map<std::string, std::size_t> counts;
    for (const auto& list : token_lists)
        for (const auto& tok : list) ++counts[tok];

    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [tok, n] : counts) {
        if (n >= min_frequency && tok != kPadToken && tok != kUnkToken) kept.emplace_back(tok, n);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocabulary v;
    v.min_frequency_ = min_frequency;
    for (auto& [tok, n] : kept) {
        v.token_to_id_.emplace(tok, v.id_to_token_.size());
        v.id_to_token_.push_back(tok);
    }
    return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token, std::size_t min_frequency) {
    if (id_to_token.size() < 2 || id_to_token[kPad] != kPadToken || id_to_token[kUnk] != kUnkToken) {
        throw VocabularyError("vocabulary must start with the reserved PAD and UNK tokens");
    }
    Vocabulary v;
    v.min_frequency_ = min_frequency;
    v.id_to_token_ = std::move(id_to_token);
    v.token_to_id_.clear();
    for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
        if (!v.token_to_id_.emplace(v.id_to_token_[i], i).second) {
            throw VocabularyError("duplicate vocabulary token '" + v.id_to_token_[i] + "'");
        }
    }
    return v;
}

std::size_t Vocabulary::lookup(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return token_to_id_.count(std::string(token)) != 0; }

const std::string& Vocabulary::token(std::size_t id) const {
    if (id >= id_to_token_.size()) {
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(id_to_token_.size()));
    }
    return id_to_token_[id];
}

} // namespace bimind::text
