#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace bimind::text {

/// Token <-> id map. Ids are contiguous from 0; 0 is PAD and 1 is UNK.
/// Immutable once built: lookups of unseen tokens return UNK.
class Vocabulary {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;

    Vocabulary();

    /// Keeps tokens seen at least `min_frequency` times. Ids after the two
    /// reserved ones are ordered by descending frequency, then lexicographically.
    static Vocabulary build(const std::vector<std::vector<std::string>>& token_lists, std::size_t min_frequency = 2);

    /// Restores a vocabulary from its id order (used by checkpoints).
    static Vocabulary from_tokens(std::vector<std::string> id_to_token, std::size_t min_frequency);

    std::size_t lookup(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::string& token(std::size_t id) const;
    std::size_t size() const noexcept { return id_to_token_.size(); }
    std::size_t min_frequency() const noexcept { return min_frequency_; }
    const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }

private:
    std::unordered_map<std::string, std::size_t> token_to_id_;
    std::vector<std::string> id_to_token_;
    std::size_t min_frequency_ = 2;
};

} // namespace bimind::text
