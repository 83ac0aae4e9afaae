#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace bimind::text {

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";

struct Tokens {
    std::vector<std::string> items;
    /// Set when the input held no tokens and `items` is the lone UNK stand-in.
    bool empty_input = false;
};

/// Lowercases ASCII, splits on whitespace and punctuation; each punctuation
/// character becomes its own token. Bytes >= 0x80 are treated as word bytes
/// so UTF-8 sequences stay intact.
Tokens tokenize(std::string_view text);

/// Same splitting rule, original case preserved, no UNK stand-in.
std::vector<std::string> split_tokens(std::string_view text);

bool is_punctuation_token(std::string_view token) noexcept;

enum class PosCategory : std::size_t { VerbAux = 0, Noun = 1, Adj = 2, Adv = 3, Other = 4 };
inline constexpr std::size_t kPosCategories = 5;

const char* pos_name(PosCategory c) noexcept;

/// Lexicon lookup, then suffix rules, else OTHER.
PosCategory pos_category(std::string_view token);

/// The category as a one-hot vector.
std::array<double, kPosCategories> pos_tag(std::string_view token);

} // namespace bimind::text
