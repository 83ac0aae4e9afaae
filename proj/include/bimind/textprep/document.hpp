#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "bimind/numerics/ops.hpp"
#include "bimind/textprep/tokenizer.hpp"
#include "bimind/textprep/vocabulary.hpp"

namespace bimind::text {

/// One dataset line. Label convention: 1 = correct information, 0 = incorrect.
struct Record {
    std::string id;
    std::string text;
    int label = 0;
};

struct TokenizedDoc {
    std::string id;
    std::string text;
    std::vector<std::size_t> token_ids;
    std::vector<PosCategory> pos;
    /// Nonzero exactly at non-PAD positions.
    num::Mask mask;
    int label = 0;
    bool empty_input = false;
    bool truncated = false;

    std::size_t length() const noexcept { return token_ids.size(); }
    std::size_t token_count() const noexcept;
    /// L x 5 one-hot POS attributes.
    num::Tensor pos_matrix() const;
    /// Copy right-padded with PAD tokens (POS OTHER, mask 0) up to `length`.
    TokenizedDoc padded_to(std::size_t length) const;
};

TokenizedDoc make_doc(const Record& record, const Vocabulary& vocab, std::size_t l_max);

/// Row gather of the embedding table. Throws VocabularyError for ids >= V.
num::Var embed(const TokenizedDoc& doc, num::Var table);

inline constexpr std::size_t kContentFeatureDim = 8;

/// Surface features of the raw text, each clipped to [0, 1]:
/// token count / l_max, type-token ratio, mean token length / 10,
/// punctuation ratio, ratio of tokens containing a digit, all-uppercase word
/// ratio, POS-category entropy / ln 5, UNK ratio (0 without a vocabulary).
using ContentFeatures = std::array<double, kContentFeatureDim>;

ContentFeatures content_features(std::string_view text, const Vocabulary* vocab = nullptr, std::size_t l_max = 256);

// JSON-lines dataset: {"id": string, "text": string, "label": 0|1} per line.
std::vector<Record> read_dataset(std::istream& in);
std::vector<Record> load_dataset(const std::string& path);
void write_dataset(std::ostream& out, const std::vector<Record>& records);
void save_dataset(const std::string& path, const std::vector<Record>& records);

} // namespace bimind::text
