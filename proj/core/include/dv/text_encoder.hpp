#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dv/nn.hpp"

namespace dv {

// Fixed artifact vocabulary: colors, shapes, motion words, function words.
const std::vector<std::string>& vocabulary();
int vocab_id(const std::string& word);  // throws invalid_argument for OOV

struct TextEmbedding {
    Var emb;             // [S, text_dim]
    bool is_null = false;
};

// Learned token-embedding table with sinusoidal position addition; the null
// prompt maps to a single learned null row.
class TextEncoder {
  public:
    TextEncoder() = default;
    TextEncoder(ParamStore& ps, const std::string& prefix, int64_t text_dim, RandomStream& rng);

    TextEmbedding encode(const std::optional<std::vector<std::string>>& prompt) const;
    int64_t dim() const { return dim_; }

  private:
    Var table_;     // [V, D]
    Var null_row_;  // [1, D]
    int64_t dim_ = 0;
};

}  // namespace dv
