#include "dv/text_encoder.hpp"

#include <map>

namespace dv {

const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> vocab = {
        // colors
        "red", "green", "blue", "white", "black",
        // shapes
        "circle", "square", "triangle",
        // motion words
        "moves", "right", "left", "up", "down", "grows", "shrinks", "rotates",
        // function words
        "a", "the",
    };
    return vocab;
}

int vocab_id(const std::string& word) {
    static const std::map<std::string, int> index = [] {
        std::map<std::string, int> m;
        const auto& v = vocabulary();
        for (size_t i = 0; i < v.size(); ++i) m[v[i]] = static_cast<int>(i);
        return m;
    }();
    auto it = index.find(word);
    if (it == index.end()) throw invalid_argument("token not in vocabulary: \"" + word + "\"");
    return it->second;
}

TextEncoder::TextEncoder(ParamStore& ps, const std::string& prefix, int64_t text_dim, RandomStream& rng)
    : dim_(text_dim) {
    int64_t V = static_cast<int64_t>(vocabulary().size());
    table_ = ps.add(prefix + ".table", init_tensor({V, text_dim}, InitKind::Normal, rng, std::sqrt(static_cast<double>(text_dim))));
    null_row_ = ps.add(prefix + ".null", init_tensor({1, text_dim}, InitKind::Normal, rng, std::sqrt(static_cast<double>(text_dim))));
}

TextEmbedding TextEncoder::encode(const std::optional<std::vector<std::string>>& prompt) const {
    if (!prompt.has_value()) return {null_row_, true};
    if (prompt->empty()) return {null_row_, true};
    std::vector<int> ids;
    ids.reserve(prompt->size());
    for (const auto& w : *prompt) ids.push_back(vocab_id(w));
    Var emb = ops::embedding_rows(table_, ids);
    Tensor pos({static_cast<int64_t>(ids.size()), dim_});
    for (size_t s = 0; s < ids.size(); ++s) {
        Tensor row = sinusoidal_embedding(static_cast<double>(s), dim_);
        std::copy(row.data(), row.data() + dim_, pos.data() + static_cast<int64_t>(s) * dim_);
    }
    return {ops::add(emb, Var::constant(std::move(pos))), false};
}

}  // namespace dv
