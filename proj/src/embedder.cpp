#include "crossview/embedder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "crossview/rng.hpp"

namespace crossview {

namespace {

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

std::vector<double> normalized_or_throw(std::vector<double> v, const std::string& what) {
    const double n = norm(v);
    if (!(n > 0.0) || !std::isfinite(n))
        throw std::invalid_argument("lexicon: zero or non-finite vector for '" + what + "'");
    for (double& x : v) x /= n;
    return v;
}

PromptLexicon lexicon_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("prompts") || !j["prompts"].is_object())
        throw std::invalid_argument("lexicon: expected object with a 'prompts' map");
    PromptLexicon lex;
    lex.dim = j.value("dim", 0);
    for (const auto& [key, val] : j["prompts"].items()) {
        if (!val.is_array()) throw std::invalid_argument("lexicon: vector for '" + key + "' is not an array");
        std::vector<double> v = val.get<std::vector<double>>();
        if (lex.dim == 0) lex.dim = static_cast<int>(v.size());
        if (static_cast<int>(v.size()) != lex.dim)
            throw std::invalid_argument("lexicon: vector for '" + key + "' has wrong dimension");
        lex.entries[key] = normalized_or_throw(std::move(v), key);
    }
    if (lex.entries.empty()) throw std::invalid_argument("lexicon: no prompts defined");
    return lex;
}

// deterministic string hash (FNV-1a 64) for per-keyword seeding
std::uint64_t hash_keyword(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

const std::vector<double>& PromptLexicon::at(const std::string& keyword) const {
    auto it = entries.find(keyword);
    if (it == entries.end())
        throw std::invalid_argument("unknown prompt keyword '" + keyword + "'");
    return it->second;
}

PromptLexicon lexicon_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("lexicon: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return lexicon_from_json_text(ss.str());
}

PromptLexicon lexicon_from_json_text(const std::string& text) {
    return lexicon_from_json(nlohmann::json::parse(text));
}

PromptLexicon default_lexicon(int dim) {
    if (dim != 3)
        throw std::invalid_argument("default lexicon only covers 3-channel mean-color space");
    PromptLexicon lex;
    lex.dim = 3;
    auto put = [&](const char* k, double r, double g, double b) {
        lex.entries[k] = normalized_or_throw({r, g, b}, k);
    };
    put("red", 1.0, 0.0, 0.0);
    put("green", 0.0, 1.0, 0.0);
    put("blue", 0.0, 0.0, 1.0);
    put("white", 1.0, 1.0, 1.0);
    put("spring", 0.35, 0.85, 0.35);
    put("summer", 0.55, 0.80, 0.45);
    put("autumn", 0.85, 0.55, 0.20);
    put("winter", 0.75, 0.80, 0.95);
    put("night", 0.15, 0.15, 0.40);
    return lex;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    const double na = norm(a);
    const double nb = norm(b);
    if (!(na > 0.0) || !(nb > 0.0)) return 0.0;
    return dot / (na * nb);
}

MeanColorEmbedder::MeanColorEmbedder(int channels, PromptLexicon lexicon)
    : channels_(channels), lexicon_(std::move(lexicon)) {
    if (channels <= 0) throw std::invalid_argument("embedder: channels must be positive");
    if (lexicon_.entries.empty() && channels == 3) lexicon_ = default_lexicon(3);
    if (!lexicon_.entries.empty() && lexicon_.dim != channels)
        throw std::invalid_argument("embedder: lexicon dimension does not match channels");
}

Embedding MeanColorEmbedder::embed_image(const Raster& r) const {
    if (r.channels != channels_)
        throw std::invalid_argument("embedder: raster channels do not match embedder dim");
    std::vector<double> m(static_cast<std::size_t>(channels_));
    for (int c = 0; c < channels_; ++c) m[static_cast<std::size_t>(c)] = channel_mean(r, c);
    const double n = norm(m);
    if (!(n > 0.0)) return {std::vector<double>(static_cast<std::size_t>(channels_), 0.0), true};
    for (double& x : m) x /= n;
    return {std::move(m), false};
}

Embedding MeanColorEmbedder::embed_text(const std::string& keyword) const {
    return {lexicon_.at(keyword), false};
}

Raster MeanColorEmbedder::grad_similarity(const Raster& r,
                                          const std::vector<double>& target) const {
    if (static_cast<int>(target.size()) != channels_)
        throw std::invalid_argument("embedder: target dimension mismatch");
    if (r.channels != channels_)
        throw std::invalid_argument("embedder: raster channels do not match embedder dim");
    std::vector<double> m(static_cast<std::size_t>(channels_));
    for (int c = 0; c < channels_; ++c) m[static_cast<std::size_t>(c)] = channel_mean(r, c);
    const double n = norm(m);
    Raster grad(r.channels, r.height, r.width);
    if (!(n > 0.0)) return grad;  // degenerate: zero gradient
    // sim = (m.t)/|m|;  d sim/d m_c = t_c/|m| - sim * m_c/|m|^2;
    // each pixel of channel c contributes 1/(H*W) to m_c.
    double dot = 0.0;
    for (int c = 0; c < channels_; ++c) dot += m[static_cast<std::size_t>(c)] * target[static_cast<std::size_t>(c)];
    const double sim = dot / n;
    const double inv_hw = 1.0 / (static_cast<double>(r.height) * r.width);
    for (int c = 0; c < channels_; ++c) {
        const double d_mc =
            target[static_cast<std::size_t>(c)] / n -
            sim * m[static_cast<std::size_t>(c)] / (n * n);
        const float g = static_cast<float>(d_mc * inv_hw);
        float* p = grad.data.data() + static_cast<std::size_t>(c) * grad.plane_size();
        std::fill(p, p + grad.plane_size(), g);
    }
    return grad;
}

SeededLinearEmbedder::SeededLinearEmbedder(std::uint64_t seed, int out_dim, int channels,
                                           PromptLexicon lexicon)
    : seed_(seed), out_dim_(out_dim), channels_(channels), lexicon_(std::move(lexicon)) {
    if (out_dim <= 0 || channels <= 0)
        throw std::invalid_argument("embedder: dimensions must be positive");
    if (!lexicon_.entries.empty() && lexicon_.dim != out_dim)
        throw std::invalid_argument("embedder: lexicon dimension does not match embedder dim");
    Rng rng(seed);
    proj_.resize(static_cast<std::size_t>(out_dim) * channels);
    for (double& w : proj_) w = rng.normal() / std::sqrt(static_cast<double>(channels));
}

std::vector<double> SeededLinearEmbedder::channel_means(const Raster& r) const {
    if (r.channels != channels_)
        throw std::invalid_argument("embedder: raster channels do not match projection");
    std::vector<double> m(static_cast<std::size_t>(channels_));
    for (int c = 0; c < channels_; ++c) m[static_cast<std::size_t>(c)] = channel_mean(r, c);
    return m;
}

Embedding SeededLinearEmbedder::embed_image(const Raster& r) const {
    const std::vector<double> m = channel_means(r);
    std::vector<double> s(static_cast<std::size_t>(out_dim_), 0.0);
    for (int d = 0; d < out_dim_; ++d)
        for (int c = 0; c < channels_; ++c)
            s[static_cast<std::size_t>(d)] +=
                proj_[static_cast<std::size_t>(d) * channels_ + c] * m[static_cast<std::size_t>(c)];
    const double n = norm(s);
    if (!(n > 0.0)) return {std::vector<double>(static_cast<std::size_t>(out_dim_), 0.0), true};
    for (double& x : s) x /= n;
    return {std::move(s), false};
}

Embedding SeededLinearEmbedder::embed_text(const std::string& keyword) const {
    if (lexicon_.has(keyword)) return {lexicon_.at(keyword), false};
    Rng rng(seed_ ^ hash_keyword(keyword));
    std::vector<double> v(static_cast<std::size_t>(out_dim_));
    for (double& x : v) x = rng.normal();
    return {normalized_or_throw(std::move(v), keyword), false};
}

Raster SeededLinearEmbedder::grad_similarity(const Raster& r,
                                             const std::vector<double>& target) const {
    if (static_cast<int>(target.size()) != out_dim_)
        throw std::invalid_argument("embedder: target dimension mismatch");
    const std::vector<double> m = channel_means(r);
    std::vector<double> s(static_cast<std::size_t>(out_dim_), 0.0);
    for (int d = 0; d < out_dim_; ++d)
        for (int c = 0; c < channels_; ++c)
            s[static_cast<std::size_t>(d)] +=
                proj_[static_cast<std::size_t>(d) * channels_ + c] * m[static_cast<std::size_t>(c)];
    const double n = norm(s);
    Raster grad(r.channels, r.height, r.width);
    if (!(n > 0.0)) return grad;
    double dot = 0.0;
    for (int d = 0; d < out_dim_; ++d) dot += s[static_cast<std::size_t>(d)] * target[static_cast<std::size_t>(d)];
    const double sim = dot / n;
    // d sim/d s_d = t_d/|s| - sim * s_d/|s|^2, then back through the
    // projection and the per-channel mean.
    std::vector<double> ds(static_cast<std::size_t>(out_dim_));
    for (int d = 0; d < out_dim_; ++d)
        ds[static_cast<std::size_t>(d)] =
            target[static_cast<std::size_t>(d)] / n -
            sim * s[static_cast<std::size_t>(d)] / (n * n);
    const double inv_hw = 1.0 / (static_cast<double>(r.height) * r.width);
    for (int c = 0; c < channels_; ++c) {
        double d_mc = 0.0;
        for (int d = 0; d < out_dim_; ++d)
            d_mc += ds[static_cast<std::size_t>(d)] * proj_[static_cast<std::size_t>(d) * channels_ + c];
        const float g = static_cast<float>(d_mc * inv_hw);
        float* p = grad.data.data() + static_cast<std::size_t>(c) * grad.plane_size();
        std::fill(p, p + grad.plane_size(), g);
    }
    return grad;
}

}  // namespace crossview
