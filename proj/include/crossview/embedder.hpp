#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "crossview/raster.hpp"

namespace crossview {

// Unit vector plus a degenerate flag (zero input maps to the zero vector with
// the flag set instead of throwing).
struct Embedding {
    std::vector<double> v;
    bool degenerate = false;
};

// Keyword -> target embedding map, loadable from JSON:
//   { "dim": 3, "prompts": { "red": [1,0,0], ... } }
// Vectors are normalized on load; zero vectors are rejected.
struct PromptLexicon {
    int dim = 0;
    std::map<std::string, std::vector<double>> entries;

    bool has(const std::string& keyword) const { return entries.count(keyword) > 0; }
    const std::vector<double>& at(const std::string& keyword) const;
};

PromptLexicon lexicon_from_file(const std::string& path);
PromptLexicon lexicon_from_json_text(const std::string& text);
// Built-in color/season keywords in per-channel mean space (dim must be 3).
PromptLexicon default_lexicon(int dim);

// Image/text embedder with an analytic similarity gradient. Desk-scale
// stand-in for a pretrained joint embedding model.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual int dim() const = 0;
    virtual Embedding embed_image(const Raster& r) const = 0;
    virtual Embedding embed_text(const std::string& keyword) const = 0;
    // d cos(embed_image(r), target) / d r, same shape as r. target must be
    // unit norm, size dim().
    virtual Raster grad_similarity(const Raster& r, const std::vector<double>& target) const = 0;
};

// D = channels; embedding = L2-normalized per-channel means.
class MeanColorEmbedder : public Embedder {
public:
    explicit MeanColorEmbedder(int channels = 3, PromptLexicon lexicon = {});
    int dim() const override { return channels_; }
    Embedding embed_image(const Raster& r) const override;
    Embedding embed_text(const std::string& keyword) const override;
    Raster grad_similarity(const Raster& r, const std::vector<double>& target) const override;

private:
    int channels_;
    PromptLexicon lexicon_;
};

// Fixed seeded random projection of per-channel means to dim D, normalized.
// Text vectors come from the lexicon when provided, otherwise from a
// deterministic per-keyword seeded draw.
class SeededLinearEmbedder : public Embedder {
public:
    SeededLinearEmbedder(std::uint64_t seed, int out_dim, int channels,
                         PromptLexicon lexicon = {});
    int dim() const override { return out_dim_; }
    Embedding embed_image(const Raster& r) const override;
    Embedding embed_text(const std::string& keyword) const override;
    Raster grad_similarity(const Raster& r, const std::vector<double>& target) const override;

private:
    std::vector<double> channel_means(const Raster& r) const;
    std::uint64_t seed_;
    int out_dim_;
    int channels_;
    std::vector<double> proj_;  // out_dim x channels, row-major
    PromptLexicon lexicon_;
};

// cos(a, b); degenerate (zero) vectors give 0.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace crossview
