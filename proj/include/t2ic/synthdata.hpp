#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "t2ic/io.hpp"
#include "t2ic/rng.hpp"
#include "t2ic/tensor.hpp"
#include "t2ic/vocab.hpp"

namespace t2ic {

constexpr int kImageSize = 32;
constexpr int kNumShapes = 3;
constexpr int kNumFgColors = 8;
constexpr int kNumBgColors = 4;
constexpr int kNumClasses = kNumShapes * kNumFgColors;  // 24

// One procedurally generated scene: a single shape on a plain background.
struct SceneSpec {
  int shape;  // 0 circle, 1 square, 2 triangle
  int fg;     // 0..7
  int bg;     // 0..3
  int size;   // 0 small(r=5), 1 medium(r=8), 2 large(r=11)
  int cell;   // 0..8, row-major 3x3 grid

  int class_label() const { return shape * kNumFgColors + fg; }
  bool operator==(const SceneSpec&) const = default;
};

const std::array<std::string, kNumShapes>& shape_names();
const std::array<std::string, kNumFgColors>& fg_color_names();
const std::array<std::string, kNumBgColors>& bg_color_names();

// Uniform over valid attribute combinations (fg and bg color names differ).
SceneSpec sample_scene(Rng& rng);

// Hard-edged rasterization to a 3x32x32 tensor in [-1, 1]. Deterministic.
Tensor<float> render(const SceneSpec& scene);

// One of five fixed caption templates; templates vary word order and omit
// some attributes so paraphrases of a scene differ as token sequences.
std::vector<std::uint16_t> caption_tokens(const SceneSpec& scene, int template_id);

// Writes n captioned examples to the shared tensor container. First 90% of
// examples are the train split, the rest eval.
void build_dataset(std::size_t n, std::uint64_t seed, const std::string& path);

class Dataset {
 public:
  static Dataset load(const std::string& path);

  std::size_t size() const { return n_; }
  std::size_t train_count() const { return train_count_; }
  std::size_t eval_count() const { return n_ - train_count_; }

  // (3,32,32) view copied out of the backing store
  Tensor<float> image(std::size_t i) const;
  // Token ids of caption k (padded to kMaxCaptionLen)
  std::vector<std::uint16_t> caption(std::size_t i, int k) const;
  int caption_length(std::size_t i, int k) const;
  int label(std::size_t i) const;
  SceneSpec scene(std::size_t i) const;

  const Tensor<float>& images() const { return images_; }

 private:
  std::size_t n_ = 0;
  std::size_t train_count_ = 0;
  Tensor<float> images_;      // (n,3,32,32)
  Tensor<float> captions_;    // (n,K,T)
  Tensor<float> lengths_;     // (n,K)
  Tensor<float> labels_;      // (n)
  Tensor<float> scene_attrs_; // (n,5)
};

}  // namespace t2ic
