#include "t2ic/synthdata.hpp"

#include <cmath>
#include <stdexcept>

namespace t2ic {

namespace {

struct Rgb {
  float r, g, b;
};

// Fixed color tables, values in [0,255].
constexpr Rgb kFgRgb[kNumFgColors] = {
    {255, 0, 0},    // red
    {0, 200, 0},    // green
    {0, 0, 255},    // blue
    {255, 255, 0},  // yellow
    {0, 255, 255},  // cyan
    {255, 0, 255},  // magenta
    {255, 128, 0},  // orange
    {255, 255, 255} // white
};

constexpr Rgb kBgRgb[kNumBgColors] = {
    {255, 255, 255}, // white
    {0, 0, 0},       // black
    {128, 128, 128}, // gray
    {0, 0, 255}      // blue
};

constexpr int kRadii[3] = {5, 8, 11};
// Cell centers chosen so the largest shape stays fully inside the frame.
constexpr int kCellCenters[3] = {12, 16, 20};

float to_unit(float v255) { return v255 / 127.5f - 1.0f; }

}  // namespace

const std::array<std::string, kNumShapes>& shape_names() {
  static const std::array<std::string, kNumShapes> n = {"circle", "square", "triangle"};
  return n;
}

const std::array<std::string, kNumFgColors>& fg_color_names() {
  static const std::array<std::string, kNumFgColors> n = {
      "red", "green", "blue", "yellow", "cyan", "magenta", "orange", "white"};
  return n;
}

const std::array<std::string, kNumBgColors>& bg_color_names() {
  static const std::array<std::string, kNumBgColors> n = {"white", "black", "gray", "blue"};
  return n;
}

SceneSpec sample_scene(Rng& rng) {
  SceneSpec s;
  s.shape = static_cast<int>(rng.below(kNumShapes));
  s.size = static_cast<int>(rng.below(3));
  s.cell = static_cast<int>(rng.below(9));
  for (;;) {
    s.fg = static_cast<int>(rng.below(kNumFgColors));
    s.bg = static_cast<int>(rng.below(kNumBgColors));
    if (fg_color_names()[s.fg] != bg_color_names()[s.bg]) break;
  }
  return s;
}

Tensor<float> render(const SceneSpec& scene) {
  const Rgb fg = kFgRgb[scene.fg];
  const Rgb bg = kBgRgb[scene.bg];
  const int r = kRadii[scene.size];
  const int cx = kCellCenters[scene.cell % 3];
  const int cy = kCellCenters[scene.cell / 3];

  auto inside = [&](int x, int y) -> bool {
    switch (scene.shape) {
      case 0:  // circle
        return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
      case 1:  // square
        return std::abs(x - cx) <= r && std::abs(y - cy) <= r;
      default: {  // isoceles triangle, apex up
        if (y < cy - r || y > cy + r) return false;
        double half = static_cast<double>(r) * (y - (cy - r)) / (2.0 * r);
        return std::abs(x - cx) <= half;
      }
    }
  };

  Tensor<float> img({3, kImageSize, kImageSize});
  for (int y = 0; y < kImageSize; ++y)
    for (int x = 0; x < kImageSize; ++x) {
      const Rgb& c = inside(x, y) ? fg : bg;
      img[(0 * kImageSize + y) * kImageSize + x] = to_unit(c.r);
      img[(1 * kImageSize + y) * kImageSize + x] = to_unit(c.g);
      img[(2 * kImageSize + y) * kImageSize + x] = to_unit(c.b);
    }
  return img;
}

std::vector<std::uint16_t> caption_tokens(const SceneSpec& scene, int template_id) {
  if (template_id < 0 || template_id >= kCaptionsPerImage)
    throw std::invalid_argument("caption template id out of range");
  static const char* kSizes[3] = {"small", "medium", "large"};
  static const char* kRows[3] = {"top", "middle", "bottom"};
  static const char* kCols[3] = {"left", "center", "right"};
  const std::string sz = kSizes[scene.size];
  const std::string fg = fg_color_names()[scene.fg];
  const std::string sh = shape_names()[scene.shape];
  const std::string bg = bg_color_names()[scene.bg];
  const std::string row = kRows[scene.cell / 3];
  const std::string col = kCols[scene.cell % 3];

  std::string text;
  switch (template_id) {
    case 0:
      text = "a " + sz + " " + fg + " " + sh + " on a " + bg + " background";
      break;
    case 1:
      text = "the " + fg + " " + sh + " is " + sz + " on a " + bg + " background";
      break;
    case 2:  // omits background
      text = "a " + sz + " " + fg + " " + sh + " at the " + row + " " + col;
      break;
    case 3:  // omits size
      text = "a " + fg + " " + sh + " on a " + bg + " background";
      break;
    default:  // omits background and size
      text = "there is a " + fg + " " + sh + " in the " + row + " " + col;
      break;
  }
  auto ids = tokenize(text);
  if (ids.size() < 3 || ids.size() > static_cast<std::size_t>(kMaxCaptionLen))
    throw std::logic_error("caption template length out of bounds");
  return ids;
}

void build_dataset(std::size_t n, std::uint64_t seed, const std::string& path) {
  if (n < 1) throw std::invalid_argument("build_dataset: n must be >= 1");
  Rng rng(seed);
  Tensor<float> images({n, 3, kImageSize, kImageSize});
  Tensor<float> captions({n, kCaptionsPerImage, static_cast<std::size_t>(kMaxCaptionLen)});
  Tensor<float> lengths({n, kCaptionsPerImage});
  Tensor<float> labels({n});
  Tensor<float> attrs({n, 5});

  const std::size_t img_sz = 3 * kImageSize * kImageSize;
  for (std::size_t i = 0; i < n; ++i) {
    SceneSpec s = sample_scene(rng);
    Tensor<float> img = render(s);
    std::copy(img.data(), img.data() + img_sz, images.data() + i * img_sz);
    for (int k = 0; k < kCaptionsPerImage; ++k) {
      auto toks = caption_tokens(s, k);
      lengths[i * kCaptionsPerImage + k] = static_cast<float>(toks.size());
      for (std::size_t t = 0; t < toks.size(); ++t)
        captions[(i * kCaptionsPerImage + k) * kMaxCaptionLen + t] =
            static_cast<float>(toks[t]);
    }
    labels[i] = static_cast<float>(s.class_label());
    attrs[i * 5 + 0] = static_cast<float>(s.shape);
    attrs[i * 5 + 1] = static_cast<float>(s.fg);
    attrs[i * 5 + 2] = static_cast<float>(s.bg);
    attrs[i * 5 + 3] = static_cast<float>(s.size);
    attrs[i * 5 + 4] = static_cast<float>(s.cell);
  }

  TensorFile tf;
  tf.put("images", std::move(images));
  tf.put("captions", std::move(captions));
  tf.put("lengths", std::move(lengths));
  tf.put("labels", std::move(labels));
  tf.put("scene_attrs", std::move(attrs));
  // Vocabulary in id order, newline-separated, one byte per element.
  std::string joined;
  for (const auto& w : vocab()) {
    joined += w;
    joined += '\n';
  }
  Tensor<float> vb({joined.size()});
  for (std::size_t i = 0; i < joined.size(); ++i)
    vb[i] = static_cast<float>(static_cast<unsigned char>(joined[i]));
  tf.put("vocab", std::move(vb));
  Tensor<float> split({1});
  split[0] = static_cast<float>(n * 9 / 10);
  tf.put("train_count", std::move(split));

  try {
    tf.save(path);
  } catch (const std::exception& e) {
    throw std::runtime_error("build_dataset: writing '" + path + "' failed: " + e.what());
  }
}

Dataset Dataset::load(const std::string& path) {
  TensorFile tf = TensorFile::load(path);
  Dataset d;
  d.images_ = tf.get("images");
  d.captions_ = tf.get("captions");
  d.lengths_ = tf.get("lengths");
  d.labels_ = tf.get("labels");
  d.scene_attrs_ = tf.get("scene_attrs");
  d.n_ = d.images_.dim(0);
  d.train_count_ = static_cast<std::size_t>(tf.get("train_count")[0]);
  return d;
}

Tensor<float> Dataset::image(std::size_t i) const {
  Tensor<float> img({3, kImageSize, kImageSize});
  const std::size_t sz = img.numel();
  std::copy(images_.data() + i * sz, images_.data() + (i + 1) * sz, img.data());
  return img;
}

std::vector<std::uint16_t> Dataset::caption(std::size_t i, int k) const {
  std::vector<std::uint16_t> out(kMaxCaptionLen);
  for (int t = 0; t < kMaxCaptionLen; ++t)
    out[t] = static_cast<std::uint16_t>(
        captions_[(i * kCaptionsPerImage + k) * kMaxCaptionLen + t]);
  return out;
}

int Dataset::caption_length(std::size_t i, int k) const {
  return static_cast<int>(lengths_[i * kCaptionsPerImage + k]);
}

int Dataset::label(std::size_t i) const { return static_cast<int>(labels_[i]); }

SceneSpec Dataset::scene(std::size_t i) const {
  SceneSpec s;
  s.shape = static_cast<int>(scene_attrs_[i * 5 + 0]);
  s.fg = static_cast<int>(scene_attrs_[i * 5 + 1]);
  s.bg = static_cast<int>(scene_attrs_[i * 5 + 2]);
  s.size = static_cast<int>(scene_attrs_[i * 5 + 3]);
  s.cell = static_cast<int>(scene_attrs_[i * 5 + 4]);
  return s;
}

}  // namespace t2ic
