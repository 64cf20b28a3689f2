#include "t2ic/ppm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace t2ic {

void write_ppm_grid(const std::string& path, const std::vector<Tensor<float>>& tiles,
                    std::size_t rows, std::size_t cols) {
  if (tiles.empty() || tiles.size() != rows * cols)
    throw std::invalid_argument("write_ppm_grid: tile count mismatch");
  const std::size_t h = tiles[0].dim(1), w = tiles[0].dim(2);
  const std::size_t sep = 2;
  const std::size_t total_w = cols * w + (cols - 1) * sep;
  const std::size_t total_h = rows * h + (rows - 1) * sep;
  std::vector<unsigned char> pix(total_w * total_h * 3, 255);

  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const Tensor<float>& t = tiles[r * cols + c];
      if (t.rank() != 3 || t.dim(1) != h || t.dim(2) != w)
        throw std::invalid_argument("write_ppm_grid: inconsistent tile shape");
      std::size_t oy = r * (h + sep), ox = c * (w + sep);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          for (std::size_t ch = 0; ch < 3; ++ch) {
            float v = (t[(ch * h + y) * w + x] + 1.0f) * 127.5f;
            v = std::min(255.0f, std::max(0.0f, std::round(v)));
            pix[((oy + y) * total_w + ox + x) * 3 + ch] = static_cast<unsigned char>(v);
          }
    }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "P6\n" << total_w << " " << total_h << "\n255\n";
  os.write(reinterpret_cast<const char*>(pix.data()),
           static_cast<std::streamsize>(pix.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace t2ic
