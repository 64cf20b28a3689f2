#pragma once

#include <string>
#include <vector>

#include "t2ic/tensor.hpp"

namespace t2ic {

// Tiles images (each 3xHxW in [-1,1]) into a rows x cols grid with a 2px
// white separator and writes a binary PPM (P6). Row-major tile order.
void write_ppm_grid(const std::string& path, const std::vector<Tensor<float>>& tiles,
                    std::size_t rows, std::size_t cols);

}  // namespace t2ic
