#pragma once

#include <filesystem>
#include <iosfwd>

#include "lightyolo/tensor.hpp"

namespace lightyolo {

// FTNSR1 layout: "FTNSR1", u32 ndim (= 4), ndim x u32 dims, raw f32 data.
// All integers and floats little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace lightyolo
