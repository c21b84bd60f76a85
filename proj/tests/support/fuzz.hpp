#pragma once

#include <string>

#include "lightyolo/random.hpp"

namespace fuzz {

// Applies 1-4 random edits (byte flips, insertions, deletions, line
// duplication/deletion/swap, token replacement, truncation).
std::string mutate(const std::string& text, lightyolo::Rng& rng);

}  // namespace fuzz
