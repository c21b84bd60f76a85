#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lightyolo/model_config.hpp"

namespace lightyolo {

// Embedded copies of models/yolov5s.cfg ("baseline") and models/fostc3net.cfg.
std::optional<std::string_view> builtin_model_text(std::string_view name);
std::vector<std::string> builtin_model_names();

// Accepts "builtin:NAME" or a filesystem path.
ModelConfig load_model_config(const std::string& model);

}  // namespace lightyolo
