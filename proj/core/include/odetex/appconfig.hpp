#pragma once

#include <map>
#include <string>

#include "odetex/field.hpp"
#include "odetex/train.hpp"

namespace odetex::io {

// Flat `key = value` text, one optional [section] level, '#' comments.
using ConfigMap = std::map<std::string, std::map<std::string, std::string>>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);

// Applies the [train] / [field] sections onto the given configs. Unknown
// keys are an error (they are almost always typos).
void apply_train_config(const ConfigMap& cfg, train::TrainConfig& out);
void apply_field_config(const ConfigMap& cfg, field::FieldConfig& out);

}  // namespace odetex::io
