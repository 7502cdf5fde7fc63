#pragma once

#include <string>

#include "odetex/train.hpp"

namespace odetex::io {

// Serializes everything training needs to continue bit-exactly: configs,
// parameters, optimizer moments, plateau tracker, carried state, rng state.
void save_checkpoint(const std::string& path, const train::TrainState& st);
train::TrainState load_checkpoint(const std::string& path);

// Parameters only (for generation / evaluation without training state).
struct LoadedModel {
  field::FieldConfig fcfg;
  field::FieldParams params;
};
LoadedModel load_model(const std::string& path);

}  // namespace odetex::io
