#pragma once

#include <string>

#include "hydrocorr/fpgnn.hpp"

namespace hydrocorr {

// Checkpoint format, mirroring the GridStack idiom: `<stem>.json` manifest
// (layer kinds, shapes, constraint flags, normalization stats, Adam scalars)
// plus `<stem>.bin` of raw little-endian float32 blobs in manifest order.
void save_checkpoint(const FpgnnModel& model, const ad::AdamState<float>& adam,
                     const std::string& path);

struct Checkpoint {
  FpgnnModel model;
  ad::AdamState<float> adam;  // scalars only; moments are not persisted
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hydrocorr
