#pragma once

#include <map>
#include <string>

#include "jdm/tensor.hpp"

namespace jdm {

/// Ordered name -> tensor map; ordering makes checkpoint bytes deterministic.
using ParamMap = std::map<std::string, Tensor>;

/// JDMP checkpoint: magic "JDMP", u32 version, u32 manifest length, UTF-8
/// JSON manifest {name: {shape, offset}}, then little-endian f32 payloads.
void save_checkpoint(const std::string& path, const ParamMap& params);
ParamMap load_checkpoint(const std::string& path);

/// Copies values from `src` into same-named tensors of `dst`; throws on
/// missing names or shape mismatches.
void assign_params(ParamMap& dst, const ParamMap& src);

}  // namespace jdm
