#pragma once

#include <map>
#include <string>

#include "nova/params.hpp"
#include "nova/tensor.hpp"

namespace nova {

// Checkpoint container:
//   magic "NOVA" | version u32 LE | config-JSON length u32 LE + bytes |
//   tensor count u32 LE | per tensor:
//     name length u16 LE + UTF-8 name | dtype u8 (0 = f32) | rank u8 |
//     dims u32 LE each | raw little-endian payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const ParamSet<float>& params);

struct Checkpoint {
  std::string config_json;
  std::map<std::string, Tensor<float>> tensors;
};

Checkpoint load_checkpoint(const std::string& path);

// Single-tensor file (.nvt): one per-tensor record in the checkpoint layout.
void write_nvt(const std::string& path, const std::string& name,
               const Tensor<float>& t);
Tensor<float> read_nvt(const std::string& path, std::string* name = nullptr);

// P6 PPM, maxval 255, values clamped from [0,1] by round(255*x). Single- and
// three-channel frames supported ([H x W x c]); grayscale is replicated.
void write_ppm(const std::string& path, const Tensor<float>& frame);

}  // namespace nova
