#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "remm/tensor.hpp"

namespace remm {

struct NamedParam {
    std::string name;
    Tensor t;
};

struct AdamState {
    std::vector<std::vector<float>> m;  // first moments, one per parameter
    std::vector<std::vector<float>> v;  // second moments
    std::int64_t step = 0;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;

    static AdamState init(const std::vector<NamedParam>& params,
                          float beta1 = 0.9f, float beta2 = 0.999f,
                          float eps = 1e-8f);
};

// Standard bias-corrected Adam, in place. Missing gradients are treated as
// zero. Throws on non-finite gradient, naming the parameter.
void adam_step(std::vector<NamedParam>& params, AdamState& state, float lr);

// Flat binary checkpoint: "REMM", version u32, count u32, then per
// parameter: name length u16, name, rank u8, dims u32, little-endian f32s.
void save_checkpoint(const std::string& path,
                     const std::vector<NamedParam>& params);
std::vector<NamedParam> load_checkpoint(const std::string& path);

}  // namespace remm
