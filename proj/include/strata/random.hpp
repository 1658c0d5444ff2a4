#pragma once

#include <cstdint>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

namespace strata {

inline at::Generator make_generator(std::uint64_t seed)
{
    return at::make_generator<at::CPUGeneratorImpl>(seed);
}

/// splitmix64 finaliser; derives independent stream seeds from a base seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream)
{
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline torch::Tensor seeded_normal(at::IntArrayRef shape, std::uint64_t seed,
                                   torch::Dtype dtype = torch::kFloat32)
{
    auto gen = make_generator(seed);
    return at::randn(shape, gen, torch::TensorOptions().dtype(dtype));
}

/// Re-initialises every parameter of `module` from `gen`: weights uniform in
/// ±1/sqrt(fan_in) (scaled for leaky-ReLU gain), biases zero.
void init_parameters(torch::nn::Module& module, at::Generator& gen);

} // namespace strata
