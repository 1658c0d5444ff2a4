#include "strata/random.hpp"

#include <cmath>

namespace strata {

void init_parameters(torch::nn::Module& module, at::Generator& gen)
{
    torch::NoGradGuard no_grad;
    const double gain = std::sqrt(2.0 / (1.0 + 0.2 * 0.2));
    for (auto& p : module.parameters(true)) {
        if (p.dim() < 2) {
            p.zero_();
            continue;
        }
        const double fan_in = static_cast<double>(p.numel() / p.size(0));
        const double bound = gain * std::sqrt(3.0 / fan_in);
        p.uniform_(-bound, bound, gen);
    }
}

} // namespace strata
