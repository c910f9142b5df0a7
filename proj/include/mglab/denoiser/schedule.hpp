#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mglab/numerics/tensor.hpp"

namespace mglab {

/// Linear-β diffusion schedule. Index t runs over 0..T with alpha_bar[0] = 1
/// (clean data); the network is only queried for t in [1,T].
struct NoiseSchedule {
    std::size_t T = 100;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::vector<double> betas;      ///< betas[t], t = 1..T (betas[0] unused = 0)
    std::vector<double> alpha_bar;  ///< alpha_bar[t], t = 0..T

    static NoiseSchedule linear(std::size_t T = 100, double beta_start = 1e-4, double beta_end = 0.02)
    {
        if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
        if (!(beta_start > 0) || !(beta_end >= beta_start) || !(beta_end < 1))
            throw std::invalid_argument("schedule: need 0 < beta_start <= beta_end < 1");
        NoiseSchedule s;
        s.T = T;
        s.beta_start = beta_start;
        s.beta_end = beta_end;
        s.betas.assign(T + 1, 0.0);
        s.alpha_bar.assign(T + 1, 1.0);
        for (std::size_t t = 1; t <= T; ++t) {
            const double f = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
            s.betas[t] = beta_start + (beta_end - beta_start) * f;
            s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.betas[t]);
        }
        return s;
    }

    void require_step(std::size_t t, const char* what) const
    {
        if (t < 1 || t > T)
            throw std::out_of_range(std::string(what) + ": timestep " + std::to_string(t) + " outside [1,"
                                    + std::to_string(T) + "]");
    }

    /// DDIM visiting order 0, stride, 2·stride, ..., T.
    std::vector<std::size_t> ddim_steps(std::size_t steps) const
    {
        if (steps < 1 || steps > T)
            throw std::invalid_argument("ddim: steps " + std::to_string(steps) + " outside [1," + std::to_string(T)
                                        + "]");
        if (T % steps)
            throw std::invalid_argument("ddim: " + std::to_string(steps) + " steps do not divide T="
                                        + std::to_string(T));
        std::vector<std::size_t> out;
        for (std::size_t k = 0; k <= steps; ++k) out.push_back(k * (T / steps));
        return out;
    }
};

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
template <typename T>
Tensor<T> add_noise(const Tensor<T>& z0, std::size_t t, const Tensor<T>& eps, const NoiseSchedule& s)
{
    s.require_step(t, "add_noise");
    z0.require_same_dims(eps, "add_noise");
    const T a = static_cast<T>(std::sqrt(s.alpha_bar[t]));
    const T b = static_cast<T>(std::sqrt(1.0 - s.alpha_bar[t]));
    Tensor<T> out(z0.dims());
    for (std::size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

}  // namespace mglab
