#pragma once

#include <cstdint>
#include <vector>

namespace ocmusic {

/// Deterministic RNG: splitmix64-seeded xoshiro256** with hand-rolled
/// distributions, so sequences are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);
    /// Standard normal via Box-Muller.
    double gaussian();
    /// Normal(0, stddev) with samples beyond 2*stddev redrawn.
    double truncated_normal(double stddev);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[uniform_index(i)]);
    }

private:
    std::uint64_t state_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // decoupled (applied to the parameter, not the gradient)
};

/// Bias-corrected Adam over a flat parameter vector.
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig config = {});

    /// One update; `lr_scale` multiplies the base learning rate (for
    /// schedules). Decay is skipped for indices flagged in `no_decay`.
    void step(std::vector<double>& params, const std::vector<double>& grads, double lr_scale = 1.0,
              const std::vector<bool>* no_decay = nullptr);
    void reset();
    int iterations() const { return t_; }
    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    std::vector<double> m_, v_;
    int t_ = 0;
};

/// Scale gradients in place if their global L2 norm exceeds `max_norm`.
/// Returns the pre-clip norm.
double clip_global_norm(std::vector<double>& grads, double max_norm);

}  // namespace ocmusic
