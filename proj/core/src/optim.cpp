#include "ocmusic/optim.hpp"

#include <cmath>
#include <numbers>

#include "ocmusic/errors.hpp"

namespace ocmusic {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return x << k | x >> (64 - k); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
    for (auto& s : state_) s = splitmix64(seed);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    // rejection sampling for an unbiased index
    const std::uint64_t limit = n * (~0ull / n);
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

double Rng::gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

double Rng::truncated_normal(double stddev) {
    for (;;) {
        const double v = gaussian() * stddev;
        if (std::abs(v) <= 2.0 * stddev) return v;
    }
}

AdamOptimizer::AdamOptimizer(AdamConfig config) : config_(config) {}

void AdamOptimizer::reset() {
    m_.clear();
    v_.clear();
    t_ = 0;
}

void AdamOptimizer::step(std::vector<double>& params, const std::vector<double>& grads,
                         double lr_scale, const std::vector<bool>* no_decay) {
    if (params.size() != grads.size()) throw ConfigError("adam: parameter/gradient size mismatch");
    if (m_.size() != params.size()) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
    }
    ++t_;
    const double correction1 = 1.0 - std::pow(config_.beta1, t_);
    const double correction2 = 1.0 - std::pow(config_.beta2, t_);
    const double lr = config_.lr * lr_scale;

    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i] * grads[i];
        const double m_hat = m_[i] / correction1;
        const double v_hat = v_[i] / correction2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        if (config_.weight_decay > 0.0 && !(no_decay && (*no_decay)[i]))
            params[i] -= lr * config_.weight_decay * params[i];
    }
}

double clip_global_norm(std::vector<double>& grads, double max_norm) {
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (double& g : grads) g *= scale;
    }
    return norm;
}

}  // namespace ocmusic
