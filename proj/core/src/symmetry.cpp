#include "ocmusic/symmetry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ocmusic/errors.hpp"

namespace ocmusic {

namespace {

constexpr double kPenalty = -2.0;
constexpr double kKeepFraction = 0.2;  // fraction of cells that keep their similarity
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Relative thresholding: the top kKeepFraction of cells keep their value,
// everything else becomes the penalty. The diagonal always survives.
Eigen::MatrixXd penalize(const Eigen::MatrixXd& sim) {
    const auto n = sim.size();
    std::vector<double> values(sim.data(), sim.data() + n);
    const auto keep = static_cast<std::size_t>(kKeepFraction * static_cast<double>(n));
    const std::size_t rank = n - std::max<std::size_t>(keep, 1);
    std::nth_element(values.begin(), values.begin() + rank, values.end());
    const double threshold = values[rank];

    Eigen::MatrixXd out = sim;
    for (Eigen::Index j = 0; j < sim.cols(); ++j)
        for (Eigen::Index i = 0; i < sim.rows(); ++i)
            if (sim(i, j) < threshold && i != j) out(i, j) = kPenalty;
    return out;
}

// Optimal path family over segment columns [a, b]. Column 0 of the DP table
// is an "elevator" that skips rows for free between paths; columns 1..M map
// onto the segment. Steps: (1,1), (2,1), (1,2).
PathFamilyScore optimal_path_family(const Eigen::MatrixXd& scores, int a, int b) {
    const int n_rows = static_cast<int>(scores.rows());
    const int m = b - a + 1;
    Eigen::MatrixXd d(n_rows, m + 1);
    d.setConstant(kNegInf);
    d(0, 0) = 0.0;
    d(0, 1) = scores(0, a);
    for (int n = 1; n < n_rows; ++n) {
        d(n, 0) = std::max(d(n - 1, 0), d(n - 1, m));
        d(n, 1) = d(n, 0) + scores(n, a);
        for (int col = 2; col <= m; ++col) {
            // (1,1), then (1,2) for col >= 3 (paths always start at column 1),
            // then (2,1)
            double best = d(n - 1, col - 1);
            if (col >= 3) best = std::max(best, d(n - 1, col - 2));
            if (n >= 2) best = std::max(best, d(n - 2, col - 1));
            d(n, col) = best + scores(n, a + col - 1);
        }
    }

    PathFamilyScore result;
    // traceback to recover the induced row coverage; mirrors the forward max
    // exactly so no recomputed-score comparisons are needed
    int n = n_rows - 1;
    int col;
    int path_end = -1;
    if (d(n, m) > d(n, 0)) {
        col = m;
        path_end = n;
        result.score = d(n, m);
    } else {
        col = 0;
        result.score = d(n, 0);
    }
    while (n > 0 || col > 0) {
        if (col == 0) {
            if (n == 0) break;
            if (d(n - 1, m) > d(n - 1, 0)) {
                col = m;  // a path ends at row n - 1
                path_end = n - 1;
            }
            --n;
        } else if (col == 1) {
            result.coverage += path_end - n + 1;  // path projection is [n, path_end]
            col = 0;
        } else {
            const double c11 = d(n - 1, col - 1);
            const double c12 = col >= 3 ? d(n - 1, col - 2) : kNegInf;
            const double c21 = n >= 2 ? d(n - 2, col - 1) : kNegInf;
            if (c11 >= c12 && c11 >= c21) {
                n -= 1;
                col -= 1;
            } else if (c21 >= c12) {
                n -= 2;
                col -= 1;
            } else {
                n -= 1;
                col -= 2;
            }
        }
    }
    return result;
}

SegmentFitness fitness_on(const Eigen::MatrixXd& penalized, SegmentRange segment) {
    const int total = static_cast<int>(penalized.rows());
    const int len = segment.end - segment.start + 1;
    if (segment.start < 0 || segment.end >= total || len < 2 || len > total / 2)
        throw ConfigError("segment fitness: need 2 <= length <= T/2 inside the matrix");

    const auto family = optimal_path_family(penalized, segment.start, segment.end);
    const double denom = total - len;
    SegmentFitness out;
    out.segment = segment;
    out.sigma_bar = std::clamp((family.score - len) / denom, 0.0, 1.0);
    out.gamma_bar = std::clamp((family.coverage - len) / denom, 0.0, 1.0);
    out.fitness = out.sigma_bar + out.gamma_bar > 0.0
                      ? 2.0 * out.sigma_bar * out.gamma_bar / (out.sigma_bar + out.gamma_bar)
                      : 0.0;
    return out;
}

}  // namespace

PathFamilyScore path_family_score(const Eigen::MatrixXd& scores, int start, int end) {
    if (start < 0 || end >= scores.cols() || end < start)
        throw ConfigError("path family: segment outside the matrix");
    return optimal_path_family(scores, start, end);
}

SSM build_ssm(const ChromaSequence& chroma, int smooth, int max_frames) {
    const int t = static_cast<int>(chroma.vectors.cols());
    if (t < 8) throw UndefinedFeatureError("ssm: fewer than 8 chroma frames");
    if (smooth < 1 || max_frames < 8) throw ConfigError("ssm: bad smoothing/downsampling config");

    Eigen::MatrixXd smoothed(12, t);
    for (int i = 0; i < t; ++i) {
        const int lo = std::max(0, i - smooth / 2);
        const int hi = std::min(t - 1, i + (smooth - 1) / 2);
        smoothed.col(i) = chroma.vectors.middleCols(lo, hi - lo + 1).rowwise().mean();
    }

    const int factor = (t + max_frames - 1) / max_frames;
    const int frames = (t + factor - 1) / factor;
    Eigen::MatrixXd reduced(12, frames);
    for (int i = 0; i < frames; ++i) {
        const int lo = i * factor;
        const int hi = std::min(t, lo + factor);
        reduced.col(i) = smoothed.middleCols(lo, hi - lo).rowwise().mean();
    }

    SSM out;
    out.sim.resize(frames, frames);
    Eigen::VectorXd norms(frames);
    for (int i = 0; i < frames; ++i) norms(i) = reduced.col(i).norm();
    for (int i = 0; i < frames; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sim = 0.0;
            if (norms(i) > 0.0 && norms(j) > 0.0)
                sim = std::clamp(reduced.col(i).dot(reduced.col(j)) / (norms(i) * norms(j)), 0.0, 1.0);
            out.sim(i, j) = sim;
            out.sim(j, i) = sim;
        }
        out.sim(i, i) = 1.0;
    }
    return out;
}

SegmentFitness segment_fitness(const SSM& ssm, SegmentRange segment) {
    return fitness_on(penalize(ssm.sim), segment);
}

double symmetry_feature(const SSM& ssm) {
    const int total = ssm.frames();
    if (total < 8) throw UndefinedFeatureError("symmetry: SSM too small");
    const Eigen::MatrixXd penalized = penalize(ssm.sim);

    const int hop = std::max(1, total / 16);
    double best = 0.0;
    for (int len = 4; len <= total / 2; len += 4) {
        for (int start = 0; start + len <= total; start += hop) {
            const auto fit = fitness_on(penalized, {start, start + len - 1});
            best = std::max(best, fit.fitness);
        }
    }
    return best;
}

}  // namespace ocmusic
