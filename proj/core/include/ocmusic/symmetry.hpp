#pragma once

#include <Eigen/Core>

#include "ocmusic/dsp.hpp"

namespace ocmusic {

/// Self-similarity matrix over (smoothed, downsampled) chroma frames.
struct SSM {
    Eigen::MatrixXd sim;        // T x T, symmetric, entries in [0, 1]
    double hop_duration = 0.0;  // seconds per SSM frame

    int frames() const { return static_cast<int>(sim.rows()); }
};

struct SegmentRange {
    int start = 0;  // inclusive frame indices
    int end = 0;
};

struct SegmentFitness {
    SegmentRange segment;
    double sigma_bar = 0.0;  // normalized repetition score
    double gamma_bar = 0.0;  // normalized coverage
    double fitness = 0.0;    // harmonic mean of the two
};

/// Cosine self-similarity of chroma columns after moving-average smoothing
/// and downsampling to at most `max_frames` frames. Diagonal forced to 1.
SSM build_ssm(const ChromaSequence& chroma, int smooth = 4, int max_frames = 128);

struct PathFamilyScore {
    double score = 0.0;
    int coverage = 0;  // rows covered by the family's projections
};

/// Optimal path family over columns [start, end] of an arbitrary score
/// matrix (may hold penalties). Paths run column start..end with steps
/// {(1,1),(2,1),(1,2)} and disjoint row projections.
PathFamilyScore path_family_score(const Eigen::MatrixXd& scores, int start, int end);

/// Repetition fitness of one candidate segment: an optimal path family over
/// the segment's columns (steps {(1,1),(2,1),(1,2)}, relative-thresholded
/// similarities with penalty -2 off the kept cells), scored against the
/// trivial self-match baseline.
SegmentFitness segment_fitness(const SSM& ssm, SegmentRange segment);

/// Maximum fitness over a coarse grid of candidate segments (lengths
/// 4, 8, ..., T/2 at hop T/16). This scalar is the symmetry basic feature.
double symmetry_feature(const SSM& ssm);

}  // namespace ocmusic
