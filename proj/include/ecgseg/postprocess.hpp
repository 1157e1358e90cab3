#pragma once

#include <vector>

#include "ecgseg/types.hpp"

namespace ecgseg::post {

// Mask -> boundaries in three steps: per-timestamp argmax runs, short-region
// denoising (< 40 ms), and per-gap wave selection. All functions are pure.

inline constexpr double kShortRegionMs = 40.0;

// Maximal runs of the per-sample argmax labels, none-runs included.
// Probability ties resolve to the lower class index.
std::vector<WaveInterval> extract_intervals(const SegmentationMask& mask);

std::vector<WaveInterval> intervals_from_labels(const std::vector<std::uint8_t>& labels);

// Repeatedly removes the shortest (leftmost on ties) non-none interval
// shorter than 40 ms: merged into its neighbors when both share a label,
// relabeled none otherwise. None-intervals are never removed.
std::vector<WaveInterval> denoise(std::vector<WaveInterval> intervals, double fs = 500.0);

// Keeps every QRS interval; in each gap between consecutive QRS intervals
// the longest P and longest T survive (earliest on ties). Before the first
// QRS only a P is kept, after the last only a T. Boundaries are emitted as
// onset = start, offset = end - 1. No QRS at all -> empty with no_qrs set.
Delineation select_waves(const std::vector<WaveInterval>& intervals);

// Zeroes the P channel and renormalizes columns when the classifier calls
// AFIB/AFL; identity otherwise.
SegmentationMask apply_guidance(SegmentationMask mask, const ClassifierOutput& cls);

// extract -> denoise -> select.
Delineation delineate_mask(const SegmentationMask& mask, double fs = 500.0);

}  // namespace ecgseg::post
