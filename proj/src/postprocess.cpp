#include "ecgseg/postprocess.hpp"

#include <algorithm>
#include <cmath>

#include "ecgseg/errors.hpp"

namespace ecgseg::post {
namespace {

long short_threshold_samples(double fs) {
  // duration < 40 ms counts as short; at 500 Hz that is < 20 samples
  return static_cast<long>(std::ceil(kShortRegionMs * fs / 1000.0));
}

}  // namespace

std::vector<WaveInterval> intervals_from_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<WaveInterval> out;
  const long n = static_cast<long>(labels.size());
  long start = 0;
  for (long i = 1; i <= n; ++i) {
    if (i == n || labels[i] != labels[start]) {
      out.push_back({static_cast<Wave>(labels[start]), start, i});
      start = i;
    }
  }
  return out;
}

std::vector<WaveInterval> extract_intervals(const SegmentationMask& mask) {
  std::vector<std::uint8_t> labels(mask.length);
  for (long t = 0; t < mask.length; ++t) {
    int best = 0;
    float best_p = mask.at(0, t);
    for (int c = 1; c < 4; ++c) {
      const float p = mask.at(c, t);
      if (p > best_p) {  // ties keep the lower class index
        best_p = p;
        best = c;
      }
    }
    labels[t] = static_cast<std::uint8_t>(best);
  }
  return intervals_from_labels(labels);
}

std::vector<WaveInterval> denoise(std::vector<WaveInterval> intervals, double fs) {
  const long min_len = short_threshold_samples(fs);

  auto merge_adjacent_same = [&](std::vector<WaveInterval>& v) {
    size_t w = 0;
    for (size_t i = 0; i < v.size(); ++i) {
      if (w > 0 && v[w - 1].cls == v[i].cls) {
        v[w - 1].end = v[i].end;
      } else {
        v[w++] = v[i];
      }
    }
    v.resize(w);
  };

  while (true) {
    // shortest short non-none interval, leftmost on ties
    size_t pick = intervals.size();
    long pick_len = 0;
    for (size_t i = 0; i < intervals.size(); ++i) {
      const auto& iv = intervals[i];
      if (iv.cls == Wave::None || iv.length() >= min_len) continue;
      if (pick == intervals.size() || iv.length() < pick_len) {
        pick = i;
        pick_len = iv.length();
      }
    }
    if (pick == intervals.size()) break;

    const bool has_left = pick > 0;
    const bool has_right = pick + 1 < intervals.size();
    if (has_left && has_right && intervals[pick - 1].cls == intervals[pick + 1].cls) {
      intervals[pick].cls = intervals[pick - 1].cls;  // glue the three together
    } else {
      intervals[pick].cls = Wave::None;
    }
    merge_adjacent_same(intervals);
  }
  return intervals;
}

Delineation select_waves(const std::vector<WaveInterval>& intervals) {
  Delineation out;

  std::vector<size_t> qrs;
  for (size_t i = 0; i < intervals.size(); ++i)
    if (intervals[i].cls == Wave::Qrs) qrs.push_back(i);
  if (qrs.empty()) {
    out.no_qrs = true;
    return out;
  }

  std::vector<const WaveInterval*> kept;
  // longest interval of `cls` within (from, to), earliest on ties
  auto pick_longest = [&](size_t from, size_t to, Wave cls) -> const WaveInterval* {
    const WaveInterval* best = nullptr;
    for (size_t i = from; i < to; ++i) {
      if (intervals[i].cls != cls) continue;
      if (!best || intervals[i].length() > best->length()) best = &intervals[i];
    }
    return best;
  };

  if (const auto* p = pick_longest(0, qrs.front(), Wave::P)) kept.push_back(p);
  for (size_t g = 0; g + 1 < qrs.size(); ++g) {
    if (const auto* p = pick_longest(qrs[g] + 1, qrs[g + 1], Wave::P)) kept.push_back(p);
    if (const auto* t = pick_longest(qrs[g] + 1, qrs[g + 1], Wave::T)) kept.push_back(t);
  }
  if (const auto* t = pick_longest(qrs.back() + 1, intervals.size(), Wave::T)) kept.push_back(t);
  for (size_t qi : qrs) kept.push_back(&intervals[qi]);

  std::sort(kept.begin(), kept.end(),
            [](const WaveInterval* a, const WaveInterval* b) { return a->start < b->start; });
  for (const auto* iv : kept) {
    out.boundaries.push_back({iv->cls, BoundaryKind::Onset, iv->start, "global"});
    out.boundaries.push_back({iv->cls, BoundaryKind::Offset, iv->end - 1, "global"});
  }
  return out;
}

SegmentationMask apply_guidance(SegmentationMask mask, const ClassifierOutput& cls) {
  if (!cls.afib_afl()) return mask;
  const int p_cls = static_cast<int>(Wave::P);
  for (long t = 0; t < mask.length; ++t) {
    mask.at(p_cls, t) = 0.0f;
    float sum = 0.0f;
    for (int c = 0; c < 4; ++c) sum += mask.at(c, t);
    if (sum > 1e-12f) {
      const float inv = 1.0f / sum;
      for (int c = 0; c < 4; ++c) mask.at(c, t) *= inv;
    } else {
      mask.at(static_cast<int>(Wave::None), t) = 1.0f;  // column was pure P
    }
  }
  return mask;
}

Delineation delineate_mask(const SegmentationMask& mask, double fs) {
  return select_waves(denoise(extract_intervals(mask), fs));
}

}  // namespace ecgseg::post
