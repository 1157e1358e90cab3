#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ecgseg {

// Canonical class order. Everything downstream (masks, labels, post-processing)
// indexes classes in this order.
enum class Wave : std::uint8_t { None = 0, P = 1, Qrs = 2, T = 3 };

enum class BoundaryKind : std::uint8_t { Onset = 0, Offset = 1 };

const char* to_string(Wave w);
const char* to_string(BoundaryKind k);
std::optional<Wave> wave_from_string(const std::string& s);
std::optional<BoundaryKind> kind_from_string(const std::string& s);

// One lead of a sampled signal, in physical units (millivolts).
struct Lead {
  std::string name;
  std::vector<float> samples;
};

struct EcgRecord {
  std::string record_id;
  double fs = 0.0;  // Hz
  std::vector<Lead> leads;

  long length() const { return leads.empty() ? 0 : static_cast<long>(leads.front().samples.size()); }
  const Lead* find_lead(const std::string& name) const;
};

// A single wave-boundary event at the sampling rate of its AnnotationSet.
struct BoundaryAnnotation {
  Wave wave = Wave::None;
  BoundaryKind kind = BoundaryKind::Onset;
  long sample = 0;
  std::string lead = "global";
};

struct AnnotationSet {
  std::string record_id;
  double source_fs = 0.0;
  std::vector<BoundaryAnnotation> items;

  void sort();
  AnnotationSet filter_lead(const std::string& lead) const;
};

// Per-timestamp class probabilities, 4 rows in canonical class order.
struct SegmentationMask {
  long length = 0;
  std::vector<float> probs;  // row-major [4 x length]

  float at(int cls, long t) const { return probs[static_cast<size_t>(cls) * length + t]; }
  float& at(int cls, long t) { return probs[static_cast<size_t>(cls) * length + t]; }
};

struct ClassifierOutput {
  float p_afib_afl = 0.0f;
  float p_other = 0.0f;
  bool afib_afl() const { return p_afib_afl >= p_other; }
};

// Contiguous run of one class; [start, end) in samples.
struct WaveInterval {
  Wave cls = Wave::None;
  long start = 0;
  long end = 0;

  long length() const { return end - start; }
  bool operator==(const WaveInterval&) const = default;
};

// Final boundaries for one lead, at 500 Hz.
struct Delineation {
  std::vector<BoundaryAnnotation> boundaries;
  bool no_qrs = false;
};

}  // namespace ecgseg
