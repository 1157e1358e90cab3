#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ecgseg/types.hpp"

namespace ecgseg::wfdb {

// Parsers for the WFDB file family used by QTDB, LUDB, and MIT-BIH:
// text headers (.hea), packed signal files (formats 212 and 16), and
// MIT-format annotation streams. Signal formats other than 212/16 raise
// UnsupportedFormat. All functions are pure over their byte inputs.

struct SignalSpec {
  std::string file_name;
  int format = 0;          // 212 or 16
  double gain = 200.0;     // ADC units per millivolt
  int baseline = 0;        // ADC value corresponding to 0 mV
  int adc_zero = 0;
  std::string units = "mV";
  std::string description;  // lead name when present
};

struct HeaderDescriptor {
  std::string record_id;
  int n_sig = 0;
  double fs = 250.0;
  long n_samples = 0;  // per signal; 0 when the header leaves it unspecified
  std::vector<SignalSpec> signals;
  std::vector<std::string> comments;  // '#' lines, verbatim without the '#'

  std::string lead_name(int index) const;
};

HeaderDescriptor parse_header(const std::string& text);

// Decoded raw ADC samples, one vector per signal, before gain conversion.
std::vector<std::vector<int>> decode_raw(const std::vector<std::uint8_t>& bytes,
                                         const HeaderDescriptor& desc,
                                         int* warnings = nullptr);

// Raw decode + (raw - baseline) / gain conversion to millivolts.
EcgRecord decode_signal(const std::vector<std::uint8_t>& bytes, const HeaderDescriptor& desc);

// Maps annotation mnemonics to waves. Wave::None entries consume a
// '(' ... ')' group without emitting boundaries (e.g. the U wave).
struct SymbolMap {
  std::map<char, Wave> wave_of;
};

// 'p' -> P, 't' -> T, beat mnemonics (N, V, A, ...) -> QRS, 'u' consumed.
SymbolMap default_symbol_map();

struct AnnotationReadResult {
  AnnotationSet set;
  int dropped = 0;  // events without an enclosing wave symbol, dangling '('
};

// Reads a MIT-format annotation byte stream. '(' preceding a wave symbol
// becomes that wave's onset, ')' following it the offset; events that never
// see a wave symbol are dropped and counted. Annotations are grouped per
// channel; `lead_override`, when set, wins over channel-derived lead names
// (per-lead annotation files carry everything on channel 0).
AnnotationReadResult read_annotations(const std::vector<std::uint8_t>& bytes,
                                      const HeaderDescriptor& desc,
                                      const SymbolMap& symbols = default_symbol_map(),
                                      const std::optional<std::string>& lead_override = std::nullopt);

// Linear-interpolation resampling onto a uniform grid at target_fs.
// Output length = round(length * target_fs / fs). Identity when fs matches.
EcgRecord resample(const EcgRecord& record, double target_fs);

// Annotation samples rescale independently: sample' = round(sample * target_fs / fs).
AnnotationSet resample_annotations(const AnnotationSet& set, double target_fs);

// Convenience loaders working on files. `base` is the path without extension.
HeaderDescriptor read_header_file(const std::string& base);
EcgRecord read_record(const std::string& base);
AnnotationReadResult read_annotation_file(const std::string& base, const std::string& ext,
                                          const HeaderDescriptor& desc,
                                          const SymbolMap& symbols = default_symbol_map(),
                                          const std::optional<std::string>& lead_override = std::nullopt);

}  // namespace ecgseg::wfdb
