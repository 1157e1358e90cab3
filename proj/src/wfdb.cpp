#include "ecgseg/wfdb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ecgseg/errors.hpp"

namespace ecgseg {

const char* to_string(Wave w) {
  switch (w) {
    case Wave::None: return "none";
    case Wave::P: return "P";
    case Wave::Qrs: return "QRS";
    case Wave::T: return "T";
  }
  return "?";
}

const char* to_string(BoundaryKind k) {
  return k == BoundaryKind::Onset ? "onset" : "offset";
}

std::optional<Wave> wave_from_string(const std::string& s) {
  if (s == "none") return Wave::None;
  if (s == "P" || s == "p") return Wave::P;
  if (s == "QRS" || s == "qrs") return Wave::Qrs;
  if (s == "T" || s == "t") return Wave::T;
  return std::nullopt;
}

std::optional<BoundaryKind> kind_from_string(const std::string& s) {
  if (s == "onset") return BoundaryKind::Onset;
  if (s == "offset") return BoundaryKind::Offset;
  return std::nullopt;
}

const Lead* EcgRecord::find_lead(const std::string& name) const {
  for (const auto& l : leads)
    if (l.name == name) return &l;
  return nullptr;
}

void AnnotationSet::sort() {
  std::stable_sort(items.begin(), items.end(), [](const BoundaryAnnotation& a, const BoundaryAnnotation& b) {
    if (a.sample != b.sample) return a.sample < b.sample;
    return a.kind < b.kind;
  });
}

AnnotationSet AnnotationSet::filter_lead(const std::string& lead) const {
  AnnotationSet out;
  out.record_id = record_id;
  out.source_fs = source_fs;
  for (const auto& it : items)
    if (it.lead == lead || it.lead == "global") out.items.push_back(it);
  return out;
}

}  // namespace ecgseg

namespace ecgseg::wfdb {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

// Record line: name[/nseg] n_sig [fs[/cf[(bc)]] [n_samples [base_time [base_date]]]]
void parse_record_line(const std::string& line, long line_no, HeaderDescriptor& d) {
  auto toks = split_ws(line);
  if (toks.size() < 2) throw ParseError("malformed record line: '" + line + "'", line_no);
  d.record_id = toks[0].substr(0, toks[0].find('/'));
  try {
    d.n_sig = std::stoi(toks[1]);
  } catch (const std::exception&) {
    throw ParseError("bad signal count '" + toks[1] + "'", line_no);
  }
  if (d.n_sig < 0) throw ParseError("negative signal count", line_no);
  if (toks.size() >= 3) {
    std::string fs_tok = toks[2].substr(0, toks[2].find('/'));
    try {
      d.fs = std::stod(fs_tok);
    } catch (const std::exception&) {
      throw ParseError("bad sampling frequency '" + toks[2] + "'", line_no);
    }
    if (d.fs <= 0) throw ParseError("sampling frequency must be positive", line_no);
  }
  if (toks.size() >= 4) {
    try {
      d.n_samples = std::stol(toks[3]);
    } catch (const std::exception&) {
      throw ParseError("bad sample count '" + toks[3] + "'", line_no);
    }
  }
}

// Signal line: file format[xN[:skew][+off]] [gain[(base)][/units] [res [zero [init [chk [blk [desc]]]]]]]
SignalSpec parse_signal_line(const std::string& line, long line_no) {
  auto toks = split_ws(line);
  if (toks.size() < 2) throw ParseError("malformed signal line: '" + line + "'", line_no);
  SignalSpec s;
  s.file_name = toks[0];

  const std::string& fmt = toks[1];
  size_t pos = 0;
  while (pos < fmt.size() && std::isdigit(static_cast<unsigned char>(fmt[pos]))) ++pos;
  if (pos == 0) throw ParseError("bad signal format '" + fmt + "'", line_no);
  if (pos != fmt.size())
    throw UnsupportedFormat("signal format modifiers not supported: '" + fmt + "'");
  s.format = std::stoi(fmt.substr(0, pos));
  if (s.format != 212 && s.format != 16)
    throw UnsupportedFormat("signal format " + std::to_string(s.format) + " not supported");

  if (toks.size() >= 3) {
    // gain[(baseline)][/units]
    std::string g = toks[2];
    auto slash = g.find('/');
    if (slash != std::string::npos) {
      s.units = g.substr(slash + 1);
      g = g.substr(0, slash);
    }
    auto paren = g.find('(');
    if (paren != std::string::npos) {
      auto close = g.find(')', paren);
      if (close == std::string::npos) throw ParseError("unterminated baseline in '" + toks[2] + "'", line_no);
      s.baseline = std::stoi(g.substr(paren + 1, close - paren - 1));
      g = g.substr(0, paren);
    }
    try {
      s.gain = g.empty() ? 0.0 : std::stod(g);
    } catch (const std::exception&) {
      throw ParseError("bad gain '" + toks[2] + "'", line_no);
    }
    if (s.gain == 0.0) s.gain = 200.0;  // WFDB default gain
    if (paren == std::string::npos && toks.size() >= 5) {
      // baseline defaults to adc_zero when not given explicitly
      try {
        s.adc_zero = std::stoi(toks[4]);
        s.baseline = s.adc_zero;
      } catch (const std::exception&) {
        throw ParseError("bad adc zero '" + toks[4] + "'", line_no);
      }
    }
  }
  if (toks.size() >= 9) {
    std::string desc = toks[8];
    for (size_t i = 9; i < toks.size(); ++i) desc += " " + toks[i];
    s.description = desc;
  }
  return s;
}

int sign_extend_12(int v) { return (v & 0x800) ? v - 0x1000 : v; }

}  // namespace

std::string HeaderDescriptor::lead_name(int index) const {
  if (index >= 0 && index < static_cast<int>(signals.size()) && !signals[index].description.empty())
    return signals[index].description;
  return "sig" + std::to_string(index);
}

HeaderDescriptor parse_header(const std::string& text) {
  HeaderDescriptor d;
  std::istringstream is(text);
  std::string line;
  long line_no = 0;
  bool have_record_line = false;
  int signals_read = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      d.comments.push_back(line.substr(1));
      continue;
    }
    if (!have_record_line) {
      parse_record_line(line, line_no, d);
      have_record_line = true;
    } else if (signals_read < d.n_sig) {
      d.signals.push_back(parse_signal_line(line, line_no));
      ++signals_read;
    }
    // trailing info lines ignored
  }
  if (!have_record_line) throw ParseError("empty header", 0);
  if (signals_read < d.n_sig)
    throw ParseError("header declares " + std::to_string(d.n_sig) + " signals but lists " +
                         std::to_string(signals_read),
                     line_no);
  return d;
}

std::vector<std::vector<int>> decode_raw(const std::vector<std::uint8_t>& bytes,
                                         const HeaderDescriptor& desc, int* warnings) {
  const int n_sig = desc.n_sig;
  std::vector<std::vector<int>> out(n_sig);
  if (n_sig == 0) return out;

  const int format = desc.signals.front().format;
  for (const auto& s : desc.signals)
    if (s.format != format)
      throw UnsupportedFormat("mixed signal formats in one record are not supported");

  std::vector<int> values;
  if (format == 16) {
    if (bytes.size() % 2 != 0) throw ParseError("format 16 payload has odd byte count");
    values.reserve(bytes.size() / 2);
    for (size_t i = 0; i + 1 < bytes.size(); i += 2) {
      int v = bytes[i] | (bytes[i + 1] << 8);
      if (v & 0x8000) v -= 0x10000;
      values.push_back(v);
    }
  } else {  // 212
    if (bytes.size() % 3 == 1) throw ParseError("format 212 payload size does not match stride");
    values.reserve(bytes.size() / 3 * 2);
    for (size_t i = 0; i + 1 < bytes.size(); i += 3) {
      int b0 = bytes[i], b1 = bytes[i + 1];
      values.push_back(sign_extend_12(((b1 & 0x0F) << 8) | b0));
      if (i + 2 < bytes.size()) {
        int b2 = bytes[i + 2];
        values.push_back(sign_extend_12(((b1 & 0xF0) << 4) | b2));
      }
    }
  }

  long expected = desc.n_samples > 0 ? desc.n_samples * n_sig : static_cast<long>(values.size()) / n_sig * n_sig;
  if (static_cast<long>(values.size()) < expected)
    throw ParseError("truncated signal payload: " + std::to_string(values.size()) + " samples, expected " +
                     std::to_string(expected));
  if (static_cast<long>(values.size()) > expected) {
    // format 212 pads odd totals to a full 3-byte group; anything beyond one slot is an error
    if (format == 212 && static_cast<long>(values.size()) == expected + 1) {
      if (warnings) ++*warnings;
      values.resize(expected);
    } else {
      throw ParseError("signal payload longer than header sample count");
    }
  }

  long per_sig = expected / n_sig;
  for (int s = 0; s < n_sig; ++s) out[s].reserve(per_sig);
  for (long i = 0; i < expected; ++i) out[i % n_sig].push_back(values[i]);
  return out;
}

EcgRecord decode_signal(const std::vector<std::uint8_t>& bytes, const HeaderDescriptor& desc) {
  auto raw = decode_raw(bytes, desc);
  EcgRecord rec;
  rec.record_id = desc.record_id;
  rec.fs = desc.fs;
  rec.leads.resize(desc.n_sig);
  for (int s = 0; s < desc.n_sig; ++s) {
    const auto& spec = desc.signals[s];
    rec.leads[s].name = desc.lead_name(s);
    rec.leads[s].samples.resize(raw[s].size());
    const double inv_gain = 1.0 / spec.gain;
    for (size_t i = 0; i < raw[s].size(); ++i)
      rec.leads[s].samples[i] = static_cast<float>((raw[s][i] - spec.baseline) * inv_gain);
  }
  return rec;
}

SymbolMap default_symbol_map() {
  SymbolMap m;
  m.wave_of['p'] = Wave::P;
  m.wave_of['t'] = Wave::T;
  for (char c : {'N', 'L', 'R', 'a', 'V', 'F', 'J', 'A', 'S', 'E', 'j', '/', 'Q', 'B', 'e', 'n', 'x', 'f', 'r'})
    m.wave_of[c] = Wave::Qrs;
  m.wave_of['u'] = Wave::None;  // consume U-wave groups silently
  return m;
}

namespace {

// MIT annotation code -> mnemonic, per the standard code table.
char code_to_symbol(int code) {
  static const char table[50] = {
      /*0*/ 0,   'N', 'L', 'R', 'a', 'V', 'F', 'J', 'A', 'S',
      /*10*/ 'E', 'j', '/', 'Q', '~', 0,   '|', 0,   's', 'T',
      /*20*/ '*', 'D', '"', '=', 'p', 'B', '\'', 't', '+', 'u',
      /*30*/ '?', '!', '[', ']', 'e', 'n', '@', 'x', 'f', '(',
      /*40*/ ')', 'r', 0,   0,   0,   0,   0,   0,   0,   0};
  return (code >= 0 && code < 50) ? table[code] : 0;
}

struct RawAnnotation {
  char symbol;
  long sample;
  int chan;
};

std::vector<RawAnnotation> parse_mit_stream(const std::vector<std::uint8_t>& bytes) {
  std::vector<RawAnnotation> out;
  size_t pos = 0;
  long t = 0;
  int chan = 0;
  auto next_word = [&]() -> int {
    if (pos + 2 > bytes.size()) { pos = bytes.size(); return -1; }
    int w = bytes[pos] | (bytes[pos + 1] << 8);
    pos += 2;
    return w;
  };
  while (true) {
    int word = next_word();
    if (word < 0) break;
    if (word == 0) break;  // EOF marker
    int code = (word >> 10) & 0x3F;
    int data = word & 0x3FF;
    switch (code) {
      case 59: {  // SKIP: 4-byte interval, high word first
        int hi = next_word(), lo = next_word();
        if (hi < 0 || lo < 0) throw ParseError("truncated SKIP pseudo-annotation");
        std::int32_t delta = static_cast<std::int32_t>((static_cast<std::uint32_t>(hi) << 16) |
                                                       static_cast<std::uint32_t>(lo));
        t += delta;
        break;
      }
      case 60:  // NUM, ignored
      case 61:  // SUB, ignored
        break;
      case 62:  // CHN: applies to the most recent annotation and onward
        chan = data;
        if (!out.empty()) out.back().chan = chan;
        break;
      case 63: {  // AUX: skip the string, padded to even length
        size_t len = static_cast<size_t>(data);
        pos += len + (len & 1);
        if (pos > bytes.size()) throw ParseError("truncated AUX pseudo-annotation");
        break;
      }
      default: {
        t += data;
        char sym = code_to_symbol(code);
        if (sym != 0) out.push_back({sym, t, chan});
        break;
      }
    }
  }
  return out;
}

}  // namespace

AnnotationReadResult read_annotations(const std::vector<std::uint8_t>& bytes,
                                      const HeaderDescriptor& desc, const SymbolMap& symbols,
                                      const std::optional<std::string>& lead_override) {
  AnnotationReadResult res;
  res.set.record_id = desc.record_id;
  res.set.source_fs = desc.fs;

  auto raw = parse_mit_stream(bytes);

  // Pairing runs independently per channel.
  std::map<int, std::vector<RawAnnotation>> by_chan;
  for (const auto& r : raw) by_chan[r.chan].push_back(r);

  for (auto& [chan, events] : by_chan) {
    std::string lead = lead_override ? *lead_override : desc.lead_name(chan);
    std::optional<long> open_sample;
    std::optional<Wave> armed;  // wave awaiting its ')'
    auto emit = [&](Wave w, BoundaryKind k, long sample) {
      if (w == Wave::None) return;  // consumed silently (e.g. U wave)
      res.set.items.push_back({w, k, sample, lead});
    };
    for (const auto& ev : events) {
      if (ev.symbol == '(') {
        if (open_sample) ++res.dropped;  // '(' never paired with a wave symbol
        open_sample = ev.sample;
        armed.reset();
      } else if (ev.symbol == ')') {
        if (armed) {
          emit(*armed, BoundaryKind::Offset, ev.sample);
          armed.reset();
        } else {
          ++res.dropped;
        }
        if (open_sample) {
          ++res.dropped;  // '( )' with no wave symbol inside
          open_sample.reset();
        }
      } else {
        auto it = symbols.wave_of.find(ev.symbol);
        if (it == symbols.wave_of.end()) continue;  // unknown symbol: skipped
        if (open_sample) {
          emit(it->second, BoundaryKind::Onset, *open_sample);
          open_sample.reset();
        }
        armed = it->second;
      }
    }
    if (open_sample) ++res.dropped;  // dangling '(' at stream end
  }

  res.set.sort();
  return res;
}

EcgRecord resample(const EcgRecord& record, double target_fs) {
  if (target_fs <= 0) throw ParseError("target sampling frequency must be positive");
  if (record.fs == target_fs) return record;
  EcgRecord out;
  out.record_id = record.record_id;
  out.fs = target_fs;
  const long n = record.length();
  const long m = std::lround(static_cast<double>(n) * target_fs / record.fs);
  const double step = record.fs / target_fs;  // source samples per output sample
  out.leads.resize(record.leads.size());
  for (size_t l = 0; l < record.leads.size(); ++l) {
    out.leads[l].name = record.leads[l].name;
    auto& dst = out.leads[l].samples;
    const auto& src = record.leads[l].samples;
    dst.resize(m);
    for (long i = 0; i < m; ++i) {
      double pos = i * step;
      if (pos <= 0) {
        dst[i] = src.empty() ? 0.0f : src.front();
      } else if (pos >= n - 1) {
        dst[i] = src.empty() ? 0.0f : src.back();
      } else {
        long i0 = static_cast<long>(pos);
        double frac = pos - i0;
        dst[i] = static_cast<float>((1.0 - frac) * src[i0] + frac * src[i0 + 1]);
      }
    }
  }
  return out;
}

AnnotationSet resample_annotations(const AnnotationSet& set, double target_fs) {
  if (target_fs <= 0) throw ParseError("target sampling frequency must be positive");
  if (set.source_fs == target_fs) return set;
  AnnotationSet out = set;
  out.source_fs = target_fs;
  const double factor = target_fs / set.source_fs;
  for (auto& it : out.items) it.sample = std::lround(it.sample * factor);
  return out;
}

namespace {
std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open file: " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}
}  // namespace

HeaderDescriptor read_header_file(const std::string& base) {
  std::ifstream f(base + ".hea");
  if (!f) throw ParseError("cannot open header: " + base + ".hea");
  std::stringstream ss;
  ss << f.rdbuf();
  auto d = parse_header(ss.str());
  return d;
}

EcgRecord read_record(const std::string& base) {
  auto desc = read_header_file(base);
  if (desc.n_sig == 0) {
    EcgRecord rec;
    rec.record_id = desc.record_id;
    rec.fs = desc.fs;
    return rec;
  }
  auto dir_end = base.find_last_of('/');
  std::string dir = dir_end == std::string::npos ? "" : base.substr(0, dir_end + 1);
  auto bytes = read_file_bytes(dir + desc.signals.front().file_name);
  return decode_signal(bytes, desc);
}

AnnotationReadResult read_annotation_file(const std::string& base, const std::string& ext,
                                          const HeaderDescriptor& desc, const SymbolMap& symbols,
                                          const std::optional<std::string>& lead_override) {
  auto bytes = read_file_bytes(base + "." + ext);
  return read_annotations(bytes, desc, symbols, lead_override);
}

}  // namespace ecgseg::wfdb
