#include "ecgseg/csvio.hpp"

#include <fstream>
#include <sstream>

#include "ecgseg/errors.hpp"

namespace ecgseg::csv {
namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string format_ms(double ms) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", ms);
  return buf;
}

}  // namespace

void write_annotation_header(std::ostream& os) { os << "record,lead,wave,kind,sample,time_ms\n"; }

void write_annotation_rows(std::ostream& os, const AnnotationSet& set) {
  for (const auto& a : set.items) {
    double ms = set.source_fs > 0 ? a.sample * 1000.0 / set.source_fs : 0.0;
    os << set.record_id << ',' << a.lead << ',' << to_string(a.wave) << ',' << to_string(a.kind)
       << ',' << a.sample << ',' << format_ms(ms) << '\n';
  }
}

void write_annotation_rows(std::ostream& os, const std::string& record, const std::string& lead,
                           const Delineation& delineation, double fs) {
  for (const auto& a : delineation.boundaries) {
    os << record << ',' << lead << ',' << to_string(a.wave) << ',' << to_string(a.kind) << ','
       << a.sample << ',' << format_ms(a.sample * 1000.0 / fs) << '\n';
  }
}

std::vector<AnnotationRow> read_annotation_rows(std::istream& is) {
  std::vector<AnnotationRow> rows;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("record,", 0) == 0) continue;  // header
    auto f = split_commas(line);
    if (f.size() != 6) throw ParseError("expected 6 columns, got " + std::to_string(f.size()), line_no);
    AnnotationRow r;
    r.record = f[0];
    r.lead = f[1];
    auto w = wave_from_string(f[2]);
    if (!w) throw ParseError("unknown wave '" + f[2] + "'", line_no);
    r.wave = *w;
    auto k = kind_from_string(f[3]);
    if (!k) throw ParseError("unknown boundary kind '" + f[3] + "'", line_no);
    r.kind = *k;
    try {
      r.sample = std::stol(f[4]);
      r.time_ms = std::stod(f[5]);
    } catch (const std::exception&) {
      throw ParseError("bad numeric field in '" + line + "'", line_no);
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<AnnotationRow> read_annotation_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open CSV: " + path);
  return read_annotation_rows(f);
}

void write_annotation_csv(const std::string& path, const AnnotationSet& set) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot write CSV: " + path);
  write_annotation_header(f);
  write_annotation_rows(f, set);
}

}  // namespace ecgseg::csv
