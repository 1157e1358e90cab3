#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ecgseg/types.hpp"

namespace ecgseg::csv {

// One annotation row: record,lead,wave,kind,sample,time_ms
struct AnnotationRow {
  std::string record;
  std::string lead;
  Wave wave;
  BoundaryKind kind;
  long sample;
  double time_ms;
};

void write_annotation_header(std::ostream& os);
void write_annotation_rows(std::ostream& os, const AnnotationSet& set);
void write_annotation_rows(std::ostream& os, const std::string& record, const std::string& lead,
                           const Delineation& delineation, double fs);

std::vector<AnnotationRow> read_annotation_rows(std::istream& is);
std::vector<AnnotationRow> read_annotation_csv(const std::string& path);
void write_annotation_csv(const std::string& path, const AnnotationSet& set);

}  // namespace ecgseg::csv
