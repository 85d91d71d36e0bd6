#pragma once

// Text tensor files: a header line "shape: d1 d2 ... dN" followed by the
// entries in storage order, whitespace separated, printed with 17
// significant digits so that reading back is exact.

#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "tpca/tensor.hpp"

namespace tpca {

inline void write_tensor(std::ostream& os, const DenseTensor& t) {
  os << "shape:";
  for (std::size_t d : t.shape()) os << ' ' << d;
  os << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  std::size_t col = 0;
  const std::size_t line = t.order() ? t.dim(0) : 1;
  for (double x : t.data()) {
    os << x << (++col % line == 0 ? '\n' : ' ');
  }
}

inline DenseTensor read_tensor(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw InvalidArgument("tensor file: missing header line");
  std::istringstream hs(header);
  std::string tag;
  hs >> tag;
  if (tag != "shape:") throw InvalidArgument("tensor file: header must start with 'shape:'");
  Shape shape;
  long long d = 0;
  while (hs >> d) {
    if (d <= 0) throw InvalidArgument("tensor file: mode sizes must be positive");
    shape.push_back(static_cast<std::size_t>(d));
  }
  if (!hs.eof()) throw InvalidArgument("tensor file: malformed shape line");
  std::vector<double> data;
  data.reserve(shape_size(shape));
  double x = 0;
  while (data.size() < shape_size(shape) && is >> x) data.push_back(x);
  if (data.size() != shape_size(shape)) {
    throw InvalidArgument("tensor file: expected " + std::to_string(shape_size(shape)) + " entries, found " +
                          std::to_string(data.size()));
  }
  std::string trailing;
  if (is >> trailing) throw InvalidArgument("tensor file: trailing data after " + std::to_string(data.size()) + " entries");
  return DenseTensor(std::move(shape), std::move(data));
}

inline void save_tensor(const std::string& path, const DenseTensor& t) {
  std::ofstream os(path);
  if (!os) throw InvalidArgument("cannot open " + path + " for writing");
  write_tensor(os, t);
}

inline DenseTensor load_tensor(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open " + path);
  return read_tensor(is);
}

}  // namespace tpca
