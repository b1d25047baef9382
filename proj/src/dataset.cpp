#include "iflab/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace iflab {

void Dataset::validate() const {
  if (n == 0) fail(Errc::EmptyData, "dataset has no rows");
  if (d == 0) fail(Errc::BadConfig, "dataset has no covariate columns");
  if (x.size() != n * d || a.size() != n || y.size() != n)
    fail(Errc::BadConfig, "dataset column sizes disagree with row count");
  if (has_instrument && r.size() != n)
    fail(Errc::BadConfig, "instrument column size disagrees with row count");
  if (d2 > 0 && (x2.size() != n * d2 || a2.size() != n))
    fail(Errc::BadConfig, "second-stage column sizes disagree with row count");
  for (double v : x)
    if (!std::isfinite(v)) fail(Errc::BadConfig, "non-finite covariate value");
  for (double v : y)
    if (!std::isfinite(v)) fail(Errc::BadConfig, "non-finite outcome value");
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.n = rows.size();
  out.d = ds.d;
  out.d2 = ds.d2;
  out.has_instrument = ds.has_instrument;
  out.x.reserve(out.n * out.d);
  out.a.reserve(out.n);
  out.y.reserve(out.n);
  for (std::size_t i : rows) {
    if (i >= ds.n) fail(Errc::BadConfig, "subset row index out of range");
    const double* px = ds.row_x(i);
    out.x.insert(out.x.end(), px, px + ds.d);
    out.a.push_back(ds.a[i]);
    out.y.push_back(ds.y[i]);
    if (ds.has_instrument) out.r.push_back(ds.r[i]);
    if (ds.d2 > 0) {
      const double* p2 = ds.row_x2(i);
      out.x2.insert(out.x2.end(), p2, p2 + ds.d2);
      out.a2.push_back(ds.a2[i]);
    }
  }
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_real(const std::string& s, std::size_t line_no) {
  const char* b = s.c_str();
  char* end = nullptr;
  double v = std::strtod(b, &end);
  while (end && *end == ' ') ++end;
  if (end == b || (end && *end != '\0'))
    fail(Errc::IoError, "csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
  return v;
}

int parse_int01(const std::string& s, std::size_t line_no, const std::string& col) {
  double v = parse_real(s, line_no);
  int iv = static_cast<int>(v);
  if (v != iv)
    fail(Errc::IoError, "csv line " + std::to_string(line_no) + ": column " + col +
                            " must be an integer, got '" + s + "'");
  return iv;
}

}  // namespace

Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line)) fail(Errc::IoError, "'" + path + "' is empty");
  auto header = split_csv_line(line);

  // resolve roles from the header
  std::size_t d = 0, d2 = 0;
  bool has_r = false, has_a2 = false;
  std::vector<int> role(header.size(), -1);  // 0=x,1=a,2=y,3=r,4=x2,5=a2
  std::vector<std::size_t> part(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h.rfind("x2_", 0) == 0) {
      role[c] = 4;
      part[c] = static_cast<std::size_t>(std::atoi(h.c_str() + 3));
      d2 = std::max(d2, part[c]);
    } else if (h.size() >= 2 && h[0] == 'x' && h.find_first_not_of("0123456789", 1) == std::string::npos) {
      role[c] = 0;
      part[c] = static_cast<std::size_t>(std::atoi(h.c_str() + 1));
      d = std::max(d, part[c]);
    } else if (h == "a") {
      role[c] = 1;
    } else if (h == "y") {
      role[c] = 2;
    } else if (h == "r") {
      role[c] = 3;
      has_r = true;
    } else if (h == "a2") {
      role[c] = 5;
      has_a2 = true;
    } else {
      fail(Errc::IoError, "unknown csv column '" + h + "' in '" + path + "'");
    }
  }
  bool saw_a = false, saw_y = false;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (role[c] == 1) saw_a = true;
    if (role[c] == 2) saw_y = true;
  }
  if (d == 0 || !saw_a || !saw_y)
    fail(Errc::IoError, "csv must contain x1..xd, a and y columns");
  if (d2 > 0 && !has_a2) fail(Errc::IoError, "x2_* columns present but a2 missing");
  if (has_a2 && d2 == 0) fail(Errc::IoError, "a2 present but x2_* columns missing");

  Dataset ds;
  ds.d = d;
  ds.d2 = d2;
  ds.has_instrument = has_r;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      fail(Errc::IoError, "csv line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " cells, got " +
                              std::to_string(cells.size()));
    std::vector<double> xr(d, 0.0), x2r(d2, 0.0);
    int av = 0, rv = 0, a2v = 0;
    double yv = 0.0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      switch (role[c]) {
        case 0: xr[part[c] - 1] = parse_real(cells[c], line_no); break;
        case 1: av = parse_int01(cells[c], line_no, "a"); break;
        case 2: yv = parse_real(cells[c], line_no); break;
        case 3: rv = parse_int01(cells[c], line_no, "r"); break;
        case 4: x2r[part[c] - 1] = parse_real(cells[c], line_no); break;
        case 5: a2v = parse_int01(cells[c], line_no, "a2"); break;
      }
    }
    ds.x.insert(ds.x.end(), xr.begin(), xr.end());
    ds.a.push_back(av);
    ds.y.push_back(yv);
    if (has_r) ds.r.push_back(rv);
    if (d2 > 0) {
      ds.x2.insert(ds.x2.end(), x2r.begin(), x2r.end());
      ds.a2.push_back(a2v);
    }
    ++ds.n;
  }
  ds.validate();
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path);
  if (!out) fail(Errc::IoError, "cannot open '" + path + "' for writing");
  std::ostringstream head;
  for (std::size_t j = 0; j < ds.d; ++j) head << "x" << (j + 1) << ",";
  head << "a,y";
  if (ds.has_instrument) head << ",r";
  if (ds.d2 > 0) {
    for (std::size_t j = 0; j < ds.d2; ++j) head << ",x2_" << (j + 1);
    head << ",a2";
  }
  out << head.str() << "\n";
  for (std::size_t i = 0; i < ds.n; ++i) {
    std::string line;
    for (std::size_t j = 0; j < ds.d; ++j) {
      line += format_double(ds.x[i * ds.d + j]);
      line += ",";
    }
    line += std::to_string(ds.a[i]);
    line += ",";
    line += format_double(ds.y[i]);
    if (ds.has_instrument) {
      line += ",";
      line += std::to_string(ds.r[i]);
    }
    if (ds.d2 > 0) {
      for (std::size_t j = 0; j < ds.d2; ++j) {
        line += ",";
        line += format_double(ds.x2[i * ds.d2 + j]);
      }
      line += ",";
      line += std::to_string(ds.a2[i]);
    }
    out << line << "\n";
  }
  if (!out) fail(Errc::IoError, "error while writing '" + path + "'");
}

}  // namespace iflab
