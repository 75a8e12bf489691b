#include "core/matrix_file.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "core/binio.hpp"
#include "core/error.hpp"

namespace lrp4rag {

namespace {
constexpr std::uint32_t kMatrixVersion = 1;
}

std::vector<char> encode_matrix(const Matrix& m) {
  if (!m.all_finite()) fail(ErrorKind::kFormat, "relevance matrix holds non-finite values");
  binio::Writer w;
  w.magic("LRPM");
  w.u32(kMatrixVersion);
  w.u64(m.rows());
  w.u64(m.cols());
  for (double v : m.values()) w.f32(static_cast<float>(v));
  return w.bytes();
}

Matrix decode_matrix(std::vector<char> bytes, const std::string& source) {
  binio::Reader r(std::move(bytes), source);
  r.expect_magic("LRPM");
  const auto version = r.u32();
  if (version != kMatrixVersion) fail(ErrorKind::kFormat, source + ": unsupported LRPM version " + std::to_string(version));
  const auto rows = r.u64();
  const auto cols = r.u64();
  if (cols != 0 && rows > std::numeric_limits<std::uint64_t>::max() / cols / 4) {
    fail(ErrorKind::kFormat, source + ": header dimensions overflow");
  }
  const auto payload = rows * cols * 4;
  if (r.remaining() != payload) {
    fail(ErrorKind::kFormat, source + ": payload holds " + std::to_string(r.remaining()) + " bytes, header implies " +
                                 std::to_string(payload));
  }
  std::vector<double> data(rows * cols);
  for (auto& v : data) v = static_cast<double>(r.f32());
  return Matrix(rows, cols, std::move(data));
}

void export_matrix(const Matrix& m, const std::filesystem::path& path) {
  const auto bytes = encode_matrix(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

Matrix import_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_matrix(std::move(bytes), path.string());
}

Matrix read_matrix_csv(std::istream& in) {
  std::vector<double> data;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t count = 0;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      const auto first = cell.find_first_not_of(" \t");
      const auto last = cell.find_last_not_of(" \t");
      if (first == std::string::npos) fail(ErrorKind::kFormat, "empty CSV cell on row " + std::to_string(rows + 1));
      const std::string trimmed = cell.substr(first, last - first + 1);
      char* end = nullptr;
      const double v = std::strtod(trimmed.c_str(), &end);
      if (end != trimmed.c_str() + trimmed.size() || !std::isfinite(v)) {
        fail(ErrorKind::kFormat, "bad CSV number \"" + trimmed + "\" on row " + std::to_string(rows + 1));
      }
      data.push_back(v);
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) fail(ErrorKind::kFormat, "ragged CSV row " + std::to_string(rows + 1));
    ++rows;
  }
  return Matrix(rows, cols, std::move(data));
}

void write_matrix_csv(const Matrix& m, std::ostream& out) {
  char buf[64];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", m(r, c));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace lrp4rag
