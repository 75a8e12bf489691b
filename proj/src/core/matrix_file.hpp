#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <vector>

#include "core/numerics.hpp"

namespace lrp4rag {

// "LRPM" relevance-matrix file: magic, u32 version, u64 rows, u64 cols, then
// rows*cols f32 values, row-major little-endian. Stored at f32; held as f64.
std::vector<char> encode_matrix(const Matrix& m);
Matrix decode_matrix(std::vector<char> bytes, const std::string& source = "<buffer>");

void export_matrix(const Matrix& m, const std::filesystem::path& path);
Matrix import_matrix(const std::filesystem::path& path);

// Plain comma-separated rows, no header.
Matrix read_matrix_csv(std::istream& in);
void write_matrix_csv(const Matrix& m, std::ostream& out);

}  // namespace lrp4rag
