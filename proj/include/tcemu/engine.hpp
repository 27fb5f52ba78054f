#pragma once
// Matrix front end: arbitrary-shape matmul driven by the tile pipeline, the
// HWKT tile/matrix container format, bitwise comparison reports and profile
// JSON serialization.

#include "tcemu/pipeline.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tcemu::engine {

// Elements are stored one per uint32_t in the low bits of the element's
// format regardless of storage width; row-major.
struct Matrix {
    int rows = 0;
    int cols = 0;
    FormatId format = FormatId::fp32;
    std::vector<uint32_t> data;

    static Matrix zeros(int rows, int cols, FormatId format);

    uint32_t& at(int row, int col) { return data[size_t(row) * size_t(cols) + size_t(col)]; }
    const uint32_t& at(int row, int col) const {
        return data[size_t(row) * size_t(cols) + size_t(col)];
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

Matrix matrix_from_tile(const Tile& tile);
Tile tile_from_matrix(const Matrix& m); // requires 16x16

// HWKT container: magic "HWKT", version 0x01, one byte of format code
// (1=fp32, 2=fp16, 3=bf16, 4=fp8_e4m3), two reserved zero bytes, then row and
// column counts as u32 little-endian and the row-major payload in the
// format's storage width, little-endian.
Matrix read_matrix(const std::string& path);
void write_matrix(const std::string& path, const Matrix& m);

// d = a*b + c with shapes MxK, KxN, MxN; a and b carry the profile's input
// format, c is fp32. Operands are zero-padded to multiples of 16, K is folded
// in ascending 16-wide steps through the tile pipeline. Steps whose A or B
// tile is entirely zero-valued contribute no products and are skipped, so a
// result is a function of the data alone, not of how it was padded.
// A cell that saturates to +-infinity in one step keeps that infinity through
// every later step, mirroring the datapath's handling of an infinite
// previous-group operand; supplied accumulator cells may therefore be
// infinite, but NaN anywhere and infinite a/b elements are rejected.
// `threads` > 0 pins the worker count; 0 uses the OpenMP default. The result
// is bitwise independent of the worker count.
Matrix matmul(const Matrix& a, const Matrix& b, const Matrix& c,
              const PipelineProfile& profile, int threads = 0);
// Single-threaded reference with no parallel runtime involved at all.
Matrix matmul_serial(const Matrix& a, const Matrix& b, const Matrix& c,
                     const PipelineProfile& profile);

struct MismatchSample {
    int row = 0;
    int col = 0;
    uint32_t lhs_bits = 0;
    uint32_t rhs_bits = 0;
};

struct CompareReport {
    uint64_t total = 0;
    uint64_t mismatches = 0;
    // Largest distance between mismatching cells in the format's ordered-bit
    // space (sign-magnitude order); counts code points, so it is a true ULP
    // distance for finite values.
    uint64_t max_ulp = 0;
    std::vector<MismatchSample> samples; // first 16 mismatches row-major
};

CompareReport compare(const Matrix& lhs, const Matrix& rhs);
void write_report(const std::string& path, const CompareReport& report);

// Profile JSON mirrors the PipelineProfile field names; grouping uses the
// tokens "ACC", "PREV", "P1".."P16". Unknown keys are rejected. "evidence"
// and "notes" (written by probe inference) are accepted and ignored.
std::string profile_to_json_text(const PipelineProfile& profile);
PipelineProfile profile_from_json_text(const std::string& text);
PipelineProfile load_profile(const std::string& path);
void save_profile(const std::string& path, const PipelineProfile& profile);

} // namespace tcemu::engine
