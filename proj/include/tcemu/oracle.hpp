#pragma once

// Exact reference evaluators used to cross-check the fast pipeline and to
// freeze expected values in tests. exact_mma_element reproduces the grouped
// fixed-point datapath with unbounded integers: it shares the profile
// description and the format constants with the pipeline but none of its
// arithmetic, so a bug in one side cannot hide in the other.
// ieee_sequential_dot is the scalar-loop reference device: a plain IEEE-754
// left-to-right fused multiply/add chain with one rounding per operation.

#include "tcemu/pipeline.hpp"

#include <cstdint>
#include <span>

namespace tcemu {

// d = dot(a_row, b_col) + c under the profile's datapath, computed exactly at
// every step. a_row/b_col are raw bit patterns in the profile's input format,
// c_bits is fp32. Throws input_error on NaN/infinity inputs.
uint32_t exact_mma_element(uint32_t c_bits, std::span<const uint32_t> a_row,
                           std::span<const uint32_t> b_col, const PipelineProfile& profile);

// Whole-tile version: d[i][j] = exact_mma_element(c[i][j], a.row(i), b.col(j)).
Tile exact_tile_mma(const Tile& c, const Tile& a, const Tile& b, const PipelineProfile& profile);

// acc = c; for each k: acc = round(acc + round(a_k * b_k)); all operations in
// accumulate_format with IEEE round-to-nearest-even. Elements are widened
// exactly from element_format first. NaN and infinity follow IEEE rules, so
// this device accepts any inputs.
uint32_t ieee_sequential_dot(uint32_t c_bits, std::span<const uint32_t> a_row,
                             std::span<const uint32_t> b_col, FormatId element_format,
                             FormatId accumulate_format);

} // namespace tcemu
