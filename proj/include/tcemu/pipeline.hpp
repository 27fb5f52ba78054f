#pragma once

// Model of the tensor-core MMA datapath for one output element: raw operand
// products, fixed-point group accumulation inside a finite alignment window,
// and truncating conversion of each group result back to fp32. The shape of
// the datapath (operand grouping, window width, exponent floor, rounding
// modes, normalization switches) lives in a PipelineProfile so the same code
// reproduces different GPU generations.

#include "tcemu/formats.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tcemu {

// One MMA instruction multiplies a 16x16 tile pair and adds a 16x16 fp32
// accumulator tile; each output element consumes one 16-element dot product.
inline constexpr int kTileDim = 16;
inline constexpr int kDotLength = kTileDim;

// A slot in the per-element adder tree: the initial accumulator element, one
// of the 16 a*b products (index 1..16 in dot-product order), or the fp32
// result carried over from the previous group.
enum class SlotKind : uint8_t { accumulator, product, previous };

struct Slot {
    SlotKind kind = SlotKind::accumulator;
    int index = 0; // 1..16 when kind == product, 0 otherwise

    friend bool operator==(const Slot&, const Slot&) = default;
};

inline Slot acc_slot() { return {SlotKind::accumulator, 0}; }
inline Slot prev_slot() { return {SlotKind::previous, 0}; }
inline Slot product_slot(int index) { return {SlotKind::product, index}; }

// Groups are evaluated in order; each lists the slots summed together in one
// fixed-point pass. Every group after the first must start by consuming the
// previous group's fp32 result through a `previous` slot.
using Grouping = std::vector<std::vector<Slot>>;

struct PipelineProfile {
    std::string name;
    FormatId input_format = FormatId::fp16;
    FormatId accumulator_format = FormatId::fp32;
    Grouping grouping;
    int window_bits = 24;      // fixed-point alignment window width in bits
    int exponent_floor = -132; // lower clamp on each group's reference exponent
    Rounding alignment_rounding = Rounding::toward_zero; // applied when shifting operands onto the grid
    Rounding final_rounding = Rounding::toward_zero;     // applied when converting a group sum to fp32
    bool normalize_products = false;             // renormalize carry-out products (significand >= 2)
    bool renormalize_subnormal_products = false; // renormalize products with leading-zero significands

    friend bool operator==(const PipelineProfile&, const PipelineProfile&) = default;
};

enum class Arch : uint8_t { ampere, lovelace, hopper };

Arch arch_from_name(const std::string& name); // "ampere" | "lovelace" | "hopper"
const char* arch_name(Arch arch);

// Profile for a GPU generation and input element type. Lovelace shares the
// Ampere datapath; the distinct architecture name is kept for reporting.
PipelineProfile make_profile(Arch arch, FormatId input_format);

// Checks structural invariants: non-empty groups, accumulator in the first
// group, exactly one `previous` at the head of every later group, each
// product slot 1..16 appearing exactly once, supported rounding modes and a
// sane window width. Throws input_error on violation.
void validate_profile(const PipelineProfile& profile);

// An operand product before any alignment: exact significand product plus the
// exponent key the alignment stage will use. The key is the sum of the two
// stored exponent fields (a subnormal input contributes its stored value
// 1-bias, not its normalized exponent), optionally re-adjusted by the
// profile's normalization switches. The represented magnitude is
// significand * 2^(exponent_key - significand_scale).
struct RawProduct {
    uint8_t sign = 0;
    int32_t exponent_key = 0;
    uint64_t significand = 0;
    int32_t significand_scale = 0; // 2 * input mantissa bits
    bool zero = true;
};

// Multiplies two finite decoded inputs into a RawProduct; the profile
// supplies the normalization switches. Signed zeros produce a zero product
// (sign preserved for completeness; zero products never affect a group sum).
RawProduct multiply_raw(const UnpackedValue& a, const UnpackedValue& b,
                        const PipelineProfile& profile);

// One operand of a group sum: either a raw product or an fp32 value (the
// initial accumulator element or the previous group's result).
struct GroupOperand {
    enum class Kind : uint8_t { product, fp32 } kind = Kind::fp32;
    RawProduct product;
    uint32_t fp32_bits = 0;

    static GroupOperand from_product(const RawProduct& p) {
        GroupOperand op;
        op.kind = Kind::product;
        op.product = p;
        return op;
    }
    static GroupOperand from_fp32(uint32_t bits) {
        GroupOperand op;
        op.kind = Kind::fp32;
        op.fp32_bits = bits;
        return op;
    }
};

// Fixed-point sum of one group, returned as fp32 bits. Operands are floored
// onto a grid of 2^(e_max - window_bits) where e_max is the clamped maximum
// operand exponent key, summed exactly, and the total converted to fp32 with
// the profile's final rounding. An infinite fp32 operand (a saturated
// previous group) propagates unchanged; infinities cannot arise from finite
// products inside a group, only from the conversion step.
uint32_t group_sum(std::span<const GroupOperand> operands, const PipelineProfile& profile);

// Full per-element MMA: d = dot(a_row, b_col) + c, evaluated group by group.
// a_row/b_col hold kDotLength raw bit patterns in the profile's input format;
// c_bits is fp32. Throws input_error on NaN or infinity inputs.
uint32_t mma_element(uint32_t c_bits, std::span<const uint32_t> a_row,
                     std::span<const uint32_t> b_col, const PipelineProfile& profile);

// A 16x16 tile of raw bit patterns, row-major.
struct Tile {
    FormatId format = FormatId::fp32;
    std::array<uint32_t, kTileDim * kTileDim> bits{};

    uint32_t& at(int row, int col) { return bits[size_t(row) * kTileDim + size_t(col)]; }
    const uint32_t& at(int row, int col) const { return bits[size_t(row) * kTileDim + size_t(col)]; }

    friend bool operator==(const Tile&, const Tile&) = default;
};

// Whole-tile MMA: d[i][j] = mma_element(c[i][j], a.row(i), b.col(j)).
// a and b must carry the profile's input format, c must be fp32.
Tile tile_mma(const Tile& c, const Tile& a, const Tile& b, const PipelineProfile& profile);

// Chained-step variant for K folding: an accumulator cell that is already
// +-infinity (a group conversion overflowed in an earlier step) passes
// through unchanged instead of being rejected. This matches the datapath's
// own saturation behaviour: a group given an infinite fp32 operand yields
// that infinity, so once a cell saturates every later step would return the
// same infinity anyway. Cells with finite accumulators behave exactly like
// tile_mma. Accumulator cells must not be NaN; a/b elements must be finite.
Tile tile_mma_chained(const Tile& c, const Tile& a, const Tile& b,
                      const PipelineProfile& profile);

} // namespace tcemu
