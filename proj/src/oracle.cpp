#include "tcemu/oracle.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <limits>

namespace tcemu {

namespace {

using boost::multiprecision::cpp_int;

// Raw bit fields, pulled apart directly from the format parameters. The
// oracle deliberately does not call decode(): it re-derives everything from
// the bit pattern so the two code paths stay independent.
struct Fields {
    int sign = 0;      // 0 or 1
    uint32_t exp = 0;  // biased exponent field
    uint32_t frac = 0; // fraction field
    bool nan = false;
    bool inf = false;
};

Fields split(uint32_t bits, const FloatFormat& fmt) {
    Fields f;
    f.sign = int((bits >> (fmt.total_bits - 1)) & 1u);
    f.exp = (bits >> fmt.mantissa_bits) & fmt.exponent_mask();
    f.frac = bits & fmt.mantissa_mask();
    if (f.exp == fmt.exponent_mask()) {
        if (fmt.nan_rule == NanRule::ieee) {
            f.nan = f.frac != 0;
            f.inf = f.frac == 0;
        } else {
            f.nan = f.frac == fmt.mantissa_mask();
        }
    }
    return f;
}

// An operand of a group sum with its value held exactly:
//   value = sign * magnitude * 2^exponent2
// `key` is the exponent the alignment stage uses to pick the group's
// reference exponent; for products it is the sum of the stored exponent
// fields, not necessarily the true exponent of the value.
struct ExactOperand {
    int sign = 1; // +1 or -1
    cpp_int magnitude;
    int exponent2 = 0;
    int key = 0;
    bool infinite = false;
};

// Stored (biased-field) exponent: what the hardware reads out of the
// encoding before any normalization, so a subnormal contributes 1 - bias.
int stored_exponent(const Fields& f, const FloatFormat& fmt) {
    if (f.exp == 0)
        return fmt.min_exponent();
    return int(f.exp) - fmt.bias;
}

// Significand as an integer in units of 2^-mantissa_bits.
uint32_t stored_significand(const Fields& f, const FloatFormat& fmt) {
    if (f.exp == 0)
        return f.frac;
    return f.frac | (1u << fmt.mantissa_bits);
}

ExactOperand fp32_operand(uint32_t bits) {
    Fields f = split(bits, kFp32);
    ExactOperand op;
    op.sign = f.sign ? -1 : 1;
    if (f.inf) {
        op.infinite = true;
        return op;
    }
    op.magnitude = stored_significand(f, kFp32);
    op.exponent2 = stored_exponent(f, kFp32) - kFp32.mantissa_bits;
    op.key = stored_exponent(f, kFp32);
    return op;
}

ExactOperand product_operand(uint32_t a_bits, uint32_t b_bits, const FloatFormat& fmt,
                             const PipelineProfile& profile) {
    Fields a = split(a_bits, fmt);
    Fields b = split(b_bits, fmt);
    ExactOperand op;
    op.sign = (a.sign ^ b.sign) ? -1 : 1;
    op.magnitude = cpp_int(stored_significand(a, fmt)) * stored_significand(b, fmt);
    int base_key = stored_exponent(a, fmt) + stored_exponent(b, fmt);
    op.exponent2 = base_key - 2 * fmt.mantissa_bits;
    op.key = base_key;
    if (op.magnitude != 0) {
        // The normalization switches move the windowing key to the product's
        // true exponent; the value itself is unchanged either way.
        int lead = int(msb(op.magnitude));
        int scale = 2 * fmt.mantissa_bits;
        if (lead > scale && profile.normalize_products)
            op.key += lead - scale;
        if (lead < scale && profile.renormalize_subnormal_products)
            op.key -= scale - lead;
    }
    return op;
}

// Convert a nonzero exact value to fp32 with truncation. Values at or above
// 2^128 saturate to infinity; nonzero values that truncate to nothing give a
// signed zero.
uint32_t encode_fp32_truncated(int sign, const cpp_int& mag, int exponent2) {
    uint32_t sign_bit = sign < 0 ? 0x80000000u : 0u;
    int lead = int(msb(mag));
    int exp = exponent2 + lead;
    if (exp >= 128)
        return sign_bit | 0x7F800000u;
    if (exp >= -126) {
        int sh = lead - 23;
        cpp_int keep = sh >= 0 ? cpp_int(mag >> sh) : cpp_int(mag << -sh);
        uint32_t sig = keep.convert_to<uint32_t>();
        return sign_bit | (uint32_t(exp + 127) << 23) | (sig & 0x7FFFFFu);
    }
    int sh = exponent2 + 149;
    cpp_int keep = sh >= 0 ? cpp_int(mag << sh) : cpp_int(mag >> -sh);
    return sign_bit | keep.convert_to<uint32_t>();
}

uint32_t exact_group_sum(std::span<const ExactOperand> operands, const PipelineProfile& profile) {
    // A saturated previous-group result passes through; nothing else in a
    // group can be infinite.
    for (const ExactOperand& op : operands)
        if (op.infinite)
            return (op.sign < 0 ? 0x80000000u : 0u) | 0x7F800000u;

    int e_max = std::numeric_limits<int>::min();
    for (const ExactOperand& op : operands)
        if (op.magnitude != 0)
            e_max = std::max(e_max, op.key);
    if (e_max == std::numeric_limits<int>::min())
        return 0; // all operands zero
    e_max = std::max(e_max, profile.exponent_floor);

    // Every operand is floored onto the grid of 2^(e_max - window_bits);
    // magnitude truncation, so the alignment rounds each term toward zero.
    int grid = e_max - profile.window_bits;
    cpp_int total = 0;
    for (const ExactOperand& op : operands) {
        if (op.magnitude == 0)
            continue;
        int sh = op.exponent2 - grid;
        cpp_int units = sh >= 0 ? cpp_int(op.magnitude << sh) : cpp_int(op.magnitude >> -sh);
        total += op.sign < 0 ? cpp_int(-units) : units;
    }
    if (total == 0)
        return 0; // exact cancellation gives +0
    int sign = total < 0 ? -1 : 1;
    cpp_int mag = total < 0 ? cpp_int(-total) : total;
    return encode_fp32_truncated(sign, mag, grid);
}

} // namespace

uint32_t exact_mma_element(uint32_t c_bits, std::span<const uint32_t> a_row,
                           std::span<const uint32_t> b_col, const PipelineProfile& profile) {
    validate_profile(profile);
    if (a_row.size() != size_t(kDotLength) || b_col.size() != size_t(kDotLength))
        throw input_error("mma element expects " + std::to_string(kDotLength) +
                          " products per dot");

    const FloatFormat& in_fmt = format_of(profile.input_format);
    std::array<ExactOperand, kDotLength> products;
    for (int k = 0; k < kDotLength; ++k) {
        Fields a = split(a_row[size_t(k)], in_fmt);
        Fields b = split(b_col[size_t(k)], in_fmt);
        if (a.nan || a.inf || b.nan || b.inf)
            throw input_error("MMA inputs must be finite");
        products[size_t(k)] = product_operand(a_row[size_t(k)], b_col[size_t(k)], in_fmt, profile);
    }
    Fields c = split(c_bits, kFp32);
    if (c.nan || c.inf)
        throw input_error("MMA accumulator must be finite");

    uint32_t carried = 0;
    for (size_t g = 0; g < profile.grouping.size(); ++g) {
        std::vector<ExactOperand> ops;
        ops.reserve(profile.grouping[g].size());
        for (const Slot& slot : profile.grouping[g]) {
            switch (slot.kind) {
            case SlotKind::accumulator:
                ops.push_back(fp32_operand(c_bits));
                break;
            case SlotKind::previous:
                ops.push_back(fp32_operand(carried));
                break;
            case SlotKind::product:
                ops.push_back(products[size_t(slot.index - 1)]);
                break;
            }
        }
        carried = exact_group_sum(ops, profile);
    }
    return carried;
}

Tile exact_tile_mma(const Tile& c, const Tile& a, const Tile& b, const PipelineProfile& profile) {
    if (a.format != profile.input_format || b.format != profile.input_format)
        throw input_error("a/b tile format does not match the profile input format");
    if (c.format != FormatId::fp32)
        throw input_error("accumulator tile must be fp32");
    Tile d;
    d.format = FormatId::fp32;
    std::array<uint32_t, kDotLength> col;
    for (int j = 0; j < kTileDim; ++j) {
        for (int k = 0; k < kDotLength; ++k)
            col[size_t(k)] = b.at(k, j);
        for (int i = 0; i < kTileDim; ++i) {
            std::span<const uint32_t> row(&a.bits[size_t(i) * kTileDim], kDotLength);
            d.at(i, j) = exact_mma_element(c.at(i, j), row, col, profile);
        }
    }
    return d;
}

uint32_t ieee_sequential_dot(uint32_t c_bits, std::span<const uint32_t> a_row,
                             std::span<const uint32_t> b_col, FormatId element_format,
                             FormatId accumulate_format) {
    if (a_row.size() != b_col.size())
        throw input_error("dot product operand lengths differ");
    const FloatFormat& ef = format_of(element_format);
    const FloatFormat& af = format_of(accumulate_format);
    auto widen = [&](uint32_t bits) {
        if (element_format == accumulate_format)
            return bits;
        return encode(decode(bits, ef), af, Rounding::nearest_even);
    };
    uint32_t acc = c_bits;
    for (size_t k = 0; k < a_row.size(); ++k) {
        uint32_t p = ieee_mul(widen(a_row[k]), widen(b_col[k]), af);
        acc = ieee_add(acc, p, af);
    }
    return acc;
}

} // namespace tcemu
