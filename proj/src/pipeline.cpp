#include "tcemu/pipeline.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cassert>
#include <limits>

namespace tcemu {

namespace {

std::vector<Slot> product_range(int first, int last) {
    std::vector<Slot> slots;
    for (int i = first; i <= last; ++i)
        slots.push_back(product_slot(i));
    return slots;
}

} // namespace

Arch arch_from_name(const std::string& name) {
    if (name == "ampere")
        return Arch::ampere;
    if (name == "lovelace")
        return Arch::lovelace;
    if (name == "hopper")
        return Arch::hopper;
    throw input_error("unknown architecture: " + name);
}

const char* arch_name(Arch arch) {
    switch (arch) {
    case Arch::ampere:
        return "ampere";
    case Arch::lovelace:
        return "lovelace";
    case Arch::hopper:
        return "hopper";
    }
    throw input_error("unknown architecture enum value");
}

PipelineProfile make_profile(Arch arch, FormatId input_format) {
    if (input_format != FormatId::fp16 && input_format != FormatId::bf16 &&
        input_format != FormatId::fp8_e4m3)
        throw input_error(std::string("unsupported MMA input format: ") +
                          format_of(input_format).name);

    PipelineProfile p;
    p.name = std::string(arch_name(arch)) + "-" + format_of(input_format).name;
    p.input_format = input_format;
    p.accumulator_format = FormatId::fp32;
    if (arch == Arch::hopper) {
        // One pass over the accumulator and all 16 products.
        std::vector<Slot> group{acc_slot()};
        auto products = product_range(1, 16);
        group.insert(group.end(), products.begin(), products.end());
        p.grouping = {group};
        p.window_bits = 25;
        p.exponent_floor = -133;
    } else {
        // Two passes of 8 products each; the second consumes the first's
        // fp32 result. Lovelace reuses the Ampere datapath.
        std::vector<Slot> g1{acc_slot()};
        auto first = product_range(1, 8);
        g1.insert(g1.end(), first.begin(), first.end());
        std::vector<Slot> g2{prev_slot()};
        auto second = product_range(9, 16);
        g2.insert(g2.end(), second.begin(), second.end());
        p.grouping = {g1, g2};
        p.window_bits = 24;
        p.exponent_floor = -132;
    }
    p.alignment_rounding = Rounding::toward_zero;
    p.final_rounding = Rounding::toward_zero;
    p.normalize_products = false;
    p.renormalize_subnormal_products = false;
    validate_profile(p);
    return p;
}

void validate_profile(const PipelineProfile& profile) {
    if (profile.accumulator_format != FormatId::fp32)
        throw input_error("profile '" + profile.name + "': accumulator format must be fp32");
    if (profile.input_format == FormatId::fp32)
        throw input_error("profile '" + profile.name + "': fp32 is not a supported input format");
    // The group sum is computed as an exact signed integer in 64 bits; each
    // aligned operand fits in window_bits + 2 bits and there are at most 17
    // operands, so anything up to 55 window bits is safe.
    if (profile.window_bits < 4 || profile.window_bits > 55)
        throw input_error("profile '" + profile.name + "': window_bits out of range [4, 55]");
    if (profile.exponent_floor >= 128)
        throw input_error("profile '" + profile.name + "': exponent_floor must be below 128");
    if (profile.alignment_rounding != Rounding::toward_zero)
        throw input_error("profile '" + profile.name +
                          "': only toward_zero alignment rounding is supported");
    if (profile.final_rounding != Rounding::toward_zero)
        throw input_error("profile '" + profile.name +
                          "': only toward_zero final rounding is supported");

    if (profile.grouping.empty())
        throw input_error("profile '" + profile.name + "': grouping is empty");

    std::array<int, kDotLength + 1> product_seen{};
    int acc_seen = 0;
    for (size_t g = 0; g < profile.grouping.size(); ++g) {
        const auto& group = profile.grouping[g];
        if (group.empty())
            throw input_error("profile '" + profile.name + "': empty group");
        for (size_t s = 0; s < group.size(); ++s) {
            const Slot& slot = group[s];
            switch (slot.kind) {
            case SlotKind::accumulator:
                if (g != 0)
                    throw input_error("profile '" + profile.name +
                                      "': accumulator slot outside the first group");
                ++acc_seen;
                break;
            case SlotKind::previous:
                if (g == 0 || s != 0)
                    throw input_error("profile '" + profile.name +
                                      "': `previous` slot must lead a non-first group");
                break;
            case SlotKind::product:
                if (slot.index < 1 || slot.index > kDotLength)
                    throw input_error("profile '" + profile.name + "': product index out of range");
                ++product_seen[size_t(slot.index)];
                break;
            }
        }
        if (g != 0 && (group[0].kind != SlotKind::previous ||
                       std::count_if(group.begin(), group.end(), [](const Slot& s) {
                           return s.kind == SlotKind::previous;
                       }) != 1))
            throw input_error("profile '" + profile.name +
                              "': each non-first group needs exactly one leading `previous` slot");
    }
    if (acc_seen != 1)
        throw input_error("profile '" + profile.name +
                          "': the accumulator must appear exactly once, in the first group");
    for (int i = 1; i <= kDotLength; ++i)
        if (product_seen[size_t(i)] != 1)
            throw input_error("profile '" + profile.name + "': product slot " + std::to_string(i) +
                              " must appear exactly once");
}

RawProduct multiply_raw(const UnpackedValue& a, const UnpackedValue& b,
                        const PipelineProfile& profile) {
    assert(a.is_finite() && b.is_finite());
    RawProduct p;
    p.sign = a.sign ^ b.sign;
    p.significand = a.significand * b.significand;
    p.significand_scale = a.significand_scale + b.significand_scale;
    p.exponent_key = a.exponent + b.exponent; // stored exponents; subnormals contribute 1-bias
    p.zero = p.significand == 0;
    if (!p.zero) {
        // Optional renormalization: move key and scale together so the value
        // is unchanged but the alignment stage sees the true exponent.
        int lead = 63 - std::countl_zero(p.significand);
        if (lead > p.significand_scale && profile.normalize_products) {
            int up = lead - p.significand_scale;
            p.exponent_key += up;
            p.significand_scale += up;
        } else if (lead < p.significand_scale && profile.renormalize_subnormal_products) {
            int down = p.significand_scale - lead;
            p.exponent_key -= down;
            p.significand_scale -= down;
        }
    }
    return p;
}

namespace {

// One group operand reduced to sign/magnitude with the exponent of its least
// significant bit and its windowing key.
struct AlignedOperand {
    uint8_t sign = 0;
    uint64_t magnitude = 0;
    int lsb_exponent = 0;
    int key = 0;
};

} // namespace

uint32_t group_sum(std::span<const GroupOperand> operands, const PipelineProfile& profile) {
    std::array<AlignedOperand, kDotLength + 1> ops;
    if (operands.size() > ops.size())
        throw input_error("too many operands in group sum");
    size_t n = 0;
    for (const GroupOperand& op : operands) {
        if (op.kind == GroupOperand::Kind::product) {
            if (op.product.zero)
                continue;
            ops[n++] = {op.product.sign, op.product.significand,
                        op.product.exponent_key - op.product.significand_scale,
                        op.product.exponent_key};
        } else {
            UnpackedValue v = decode(op.fp32_bits, kFp32);
            if (v.cls == ValueClass::nan)
                throw input_error("NaN fp32 operand in group sum");
            if (v.cls == ValueClass::infinity)
                return op.fp32_bits; // a saturated previous result passes through
            if (v.significand == 0)
                continue;
            ops[n++] = {v.sign, v.significand, v.exponent - v.significand_scale, v.exponent};
        }
    }
    if (n == 0)
        return 0; // all operands zero: +0

    int e_max = std::numeric_limits<int>::min();
    for (size_t i = 0; i < n; ++i)
        e_max = std::max(e_max, ops[i].key);
    e_max = std::max(e_max, profile.exponent_floor);

    // Floor every magnitude onto the grid of 2^(e_max - window_bits) and sum
    // exactly. Each aligned magnitude is below 2^(window_bits + 2), so the
    // signed total of up to 17 operands fits comfortably in 64 bits.
    int grid = e_max - profile.window_bits;
    int64_t total = 0;
    for (size_t i = 0; i < n; ++i) {
        int sh = ops[i].lsb_exponent - grid;
        uint64_t units;
        if (sh >= 0) {
            assert(sh < 64);
            units = ops[i].magnitude << sh;
        } else {
            units = -sh >= 64 ? 0 : ops[i].magnitude >> -sh;
        }
        total += ops[i].sign ? -int64_t(units) : int64_t(units);
    }
    if (total == 0)
        return 0; // exact cancellation: +0

    UnpackedValue r;
    r.sign = total < 0 ? 1 : 0;
    r.significand = total < 0 ? uint64_t(-total) : uint64_t(total);
    r.exponent = grid;
    r.significand_scale = 0;
    r.cls = ValueClass::normal;
    return encode(r, kFp32, profile.final_rounding, Overflow::to_infinity);
}

namespace {

uint32_t mma_element_unchecked(uint32_t c_bits, std::span<const uint32_t> a_row,
                               std::span<const uint32_t> b_col, const PipelineProfile& profile) {
    const FloatFormat& in_fmt = format_of(profile.input_format);
    std::array<RawProduct, kDotLength> products;
    for (int k = 0; k < kDotLength; ++k) {
        UnpackedValue av = decode(a_row[size_t(k)], in_fmt);
        UnpackedValue bv = decode(b_col[size_t(k)], in_fmt);
        if (!av.is_finite() || !bv.is_finite())
            throw input_error("MMA inputs must be finite");
        products[size_t(k)] = multiply_raw(av, bv, profile);
    }
    UnpackedValue cv = decode(c_bits, kFp32);
    if (!cv.is_finite())
        throw input_error("MMA accumulator must be finite");

    uint32_t carried = 0;
    std::array<GroupOperand, kDotLength + 1> ops;
    for (const auto& group : profile.grouping) {
        size_t n = 0;
        for (const Slot& slot : group) {
            switch (slot.kind) {
            case SlotKind::accumulator:
                ops[n++] = GroupOperand::from_fp32(c_bits);
                break;
            case SlotKind::previous:
                ops[n++] = GroupOperand::from_fp32(carried);
                break;
            case SlotKind::product:
                ops[n++] = GroupOperand::from_product(products[size_t(slot.index - 1)]);
                break;
            }
        }
        carried = group_sum(std::span<const GroupOperand>(ops.data(), n), profile);
    }
    return carried;
}

} // namespace

uint32_t mma_element(uint32_t c_bits, std::span<const uint32_t> a_row,
                     std::span<const uint32_t> b_col, const PipelineProfile& profile) {
    validate_profile(profile);
    if (a_row.size() != size_t(kDotLength) || b_col.size() != size_t(kDotLength))
        throw input_error("mma element expects " + std::to_string(kDotLength) +
                          " products per dot");
    return mma_element_unchecked(c_bits, a_row, b_col, profile);
}

namespace {

Tile tile_mma_impl(const Tile& c, const Tile& a, const Tile& b, const PipelineProfile& profile,
                   bool pass_infinite_acc) {
    validate_profile(profile);
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
            const uint32_t acc = c.at(i, j);
            if (pass_infinite_acc && (acc & 0x7fffffffu) == 0x7f800000u) {
                d.at(i, j) = acc;
                continue;
            }
            std::span<const uint32_t> row(&a.bits[size_t(i) * kTileDim], kDotLength);
            d.at(i, j) = mma_element_unchecked(acc, row, col, profile);
        }
    }
    return d;
}

} // namespace

Tile tile_mma(const Tile& c, const Tile& a, const Tile& b, const PipelineProfile& profile) {
    return tile_mma_impl(c, a, b, profile, false);
}

Tile tile_mma_chained(const Tile& c, const Tile& a, const Tile& b,
                      const PipelineProfile& profile) {
    return tile_mma_impl(c, a, b, profile, true);
}

} // namespace tcemu
