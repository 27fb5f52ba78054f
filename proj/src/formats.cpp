#include "tcemu/formats.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <cmath>
#include <limits>

namespace tcemu {

namespace {

int bit_length(uint64_t v) {
    return 64 - std::countl_zero(v);
}

uint32_t pack_bits(uint8_t sign, uint32_t biased_exp, uint32_t frac, const FloatFormat& fmt) {
    return (uint32_t(sign) << (fmt.total_bits - 1)) | (biased_exp << fmt.mantissa_bits) |
           (frac & fmt.mantissa_mask());
}

uint32_t infinity_bits(uint8_t sign, const FloatFormat& fmt) {
    if (!fmt.has_infinity)
        throw format_error(std::string(fmt.name) + " cannot represent infinity");
    return pack_bits(sign, fmt.exponent_mask(), 0, fmt);
}

uint32_t overflow_bits(uint8_t sign, const FloatFormat& fmt, Overflow overflow) {
    if (overflow == Overflow::to_max_finite || !fmt.has_infinity) {
        if (overflow == Overflow::to_infinity)
            return infinity_bits(sign, fmt); // throws: format has no infinity
        uint32_t sig = fmt.max_significand();
        return pack_bits(sign, uint32_t(fmt.max_exponent() + fmt.bias), sig, fmt);
    }
    return infinity_bits(sign, fmt);
}

// Round sign * mag * 2^lsb_exp into fmt with a single rounding step.
// mag may hold up to 63 significant bits; every discarded bit participates
// via an exact remainder, so there is no double rounding.
uint32_t round_pack(uint8_t sign, uint64_t mag, int lsb_exp, const FloatFormat& fmt,
                    Rounding mode, Overflow overflow) {
    if (mag == 0)
        return pack_bits(sign, 0, 0, fmt);

    int top_exp = lsb_exp + bit_length(mag) - 1;
    // Unit we round to: normal spacing at this magnitude, clamped at the
    // subnormal grid of the format.
    int keep_exp = top_exp - fmt.mantissa_bits;
    int subnormal_lsb = fmt.min_exponent() - fmt.mantissa_bits;
    if (keep_exp < subnormal_lsb)
        keep_exp = subnormal_lsb;

    int shift = keep_exp - lsb_exp;
    uint64_t kept;
    if (shift <= 0) {
        assert(bit_length(mag) - shift <= 63 && "round_pack left-shift overflow");
        kept = mag << -shift;
    } else if (shift >= 64) {
        kept = 0;
        if (mode == Rounding::nearest_even && shift == bit_length(mag)) {
            // Value is in [half, one) units: round up unless exactly half
            // (ties-to-even lands on zero, which is even).
            uint64_t lead = uint64_t(1) << (bit_length(mag) - 1);
            if (mag != lead)
                kept = 1;
        }
    } else {
        kept = mag >> shift;
        uint64_t rem = mag & ((uint64_t(1) << shift) - 1u);
        if (mode == Rounding::nearest_even && rem != 0) {
            uint64_t half = uint64_t(1) << (shift - 1);
            if (rem > half || (rem == half && (kept & 1)))
                kept += 1;
        }
    }

    if (kept == 0)
        return pack_bits(sign, 0, 0, fmt); // underflow to (signed) zero

    int res_exp = keep_exp + bit_length(kept) - 1;
    if (res_exp < fmt.min_exponent())
        return pack_bits(sign, 0, uint32_t(kept), fmt); // subnormal, kept is the fraction

    // Normal: align the significand so it carries exactly mantissa_bits+1 bits.
    // A rounding carry can leave kept one bit too wide (kept == 2^(m+1), low
    // bit zero), so an exact downshift may be needed.
    int up = (res_exp - fmt.mantissa_bits) - keep_exp;
    uint64_t sig;
    if (up <= 0) {
        sig = kept << -up;
    } else {
        assert((kept & ((uint64_t(1) << up) - 1u)) == 0);
        sig = kept >> up;
    }
    if (res_exp > fmt.max_exponent() ||
        (res_exp == fmt.max_exponent() && sig > fmt.max_significand()))
        return overflow_bits(sign, fmt, overflow);
    return pack_bits(sign, uint32_t(res_exp + fmt.bias), uint32_t(sig), fmt);
}

} // namespace

UnpackedValue decode(uint32_t bits, const FloatFormat& fmt) {
    UnpackedValue v;
    v.sign = uint8_t((bits >> (fmt.total_bits - 1)) & 1u);
    v.significand_scale = fmt.mantissa_bits;
    uint32_t exp_field = (bits >> fmt.mantissa_bits) & fmt.exponent_mask();
    uint32_t frac = bits & fmt.mantissa_mask();

    if (exp_field == fmt.exponent_mask()) {
        if (fmt.nan_rule == NanRule::ieee) {
            v.cls = frac ? ValueClass::nan : ValueClass::infinity;
            v.exponent = fmt.max_exponent() + 1;
            return v;
        }
        if (frac == fmt.mantissa_mask()) { // e4m3: only S.1111.111 is NaN
            v.cls = ValueClass::nan;
            v.exponent = fmt.max_exponent();
            return v;
        }
        // fall through: a finite value in the top exponent row
    }
    if (exp_field == 0) {
        v.exponent = fmt.min_exponent();
        if (frac == 0) {
            v.cls = ValueClass::zero;
            return v;
        }
        v.cls = ValueClass::subnormal;
        v.significand = frac;
        return v;
    }
    v.cls = ValueClass::normal;
    v.exponent = int32_t(exp_field) - fmt.bias;
    v.significand = frac | (1u << fmt.mantissa_bits);
    return v;
}

uint32_t encode(const UnpackedValue& v, const FloatFormat& fmt, Rounding mode, Overflow overflow) {
    switch (v.cls) {
    case ValueClass::nan:
        return canonical_nan(fmt);
    case ValueClass::infinity:
        return infinity_bits(v.sign, fmt);
    case ValueClass::zero:
        return pack_bits(v.sign, 0, 0, fmt);
    default:
        break;
    }
    if (v.significand == 0)
        return pack_bits(v.sign, 0, 0, fmt);
    return round_pack(v.sign, v.significand, v.exponent - v.significand_scale, fmt, mode, overflow);
}

uint32_t canonical_nan(const FloatFormat& fmt) {
    if (fmt.nan_rule == NanRule::e4m3_all_ones)
        return fmt.exponent_mask() << fmt.mantissa_bits | fmt.mantissa_mask();
    // Quiet NaN: exponent all-ones, top fraction bit set.
    return pack_bits(0, fmt.exponent_mask(), 1u << (fmt.mantissa_bits - 1), fmt);
}

uint32_t ieee_mul(uint32_t a_bits, uint32_t b_bits, const FloatFormat& fmt) {
    UnpackedValue a = decode(a_bits, fmt);
    UnpackedValue b = decode(b_bits, fmt);
    uint8_t sign = a.sign ^ b.sign;

    if (a.cls == ValueClass::nan || b.cls == ValueClass::nan)
        return canonical_nan(fmt);
    if (a.cls == ValueClass::infinity || b.cls == ValueClass::infinity) {
        if (a.is_zero() || b.is_zero())
            return canonical_nan(fmt); // inf * 0
        return infinity_bits(sign, fmt);
    }
    if (a.is_zero() || b.is_zero())
        return pack_bits(sign, 0, 0, fmt);

    uint64_t mag = a.significand * b.significand; // exact: <= 2 * (mantissa_bits + 1) bits
    int lsb = (a.exponent - a.significand_scale) + (b.exponent - b.significand_scale);
    return round_pack(sign, mag, lsb, fmt, Rounding::nearest_even, Overflow::to_infinity);
}

uint32_t ieee_add(uint32_t a_bits, uint32_t b_bits, const FloatFormat& fmt) {
    UnpackedValue a = decode(a_bits, fmt);
    UnpackedValue b = decode(b_bits, fmt);

    if (a.cls == ValueClass::nan || b.cls == ValueClass::nan)
        return canonical_nan(fmt);
    if (a.cls == ValueClass::infinity || b.cls == ValueClass::infinity) {
        if (a.cls == ValueClass::infinity && b.cls == ValueClass::infinity && a.sign != b.sign)
            return canonical_nan(fmt);
        return infinity_bits(a.cls == ValueClass::infinity ? a.sign : b.sign, fmt);
    }
    if (a.is_zero() && b.is_zero()) {
        // IEEE sum of zeros: equal signs keep the sign, opposite signs give +0.
        return pack_bits(a.sign == b.sign ? a.sign : 0, 0, 0, fmt);
    }
    if (a.is_zero())
        return b_bits;
    if (b.is_zero())
        return a_bits;

    int la = a.exponent - a.significand_scale;
    int lb = b.exponent - b.significand_scale;
    int top = std::max(la + bit_length(a.significand), lb + bit_length(b.significand));
    // Common alignment grid: deep enough below both tops that the jam bit sits
    // well under the rounding position, shallow enough that nothing overflows.
    int target = top - 40;

    auto aligned = [target](uint64_t mag, int lsb) -> uint64_t {
        int sh = lsb - target;
        if (sh >= 0)
            return mag << sh;
        if (sh <= -64)
            return 1; // pure sticky: mag is nonzero here
        uint64_t kept = mag >> -sh;
        if (mag & ((uint64_t(1) << -sh) - 1u))
            kept |= 1; // jam discarded bits; they only matter as a sticky marker
        return kept;
    };

    uint64_t ma = aligned(a.significand, la);
    uint64_t mb = aligned(b.significand, lb);

    uint8_t sign;
    uint64_t mag;
    if (a.sign == b.sign) {
        sign = a.sign;
        mag = ma + mb;
    } else if (ma > mb) {
        sign = a.sign;
        mag = ma - mb;
    } else if (mb > ma) {
        sign = b.sign;
        mag = mb - ma;
    } else {
        return pack_bits(0, 0, 0, fmt); // exact cancellation is +0 under nearest-even
    }
    return round_pack(sign, mag, target, fmt, Rounding::nearest_even, Overflow::to_infinity);
}

uint32_t exact_bits(int64_t mantissa, int exponent, const FloatFormat& fmt) {
    UnpackedValue v;
    v.sign = mantissa < 0;
    uint64_t mag = v.sign ? uint64_t(-mantissa) : uint64_t(mantissa);
    if (mag == 0)
        return pack_bits(0, 0, 0, fmt);
    v.cls = ValueClass::normal;
    v.significand = mag;
    v.significand_scale = 0;
    v.exponent = exponent; // value = mag * 2^exponent with scale folded in below
    // encode() treats value as significand * 2^(exponent - scale); scale is 0.
    uint32_t bits = encode(v, fmt, Rounding::toward_zero, Overflow::to_max_finite);
    UnpackedValue back = decode(bits, fmt);
    // Exactness check: compare mag * 2^exponent with the decoded value.
    if (back.cls == ValueClass::zero)
        throw format_error("value underflows " + std::string(fmt.name));
    uint64_t m1 = mag;
    int e1 = exponent;
    uint64_t m2 = back.significand;
    int e2 = back.exponent - back.significand_scale;
    while ((m1 & 1) == 0) { m1 >>= 1; ++e1; }
    while ((m2 & 1) == 0) { m2 >>= 1; ++e2; }
    if (m1 != m2 || e1 != e2 || back.sign != v.sign)
        throw format_error("value is not exactly representable in " + std::string(fmt.name));
    return bits;
}

const FloatFormat& format_of(FormatId id) {
    switch (id) {
    case FormatId::fp32:
        return kFp32;
    case FormatId::fp16:
        return kFp16;
    case FormatId::bf16:
        return kBf16;
    case FormatId::fp8_e4m3:
        return kFp8E4M3;
    }
    throw format_error("unknown format id");
}

FormatId format_id(const std::string& name) {
    if (name == kFp32.name)
        return FormatId::fp32;
    if (name == kFp16.name)
        return FormatId::fp16;
    if (name == kBf16.name)
        return FormatId::bf16;
    if (name == kFp8E4M3.name)
        return FormatId::fp8_e4m3;
    throw format_error("unknown format name: " + name);
}

double to_double(uint32_t bits, const FloatFormat& fmt) {
    UnpackedValue v = decode(bits, fmt);
    switch (v.cls) {
    case ValueClass::nan:
        return std::numeric_limits<double>::quiet_NaN();
    case ValueClass::infinity:
        return v.sign ? -HUGE_VAL : HUGE_VAL;
    case ValueClass::zero:
        return v.sign ? -0.0 : 0.0;
    default:
        break;
    }
    double m = v.sign ? -double(v.significand) : double(v.significand);
    return std::ldexp(m, v.exponent - v.significand_scale);
}

} // namespace tcemu
