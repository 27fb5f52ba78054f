#pragma once

// Soft-float core: parametric binary float formats, exact decode/encode and
// reference IEEE multiply/add. Everything downstream (the MMA pipeline, the
// exact oracle, the probe generators) is built on these primitives, so they
// favor exactness over speed: intermediate significands are exact integers
// and each operation rounds exactly once.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tcemu {

// Thrown when a value cannot be expressed in the target format at all
// (e.g. infinity into a format that has no infinity encoding).
struct format_error : std::runtime_error {
    explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when an operation receives an input outside its supported domain
// (e.g. NaN/infinity elements in an MMA tile).
struct input_error : std::runtime_error {
    explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

enum class NanRule : uint8_t {
    ieee,          // exp all-ones: frac == 0 is infinity, frac != 0 is NaN
    e4m3_all_ones, // no infinity; NaN is exactly S.1111.111; other exp=15 codes are finite
};

enum class Rounding : uint8_t {
    nearest_even,
    toward_zero,
};

// What to do when a magnitude rounds past the largest finite value.
// IEEE nearest-even overflows to infinity; truncating hardware paths saturate
// to infinity explicitly, and some callers want the largest finite instead.
enum class Overflow : uint8_t {
    to_infinity,
    to_max_finite,
};

struct FloatFormat {
    const char* name;
    int total_bits;
    int exponent_bits;
    int mantissa_bits; // stored fraction bits, excluding the hidden bit
    int bias;
    bool has_infinity;
    NanRule nan_rule;

    constexpr uint32_t exponent_mask() const { return (1u << exponent_bits) - 1u; }
    constexpr uint32_t mantissa_mask() const { return (1u << mantissa_bits) - 1u; }
    constexpr uint32_t sign_bit() const { return 1u << (total_bits - 1); }
    constexpr int min_exponent() const { return 1 - bias; } // unbiased exponent of subnormals
    constexpr int max_exponent() const {
        // Largest unbiased exponent that still encodes a finite value.
        int top = static_cast<int>(exponent_mask()) - bias;
        return nan_rule == NanRule::e4m3_all_ones ? top : top - 1;
    }
    // Largest stored significand (with hidden bit) at max_exponent().
    constexpr uint32_t max_significand() const {
        uint32_t full = (1u << (mantissa_bits + 1)) - 1u;
        // e4m3 reserves the all-ones code point for NaN, so the top finite
        // value has fraction 111...0.
        return nan_rule == NanRule::e4m3_all_ones ? full - 1u : full;
    }
};

inline constexpr FloatFormat kFp32{"fp32", 32, 8, 23, 127, true, NanRule::ieee};
inline constexpr FloatFormat kFp16{"fp16", 16, 5, 10, 15, true, NanRule::ieee};
inline constexpr FloatFormat kBf16{"bf16", 16, 8, 7, 127, true, NanRule::ieee};
inline constexpr FloatFormat kFp8E4M3{"fp8_e4m3", 8, 4, 3, 7, false, NanRule::e4m3_all_ones};

// Stable identifiers for the shipped formats, used by tiles, profiles and
// file headers.
enum class FormatId : uint8_t { fp32 = 1, fp16 = 2, bf16 = 3, fp8_e4m3 = 4 };

const FloatFormat& format_of(FormatId id);
FormatId format_id(const std::string& name); // accepts the names above; throws format_error

enum class ValueClass : uint8_t { zero, subnormal, normal, infinity, nan };

// A decoded value: magnitude == significand * 2^(exponent - significand_scale).
// Normal numbers carry the hidden bit inside `significand`; subnormals keep
// their stored exponent (1 - bias) and a significand with leading zeros, so
// the exponent field is exactly what the hardware multiplier sees.
struct UnpackedValue {
    uint8_t sign = 0;
    int32_t exponent = 0;
    uint64_t significand = 0;
    int32_t significand_scale = 0;
    ValueClass cls = ValueClass::zero;

    bool is_finite() const {
        return cls == ValueClass::zero || cls == ValueClass::subnormal || cls == ValueClass::normal;
    }
    bool is_zero() const { return cls == ValueClass::zero; }
};

// Decode a raw bit pattern (low `fmt.total_bits` bits of `bits`).
UnpackedValue decode(uint32_t bits, const FloatFormat& fmt);

// Encode a value into `fmt` with one rounding step. Finite magnitudes that
// still exceed the format after rounding follow `overflow`; encoding infinity
// into a format without an infinity encoding throws format_error.
uint32_t encode(const UnpackedValue& v, const FloatFormat& fmt, Rounding mode,
                Overflow overflow = Overflow::to_infinity);

// Canonical quiet-NaN pattern of a format.
uint32_t canonical_nan(const FloatFormat& fmt);

// Reference IEEE-754 operations in `fmt` with round-to-nearest-even.
// The exact product/sum is formed on integer significands and rounded once.
uint32_t ieee_mul(uint32_t a_bits, uint32_t b_bits, const FloatFormat& fmt);
uint32_t ieee_add(uint32_t a_bits, uint32_t b_bits, const FloatFormat& fmt);

// Helpers shared by tests and probe construction.

// Bit pattern of m * 2^e (m odd or 1) in `fmt`; throws format_error if the
// value is not exactly representable.
uint32_t exact_bits(int64_t mantissa, int exponent, const FloatFormat& fmt);

// Convenience: decoded value as a host double (exact for every finite value
// of the shipped formats; infinities map to HUGE_VAL, NaN to quiet NaN).
double to_double(uint32_t bits, const FloatFormat& fmt);

} // namespace tcemu
