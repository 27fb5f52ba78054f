#include "tcemu/verify.hpp"

#include <algorithm>
#include <cstdio>

namespace tcemu {

namespace {

bool finite_bits(uint32_t bits, const FloatFormat& fmt) {
    ValueClass cls = decode(bits, fmt).cls;
    return cls != ValueClass::nan && cls != ValueClass::infinity;
}

uint32_t flip_sign(uint32_t bits, const FloatFormat& fmt) {
    return bits ^ (1u << (fmt.total_bits - 1));
}

} // namespace

RandomValues::RandomValues(FormatId format, uint64_t seed)
    : rng_(seed), fmt_(&format_of(format)) {}

uint32_t RandomValues::next() {
    uint32_t mask = fmt_->total_bits == 32 ? 0xFFFFFFFFu : (1u << fmt_->total_bits) - 1u;
    for (;;) {
        uint32_t bits = uint32_t(rng_()) & mask;
        if (finite_bits(bits, *fmt_))
            return bits;
    }
}

uint32_t RandomValues::next_banded(int lo_field, int hi_field) {
    int max_field = int(fmt_->exponent_mask());
    lo_field = std::clamp(lo_field, 0, max_field);
    hi_field = std::clamp(hi_field, lo_field, max_field);
    for (;;) {
        uint64_t r = rng_();
        uint32_t exp = uint32_t(lo_field + int(r % uint64_t(hi_field - lo_field + 1)));
        uint32_t frac = uint32_t(r >> 16) & fmt_->mantissa_mask();
        uint32_t sign = uint32_t(r >> 63);
        uint32_t bits = (sign << (fmt_->total_bits - 1)) | (exp << fmt_->mantissa_bits) | frac;
        if (finite_bits(bits, *fmt_))
            return bits;
    }
}

RandomDotCase random_dot_case(RandomValues& elements, RandomValues& accumulators) {
    RandomDotCase d;
    for (int k = 0; k < kDotLength; ++k) {
        // Roughly a fifth of the elements are signed zeros; the rest are
        // drawn over the whole finite range.
        uint64_t r = elements.raw();
        d.a[size_t(k)] = (r % 5) == 0 ? 0 : elements.next();
        d.b[size_t(k)] = (r % 7) == 0 ? 0 : elements.next();
    }

    // Occasionally duplicate a slot into another with the B side negated, so
    // two products cancel exactly and downstream terms decide the result.
    uint64_t r = elements.raw();
    if (r % 4 != 0) {
        int copies = 1 + int(r % 3);
        for (int i = 0; i < copies; ++i) {
            uint64_t rr = elements.raw();
            size_t src = size_t(rr % kDotLength);
            size_t dst = size_t((rr >> 8) % kDotLength);
            if (src == dst)
                continue;
            d.a[dst] = d.a[src];
            d.b[dst] = (rr >> 16) % 2 ? flip_sign(d.b[src], elements.format()) : d.b[src];
        }
    }

    uint64_t rc = accumulators.raw();
    switch (rc % 5) {
    case 0:
        d.c = (rc >> 8) % 2 ? 0x80000000u : 0u; // signed zero accumulator
        break;
    case 1:
    case 2:
        // Banded around the unit range so the accumulator lands inside the
        // window of typical products.
        d.c = accumulators.next_banded(64, 190);
        break;
    default:
        d.c = accumulators.next();
        break;
    }
    return d;
}

Tile random_input_tile(RandomValues& elements, FormatId format) {
    Tile t;
    t.format = format;
    for (uint32_t& bits : t.bits) {
        uint64_t r = elements.raw();
        bits = (r % 5) == 0 ? 0 : elements.next();
    }
    return t;
}

Tile random_accumulator_tile(RandomValues& accumulators) {
    Tile t;
    t.format = FormatId::fp32;
    for (uint32_t& bits : t.bits) {
        uint64_t r = accumulators.raw();
        if (r % 6 == 0)
            bits = (r >> 8) % 2 ? 0x80000000u : 0u;
        else if (r % 2 == 0)
            bits = accumulators.next_banded(64, 190);
        else
            bits = accumulators.next();
    }
    return t;
}

namespace {

std::string describe_mismatch(const RandomDotCase& d, uint32_t got, uint32_t want) {
    char buf[64];
    std::string s = "a =";
    for (uint32_t v : d.a) {
        std::snprintf(buf, sizeof buf, " %04x", v);
        s += buf;
    }
    s += "\nb =";
    for (uint32_t v : d.b) {
        std::snprintf(buf, sizeof buf, " %04x", v);
        s += buf;
    }
    std::snprintf(buf, sizeof buf, "\nc = %08x pipeline = %08x exact = %08x", d.c, got, want);
    s += buf;
    return s;
}

} // namespace

EquivalenceReport check_pipeline_matches_oracle(const PipelineProfile& profile, uint64_t trials,
                                                uint64_t seed) {
    RandomValues elements(profile.input_format, seed);
    RandomValues accumulators(FormatId::fp32, seed ^ 0x9E3779B97F4A7C15ull);
    EquivalenceReport rep;
    rep.trials = trials;
    for (uint64_t t = 0; t < trials; ++t) {
        RandomDotCase d = random_dot_case(elements, accumulators);
        uint32_t fast = mma_element(d.c, d.a, d.b, profile);
        uint32_t exact = exact_mma_element(d.c, d.a, d.b, profile);
        if (fast != exact) {
            if (rep.mismatches == 0)
                rep.first_mismatch = describe_mismatch(d, fast, exact);
            ++rep.mismatches;
        }
    }
    return rep;
}

EquivalenceReport check_tiles_match_oracle(const PipelineProfile& profile, uint64_t tiles,
                                           uint64_t seed) {
    RandomValues elements(profile.input_format, seed);
    RandomValues accumulators(FormatId::fp32, seed ^ 0xD1B54A32D192ED03ull);
    EquivalenceReport rep;
    rep.trials = tiles * kTileDim * kTileDim;
    for (uint64_t t = 0; t < tiles; ++t) {
        Tile a = random_input_tile(elements, profile.input_format);
        Tile b = random_input_tile(elements, profile.input_format);
        Tile c = random_accumulator_tile(accumulators);
        Tile fast = tile_mma(c, a, b, profile);
        Tile exact = exact_tile_mma(c, a, b, profile);
        for (size_t i = 0; i < fast.bits.size(); ++i) {
            if (fast.bits[i] != exact.bits[i]) {
                if (rep.mismatches == 0) {
                    char buf[96];
                    std::snprintf(buf, sizeof buf,
                                  "tile %llu cell %zu: pipeline = %08x exact = %08x",
                                  (unsigned long long)t, i, fast.bits[i], exact.bits[i]);
                    rep.first_mismatch = buf;
                }
                ++rep.mismatches;
            }
        }
    }
    return rep;
}

} // namespace tcemu
