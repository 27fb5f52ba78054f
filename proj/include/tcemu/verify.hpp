#pragma once

// Randomized cross-checking helpers shared by the unit tests, the CLI
// selftest and the acceptance suite: deterministic random operand
// generation and bitwise comparison of the fast pipeline against the exact
// evaluator.

#include "tcemu/oracle.hpp"
#include "tcemu/pipeline.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <string>

namespace tcemu {

// Deterministic stream of finite raw bit patterns for one format. Patterns
// are drawn uniformly over the format's encodings (zeros, subnormals and the
// full exponent range included) with NaN/infinity rerolled.
class RandomValues {
public:
    RandomValues(FormatId format, uint64_t seed);

    uint32_t next();

    // A finite pattern whose biased exponent field is drawn from
    // [lo_field, hi_field] (clamped to the format's range). Used to force
    // operands into magnitudes that interact inside the alignment window.
    uint32_t next_banded(int lo_field, int hi_field);

    uint64_t raw() { return rng_(); }

    const FloatFormat& format() const { return *fmt_; }

private:
    std::mt19937_64 rng_;
    const FloatFormat* fmt_;
};

// One random MMA element case: 16 input pairs plus an fp32 accumulator.
// Mixes zeros, full-range values, exponent-banded values and exact
// cancellation pairs so the interesting pipeline paths (swallowing, borrow
// chains, signed zeros, saturation) are all exercised.
struct RandomDotCase {
    std::array<uint32_t, kDotLength> a{};
    std::array<uint32_t, kDotLength> b{};
    uint32_t c = 0;
};

RandomDotCase random_dot_case(RandomValues& elements, RandomValues& accumulators);

// Random tiles built from the same element stream.
Tile random_input_tile(RandomValues& elements, FormatId format);
Tile random_accumulator_tile(RandomValues& accumulators);

// Bitwise comparison of mma_element against exact_mma_element over `trials`
// random cases. Returns the number of mismatches; the first mismatch (if
// any) is described in `first_mismatch`.
struct EquivalenceReport {
    uint64_t trials = 0;
    uint64_t mismatches = 0;
    std::string first_mismatch;
};

EquivalenceReport check_pipeline_matches_oracle(const PipelineProfile& profile, uint64_t trials,
                                                uint64_t seed);

// Same comparison through the tile interfaces (exercises row/column wiring).
EquivalenceReport check_tiles_match_oracle(const PipelineProfile& profile, uint64_t tiles,
                                           uint64_t seed);

} // namespace tcemu
