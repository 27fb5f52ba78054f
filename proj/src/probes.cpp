#include "tcemu/probes.hpp"

#include "tcemu/engine.hpp"
#include "tcemu/oracle.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>

namespace tcemu::probes {

namespace {

using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Shared construction tables. Generation builds tiles from these and
// inference predicts responses from the same rows, so the two sides cannot
// drift apart.

// Alignment cases: a +1/-1 product pair pins the reference exponent (at 2^16
// for fp8, where the pair is +2^16/-2^16 and the fine term rides in the fp32
// accumulator) while a fine term lands between grid steps. The fine term is
// regenerated per candidate window width so that at the matching width it
// always sits m * 2^e grid units deep: signed halves, a 3/2 step, signed
// three-quarters and a non-tie fraction separate all five candidate rules.
struct AlignSpec {
    int64_t m; // fine term in grid units: m * 2^e of the device's alignment grid
    int e;
};
constexpr AlignSpec kAlignUnits[6] = {
    {1, -1}, {-1, -1}, {3, -1}, {3, -2}, {-3, -2}, {5, -2},
};

// Output-conversion cases: a dominant product of sigma * 2.25 * 2^B plus a
// small correction of u grid units, so the group sum carries t more bits
// than an fp32 significand holds (t depends on the window width and the
// carry-normalization setting, hence per-variant generation). Fractions
// below and above one half plus ties landing at even and at odd truncated
// significands separate all five candidate rounding rules.
struct FinalSpec {
    int sigma;  // sign of the dominant product
    int64_t u;  // correction in alignment-grid units
};
FinalSpec final_case_params(int index, int t) {
    const int64_t h = int64_t(1) << (t - 1); // one half of the final rounding step
    switch (index) {
    case 1: return {+1, +1};
    case 2: return {-1, -1};
    case 3: return {+1, -1};
    case 4: return {-1, +1};
    case 5: return {+1, +h};
    case 6: return {-1, -h};
    case 7: return {+1, +3 * h};
    case 8: return {-1, -3 * h};
    }
    throw input_error("corrupt output-conversion case index");
}
constexpr int kFinalCaseCount = 8;

constexpr int kNormWitnessLo = 23, kNormWitnessHi = 26; // d sweep
constexpr int kRenormJLo = 24, kRenormJHi = 28;         // companion sweep
constexpr int kVariantWLo = 23, kVariantWHi = 26;       // candidate window widths
constexpr int kRangeELo = -140, kRangeEHi = -125;       // floor sweep exponents
constexpr uint32_t kFullMask = (1u << 17) - 1u;

const char* fmt_tag(FormatId f) {
    switch (f) {
    case FormatId::fp16: return "fp16";
    case FormatId::bf16: return "bf16";
    case FormatId::fp8_e4m3: return "fp8";
    default: throw input_error("probes support fp16, bf16 and fp8_e4m3 inputs only");
    }
}

std::string format_str(const char* fmt, ...) {
    char buf[96];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return buf;
}

uint32_t ebits(int64_t mantissa, int exponent, FormatId f) {
    return exact_bits(mantissa, exponent, format_of(f));
}

uint32_t negate_bits(uint32_t bits, FormatId f) { return bits ^ format_of(f).sign_bit(); }

// ---------------------------------------------------------------------------
// Case packing: up to 16 independent cases share one tile triple along the
// diagonal. Case t occupies row t of A, column t of B and accumulator cell
// (t,t); off-diagonal cells mix rows and columns of different cases, which is
// harmless because every case keeps its operands finite and only the
// diagonal is measured.

struct CaseSpec {
    std::string id;
    std::array<uint32_t, kDotLength> a{};
    std::array<uint32_t, kDotLength> b{};
    uint32_t c = 0;
    CaseMeta meta;
};

void pack_cases(ProbeSuite& suite, const std::string& prefix, const std::vector<CaseSpec>& specs) {
    int tile_index = 0;
    for (size_t base = 0; base < specs.size(); base += size_t(kTileDim)) {
        ProbeCase pc;
        pc.probe_id = format_str("%s-t%05d", prefix.c_str(), tile_index++);
        pc.a.format = suite.input_format;
        pc.b.format = suite.input_format;
        size_t count = std::min(size_t(kTileDim), specs.size() - base);
        for (size_t t = 0; t < count; ++t) {
            const CaseSpec& spec = specs[base + t];
            for (int k = 0; k < kDotLength; ++k) {
                pc.a.at(int(t), k) = spec.a[size_t(k)];
                pc.b.at(k, int(t)) = spec.b[size_t(k)];
            }
            pc.c.at(int(t), int(t)) = spec.c;
            pc.targets.push_back({spec.id, int(t), int(t)});
            if (!suite.meta.emplace(spec.id, spec.meta).second)
                throw input_error("duplicate probe case id '" + spec.id + "'");
        }
        suite.cases.push_back(std::move(pc));
    }
}

// ---------------------------------------------------------------------------
// Neutrality suite. For every subset S of {accumulator, product 1..16} with
// |S| >= 2, two scenarios are generated. In the cancellation scenario the
// S members are large values engineered to sum to exactly zero while
// everything else is tiny; in the zeroed scenario the S members are removed
// outright. A subset whose members the hardware sums in one private group
// leaves identical bits in both scenarios; any other subset swallows some
// tiny term under the large ones' alignment window in the first scenario
// only. Singletons are trivially neutral and are skipped.

struct NeutralityConstants {
    int large_exp;  // V_large = 2^large_exp
    int small_exp;  // V_small = 2^small_exp
};

// fp8_e4m3 cannot represent 2^10, so it uses a 2^16/2^-16 pair (elements
// 2^8 and 2^-8, the latter subnormal); the 32-bit separation still clears
// every plausible window width.
NeutralityConstants neutrality_constants(FormatId f) {
    return f == FormatId::fp8_e4m3 ? NeutralityConstants{16, -16} : NeutralityConstants{20, -20};
}

void gen_neutrality(ProbeSuite& suite) {
    const FormatId f = suite.input_format;
    const auto nc = neutrality_constants(f);
    const uint32_t sqrt_large = ebits(1, nc.large_exp / 2, f);
    const uint32_t sqrt_small = ebits(1, nc.small_exp / 2, f);
    const uint32_t sqrt_large_neg = negate_bits(sqrt_large, f);
    const uint32_t c_large = ebits(1, nc.large_exp, FormatId::fp32);
    const uint32_t c_small = ebits(1, nc.small_exp, FormatId::fp32);
    const std::string tag = fmt_tag(f);

    std::vector<CaseSpec> specs;
    specs.reserve(2 * (size_t(kFullMask) + 1));
    for (uint32_t mask = 0; mask <= kFullMask; ++mask) {
        if (std::popcount(mask) < 2)
            continue;
        const bool acc_in = (mask & 1u) != 0;
        for (char scenario : {'c', 'z'}) {
            CaseSpec spec;
            spec.id = format_str("neu-%s-%05x%c", tag.c_str(), mask, scenario);
            spec.meta.kind = SuiteKind::neutrality;
            spec.meta.mask = mask;
            spec.meta.scenario = scenario;
            if (scenario == 'z') {
                spec.c = acc_in ? 0u : c_small;
                for (int k = 1; k <= kDotLength; ++k)
                    if (!(mask & (1u << k))) {
                        spec.a[size_t(k - 1)] = sqrt_small;
                        spec.b[size_t(k - 1)] = sqrt_small;
                    }
            } else {
                spec.c = acc_in ? c_large : c_small;
                std::vector<int> members;
                for (int k = 1; k <= kDotLength; ++k)
                    if (mask & (1u << k))
                        members.push_back(k);
                // A zero-sum needs an even count of +-V_large terms, counting
                // the accumulator; with an odd subset the highest-index
                // product is dropped to zero instead.
                int zeroed = (std::popcount(mask) % 2 != 0) ? members.back() : 0;
                if (zeroed)
                    members.pop_back();
                size_t negate = (size_t(acc_in) + members.size()) / 2;
                for (size_t i = 0; i < members.size(); ++i) {
                    spec.a[size_t(members[i] - 1)] = sqrt_large;
                    spec.b[size_t(members[i] - 1)] = i < negate ? sqrt_large_neg : sqrt_large;
                }
                for (int k = 1; k <= kDotLength; ++k)
                    if (!(mask & (1u << k))) {
                        spec.a[size_t(k - 1)] = sqrt_small;
                        spec.b[size_t(k - 1)] = sqrt_small;
                    }
            }
            specs.push_back(std::move(spec));
        }
    }
    pack_cases(suite, "neu-" + tag, specs);
}

// ---------------------------------------------------------------------------
// Width suite: a +1/-1 product pair pins the reference exponent while a lone
// 2^-c witness either survives alignment (c <= W) or vanishes. fp8 cannot
// build deep witnesses from its elements, so a second family pins the
// exponent at 2^16 and carries the witness in the fp32 accumulator.

void push_pair(CaseSpec& spec, FormatId f, int exp_each) {
    const uint32_t pos = ebits(1, exp_each, f);
    spec.a[0] = pos;
    spec.b[0] = pos;
    spec.a[1] = pos;
    spec.b[1] = negate_bits(pos, f);
}

void push_product(CaseSpec& spec, int slot, FormatId f, int64_t mantissa, int exponent) {
    // Split m*2^e into two representable elements: the mantissa rides on the
    // ceiling half so subunitary powers keep their elements normal.
    int hi = exponent >= 0 ? (exponent + 1) / 2 : -((-exponent) / 2);
    int lo = exponent - hi;
    spec.a[size_t(slot - 1)] = ebits(mantissa, hi, f);
    spec.b[size_t(slot - 1)] = ebits(1, lo, f);
}

void gen_width(ProbeSuite& suite) {
    const FormatId f = suite.input_format;
    const std::string tag = fmt_tag(f);
    std::vector<CaseSpec> specs;
    const bool fp8 = f == FormatId::fp8_e4m3;
    const int native_max = f == FormatId::fp16 ? 28 : (fp8 ? 12 : 30);
    for (int c = 1; c <= native_max; ++c) {
        CaseSpec spec;
        spec.id = format_str("wid-%s-c%02d", tag.c_str(), c);
        spec.meta.kind = SuiteKind::width;
        spec.meta.c = c;
        push_pair(spec, f, 0);
        push_product(spec, 3, f, 1, -c);
        specs.push_back(std::move(spec));
    }
    if (fp8) {
        for (int c = 1; c <= 30; ++c) {
            CaseSpec spec;
            spec.id = format_str("widc-%s-c%02d", tag.c_str(), c);
            spec.meta.kind = SuiteKind::width;
            spec.meta.c = c;
            spec.meta.c_assisted = true;
            push_pair(spec, f, 8);
            spec.c = ebits(1, 16 - c, FormatId::fp32);
            specs.push_back(std::move(spec));
        }
    }
    pack_cases(suite, "wid-" + tag, specs);
}

// ---------------------------------------------------------------------------
// Rounding suite.

void gen_rounding(ProbeSuite& suite) {
    const FormatId f = suite.input_format;
    const std::string tag = fmt_tag(f);
    const bool fp8 = f == FormatId::fp8_e4m3;
    const int b = fp8 ? 16 : 24; // reference exponent of the dominant terms
    std::vector<CaseSpec> specs;

    // Witness depth depends on the window width, so one alignment variant is
    // generated per candidate width; inference reads the variant matching the
    // width it already recovered.
    for (int w = kVariantWLo; w <= kVariantWHi; ++w) {
        for (int i = 0; i < 6; ++i) {
            CaseSpec spec;
            spec.id = format_str("aln-%s-w%d-%d", tag.c_str(), w, i + 1);
            spec.meta.kind = SuiteKind::rounding;
            spec.meta.index = i + 1;
            spec.meta.variant_w = w;
            if (fp8) {
                spec.meta.c_assisted = true;
                push_pair(spec, f, 8);
                spec.c = ebits(kAlignUnits[i].m, 16 - w + kAlignUnits[i].e, FormatId::fp32);
            } else {
                push_pair(spec, f, 0);
                push_product(spec, 3, f, kAlignUnits[i].m, kAlignUnits[i].e - w);
            }
            specs.push_back(std::move(spec));
        }
    }

    // Four equal dominant products of sigma * 2.25 * 2^B: B = 24 from
    // (1.5*2^12)^2 for the 16-bit formats, B = 16 from 384^2 for fp8. Their
    // sum 9 * 2^(B+2) carries two bits above the reference exponent B (plus
    // one more if the device renormalizes the 2.25 carry-out), so the
    // conversion always drops bits within the candidate window range. The
    // grid the correction must land on depends on the window width and the
    // carry-normalization setting, hence variants over both.
    for (int w = kVariantWLo; w <= kVariantWHi; ++w) {
        for (int vn = 0; vn <= 1; ++vn) {
            const int t = w - 20 - vn; // excess bits the conversion must drop
            if (t < 1)
                continue;
            const int grid = b + vn - w;
            for (int i = 1; i <= kFinalCaseCount; ++i) {
                const auto [sigma, u] = final_case_params(i, t);
                CaseSpec spec;
                spec.id = format_str("fin-%s-w%dn%d-%d", tag.c_str(), w, vn, i);
                spec.meta.kind = SuiteKind::rounding;
                spec.meta.index = i;
                spec.meta.variant_w = w;
                spec.meta.variant_norm = vn;
                spec.meta.final_family = true;
                const int half = fp8 ? 8 : 12; // dominant element exponent
                for (int slot = 0; slot < 4; ++slot) {
                    spec.a[size_t(slot)] = ebits(sigma * 3, half - 1, f);
                    spec.b[size_t(slot)] = ebits(3, half - 1, f);
                }
                // Correction value u * 2^grid as odd mantissa times power.
                int64_t mag = u < 0 ? -u : u;
                int shift = std::countr_zero(uint64_t(mag));
                push_product(spec, 5, f, (u < 0 ? -1 : 1) * (mag >> shift), grid + shift);
                specs.push_back(std::move(spec));
            }
        }
    }
    pack_cases(suite, "rnd-" + tag, specs);
}

// ---------------------------------------------------------------------------
// Normalization suite: carry-out probes (does a 2.25 product raise the
// reference exponent?) and subnormal-product probes (does a leading-zero
// significand lower it?).

void gen_normalization(ProbeSuite& suite) {
    const FormatId f = suite.input_format;
    const std::string tag = fmt_tag(f);
    const bool fp8 = f == FormatId::fp8_e4m3;
    std::vector<CaseSpec> specs;

    for (int d = kNormWitnessLo; d <= kNormWitnessHi; ++d) {
        CaseSpec spec;
        spec.id = format_str("nrm-%s-d%02d", tag.c_str(), d);
        spec.meta.kind = SuiteKind::normalization;
        spec.meta.d = d;
        const uint32_t three_halves = ebits(3, -1, f);
        spec.a[0] = three_halves;
        spec.b[0] = three_halves;
        spec.a[1] = three_halves;
        spec.b[1] = negate_bits(three_halves, f);
        if (fp8) {
            spec.meta.c_assisted = true;
            spec.c = ebits(1, -d, FormatId::fp32);
        } else {
            push_product(spec, 3, f, 1, -d);
        }
        specs.push_back(std::move(spec));
    }

    // Product 1: value 2^-k built as subnormal * huge so its exponent key
    // stays at 0 unless the device renormalizes; product 2 sits j bits below
    // and is visible or not depending on which key won.
    const int min_normal = format_of(f).min_exponent(); // -14 / -126 / -6
    const int kmax = fp8 ? 3 : 4;
    for (int k = 1; k <= kmax; ++k) {
        for (int j = kRenormJLo; j <= kRenormJHi; ++j) {
            CaseSpec spec;
            spec.id = format_str("rnm-%s-k%dj%d", tag.c_str(), k, j);
            spec.meta.kind = SuiteKind::normalization;
            spec.meta.k = k;
            spec.meta.j = j;
            spec.a[0] = ebits(1, min_normal - k, f); // subnormal element
            spec.b[0] = ebits(1, -min_normal, f);
            if (fp8) {
                spec.meta.c_assisted = true;
                spec.c = ebits(1, -j, FormatId::fp32);
            } else {
                push_product(spec, 2, f, 1, -j);
            }
            specs.push_back(std::move(spec));
        }
    }
    pack_cases(suite, "nrm-" + tag, specs);
}

// ---------------------------------------------------------------------------
// Range suite (wide-exponent inputs only): saturation checks plus a sweep
// that walks a dominant 2^e down until a borrow from a term W bits below
// stops being representable, exposing the reference-exponent floor. fp16 and
// fp8 elements cannot push the reference exponent anywhere near the floor,
// so they generate no range cases and inference reports the floor as
// unobservable.

void gen_range(ProbeSuite& suite) {
    const FormatId f = suite.input_format;
    if (f != FormatId::bf16)
        return;
    const std::string tag = fmt_tag(f);
    std::vector<CaseSpec> specs;

    {
        CaseSpec spec;
        spec.id = format_str("rng-%s-ovf1", tag.c_str());
        spec.meta.kind = SuiteKind::range;
        spec.meta.overflow_case = true;
        spec.meta.index = 1;
        push_product(spec, 1, f, 1, 128);
        push_product(spec, 2, f, -1, 128);
        push_product(spec, 3, f, 1, 127);
        specs.push_back(std::move(spec));
    }
    {
        CaseSpec spec;
        spec.id = format_str("rng-%s-ovf2", tag.c_str());
        spec.meta.kind = SuiteKind::range;
        spec.meta.overflow_case = true;
        spec.meta.index = 2;
        push_product(spec, 1, f, 1, 128);
        push_product(spec, 9, f, -1, 254);
        specs.push_back(std::move(spec));
    }
    for (int w = kVariantWLo; w <= kVariantWHi; ++w) {
        for (int e = kRangeEHi; e >= kRangeELo; --e) {
            CaseSpec spec;
            spec.id = format_str("rng-%s-w%de%d", tag.c_str(), w, e);
            spec.meta.kind = SuiteKind::range;
            spec.meta.variant_w = w;
            spec.meta.e = e;
            push_product(spec, 1, f, 1, e);
            push_product(spec, 2, f, -1, e - w);
            specs.push_back(std::move(spec));
        }
    }
    pack_cases(suite, "rng-" + tag, specs);
}

} // namespace

SuiteKind suite_kind_from_name(const std::string& name) {
    if (name == "neutrality") return SuiteKind::neutrality;
    if (name == "width") return SuiteKind::width;
    if (name == "rounding") return SuiteKind::rounding;
    if (name == "normalization") return SuiteKind::normalization;
    if (name == "range") return SuiteKind::range;
    if (name == "all") return SuiteKind::all;
    throw input_error("unknown probe suite '" + name + "'");
}

const char* suite_kind_name(SuiteKind kind) {
    switch (kind) {
    case SuiteKind::neutrality: return "neutrality";
    case SuiteKind::width: return "width";
    case SuiteKind::rounding: return "rounding";
    case SuiteKind::normalization: return "normalization";
    case SuiteKind::range: return "range";
    case SuiteKind::all: return "all";
    }
    throw input_error("corrupt suite kind");
}

ProbeSuite make_suite(FormatId input, SuiteKind kind) {
    if (input != FormatId::fp16 && input != FormatId::bf16 && input != FormatId::fp8_e4m3)
        throw input_error("probes target the MMA input formats (fp16, bf16, fp8_e4m3)");
    ProbeSuite suite;
    suite.input_format = input;
    switch (kind) {
    case SuiteKind::neutrality: gen_neutrality(suite); break;
    case SuiteKind::width: gen_width(suite); break;
    case SuiteKind::rounding: gen_rounding(suite); break;
    case SuiteKind::normalization: gen_normalization(suite); break;
    case SuiteKind::range: gen_range(suite); break;
    case SuiteKind::all:
        gen_neutrality(suite);
        gen_width(suite);
        gen_rounding(suite);
        gen_normalization(suite);
        gen_range(suite);
        break;
    }
    return suite;
}

Device simulator_device(const PipelineProfile& profile) {
    validate_profile(profile);
    return [profile](const Tile& a, const Tile& b, const Tile& c) {
        return tile_mma(c, a, b, profile);
    };
}

Device oracle_device(const PipelineProfile& profile) {
    validate_profile(profile);
    return [profile](const Tile& a, const Tile& b, const Tile& c) {
        return exact_tile_mma(c, a, b, profile);
    };
}

Device ieee_device(FormatId input) {
    return [input](const Tile& a, const Tile& b, const Tile& c) {
        Tile d;
        for (int i = 0; i < kTileDim; ++i) {
            std::span<const uint32_t> row(&a.bits[size_t(i) * kTileDim], kDotLength);
            for (int j = 0; j < kTileDim; ++j) {
                std::array<uint32_t, kDotLength> col;
                for (int k = 0; k < kDotLength; ++k)
                    col[size_t(k)] = b.at(k, j);
                d.at(i, j) = ieee_sequential_dot(c.at(i, j), row, col, input, FormatId::fp32);
            }
        }
        return d;
    };
}

Responses run_suite(const ProbeSuite& suite, const Device& device) {
    std::vector<TileBits> outputs(suite.cases.size());
    const int n = int(suite.cases.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (int i = 0; i < n; ++i) {
        const ProbeCase& pc = suite.cases[size_t(i)];
        Tile d = device(pc.a, pc.b, pc.c);
        outputs[size_t(i)] = d.bits;
    }
    Responses responses;
    for (size_t i = 0; i < suite.cases.size(); ++i)
        if (!responses.emplace(suite.cases[i].probe_id, outputs[i]).second)
            throw input_error("duplicate probe id '" + suite.cases[i].probe_id + "' in suite");
    return responses;
}

// ---------------------------------------------------------------------------
// Inference.

inference_error::inference_error(const std::string& what, std::vector<std::string> ids)
    : std::runtime_error([&] {
          std::string msg = what;
          if (!ids.empty()) {
              msg += " [cases:";
              for (const auto& id : ids)
                  msg += " " + id;
              msg += "]";
          }
          return msg;
      }()),
      ids_(std::move(ids)) {}

namespace {

// The five rounding rules a real alignment or output stage could plausibly
// use. Only toward_zero and nearest_even can be expressed in a profile;
// recognizing the others lets inference fail with a precise diagnosis
// instead of a generic mismatch.
enum class CandidateRounding : uint8_t {
    toward_zero,
    toward_negative,
    toward_positive,
    nearest_even,
    nearest_away,
};
constexpr CandidateRounding kCandidates[5] = {
    CandidateRounding::toward_zero,    CandidateRounding::toward_negative,
    CandidateRounding::toward_positive, CandidateRounding::nearest_even,
    CandidateRounding::nearest_away,
};

const char* candidate_name(CandidateRounding r) {
    switch (r) {
    case CandidateRounding::toward_zero: return "toward_zero";
    case CandidateRounding::toward_negative: return "toward_negative";
    case CandidateRounding::toward_positive: return "toward_positive";
    case CandidateRounding::nearest_even: return "nearest_even";
    case CandidateRounding::nearest_away: return "nearest_away";
    }
    return "?";
}

// Round m / 2^t to an integer (t >= 1).
int64_t round_scaled(int64_t m, int t, CandidateRounding mode) {
    const int64_t den = int64_t(1) << t;
    int64_t qf = m >= 0 ? m / den : -((-m + den - 1) / den); // floor
    int64_t r = m - qf * den;
    if (r == 0)
        return qf;
    switch (mode) {
    case CandidateRounding::toward_negative: return qf;
    case CandidateRounding::toward_positive: return qf + 1;
    case CandidateRounding::toward_zero: return m > 0 ? qf : qf + 1;
    case CandidateRounding::nearest_even:
    case CandidateRounding::nearest_away: {
        int64_t twice = 2 * r;
        if (twice < den)
            return qf;
        if (twice > den)
            return qf + 1;
        if (mode == CandidateRounding::nearest_even)
            return (qf & 1) ? qf + 1 : qf;
        return m > 0 ? qf + 1 : qf; // ties away from zero
    }
    }
    return qf;
}

// Integer grid units of m * 2^shift under `mode` (exact when shift >= 0).
int64_t align_units(int64_t m, int shift, CandidateRounding mode) {
    return shift >= 0 ? (m << shift) : round_scaled(m, -shift, mode);
}

// fp32 bits of n * 2^g under `mode`; callers stay inside the normal range.
uint32_t fp32_round_value(int64_t n, int g, CandidateRounding mode) {
    if (n == 0)
        return 0;
    uint64_t mag = n < 0 ? uint64_t(-n) : uint64_t(n);
    int lead = 63 - std::countl_zero(mag);
    if (lead <= 23)
        return exact_bits(n, g, kFp32);
    int t = lead - 23;
    int64_t q = round_scaled(n, t, mode);
    return exact_bits(q, g + t, kFp32);
}

struct Obs {
    std::string id;
    CaseMeta meta;
    uint32_t bits = 0;
};

class InferenceInput {
public:
    InferenceInput(const ProbeSuite& suite, const Responses& responses) {
        if (suite.meta.empty())
            throw input_error("probe suite carries no case metadata; regenerate it with "
                              "make_suite rather than loading it from disk");
        for (const auto& [probe_id, tile] : responses)
            if (!known_probe_ids_.insert(probe_id).second)
                throw input_error("duplicate probe id '" + probe_id + "' in responses");
        for (const auto& pc : suite.cases) {
            auto it = responses.find(pc.probe_id);
            if (it == responses.end())
                throw inference_error("responses are missing probe '" + pc.probe_id + "'",
                                      {pc.probe_id});
            matched_probe_ids_.insert(pc.probe_id);
            for (const auto& target : pc.targets) {
                auto mit = suite.meta.find(target.case_id);
                if (mit == suite.meta.end())
                    throw input_error("case '" + target.case_id + "' has no metadata");
                Obs obs;
                obs.id = target.case_id;
                obs.meta = mit->second;
                obs.bits = it->second[size_t(target.row) * kTileDim + size_t(target.col)];
                by_kind_[mit->second.kind].push_back(std::move(obs));
            }
        }
        for (const auto& probe_id : known_probe_ids_)
            if (!matched_probe_ids_.count(probe_id))
                throw inference_error("responses name an unknown probe '" + probe_id + "'",
                                      {probe_id});
    }

    const std::vector<Obs>& of(SuiteKind kind) const {
        static const std::vector<Obs> empty;
        auto it = by_kind_.find(kind);
        return it == by_kind_.end() ? empty : it->second;
    }

private:
    std::map<SuiteKind, std::vector<Obs>> by_kind_;
    std::set<std::string> known_probe_ids_;
    std::set<std::string> matched_probe_ids_;
};

// --- grouping ---------------------------------------------------------------

struct NeutralityVerdicts {
    std::vector<uint32_t> neutral_masks; // ascending popcount after validation
    std::vector<std::string> evidence;
    size_t scanned = 0;
};

NeutralityVerdicts recover_grouping_masks(const std::vector<Obs>& cases) {
    if (cases.empty())
        throw inference_error("no neutrality cases present; cannot recover the grouping", {});
    struct Pair {
        std::optional<uint32_t> cancel, zeroed;
        std::string cancel_id, zeroed_id;
    };
    std::map<uint32_t, Pair> by_mask;
    for (const auto& obs : cases) {
        Pair& p = by_mask[obs.meta.mask];
        if (obs.meta.scenario == 'c') {
            p.cancel = obs.bits;
            p.cancel_id = obs.id;
        } else {
            p.zeroed = obs.bits;
            p.zeroed_id = obs.id;
        }
    }
    std::vector<std::pair<uint32_t, const Pair*>> neutral;
    for (const auto& [mask, pair] : by_mask) {
        if (!pair.cancel || !pair.zeroed)
            throw inference_error("neutrality scenarios are incomplete for one subset",
                                  {pair.cancel_id.empty() ? pair.zeroed_id : pair.cancel_id});
        if (*pair.cancel == *pair.zeroed)
            neutral.push_back({mask, &pair});
    }
    if (neutral.empty())
        throw inference_error("no subset behaved neutrally; the device groups nothing the "
                              "probes can see",
                              {});
    std::sort(neutral.begin(), neutral.end(), [](const auto& a, const auto& b) {
        int pa = std::popcount(a.first), pb = std::popcount(b.first);
        return pa != pb ? pa < pb : a.first < b.first;
    });
    for (size_t i = 1; i < neutral.size(); ++i) {
        uint32_t prev = neutral[i - 1].first, cur = neutral[i].first;
        if (std::popcount(prev) == std::popcount(cur) || (prev & cur) != prev)
            throw inference_error(
                "two neutral subsets are not nested, so no group chain explains them",
                {neutral[i - 1].second->cancel_id, neutral[i].second->cancel_id});
    }
    if (neutral.back().first != kFullMask)
        throw inference_error("the complete operand set is not neutral",
                              {by_mask.at(kFullMask).cancel_id, by_mask.at(kFullMask).zeroed_id});
    if (!(neutral.front().first & 1u))
        throw inference_error("the innermost neutral subset excludes the accumulator",
                              {neutral.front().second->cancel_id});

    NeutralityVerdicts v;
    v.scanned = by_mask.size();
    for (const auto& [mask, pair] : neutral) {
        v.neutral_masks.push_back(mask);
        v.evidence.push_back(pair->cancel_id);
        v.evidence.push_back(pair->zeroed_id);
    }
    return v;
}

Grouping grouping_from_chain(const std::vector<uint32_t>& chain) {
    Grouping grouping;
    uint32_t covered = 0;
    for (size_t gi = 0; gi < chain.size(); ++gi) {
        std::vector<Slot> group;
        if (gi == 0)
            group.push_back(acc_slot());
        else
            group.push_back(prev_slot());
        uint32_t fresh = chain[gi] & ~covered & ~1u;
        for (int k = 1; k <= kDotLength; ++k)
            if (fresh & (1u << k))
                group.push_back(product_slot(k));
        grouping.push_back(std::move(group));
        covered = chain[gi];
    }
    return grouping;
}

// --- width -------------------------------------------------------------------

struct WidthResult {
    int window = 0;
    std::vector<std::string> evidence;
};

WidthResult recover_width(const std::vector<Obs>& cases, FormatId input) {
    if (cases.empty())
        throw inference_error("no width cases present; cannot recover the window width", {});
    const bool fp8 = input == FormatId::fp8_e4m3;
    std::map<int, const Obs*> primary, secondary;
    for (const auto& obs : cases)
        (obs.meta.c_assisted == fp8 ? primary : secondary)[obs.meta.c] = &obs;

    auto classify = [&](const Obs& obs, bool assisted) {
        uint32_t visible =
            assisted ? ebits(1, 16 - obs.meta.c, FormatId::fp32) : ebits(1, -obs.meta.c, FormatId::fp32);
        if (obs.bits == visible)
            return true;
        if (obs.bits == 0u)
            return false;
        throw inference_error("width case returned neither its witness nor zero", {obs.id});
    };

    int window = 0;
    const Obs* last_visible = nullptr;
    const Obs* first_hidden = nullptr;
    for (const auto& [c, obs] : primary) {
        bool vis = classify(*obs, fp8);
        if (vis) {
            if (first_hidden)
                throw inference_error("width visibility is not monotone in the witness depth",
                                      {first_hidden->id, obs->id});
            window = c;
            last_visible = obs;
        } else if (!first_hidden) {
            first_hidden = obs;
        }
    }
    if (!last_visible)
        throw inference_error("every width witness vanished; the window is narrower than the "
                              "probes can measure",
                              {primary.begin()->second->id});
    if (!first_hidden)
        throw inference_error("every width witness survived; the window is wider than the probes "
                              "can measure",
                              {std::prev(primary.end())->second->id});
    for (const auto& [c, obs] : secondary) {
        bool vis = classify(*obs, !fp8);
        if (vis != (c <= window))
            throw inference_error("element-built and accumulator-built width witnesses disagree",
                                  {last_visible->id, obs->id});
    }
    WidthResult r;
    r.window = window;
    r.evidence = {last_visible->id, first_hidden->id};
    return r;
}

// --- rounding ----------------------------------------------------------------

struct RoundingResult {
    Rounding alignment = Rounding::toward_zero;
    Rounding final = Rounding::toward_zero;
    CandidateRounding alignment_candidate = CandidateRounding::toward_zero;
    std::vector<std::string> align_evidence, final_evidence;
};

Rounding representable_or_throw(CandidateRounding mode, const char* stage,
                                const std::vector<std::string>& ids) {
    if (mode == CandidateRounding::toward_zero)
        return Rounding::toward_zero;
    if (mode == CandidateRounding::nearest_even)
        return Rounding::nearest_even;
    throw inference_error(std::string("the device's ") + stage + " stage rounds " +
                              candidate_name(mode) +
                              ", which a pipeline profile cannot express",
                          ids);
}

template <typename Predict>
CandidateRounding unique_candidate(const std::vector<const Obs*>& obs, Predict predict,
                                   const char* stage) {
    std::vector<std::string> ids;
    for (const auto* o : obs)
        ids.push_back(o->id);
    std::optional<CandidateRounding> winner;
    for (CandidateRounding mode : kCandidates) {
        bool all = true;
        for (size_t i = 0; i < obs.size(); ++i)
            if (predict(i, mode) != obs[i]->bits) {
                all = false;
                break;
            }
        if (!all)
            continue;
        if (winner)
            throw inference_error(std::string("observed ") + stage +
                                      " behaviour matches both " + candidate_name(*winner) +
                                      " and " + candidate_name(mode),
                                  ids);
        winner = mode;
    }
    if (!winner)
        throw inference_error(std::string("observed ") + stage +
                                  " behaviour matches no candidate rounding rule",
                              ids);
    return *winner;
}

RoundingResult recover_rounding(const std::vector<Obs>& cases, FormatId input, int window,
                                bool normalize_products) {
    if (cases.empty())
        throw inference_error("no rounding cases present; cannot recover rounding modes", {});
    const bool fp8 = input == FormatId::fp8_e4m3;
    const int norm = normalize_products ? 1 : 0;

    std::vector<const Obs*> align(6, nullptr), final_cases(kFinalCaseCount, nullptr);
    for (const auto& obs : cases) {
        if (obs.meta.variant_w != window)
            continue;
        if (obs.meta.final_family) {
            if (obs.meta.variant_norm == norm)
                final_cases[size_t(obs.meta.index - 1)] = &obs;
        } else {
            align[size_t(obs.meta.index - 1)] = &obs;
        }
    }
    for (const auto* o : align)
        if (!o)
            throw inference_error(
                "no alignment cases were generated for window width " + std::to_string(window),
                {});
    for (const auto* o : final_cases)
        if (!o)
            throw inference_error("the output conversion never drops bits at window width " +
                                      std::to_string(window) + " with this normalization "
                                      "setting, so its rounding is unobservable",
                                  {});

    RoundingResult result;

    auto predict_align = [&](size_t i, CandidateRounding mode) {
        int64_t units = align_units(kAlignUnits[i].m, kAlignUnits[i].e, mode);
        int grid = fp8 ? 16 - window : -window;
        return units == 0 ? 0u : ebits(units, grid, FormatId::fp32);
    };
    result.alignment_candidate = unique_candidate(align, predict_align, "alignment");
    std::vector<std::string> align_ids;
    for (const auto* o : align)
        align_ids.push_back(o->id);
    result.alignment = representable_or_throw(result.alignment_candidate, "alignment", align_ids);
    result.align_evidence = align_ids;

    // The grid under the dominant products: their reference exponent B, plus
    // one if the device renormalizes the 2.25 carry-out, minus the window.
    const int grid = (fp8 ? 16 : 24) + norm - window;
    const int t = window - 20 - norm; // bits the conversion must drop
    auto predict_final = [&](size_t i, CandidateRounding mode) {
        const auto [sigma, u] = final_case_params(int(i) + 1, t);
        // 4 * sigma * 2.25 * 2^B on the grid, always exact: 9 * 2^(window-norm).
        int64_t dominant = int64_t(9) << (window - norm);
        return fp32_round_value(sigma * dominant + u, grid, mode);
    };
    CandidateRounding final_mode = unique_candidate(final_cases, predict_final, "output conversion");
    std::vector<std::string> final_ids;
    for (const auto* o : final_cases)
        final_ids.push_back(o->id);
    result.final = representable_or_throw(final_mode, "output conversion", final_ids);
    result.final_evidence = final_ids;
    return result;
}

// --- normalization -----------------------------------------------------------

struct NormalizationResult {
    bool normalize = false;
    bool renormalize = false;
    std::vector<std::string> norm_evidence, renorm_evidence;
};

NormalizationResult recover_normalization(const std::vector<Obs>& cases, int window) {
    if (cases.empty())
        throw inference_error("no normalization cases present", {});
    NormalizationResult result;

    std::vector<const Obs*> norm_cases, renorm_cases;
    for (const auto& obs : cases)
        (obs.meta.d > 0 ? norm_cases : renorm_cases).push_back(&obs);

    auto match_flag = [](const std::vector<const Obs*>& obs, auto observed, auto pred_off,
                         auto pred_on, const char* what) {
        std::vector<std::string> ids;
        for (const auto* o : obs)
            ids.push_back(o->id);
        bool off_ok = true, on_ok = true;
        for (const auto* o : obs) {
            bool vis = observed(*o);
            off_ok = off_ok && vis == pred_off(*o);
            on_ok = on_ok && vis == pred_on(*o);
        }
        if (off_ok == on_ok)
            throw inference_error(off_ok ? std::string("observed ") + what +
                                               " behaviour cannot separate the two candidate "
                                               "settings"
                                         : std::string("observed ") + what +
                                               " behaviour matches neither candidate setting",
                                  ids);
        return on_ok;
    };

    auto witness_visible = [&](const Obs& o, uint32_t visible_bits, uint32_t hidden_bits) {
        if (o.bits == visible_bits)
            return true;
        if (o.bits == hidden_bits)
            return false;
        throw inference_error("normalization case returned an unexpected value", {o.id});
    };

    result.normalize = match_flag(
        norm_cases,
        [&](const Obs& o) {
            return witness_visible(o, ebits(1, -o.meta.d, FormatId::fp32), 0u);
        },
        [&](const Obs& o) { return o.meta.d <= window; },
        [&](const Obs& o) { return o.meta.d <= window - 1; }, "carry-out normalization");
    for (const auto* o : norm_cases)
        result.norm_evidence.push_back(o->id);

    result.renormalize = match_flag(
        renorm_cases,
        [&](const Obs& o) {
            const int k = o.meta.k, j = o.meta.j;
            uint32_t hidden = ebits(1, -k, FormatId::fp32);
            if (j - k <= 23) {
                uint32_t visible = ebits((int64_t(1) << (j - k)) + 1, -j, FormatId::fp32);
                return witness_visible(o, visible, hidden);
            }
            // A companion more than 23 bits down cannot appear in an fp32
            // significand regardless of the window, so only the lone leading
            // value is acceptable.
            if (o.bits == hidden)
                return false;
            throw inference_error("normalization case returned an unexpected value", {o.id});
        },
        [&](const Obs& o) { return o.meta.j <= window && o.meta.j - o.meta.k <= 23; },
        [&](const Obs& o) { return o.meta.j <= o.meta.k + window && o.meta.j - o.meta.k <= 23; },
        "subnormal-product renormalization");
    for (const auto* o : renorm_cases)
        result.renorm_evidence.push_back(o->id);
    return result;
}

// --- range -------------------------------------------------------------------

struct RangeResult {
    std::optional<int> floor;
    std::vector<std::string> evidence;
    std::vector<std::string> notes;
};

RangeResult recover_range(const std::vector<Obs>& cases, int window) {
    RangeResult result;
    if (cases.empty())
        return result;

    std::map<int, const Obs*> sweep;
    for (const auto& obs : cases) {
        if (obs.meta.overflow_case) {
            if (obs.meta.index == 1) {
                uint32_t expected = ebits(1, 127, FormatId::fp32);
                if (obs.bits != expected)
                    throw inference_error("cancelling overflow products did not leave the "
                                          "surviving 2^127 term",
                                          {obs.id});
                result.evidence.push_back(obs.id);
            } else {
                if ((obs.bits & 0x7fffffffu) != 0x7f800000u)
                    throw inference_error("an unrepresentable group sum did not saturate to "
                                          "infinity",
                                          {obs.id});
                result.notes.push_back(std::string("group saturation observed with sign ") +
                                       ((obs.bits & 0x80000000u) ? "-" : "+") + " (case " +
                                       obs.id + ")");
                result.evidence.push_back(obs.id);
            }
        } else if (obs.meta.variant_w == window) {
            sweep[obs.meta.e] = &obs;
        }
    }
    if (sweep.empty()) {
        result.notes.push_back("no floor sweep was generated for window width " +
                               std::to_string(window) + "; exponent floor unobserved");
        return result;
    }

    const Obs* last_exact = nullptr;   // largest e whose borrow vanished
    const Obs* first_borrow = nullptr; // smallest e where the borrow showed
    for (const auto& [e, obs] : sweep) {
        bool exact = obs->bits == ebits(1, e, FormatId::fp32);
        if (exact) {
            if (first_borrow)
                throw inference_error("floor sweep is not monotone in the dominant exponent",
                                      {first_borrow->id, obs->id});
            last_exact = obs;
        } else if (!first_borrow) {
            first_borrow = obs;
        }
    }
    if (!last_exact)
        throw inference_error("the borrow never vanished; the exponent floor lies below the "
                              "sweep range",
                              {sweep.begin()->second->id});
    if (!first_borrow)
        throw inference_error("the borrow never appeared; the exponent floor lies above the "
                              "sweep range",
                              {std::prev(sweep.end())->second->id});
    result.floor = last_exact->meta.e + 1;
    result.evidence.push_back(last_exact->id);
    result.evidence.push_back(first_borrow->id);
    return result;
}

} // namespace

PipelineProfile InferredProfile::to_profile() const {
    if (!exponent_floor)
        throw input_error("inferred profile '" + name +
                          "' has no observed exponent floor and cannot drive the simulator");
    PipelineProfile p;
    p.name = name;
    p.input_format = input_format;
    p.accumulator_format = accumulator_format;
    p.grouping = grouping;
    p.window_bits = window_bits;
    p.exponent_floor = *exponent_floor;
    p.alignment_rounding = alignment_rounding;
    p.final_rounding = final_rounding;
    p.normalize_products = normalize_products;
    p.renormalize_subnormal_products = renormalize_subnormal_products;
    validate_profile(p);
    return p;
}

InferredProfile infer_profile(const ProbeSuite& suite, const Responses& responses) {
    InferenceInput input(suite, responses);

    InferredProfile inf;
    inf.input_format = suite.input_format;
    inf.accumulator_format = FormatId::fp32;
    inf.name = std::string("inferred-") + fmt_tag(suite.input_format);

    auto verdicts = recover_grouping_masks(input.of(SuiteKind::neutrality));
    inf.grouping = grouping_from_chain(verdicts.neutral_masks);
    inf.evidence["grouping"] = verdicts.evidence;
    inf.notes.push_back(std::to_string(verdicts.scanned) +
                        " operand subsets scanned for neutrality");

    auto width = recover_width(input.of(SuiteKind::width), suite.input_format);
    inf.window_bits = width.window;
    inf.evidence["window_bits"] = width.evidence;

    auto normalization = recover_normalization(input.of(SuiteKind::normalization), width.window);
    inf.normalize_products = normalization.normalize;
    inf.renormalize_subnormal_products = normalization.renormalize;
    inf.evidence["normalize_products"] = normalization.norm_evidence;
    inf.evidence["renormalize_subnormal_products"] = normalization.renorm_evidence;

    auto rounding = recover_rounding(input.of(SuiteKind::rounding), suite.input_format,
                                     width.window, normalization.normalize);
    inf.alignment_rounding = rounding.alignment;
    inf.final_rounding = rounding.final;
    inf.evidence["alignment_rounding"] = rounding.align_evidence;
    inf.evidence["final_rounding"] = rounding.final_evidence;

    auto range = recover_range(input.of(SuiteKind::range), width.window);
    inf.exponent_floor = range.floor;
    if (range.floor)
        inf.evidence["exponent_floor"] = range.evidence;
    for (const auto& note : range.notes)
        inf.notes.push_back(note);
    if (input.of(SuiteKind::range).empty())
        inf.notes.push_back(std::string(fmt_tag(suite.input_format)) +
                            " elements cannot reach the reference-exponent floor; it is "
                            "unobservable from this format");

    // Structural sanity of the recovered parameters (grouping shape, window
    // range); a failure here means the evidence was self-consistent but
    // outside the modelled space.
    try {
        PipelineProfile check;
        check.name = inf.name;
        check.input_format = inf.input_format;
        check.accumulator_format = inf.accumulator_format;
        check.grouping = inf.grouping;
        check.window_bits = inf.window_bits;
        check.exponent_floor = inf.exponent_floor.value_or(-132);
        check.alignment_rounding = Rounding::toward_zero;
        check.final_rounding = Rounding::toward_zero;
        validate_profile(check);
    } catch (const input_error& e) {
        throw inference_error(std::string("recovered parameters fail structural validation: ") +
                                  e.what(),
                              width.evidence);
    }
    return inf;
}

InferredProfile infer_profile(FormatId input, const Responses& responses) {
    return infer_profile(make_suite(input, SuiteKind::all), responses);
}

// ---------------------------------------------------------------------------
// Serialization.

namespace {

std::string tile_hex(const TileBits& bits) {
    std::string out(bits.size() * 8, '0');
    for (size_t i = 0; i < bits.size(); ++i)
        std::snprintf(out.data() + i * 8, 9, "%08x", bits[i]);
    return out;
}

TileBits tile_from_hex(const std::string& hex) {
    TileBits bits{};
    if (hex.size() != bits.size() * 8)
        throw input_error("output_tile_hex must be " + std::to_string(bits.size() * 8) +
                          " hex digits");
    for (size_t i = 0; i < bits.size(); ++i) {
        uint32_t v = 0;
        for (size_t d = 0; d < 8; ++d) {
            char c = hex[i * 8 + d];
            uint32_t nib;
            if (c >= '0' && c <= '9')
                nib = uint32_t(c - '0');
            else if (c >= 'a' && c <= 'f')
                nib = uint32_t(c - 'a') + 10;
            else if (c >= 'A' && c <= 'F')
                nib = uint32_t(c - 'A') + 10;
            else
                throw input_error("output_tile_hex contains a non-hex character");
            v = (v << 4) | nib;
        }
        bits[i] = v;
    }
    return bits;
}

} // namespace

void save_suite(const ProbeSuite& suite, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    ordered_json manifest;
    manifest["suite_version"] = suite.suite_version;
    manifest["input_format"] = format_of(suite.input_format).name;
    manifest["probes"] = ordered_json::array();
    for (const auto& pc : suite.cases) {
        ordered_json entry;
        entry["id"] = pc.probe_id;
        entry["a"] = pc.probe_id + ".a.hwkt";
        entry["b"] = pc.probe_id + ".b.hwkt";
        entry["c"] = pc.probe_id + ".c.hwkt";
        entry["targets"] = ordered_json::array();
        for (const auto& t : pc.targets) {
            ordered_json tj;
            tj["case_id"] = t.case_id;
            tj["row"] = t.row;
            tj["col"] = t.col;
            entry["targets"].push_back(tj);
        }
        manifest["probes"].push_back(entry);
        engine::write_matrix((fs::path(dir) / (pc.probe_id + ".a.hwkt")).string(),
                             engine::matrix_from_tile(pc.a));
        engine::write_matrix((fs::path(dir) / (pc.probe_id + ".b.hwkt")).string(),
                             engine::matrix_from_tile(pc.b));
        engine::write_matrix((fs::path(dir) / (pc.probe_id + ".c.hwkt")).string(),
                             engine::matrix_from_tile(pc.c));
    }
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!out)
        throw input_error("cannot write the suite manifest in '" + dir + "'");
    out << manifest.dump(2) << '\n';
    out.flush();
    if (!out)
        throw input_error("i/o error while writing the suite manifest");
}

ProbeSuite load_suite(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in)
        throw input_error("cannot open the suite manifest in '" + dir + "'");
    ordered_json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw input_error(std::string("suite manifest is not valid JSON: ") + e.what());
    }
    if (!manifest.is_object() || !manifest.contains("suite_version") ||
        !manifest.contains("input_format") || !manifest.contains("probes"))
        throw input_error("suite manifest is missing required fields");
    if (manifest["suite_version"].get<std::string>() != kSuiteVersion)
        throw input_error("suite manifest version '" +
                          manifest["suite_version"].get<std::string>() +
                          "' does not match this build's '" + kSuiteVersion + "'");
    ProbeSuite suite;
    try {
        suite.input_format = format_id(manifest["input_format"].get<std::string>());
    } catch (const format_error& e) {
        throw input_error(e.what());
    }
    for (const auto& entry : manifest["probes"]) {
        ProbeCase pc;
        pc.probe_id = entry.at("id").get<std::string>();
        auto load_tile = [&](const char* key, FormatId expect) {
            auto m = engine::read_matrix((fs::path(dir) / entry.at(key).get<std::string>()).string());
            if (m.format != expect)
                throw input_error("tile file for probe '" + pc.probe_id +
                                  "' carries the wrong element format");
            return engine::tile_from_matrix(m);
        };
        pc.a = load_tile("a", suite.input_format);
        pc.b = load_tile("b", suite.input_format);
        pc.c = load_tile("c", FormatId::fp32);
        for (const auto& t : entry.at("targets")) {
            CaseTarget target;
            target.case_id = t.at("case_id").get<std::string>();
            target.row = t.at("row").get<int>();
            target.col = t.at("col").get<int>();
            if (target.row < 0 || target.row >= kTileDim || target.col < 0 ||
                target.col >= kTileDim)
                throw input_error("target cell out of range in probe '" + pc.probe_id + "'");
            pc.targets.push_back(std::move(target));
        }
        suite.cases.push_back(std::move(pc));
    }
    return suite;
}

void save_responses(const std::string& path, const Responses& responses) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw input_error("cannot open '" + path + "' for writing");
    for (const auto& [probe_id, tile] : responses) {
        ordered_json line;
        line["probe_id"] = probe_id;
        line["output_tile_hex"] = tile_hex(tile);
        out << line.dump() << '\n';
    }
    out.flush();
    if (!out)
        throw input_error("i/o error while writing '" + path + "'");
}

Responses load_responses(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw input_error("cannot open '" + path + "' for reading");
    Responses responses;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw input_error("line " + std::to_string(lineno) + " of '" + path +
                              "' is not valid JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("probe_id") || !j.contains("output_tile_hex"))
            throw input_error("line " + std::to_string(lineno) + " of '" + path +
                              "' must carry probe_id and output_tile_hex");
        std::string id = j["probe_id"].get<std::string>();
        if (!responses.emplace(id, tile_from_hex(j["output_tile_hex"].get<std::string>())).second)
            throw input_error("duplicate probe id '" + id + "' in '" + path + "'");
    }
    if (in.bad())
        throw input_error("i/o error while reading '" + path + "'");
    return responses;
}

} // namespace tcemu::probes
