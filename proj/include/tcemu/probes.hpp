#pragma once
// Characterization probes: self-contained MMA input tiles whose outputs pin
// down every pipeline parameter of a device (grouping, window width, both
// rounding modes, the two normalization switches and, where observable, the
// reference-exponent floor), plus the inference pass that recovers a full
// profile from recorded responses.

#include "tcemu/pipeline.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcemu::probes {

// Bumped whenever tile construction or case enumeration changes; stored in
// suite manifests so stale response files are rejected instead of misread.
inline constexpr const char* kSuiteVersion = "tcemu-probes-1";

enum class SuiteKind : uint8_t { neutrality, width, rounding, normalization, range, all };

SuiteKind suite_kind_from_name(const std::string& name);
const char* suite_kind_name(SuiteKind kind);

// A measurement lives at one output cell of one device call. Independent
// cases are packed onto the diagonal of a shared tile triple (case t uses row
// t of A, column t of B and accumulator cell (t,t)), so one device call can
// carry up to 16 cases.
struct CaseTarget {
    std::string case_id;
    int row = 0;
    int col = 0;

    friend bool operator==(const CaseTarget&, const CaseTarget&) = default;
};

// One device invocation: d = mma(a, b, c) with a/b in the suite's input
// format and c in fp32.
struct ProbeCase {
    std::string probe_id;
    Tile a;
    Tile b;
    Tile c;
    std::vector<CaseTarget> targets;

    friend bool operator==(const ProbeCase&, const ProbeCase&) = default;
};

// Per-case generation parameters, kept so inference never has to parse ids.
// Suites are regenerated deterministically at inference time, so this table
// is rebuilt rather than serialized.
struct CaseMeta {
    SuiteKind kind = SuiteKind::all;
    uint32_t mask = 0;     // neutrality: subset bits (bit 0 = ACC, bit i = product i)
    char scenario = 0;     // neutrality: 'c' cancellation, 'z' zeroed baseline
    int c = 0;             // width: probed bit offset
    bool c_assisted = false; // width/rounding/normalization: fine term carried by the fp32 accumulator
    int variant_w = 0;     // cases generated per candidate window width (0 = width-independent)
    int variant_norm = 0;  // output-conversion cases: candidate carry-normalization setting
    int index = 0;         // rounding: 1-based case number within its family
    bool final_family = false; // rounding: true for output-conversion cases
    int d = 0;             // normalization: witness bit offset
    int k = 0;             // renormalization: leading-zero count of the subnormal product
    int j = 0;             // renormalization: companion bit offset
    int e = 0;             // range: dominant product exponent
    bool overflow_case = false; // range: saturation checks rather than floor sweep

    friend bool operator==(const CaseMeta&, const CaseMeta&) = default;
};

struct ProbeSuite {
    std::string suite_version = kSuiteVersion;
    FormatId input_format = FormatId::fp16;
    std::vector<ProbeCase> cases;
    std::map<std::string, CaseMeta> meta; // case_id -> parameters
};

// Deterministic: depends only on (input, kind).
ProbeSuite make_suite(FormatId input, SuiteKind kind);

// A device maps operand tiles to the fp32 output tile. All probe inputs are
// finite, so a conforming device never throws.
using Device = std::function<Tile(const Tile& a, const Tile& b, const Tile& c)>;

Device simulator_device(const PipelineProfile& profile);
Device oracle_device(const PipelineProfile& profile);
// Scalar reference device: per-cell left-to-right fused-multiply-add loop in
// fp32 with round-to-nearest-even, the behaviour of a plain CPU dot product.
Device ieee_device(FormatId input);

// Full output tiles keyed by probe id, exactly what the response files hold.
using TileBits = std::array<uint32_t, kTileDim * kTileDim>;
using Responses = std::map<std::string, TileBits>;

Responses run_suite(const ProbeSuite& suite, const Device& device);

// Raised when responses contradict every candidate parameter value or are
// internally inconsistent; `probe_ids()` lists the implicated cases.
class inference_error : public std::runtime_error {
public:
    inference_error(const std::string& what, std::vector<std::string> ids);
    const std::vector<std::string>& probe_ids() const { return ids_; }

private:
    std::vector<std::string> ids_;
};

// Inference result: every recovered field cites the cases that pinned it
// down. The exponent floor is only reachable through wide-exponent inputs,
// so fp16 and fp8 runs leave it unset.
struct InferredProfile {
    std::string name;
    FormatId input_format = FormatId::fp16;
    FormatId accumulator_format = FormatId::fp32;
    Grouping grouping;
    int window_bits = 0;
    std::optional<int> exponent_floor;
    Rounding alignment_rounding = Rounding::toward_zero;
    Rounding final_rounding = Rounding::toward_zero;
    bool normalize_products = false;
    bool renormalize_subnormal_products = false;
    std::map<std::string, std::vector<std::string>> evidence; // field -> case ids
    std::vector<std::string> notes;

    // Throws input_error when the floor was unobservable; such a profile can
    // still be compared field-by-field but not used for simulation.
    PipelineProfile to_profile() const;
};

// `suite` must be the full suite for the responses' format (every case id
// present in the responses, no unknown probes referenced).
InferredProfile infer_profile(const ProbeSuite& suite, const Responses& responses);
InferredProfile infer_profile(FormatId input, const Responses& responses);

// Directory layout: manifest.json plus one HWKT tile file per operand.
void save_suite(const ProbeSuite& suite, const std::string& dir);
ProbeSuite load_suite(const std::string& dir);

// JSONL, one {"probe_id", "output_tile_hex"} object per line; the hex string
// is the 256 fp32 cells row-major, 8 lowercase digits each.
void save_responses(const std::string& path, const Responses& responses);
Responses load_responses(const std::string& path);

} // namespace tcemu::probes
