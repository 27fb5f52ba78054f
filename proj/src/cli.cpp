#include "tcemu/cli.hpp"

#include "tcemu/engine.hpp"
#include "tcemu/formats.hpp"
#include "tcemu/oracle.hpp"
#include "tcemu/pipeline.hpp"
#include "tcemu/probes.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace tcemu::cli {
namespace {

constexpr int kExitSuccess = 0;
constexpr int kExitMismatch = 1;
constexpr int kExitUsage = 2;

FormatId dtype_id(const std::string& dtype) {
    if (dtype == "fp8")
        return FormatId::fp8_e4m3;
    return format_id(dtype);
}

const char* dtype_token(FormatId f) {
    return f == FormatId::fp8_e4m3 ? "fp8" : format_of(f).name;
}

// Shared --arch/--profile/--dtype selection. --arch builds a shipped profile
// and needs --dtype; --profile loads a JSON file and --dtype, if given, must
// agree with it.
struct ProfileChoice {
    std::string arch;
    std::string profile_path;
    std::string dtype;

    PipelineProfile resolve() const {
        if (!profile_path.empty()) {
            PipelineProfile p = engine::load_profile(profile_path);
            if (!dtype.empty() && dtype_id(dtype) != p.input_format)
                throw input_error("--dtype " + dtype + " disagrees with the profile's input_format " +
                                  format_of(p.input_format).name);
            return p;
        }
        if (arch.empty())
            throw input_error("one of --arch or --profile is required");
        if (dtype.empty())
            throw input_error("--dtype is required with --arch");
        return make_profile(arch_from_name(arch), dtype_id(dtype));
    }
};

void add_profile_flags(CLI::App* cmd, ProfileChoice& choice, bool with_dtype = true) {
    auto* arch = cmd->add_option("--arch", choice.arch, "shipped device generation")
                     ->check(CLI::IsMember({"ampere", "lovelace", "hopper"}));
    auto* prof = cmd->add_option("--profile", choice.profile_path, "pipeline profile JSON file");
    arch->excludes(prof);
    prof->excludes(arch);
    if (with_dtype)
        cmd->add_option("--dtype", choice.dtype, "input element type")
            ->check(CLI::IsMember({"fp16", "bf16", "fp8"}));
}

engine::Matrix read_operand(const std::string& path, FormatId want, const char* role) {
    engine::Matrix m = engine::read_matrix(path);
    if (m.format != want)
        throw input_error(std::string(role) + " operand " + path + " holds " +
                          format_of(m.format).name + " elements, expected " +
                          format_of(want).name);
    return m;
}

struct MmaFiles {
    std::string a, b, c, out;
};

void add_mma_flags(CLI::App* cmd, MmaFiles& files) {
    cmd->add_option("--a", files.a, "left operand tile file")->required();
    cmd->add_option("--b", files.b, "right operand tile file")->required();
    cmd->add_option("--c", files.c, "fp32 accumulator tile file")->required();
    cmd->add_option("--out", files.out, "output tile file")->required();
}

int run_simulate(const ProfileChoice& choice, const MmaFiles& files) {
    const PipelineProfile profile = choice.resolve();
    const engine::Matrix a = read_operand(files.a, profile.input_format, "A");
    const engine::Matrix b = read_operand(files.b, profile.input_format, "B");
    const engine::Matrix c = read_operand(files.c, FormatId::fp32, "C");
    for (const auto* m : {&a, &b, &c})
        if (m->rows != kTileDim || m->cols != kTileDim)
            throw input_error("simulate expects 16x16 tiles; use matmul for other shapes");
    const Tile d = tile_mma(engine::tile_from_matrix(c), engine::tile_from_matrix(a),
                            engine::tile_from_matrix(b), profile);
    engine::write_matrix(files.out, engine::matrix_from_tile(d));
    std::printf("simulate: %s 16x16 tile written to %s\n", profile.name.c_str(),
                files.out.c_str());
    return kExitSuccess;
}

int run_matmul(const ProfileChoice& choice, const MmaFiles& files, int threads) {
    const PipelineProfile profile = choice.resolve();
    const engine::Matrix a = read_operand(files.a, profile.input_format, "A");
    const engine::Matrix b = read_operand(files.b, profile.input_format, "B");
    const engine::Matrix c = read_operand(files.c, FormatId::fp32, "C");
    const engine::Matrix d = engine::matmul(a, b, c, profile, threads);
    engine::write_matrix(files.out, d);
    std::printf("matmul: %dx%dx%d (%s) written to %s\n", a.rows, b.cols, a.cols,
                profile.name.c_str(), files.out.c_str());
    return kExitSuccess;
}

int run_probe_gen(const std::string& dtype, const std::string& kind, const std::string& out_dir) {
    const probes::ProbeSuite suite = probes::make_suite(dtype_id(dtype),
                                                        probes::suite_kind_from_name(kind));
    probes::save_suite(suite, out_dir);
    std::printf("probe gen: %zu cases in %zu probes (%s, %s) written to %s\n", suite.meta.size(),
                suite.cases.size(), dtype.c_str(), kind.c_str(), out_dir.c_str());
    return kExitSuccess;
}

int run_probe_run(const ProfileChoice& choice, const std::string& suite_dir,
                  const std::string& out_path) {
    const probes::ProbeSuite suite = probes::load_suite(suite_dir);
    ProfileChoice fixed = choice;
    if (fixed.dtype.empty())
        fixed.dtype = dtype_token(suite.input_format);
    const PipelineProfile profile = fixed.resolve();
    if (profile.input_format != suite.input_format)
        throw input_error("suite " + suite_dir + " holds " +
                          format_of(suite.input_format).name + " probes, but the profile expects " +
                          format_of(profile.input_format).name);
    const probes::Responses responses = probes::run_suite(suite, probes::simulator_device(profile));
    probes::save_responses(out_path, responses);
    std::printf("probe run: %zu responses (%s) written to %s\n", responses.size(),
                profile.name.c_str(), out_path.c_str());
    return kExitSuccess;
}

int run_probe_infer(const std::string& responses_path, const std::string& dtype,
                    const std::string& out_path) {
    const probes::Responses responses = probes::load_responses(responses_path);
    const probes::InferredProfile inferred = probes::infer_profile(dtype_id(dtype), responses);

    // Serialize through the engine's profile writer so tokens match exactly,
    // then drop the floor when it was unobservable and attach the evidence.
    PipelineProfile p;
    p.name = "inferred-" + std::string(dtype_token(inferred.input_format));
    p.input_format = inferred.input_format;
    p.accumulator_format = inferred.accumulator_format;
    p.grouping = inferred.grouping;
    p.window_bits = inferred.window_bits;
    p.exponent_floor = inferred.exponent_floor.value_or(0);
    p.alignment_rounding = inferred.alignment_rounding;
    p.final_rounding = inferred.final_rounding;
    p.normalize_products = inferred.normalize_products;
    p.renormalize_subnormal_products = inferred.renormalize_subnormal_products;
    nlohmann::ordered_json j = nlohmann::ordered_json::parse(engine::profile_to_json_text(p));
    if (!inferred.exponent_floor.has_value())
        j.erase("exponent_floor");
    j["evidence"] = inferred.evidence;
    j["notes"] = inferred.notes;

    std::ofstream out(out_path, std::ios::binary);
    if (!out)
        throw input_error("cannot open " + out_path + " for writing");
    out << j.dump(2) << '\n';
    if (!out.flush())
        throw input_error("failed writing " + out_path);

    std::printf("probe infer: %s device recovered from %zu responses; profile written to %s\n",
                dtype.c_str(), responses.size(), out_path.c_str());
    for (const auto& note : inferred.notes)
        std::printf("  note: %s\n", note.c_str());
    return kExitSuccess;
}

int run_compare(const std::string& lhs_path, const std::string& rhs_path,
                const std::string& report_path) {
    const engine::Matrix lhs = engine::read_matrix(lhs_path);
    const engine::Matrix rhs = engine::read_matrix(rhs_path);
    const engine::CompareReport report = engine::compare(lhs, rhs);
    if (!report_path.empty())
        engine::write_report(report_path, report);
    std::printf("compare: %" PRIu64 " cells, %" PRIu64 " mismatches, max ulp %" PRIu64 "\n",
                report.total, report.mismatches, report.max_ulp);
    for (const auto& s : report.samples)
        std::printf("  (%d,%d) %08x != %08x\n", s.row, s.col, s.lhs_bits, s.rhs_bits);
    return report.mismatches == 0 ? kExitSuccess : kExitMismatch;
}

// --- selftest -------------------------------------------------------------

// Finite bit patterns for one element format: the full enumerable population
// for 8/16-bit inputs plus a boundary-heavy subset that exercises zeros,
// subnormal edges and the overflow threshold.
struct PatternPool {
    std::vector<uint32_t> all;
    std::vector<uint32_t> boundary;
};

PatternPool element_pool(FormatId id) {
    const FloatFormat& fmt = format_of(id);
    PatternPool pool;
    const uint32_t count = 1u << fmt.total_bits;
    for (uint32_t bits = 0; bits < count; ++bits)
        if (decode(bits, fmt).is_finite())
            pool.all.push_back(bits);
    const uint32_t mant = fmt.mantissa_mask();
    const uint32_t min_normal = 1u << fmt.mantissa_bits;
    uint32_t max_finite = 0;
    for (uint32_t bits : pool.all)
        if ((bits & ~fmt.sign_bit()) > max_finite)
            max_finite = bits & ~fmt.sign_bit();
    for (uint32_t mag : {0u, 1u, mant, min_normal, min_normal | 1u, max_finite,
                         max_finite ^ 1u}) {
        // The flipped-LSB neighbour of the largest finite value is the NaN
        // code point in e4m3; only finite patterns may reach the device.
        for (uint32_t bits : {mag, mag | fmt.sign_bit()})
            if (decode(bits, fmt).is_finite())
                pool.boundary.push_back(bits);
    }
    return pool;
}

std::vector<uint32_t> fp32_boundary_pool() {
    std::vector<uint32_t> pool;
    for (uint32_t mag : {0x00000000u, 0x00000001u, 0x007fffffu, 0x00800000u, 0x3f800000u,
                         0x7f7fffffu, 0x0b800000u, 0x4b000000u}) {
        pool.push_back(mag);
        pool.push_back(mag | 0x80000000u);
    }
    return pool;
}

uint32_t random_fp32_finite(std::mt19937_64& rng) {
    for (;;) {
        const uint32_t bits = uint32_t(rng());
        if (((bits >> 23) & 0xffu) != 0xffu)
            return bits;
    }
}

// One random operand triple. Every fourth trial draws only boundary
// patterns; the rest mix the full population with the boundary set.
void random_tiles(std::mt19937_64& rng, const PatternPool& pool,
                  const std::vector<uint32_t>& c_boundary, uint64_t trial, FormatId input,
                  Tile& a, Tile& b, Tile& c) {
    const bool boundary_only = (trial % 4) == 3;
    a.format = input;
    b.format = input;
    c.format = FormatId::fp32;
    auto element = [&]() -> uint32_t {
        if (boundary_only || rng() % 4 == 0)
            return pool.boundary[rng() % pool.boundary.size()];
        return pool.all[rng() % pool.all.size()];
    };
    for (int i = 0; i < kTileDim * kTileDim; ++i) {
        a.bits[size_t(i)] = element();
        b.bits[size_t(i)] = element();
        c.bits[size_t(i)] = (boundary_only || rng() % 4 == 0)
                                ? c_boundary[rng() % c_boundary.size()]
                                : random_fp32_finite(rng);
    }
}

int run_selftest(uint64_t trials, uint64_t seed) {
    bool ok = true;

    // Probe inference round-trip against every shipped device profile.
    for (FormatId input : {FormatId::fp16, FormatId::bf16, FormatId::fp8_e4m3}) {
        const probes::ProbeSuite suite = probes::make_suite(input, probes::SuiteKind::all);
        for (Arch arch : {Arch::ampere, Arch::lovelace, Arch::hopper}) {
            const PipelineProfile profile = make_profile(arch, input);
            const probes::Responses responses =
                probes::run_suite(suite, probes::simulator_device(profile));
            std::string fail;
            try {
                const probes::InferredProfile inf = probes::infer_profile(suite, responses);
                if (inf.grouping != profile.grouping)
                    fail = "grouping deviates";
                else if (inf.window_bits != profile.window_bits)
                    fail = "window width deviates";
                else if (inf.alignment_rounding != profile.alignment_rounding ||
                         inf.final_rounding != profile.final_rounding)
                    fail = "rounding deviates";
                else if (inf.normalize_products != profile.normalize_products ||
                         inf.renormalize_subnormal_products !=
                             profile.renormalize_subnormal_products)
                    fail = "normalization deviates";
                else if (input == FormatId::bf16 &&
                         (!inf.exponent_floor || *inf.exponent_floor != profile.exponent_floor))
                    fail = "exponent floor deviates";
            } catch (const std::exception& e) {
                fail = e.what();
            }
            if (fail.empty()) {
                std::printf("PASS probe-roundtrip %s\n", profile.name.c_str());
            } else {
                std::printf("FAIL probe-roundtrip %s: %s\n", profile.name.c_str(), fail.c_str());
                ok = false;
            }
        }
    }

    // Simulator vs exact oracle on random boundary-stratified tiles.
    const struct {
        Arch arch;
        FormatId input;
    } pairs[] = {
        {Arch::ampere, FormatId::fp16}, {Arch::ampere, FormatId::bf16},
        {Arch::hopper, FormatId::fp16}, {Arch::hopper, FormatId::bf16},
        {Arch::hopper, FormatId::fp8_e4m3},
    };
    const std::vector<uint32_t> c_boundary = fp32_boundary_pool();
    for (const auto& pair : pairs) {
        const PipelineProfile profile = make_profile(pair.arch, pair.input);
        const PatternPool pool = element_pool(pair.input);
        std::mt19937_64 rng(seed ^ (uint64_t(pair.arch) << 8) ^ uint64_t(pair.input));
        uint64_t mismatches = 0;
        Tile a, b, c;
        for (uint64_t trial = 0; trial < trials && mismatches == 0; ++trial) {
            random_tiles(rng, pool, c_boundary, trial, pair.input, a, b, c);
            const Tile sim = tile_mma(c, a, b, profile);
            const Tile exact = exact_tile_mma(c, a, b, profile);
            if (!(sim == exact)) {
                ++mismatches;
                for (int r = 0; r < kTileDim && mismatches; ++r)
                    for (int col = 0; col < kTileDim; ++col)
                        if (sim.at(r, col) != exact.at(r, col)) {
                            std::printf("FAIL oracle-equivalence %s: trial %" PRIu64
                                        " cell (%d,%d) simulator %08x oracle %08x\n",
                                        profile.name.c_str(), trial, r, col, sim.at(r, col),
                                        exact.at(r, col));
                            r = kTileDim;
                            break;
                        }
            }
        }
        if (mismatches == 0) {
            std::printf("PASS oracle-equivalence %s (%" PRIu64 " trials)\n", profile.name.c_str(),
                        trials);
        } else {
            ok = false;
        }
    }

    std::printf("selftest: %s\n", ok ? "all checks passed" : "FAILED");
    return ok ? kExitSuccess : kExitMismatch;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"tcemu: bit-exact tensor-core MMA emulator and device characterization probes"};
    app.require_subcommand(1);

    ProfileChoice sim_choice;
    MmaFiles sim_files;
    CLI::App* simulate = app.add_subcommand("simulate", "run one 16x16 tile MMA");
    add_profile_flags(simulate, sim_choice);
    add_mma_flags(simulate, sim_files);

    ProfileChoice mm_choice;
    MmaFiles mm_files;
    int mm_threads = 0;
    CLI::App* matmul = app.add_subcommand("matmul", "multiply arbitrary-shape matrices");
    add_profile_flags(matmul, mm_choice);
    add_mma_flags(matmul, mm_files);
    matmul->add_option("--threads", mm_threads, "worker threads (0 = runtime default)")
        ->check(CLI::NonNegativeNumber);

    CLI::App* probe = app.add_subcommand("probe", "device characterization probes");
    probe->require_subcommand(1);

    std::string gen_dtype, gen_kind = "all", gen_out;
    CLI::App* gen = probe->add_subcommand("gen", "generate a probe suite directory");
    gen->add_option("--dtype", gen_dtype, "input element type")
        ->check(CLI::IsMember({"fp16", "bf16", "fp8"}))
        ->required();
    gen->add_option("--suite", gen_kind, "case family")
        ->check(CLI::IsMember({"all", "neutrality", "width", "rounding", "normalization",
                               "range"}));
    gen->add_option("--out", gen_out, "output directory")->required();

    ProfileChoice run_choice;
    std::string run_suite_dir, run_out;
    CLI::App* run = probe->add_subcommand("run", "run a suite against a simulated device");
    add_profile_flags(run, run_choice);
    run->add_option("--suite", run_suite_dir, "probe suite directory")->required();
    run->add_option("--out", run_out, "response JSONL output path")->required();

    std::string infer_responses, infer_dtype, infer_out;
    CLI::App* infer = probe->add_subcommand("infer", "recover a profile from responses");
    infer->add_option("--responses", infer_responses, "response JSONL path")->required();
    infer->add_option("--dtype", infer_dtype, "input element type of the suite")
        ->check(CLI::IsMember({"fp16", "bf16", "fp8"}))
        ->required();
    infer->add_option("--out", infer_out, "inferred profile JSON output path")->required();

    std::string cmp_lhs, cmp_rhs, cmp_report;
    CLI::App* cmp = app.add_subcommand("compare", "compare two tile files bit by bit");
    cmp->add_option("--lhs", cmp_lhs, "left tile file")->required();
    cmp->add_option("--rhs", cmp_rhs, "right tile file")->required();
    cmp->add_option("--report", cmp_report, "comparison report JSON path");

    uint64_t st_trials = 1000;
    uint64_t st_seed = 7;
    CLI::App* selftest = app.add_subcommand("selftest",
                                            "probe round-trips and oracle equivalence");
    selftest->add_option("--trials", st_trials, "random tiles per device/dtype pair")
        ->check(CLI::PositiveNumber);
    selftest->add_option("--seed", st_seed, "random number generator seed");

    std::vector<std::string> args;
    for (int i = argc - 1; i >= 1; --i)
        args.emplace_back(argv[i]);
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitSuccess : kExitUsage;
    }

    try {
        if (simulate->parsed())
            return run_simulate(sim_choice, sim_files);
        if (matmul->parsed())
            return run_matmul(mm_choice, mm_files, mm_threads);
        if (gen->parsed())
            return run_probe_gen(gen_dtype, gen_kind, gen_out);
        if (run->parsed())
            return run_probe_run(run_choice, run_suite_dir, run_out);
        if (infer->parsed())
            return run_probe_infer(infer_responses, infer_dtype, infer_out);
        if (cmp->parsed())
            return run_compare(cmp_lhs, cmp_rhs, cmp_report);
        if (selftest->parsed())
            return run_selftest(st_trials, st_seed);
    } catch (const probes::inference_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitMismatch;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    std::fprintf(stderr, "error: no subcommand selected\n");
    return kExitUsage;
}

} // namespace tcemu::cli
