#include "doctest.h"

#include "tcemu/cli.hpp"
#include "tcemu/engine.hpp"
#include "tcemu/formats.hpp"
#include "tcemu/pipeline.hpp"
#include "tcemu/probes.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

using namespace tcemu;
using engine::Matrix;

namespace {

namespace fs = std::filesystem;

int run_args(std::initializer_list<const char*> args) {
    std::vector<const char*> argv = {"tcemu"};
    argv.insert(argv.end(), args.begin(), args.end());
    return cli::run_cli(int(argv.size()), argv.data());
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / "tcemu-cli-test";
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const char* name) const { return (path / name).string(); }
};

Matrix random_matrix(int rows, int cols, FormatId format, std::mt19937_64& rng) {
    const FloatFormat& fmt = format_of(format);
    Matrix m = Matrix::zeros(rows, cols, format);
    for (auto& bits : m.data) {
        if (fmt.total_bits <= 16) {
            do
                bits = uint32_t(rng()) & ((1u << fmt.total_bits) - 1u);
            while (!decode(bits, fmt).is_finite());
        } else {
            do
                bits = uint32_t(rng());
            while (((bits >> 23) & 0xffu) == 0xffu);
        }
    }
    return m;
}

} // namespace

TEST_CASE("usage errors exit with status 2 and help with 0") {
    CHECK(run_args({}) == 2);
    CHECK(run_args({"launder"}) == 2);
    CHECK(run_args({"--help"}) == 0);
    CHECK(run_args({"simulate", "--help"}) == 0);
    CHECK(run_args({"probe"}) == 2);
    CHECK(run_args({"probe", "gen", "--dtype", "fp16"}) == 2);       // missing --out
    CHECK(run_args({"probe", "gen", "--dtype", "int8", "--out", "x"}) == 2);
    CHECK(run_args({"simulate", "--arch", "turing", "--dtype", "fp16", "--a", "a", "--b", "b",
               "--c", "c", "--out", "d"}) == 2);
    CHECK(run_args({"selftest", "--trials", "0"}) == 2);
}

TEST_CASE("simulate runs one tile and enforces operand formats") {
    TempDir dir;
    std::mt19937_64 rng(3);
    const Matrix a = random_matrix(16, 16, FormatId::fp16, rng);
    const Matrix b = random_matrix(16, 16, FormatId::fp16, rng);
    const Matrix c = random_matrix(16, 16, FormatId::fp32, rng);
    engine::write_matrix(dir.file("a.hwkt"), a);
    engine::write_matrix(dir.file("b.hwkt"), b);
    engine::write_matrix(dir.file("c.hwkt"), c);

    const std::string out = dir.file("d.hwkt");
    CHECK(run_args({"simulate", "--arch", "hopper", "--dtype", "fp16", "--a",
               dir.file("a.hwkt").c_str(), "--b", dir.file("b.hwkt").c_str(), "--c",
               dir.file("c.hwkt").c_str(), "--out", out.c_str()}) == 0);

    const PipelineProfile profile = make_profile(Arch::hopper, FormatId::fp16);
    const Tile expect = tile_mma(engine::tile_from_matrix(c), engine::tile_from_matrix(a),
                                 engine::tile_from_matrix(b), profile);
    CHECK(engine::read_matrix(out) == engine::matrix_from_tile(expect));

    // --arch and --profile are mutually exclusive.
    CHECK(run_args({"simulate", "--arch", "hopper", "--profile", "p.json", "--dtype", "fp16",
               "--a", dir.file("a.hwkt").c_str(), "--b", dir.file("b.hwkt").c_str(), "--c",
               dir.file("c.hwkt").c_str(), "--out", out.c_str()}) == 2);

    // The dtype must match the operand file headers.
    CHECK(run_args({"simulate", "--arch", "hopper", "--dtype", "bf16", "--a",
               dir.file("a.hwkt").c_str(), "--b", dir.file("b.hwkt").c_str(), "--c",
               dir.file("c.hwkt").c_str(), "--out", out.c_str()}) == 2);

    // simulate insists on single tiles.
    engine::write_matrix(dir.file("wide.hwkt"), random_matrix(16, 32, FormatId::fp16, rng));
    CHECK(run_args({"simulate", "--arch", "hopper", "--dtype", "fp16", "--a",
               dir.file("wide.hwkt").c_str(), "--b", dir.file("b.hwkt").c_str(), "--c",
               dir.file("c.hwkt").c_str(), "--out", out.c_str()}) == 2);
}

TEST_CASE("matmul subcommand handles arbitrary shapes and thread counts") {
    TempDir dir;
    std::mt19937_64 rng(5);
    const Matrix a = random_matrix(24, 40, FormatId::bf16, rng);
    const Matrix b = random_matrix(40, 18, FormatId::bf16, rng);
    const Matrix c = random_matrix(24, 18, FormatId::fp32, rng);
    engine::write_matrix(dir.file("a.hwkt"), a);
    engine::write_matrix(dir.file("b.hwkt"), b);
    engine::write_matrix(dir.file("c.hwkt"), c);

    const std::string out1 = dir.file("d1.hwkt");
    const std::string out4 = dir.file("d4.hwkt");
    CHECK(run_args({"matmul", "--arch", "ampere", "--dtype", "bf16", "--a",
               dir.file("a.hwkt").c_str(), "--b", dir.file("b.hwkt").c_str(), "--c",
               dir.file("c.hwkt").c_str(), "--out", out1.c_str(), "--threads", "1"}) == 0);
    CHECK(run_args({"matmul", "--arch", "ampere", "--dtype", "bf16", "--a",
               dir.file("a.hwkt").c_str(), "--b", dir.file("b.hwkt").c_str(), "--c",
               dir.file("c.hwkt").c_str(), "--out", out4.c_str(), "--threads", "4"}) == 0);

    const Matrix expect =
        engine::matmul_serial(a, b, c, make_profile(Arch::ampere, FormatId::bf16));
    CHECK(engine::read_matrix(out1) == expect);
    CHECK(engine::read_matrix(out4) == expect);
}

TEST_CASE("compare subcommand distinguishes match from mismatch") {
    TempDir dir;
    std::mt19937_64 rng(7);
    const Matrix lhs = random_matrix(8, 8, FormatId::fp32, rng);
    Matrix rhs = lhs;
    rhs.at(4, 4) ^= 2u;
    engine::write_matrix(dir.file("lhs.hwkt"), lhs);
    engine::write_matrix(dir.file("rhs.hwkt"), rhs);

    CHECK(run_args({"compare", "--lhs", dir.file("lhs.hwkt").c_str(), "--rhs",
               dir.file("lhs.hwkt").c_str()}) == 0);

    const std::string report = dir.file("report.json");
    CHECK(run_args({"compare", "--lhs", dir.file("lhs.hwkt").c_str(), "--rhs",
               dir.file("rhs.hwkt").c_str(), "--report", report.c_str()}) == 1);
    CHECK(fs::exists(report));

    CHECK(run_args({"compare", "--lhs", dir.file("lhs.hwkt").c_str(), "--rhs",
               dir.file("missing.hwkt").c_str()}) == 2);
}

TEST_CASE("probe workflow round-trips a device through files") {
    TempDir dir;
    const std::string suite_dir = dir.file("suite");
    const std::string responses = dir.file("responses.jsonl");
    const std::string profile_json = dir.file("profile.json");

    CHECK(run_args({"probe", "gen", "--dtype", "bf16", "--suite", "all", "--out",
               suite_dir.c_str()}) == 0);
    CHECK(run_args({"probe", "run", "--suite", suite_dir.c_str(), "--arch", "ampere", "--out",
               responses.c_str()}) == 0);
    CHECK(run_args({"probe", "infer", "--responses", responses.c_str(), "--dtype", "bf16", "--out",
               profile_json.c_str()}) == 0);

    // The inferred JSON is a loadable profile equal to the shipped device.
    PipelineProfile inferred = engine::load_profile(profile_json);
    PipelineProfile expect = make_profile(Arch::ampere, FormatId::bf16);
    inferred.name = expect.name;
    CHECK(inferred == expect);

    // A probe suite in a different element type refuses these responses.
    CHECK(run_args({"probe", "infer", "--responses", responses.c_str(), "--dtype", "fp16", "--out",
               profile_json.c_str()}) == 1);

    // Tampering with a response cell that inference depends on turns the
    // infer subcommand into exit 1.
    {
        probes::Responses r = probes::load_responses(responses);
        const probes::ProbeSuite suite = probes::make_suite(FormatId::bf16,
                                                            probes::SuiteKind::all);
        for (const auto& pc : suite.cases)
            for (const auto& t : pc.targets)
                if (t.case_id == "neu-bf16-1ffffz")
                    r.at(pc.probe_id)[size_t(t.row) * kTileDim + size_t(t.col)] = 0x77777777u;
        probes::save_responses(responses, r);
    }
    CHECK(run_args({"probe", "infer", "--responses", responses.c_str(), "--dtype", "bf16", "--out",
               profile_json.c_str()}) == 1);

    // Missing files and directories are usage errors.
    CHECK(run_args({"probe", "run", "--suite", dir.file("nowhere").c_str(), "--arch", "ampere",
               "--out", responses.c_str()}) == 2);
    CHECK(run_args({"probe", "infer", "--responses", dir.file("nothing.jsonl").c_str(), "--dtype",
               "bf16", "--out", profile_json.c_str()}) == 2);
}

TEST_CASE("probe run rejects a profile whose dtype disagrees with the suite") {
    TempDir dir;
    const std::string suite_dir = dir.file("suite");
    CHECK(run_args({"probe", "gen", "--dtype", "fp8", "--suite", "width", "--out",
               suite_dir.c_str()}) == 0);
    CHECK(run_args({"probe", "run", "--suite", suite_dir.c_str(), "--arch", "ampere", "--dtype",
               "fp16", "--out", dir.file("r.jsonl").c_str()}) == 2);
    CHECK(run_args({"probe", "run", "--suite", suite_dir.c_str(), "--arch", "ampere", "--out",
               dir.file("r.jsonl").c_str()}) == 0);
}

TEST_CASE("selftest passes on the shipped devices") {
    CHECK(run_args({"selftest", "--trials", "25", "--seed", "7"}) == 0);
}
