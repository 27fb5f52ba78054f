// Benchmark: OpenMP matmul against the single-threaded reference on square
// shapes, verifying bitwise equality of every run while timing it.

#include "tcemu/engine.hpp"
#include "tcemu/formats.hpp"
#include "tcemu/pipeline.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

using namespace tcemu;

namespace {

engine::Matrix random_matrix(int rows, int cols, FormatId format, std::mt19937_64& rng) {
    const FloatFormat& fmt = format_of(format);
    std::vector<uint32_t> finite;
    if (fmt.total_bits <= 16) {
        for (uint32_t bits = 0; bits < (1u << fmt.total_bits); ++bits)
            if (decode(bits, fmt).is_finite())
                finite.push_back(bits);
    }
    engine::Matrix m = engine::Matrix::zeros(rows, cols, format);
    for (auto& bits : m.data) {
        if (!finite.empty()) {
            bits = finite[rng() % finite.size()];
        } else {
            do
                bits = uint32_t(rng());
            while (((bits >> 23) & 0xffu) == 0xffu);
        }
    }
    return m;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

int main(int argc, char** argv) {
    int size = 512;
    int repeats = 3;
    std::string arch = "ampere";
    std::string dtype = "fp16";
    uint64_t seed = 42;

    CLI::App app{"tcemu benchmark: parallel kernel vs serial reference"};
    app.add_option("--size", size, "square matrix dimension")->check(CLI::PositiveNumber);
    app.add_option("--repeats", repeats, "timed runs per configuration")
        ->check(CLI::PositiveNumber);
    app.add_option("--arch", arch, "device generation")
        ->check(CLI::IsMember({"ampere", "lovelace", "hopper"}));
    app.add_option("--dtype", dtype, "input element type")
        ->check(CLI::IsMember({"fp16", "bf16", "fp8"}));
    app.add_option("--seed", seed, "random number generator seed");
    CLI11_PARSE(app, argc, argv);

    const FormatId input = dtype == "fp8" ? FormatId::fp8_e4m3 : format_id(dtype);
    const PipelineProfile profile = make_profile(arch_from_name(arch), input);

    std::mt19937_64 rng(seed);
    const engine::Matrix a = random_matrix(size, size, input, rng);
    const engine::Matrix b = random_matrix(size, size, input, rng);
    const engine::Matrix c = random_matrix(size, size, FormatId::fp32, rng);

    std::printf("benchmark: %dx%dx%d %s, %d repeats\n", size, size, size, profile.name.c_str(),
                repeats);

    double serial_best = 0.0;
    engine::Matrix reference;
    for (int run = 0; run < repeats; ++run) {
        const auto start = std::chrono::steady_clock::now();
        engine::Matrix d = engine::matmul_serial(a, b, c, profile);
        const double elapsed = seconds_since(start);
        if (run == 0)
            reference = std::move(d);
        else if (!(d == reference)) {
            std::printf("FAIL serial run %d deviates from itself\n", run);
            return 1;
        }
        if (run == 0 || elapsed < serial_best)
            serial_best = elapsed;
    }
    std::printf("  serial reference: best %.3f s\n", serial_best);

    for (int threads : {1, 0}) {
        double best = 0.0;
        for (int run = 0; run < repeats; ++run) {
            const auto start = std::chrono::steady_clock::now();
            const engine::Matrix d = engine::matmul(a, b, c, profile, threads);
            const double elapsed = seconds_since(start);
            if (!(d == reference)) {
                std::printf("FAIL parallel(threads=%d) output deviates from the reference\n",
                            threads);
                return 1;
            }
            if (run == 0 || elapsed < best)
                best = elapsed;
        }
        std::printf("  parallel threads=%s: best %.3f s (speedup %.2fx), bitwise equal\n",
                    threads == 0 ? "auto" : "1", best, serial_best / best);
    }
    return 0;
}
