#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tiedlab {

struct BenchOptions {
    std::string op = "tbc";
    std::vector<std::string> paths{"direct", "fast"};  // also: "conv" (untied block-diagonal expansion)
    std::size_t c = 256;
    std::vector<std::size_t> b_list{2, 4, 8};
    std::size_t hw = 32;
    std::size_t reps = 5;
    std::size_t k = 3;
    std::uint64_t seed = 0;
};

struct BenchRow {
    std::string op;
    std::string path;
    std::size_t blocks = 1;
    std::size_t c = 0;
    std::size_t hw = 0;
    std::size_t reps = 0;
    double median_ms = 0.0;
};

/// Throws ShapeError / InputError for illegal shapes or unknown paths before timing anything.
void validate(const BenchOptions& opts);

/// Single-threaded median-of-reps wall time, one row per (B, path).
std::vector<BenchRow> run_bench(const BenchOptions& opts);

/// Columns: op,path,B,c,hw,reps,median_ms.
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace tiedlab
