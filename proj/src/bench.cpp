#include "tiedlab/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

#include "tiedlab/nn.hpp"
#include "tiedlab/tied.hpp"

namespace tiedlab {

namespace {

ConvSpec bench_spec(const BenchOptions& opts, std::size_t blocks) {
    ConvSpec spec{opts.c, opts.c, opts.k, 1, opts.k / 2, 1, blocks, false};
    spec.validate();
    return spec;
}

}  // namespace

void validate(const BenchOptions& opts) {
    if (opts.op != "tbc") throw InputError("bench: unsupported op \"" + opts.op + "\" (only tbc)");
    if (opts.paths.empty() || opts.b_list.empty()) throw InputError("bench: empty path or B list");
    for (const std::string& p : opts.paths) {
        if (p != "direct" && p != "fast" && p != "conv") throw InputError("bench: unknown path \"" + p + "\"");
    }
    if (opts.reps == 0) throw InputError("bench: reps must be >= 1");
    if (opts.k % 2 == 0) throw ShapeError("bench: kernel size must be odd for same padding");
    for (std::size_t b : opts.b_list) {
        const ConvSpec spec = bench_spec(opts, b);
        spec.out_shape({1, opts.c, opts.hw, opts.hw});
    }
}

std::vector<BenchRow> run_bench(const BenchOptions& opts) {
    validate(opts);
    Rng rng(opts.seed);
    const Tensor4 x = random_tensor4({1, opts.c, opts.hw, opts.hw}, rng);
    std::vector<BenchRow> rows;
    for (std::size_t b : opts.b_list) {
        const ConvSpec spec = bench_spec(opts, b);
        const ConvWeights w = init_conv_weights(spec, rng);
        const ExpandedConv ex = expand_tied_to_untied(spec, w);
        for (const std::string& path : opts.paths) {
            std::vector<double> times;
            for (std::size_t r = 0; r < opts.reps; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                Tensor4 y = path == "direct" ? tbc_forward_direct(x, spec, w)
                            : path == "fast" ? tbc_forward_fast(x, spec, w)
                                             : conv2d(x, ex.spec, ex.weights);
                const auto t1 = std::chrono::steady_clock::now();
                if (y.size() == 0) throw ShapeError("bench: empty output");
                times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            }
            std::sort(times.begin(), times.end());
            const std::size_t m = times.size();
            const double median = m % 2 ? times[m / 2] : 0.5 * (times[m / 2 - 1] + times[m / 2]);
            rows.push_back({opts.op, path, b, opts.c, opts.hw, opts.reps, median});
        }
    }
    return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << "op,path,B,c,hw,reps,median_ms\n";
    char buf[32];
    for (const BenchRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%.4f", r.median_ms);
        os << r.op << ',' << r.path << ',' << r.blocks << ',' << r.c << ',' << r.hw << ',' << r.reps << ',' << buf << '\n';
    }
    return os.str();
}

}  // namespace tiedlab
