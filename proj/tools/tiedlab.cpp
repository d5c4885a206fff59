// tiedlab: summaries, verification suites, benchmarks and toy training for tied
// block convolution layers.
//
// Exit codes: 0 success, 1 verification failure, 2 usage / parse / validation error.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tiedlab/accounting.hpp"
#include "tiedlab/bench.hpp"
#include "tiedlab/config.hpp"
#include "tiedlab/model.hpp"
#include "tiedlab/trainer.hpp"
#include "tiedlab/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;

std::uint64_t default_seed() {
    if (const char* env = std::getenv("TIEDLAB_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            std::cerr << "warning: ignoring non-numeric TIEDLAB_SEED=" << env << '\n';
        }
    }
    return 0;
}

void write_output(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

tiedlab::Shape4 parse_input_shape(const std::string& text) {
    std::vector<std::size_t> dims;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(part, &used);
        if (used != part.size() || v == 0) throw CLI::ValidationError("--input-shape", "expected positive integers");
        dims.push_back(static_cast<std::size_t>(v));
    }
    if (dims.size() == 3) return {1, dims[0], dims[1], dims[2]};
    if (dims.size() == 4) return {dims[0], dims[1], dims[2], dims[3]};
    throw CLI::ValidationError("--input-shape", "expected c,h,w or n,c,h,w");
}

struct SummaryArgs {
    std::string config;
    std::string input_shape;
    std::string baseline;
    std::string csv;
    bool flops = false;
};

int cmd_summary(const SummaryArgs& a) {
    using namespace tiedlab;
    const ModelConfig cfg = load_config(a.config);
    const Shape4 in = a.input_shape.empty() ? cfg.input_shape() : parse_input_shape(a.input_shape);
    std::optional<ModelConfig> base;
    if (!a.baseline.empty()) base = load_config(a.baseline);
    validate_config(cfg);
    if (base) validate_config(*base);
    const CountReport rep = model_report(cfg, in, base ? &*base : nullptr);

    std::cout << "# model=" << (cfg.name.empty() ? a.config : cfg.name) << " input=" << in.str()
              << " seed=" << cfg.seed;
    if (base) std::cout << " baseline=" << (base->name.empty() ? a.baseline : base->name);
    std::cout << '\n' << rep.to_text(a.flops);
    if (!a.csv.empty()) write_output(a.csv, rep.to_csv(a.flops));
    return kExitOk;
}

int cmd_verify(const std::string& suite, std::size_t seeds, std::uint64_t seed) {
    using namespace tiedlab;
    std::cout << "# tiedlab verify suite=" << suite << " seeds=" << seeds << " seed=" << seed << '\n';
    std::vector<SuiteResult> results;
    if (suite == "equiv" || suite == "all") results.push_back(run_equiv_suite(seeds, seed));
    if (suite == "gradcheck" || suite == "all") results.push_back(run_gradcheck_suite(seeds, seed));
    if (suite == "counts" || suite == "all") results.push_back(run_counts_suite(seeds, seed));
    bool ok = true;
    for (const SuiteResult& r : results) {
        std::cout << r.report();
        ok = ok && r.pass();
    }
    std::cout << (ok ? "RESULT PASS" : "RESULT FAIL") << '\n';
    return ok ? kExitOk : kExitVerifyFailed;
}

int cmd_bench(const tiedlab::BenchOptions& opts, const std::string& csv) {
    using namespace tiedlab;
    validate(opts);
    const std::vector<BenchRow> rows = run_bench(opts);
    const std::string text = bench_csv(rows);
    if (!csv.empty()) write_output(csv, text);
    std::cout << "# tiedlab bench op=" << opts.op << " c=" << opts.c << " hw=" << opts.hw << " reps=" << opts.reps
              << " seed=" << opts.seed << '\n';
    if (csv != "-") std::cout << text;
    // fast/direct ratio per B, when both paths ran
    for (std::size_t b : opts.b_list) {
        double direct = -1, fast = -1;
        for (const BenchRow& r : rows) {
            if (r.blocks != b) continue;
            if (r.path == "direct") direct = r.median_ms;
            if (r.path == "fast") fast = r.median_ms;
        }
        if (direct > 0 && fast > 0) std::printf("# B=%zu fast/direct=%.3f\n", b, fast / direct);
    }
    return kExitOk;
}

struct TrainArgs {
    std::string config;
    std::size_t epochs = 10;
    double lr = 0.05;
    double momentum = 0.9;
    std::size_t batch = 32;
    std::size_t samples = 1000;
    std::string csv;
};

int cmd_train(const TrainArgs& a, std::uint64_t seed) {
    using namespace tiedlab;
    const ModelConfig cfg = load_config(a.config);
    Model model = Model::build(cfg);
    const SyntheticDataset data = generate_dataset(seed, a.samples);
    TrainOptions opts;
    opts.epochs = a.epochs;
    opts.lr = a.lr;
    opts.momentum = a.momentum;
    opts.batch = a.batch;
    opts.seed = seed;

    std::cout << "# tiedlab train model=" << cfg.name << " params=" << model.param_count() << " samples=" << a.samples
              << " epochs=" << a.epochs << " lr=" << a.lr << " momentum=" << a.momentum << " batch=" << a.batch
              << " seed=" << seed << '\n';
    const TrainResult res = train(model, data, opts);
    std::cout << res.to_csv() << res.summary_line() << '\n';
    std::fprintf(stderr, "wall_time=%.3fs\n", res.wall_seconds);
    if (!a.csv.empty()) write_output(a.csv, res.to_csv());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tiedlab: tied block convolution toolkit"};
    app.require_subcommand(1);
    std::uint64_t seed = default_seed();

    SummaryArgs summary;
    auto* sum = app.add_subcommand("summary", "Per-layer parameter / MAC report for a model config");
    sum->add_option("config", summary.config, "Model config JSON")->required();
    sum->add_option("--input-shape", summary.input_shape, "c,h,w or n,c,h,w (default: config input, batch 1)");
    sum->add_option("--baseline", summary.baseline, "Untied config to compute ratios against");
    sum->add_option("--csv", summary.csv, "Write CSV report to this path ('-' for stdout)");
    sum->add_flag("--flops", summary.flops, "Report FLOPs (2 x MACs) instead of MACs");

    std::string suite = "all";
    std::size_t seeds = 20;
    auto* ver = app.add_subcommand("verify", "Run property suites over seeded random instances");
    ver->add_option("--suite", suite, "equiv | gradcheck | counts | all")
        ->check(CLI::IsMember({"equiv", "gradcheck", "counts", "all"}));
    ver->add_option("--seeds", seeds, "Number of seeded instances per check")->check(CLI::PositiveNumber);
    ver->add_option("--seed", seed, "Base seed (default: $TIEDLAB_SEED or 0)");

    tiedlab::BenchOptions bench;
    std::string bench_csv_path;
    auto* ben = app.add_subcommand("bench", "Time TBC direct vs batch-fold paths");
    ben->add_option("--op", bench.op, "Operator (tbc)");
    ben->add_option("--paths", bench.paths, "Comma-separated: direct,fast,conv")->delimiter(',');
    ben->add_option("--c", bench.c, "Channels (c_i = c_o)");
    ben->add_option("--b-list", bench.b_list, "Comma-separated block numbers")->delimiter(',');
    ben->add_option("--hw", bench.hw, "Spatial size");
    ben->add_option("--reps", bench.reps, "Repetitions (median reported)");
    ben->add_option("--csv", bench_csv_path, "Write timing CSV here ('-' for stdout)");
    ben->add_option("--seed", seed, "Input seed (default: $TIEDLAB_SEED or 0)");

    TrainArgs targs;
    auto* tr = app.add_subcommand("train", "Train a model config on the synthetic two-blob task");
    tr->add_option("config", targs.config, "Model config JSON")->required();
    tr->add_option("--epochs", targs.epochs, "Epochs");
    tr->add_option("--lr", targs.lr, "Learning rate");
    tr->add_option("--momentum", targs.momentum, "Momentum");
    tr->add_option("--batch", targs.batch, "Batch size")->check(CLI::PositiveNumber);
    tr->add_option("--samples", targs.samples, "Dataset size (80/20 train/holdout)");
    tr->add_option("--seed", seed, "Dataset and batch-order seed (default: $TIEDLAB_SEED or 0)");
    tr->add_option("--csv", targs.csv, "Write epoch,loss,train_acc CSV here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (sum->parsed()) return cmd_summary(summary);
        if (ver->parsed()) return cmd_verify(suite, seeds, seed);
        if (ben->parsed()) {
            bench.seed = seed;
            return cmd_bench(bench, bench_csv_path);
        }
        if (tr->parsed()) return cmd_train(targs, seed);
    } catch (const tiedlab::ValidationError& e) {
        std::cerr << "validation error";
        if (e.layer()) std::cerr << " at layer " << *e.layer();
        std::cerr << ": " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
