#include "tiedlab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "tiedlab/nn.hpp"

namespace tiedlab {

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::string fnv1a_hex(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

SyntheticDataset generate_dataset(std::uint64_t seed, std::size_t n, double noise) {
    if (n < 2) throw InputError("generate_dataset: need at least 2 samples, got " + std::to_string(n));
    constexpr std::size_t side = kToyImageSize, blob = kToyBlobSize, half = side / 2;

    SyntheticDataset d;
    d.seed = seed;
    d.noise = noise;
    d.samples = Tensor4(n, 1, side, side);
    d.labels.resize(n);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % 2;
        d.labels[i] = label;
        const std::size_t top = rng.range(0, side - blob);
        const std::size_t left = rng.range(0, half - blob) + label * half;
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x) d.samples.at(i, 0, y, x) = noise * rng.uniform();
        for (std::size_t y = top; y < top + blob; ++y)
            for (std::size_t x = left; x < left + blob; ++x) d.samples.at(i, 0, y, x) += 1.0;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);
    for (std::size_t p = 0; p < n; ++p) (p % 5 == 4 ? d.holdout_idx : d.train_idx).push_back(order[p]);
    return d;
}

Tensor4 gather(const Tensor4& samples, std::span<const std::size_t> idx) {
    if (idx.empty()) throw InputError("gather: empty index list");
    const std::size_t per = samples.c() * samples.h() * samples.w();
    Tensor4 out(idx.size(), samples.c(), samples.h(), samples.w());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= samples.n()) throw InputError("gather: index out of range");
        const auto src = samples.data().subspan(idx[i] * per, per);
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return out;
}

void SgdMomentum::step(std::span<double> w, std::span<const double> g, std::span<double> v, double lr,
                       double momentum) {
    if (w.size() != g.size() || w.size() != v.size()) throw ShapeError("sgd: buffer length mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = momentum * v[i] + g[i];
        w[i] -= lr * v[i];
    }
}

void SgdMomentum::apply(Model& model, const Gradients& grads) {
    std::vector<ParamRef> params = model.parameters();
    if (grads.size() != params.size()) {
        throw ShapeError("sgd: " + std::to_string(grads.size()) + " gradients for " + std::to_string(params.size()) +
                         " parameters");
    }
    if (velocity_.empty()) {
        for (const ParamRef& p : params) velocity_.emplace_back(p.values.size(), 0.0);
    }
    for (std::size_t i = 0; i < params.size(); ++i) step(params[i].values, grads[i], velocity_[i], lr_, momentum_);
}

std::string TrainResult::to_csv() const {
    std::ostringstream os;
    os << "epoch,loss,train_acc\n";
    for (std::size_t e = 0; e < loss.size(); ++e) os << e + 1 << ',' << num(loss[e]) << ',' << num(train_acc[e]) << '\n';
    return os.str();
}

std::string TrainResult::summary_line() const {
    std::ostringstream os;
    os << "epochs=" << loss.size() << " final_loss=" << (loss.empty() ? std::string("nan") : num(loss.back()))
       << " train_acc=" << num(final_train_acc) << " holdout_acc=" << num(final_holdout_acc) << " digest=" << digest;
    return os.str();
}

namespace {

std::size_t argmax_row(const Tensor2& m, std::size_t r) {
    const auto row = m.row(r);
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

void check_compatible(const Model& model, const SyntheticDataset& data) {
    const ModelConfig& cfg = model.config();
    const Shape4 s = data.samples.shape();
    if (cfg.in_c != s.c || cfg.in_h != s.h || cfg.in_w != s.w) {
        throw ShapeError("train: model input " + cfg.input_shape().str() + " does not match dataset samples " + s.str());
    }
    const auto summary = model.summary();
    const Shape4 out = summary.empty() ? cfg.input_shape() : summary.back().out_shape;
    if (out.c != cfg.classes || out.h != 1 || out.w != 1) {
        throw ShapeError("train: model output " + out.str() + " is not n x " + std::to_string(cfg.classes) + " x 1 x 1");
    }
    for (std::size_t l : data.labels) {
        if (l >= cfg.classes) throw InputError("train: label out of range for model classes");
    }
}

}  // namespace

double accuracy(const Model& model, const SyntheticDataset& data, std::span<const std::size_t> idx) {
    if (idx.empty()) return 0.0;
    constexpr std::size_t chunk = 128;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < idx.size(); b += chunk) {
        const auto part = idx.subspan(b, std::min(chunk, idx.size() - b));
        const Tensor2 logits = as_matrix(model.forward(gather(data.samples, part)));
        for (std::size_t r = 0; r < part.size(); ++r) correct += argmax_row(logits, r) == data.labels[part[r]];
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

double batch_loss(const Model& model, const Tensor4& x, std::span<const std::size_t> labels) {
    return softmax_cross_entropy(as_matrix(model.forward(x)), labels).loss;
}

TrainResult train(Model& model, const SyntheticDataset& data, const TrainOptions& opts) {
    check_compatible(model, data);
    if (opts.batch == 0) throw InputError("train: batch size must be >= 1");
    const auto t0 = std::chrono::steady_clock::now();

    TrainResult res;
    {
        std::ostringstream key;
        key << config_to_json(model.config()) << "|epochs=" << opts.epochs << "|lr=" << num(opts.lr)
            << "|momentum=" << num(opts.momentum) << "|batch=" << opts.batch << "|seed=" << opts.seed
            << "|data_seed=" << data.seed << "|n=" << data.size();
        res.digest = fnv1a_hex(key.str());
    }

    SgdMomentum opt(opts.lr, opts.momentum);
    Rng rng(opts.seed);
    std::vector<std::size_t> order = data.train_idx;
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        shuffle(order, rng);
        double loss_sum = 0.0;
        std::size_t correct = 0, seen = 0;
        for (std::size_t b = 0; b < order.size(); b += opts.batch) {
            const std::span<const std::size_t> idx(order.data() + b, std::min(opts.batch, order.size() - b));
            std::vector<std::size_t> labels;
            for (std::size_t i : idx) labels.push_back(data.labels[i]);

            const Model::Trace trace = model.forward_trace(gather(data.samples, idx));
            const Tensor2 logits = as_matrix(trace.output);
            const LossAndGrad lg = softmax_cross_entropy(logits, labels);
            for (std::size_t r = 0; r < labels.size(); ++r) correct += argmax_row(logits, r) == labels[r];
            loss_sum += lg.loss * static_cast<double>(labels.size());
            seen += labels.size();

            const Gradients grads = model.backward(trace, Tensor4(trace.output.shape(), lg.grad.vec()));
            opt.apply(model, grads);
        }
        res.loss.push_back(seen ? loss_sum / static_cast<double>(seen) : 0.0);
        res.train_acc.push_back(seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0);
    }
    res.final_train_acc = accuracy(model, data, data.train_idx);
    res.final_holdout_acc = accuracy(model, data, data.holdout_idx);
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace tiedlab
