#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tiedlab/model.hpp"
#include "tiedlab/tensor.hpp"

namespace tiedlab {

/// Two-class toy images, 1 x 16 x 16. Class 0 has a bright 4x4 blob somewhere in
/// the left half, class 1 in the right half; every pixel gets uniform noise of
/// amplitude `noise`. Labels alternate before shuffling, so classes balance to within 1.
struct SyntheticDataset {
    Tensor4 samples;
    std::vector<std::size_t> labels;
    std::uint64_t seed = 0;
    double noise = 0.0;
    std::vector<std::size_t> train_idx;    // 80%
    std::vector<std::size_t> holdout_idx;  // 20%

    std::size_t size() const { return labels.size(); }
};

inline constexpr std::size_t kToyImageSize = 16;
inline constexpr std::size_t kToyBlobSize = 4;
inline constexpr double kToyNoise = 0.2;

/// Samples are drawn in index order from Rng(seed); the split then comes from a seeded
/// shuffle of the indices where every fifth shuffled position goes to holdout.
SyntheticDataset generate_dataset(std::uint64_t seed, std::size_t n, double noise = kToyNoise);

/// Copies the listed samples into one batch.
Tensor4 gather(const Tensor4& samples, std::span<const std::size_t> idx);

/// SGD with momentum: v <- mu * v + g, w <- w - lr * v. Buffers start at zero.
class SgdMomentum {
public:
    SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

    static void step(std::span<double> w, std::span<const double> g, std::span<double> v, double lr, double momentum);
    void apply(Model& model, const Gradients& grads);

private:
    double lr_, momentum_;
    std::vector<std::vector<double>> velocity_;
};

struct TrainOptions {
    std::size_t epochs = 10;
    double lr = 0.05;
    double momentum = 0.9;
    std::size_t batch = 32;
    std::uint64_t seed = 7;
};

struct TrainResult {
    std::vector<double> loss;       // mean training loss per epoch
    std::vector<double> train_acc;  // accuracy over each epoch's minibatches, before their update
    double final_train_acc = 0.0;
    double final_holdout_acc = 0.0;
    double wall_seconds = 0.0;
    std::string digest;  // hash of config and hyperparameters

    /// epoch,loss,train_acc rows; numbers printed with %.17g so reruns compare byte-for-byte.
    std::string to_csv() const;
    std::string summary_line() const;
};

double accuracy(const Model& model, const SyntheticDataset& data, std::span<const std::size_t> idx);

/// Mean loss of the model on one batch.
double batch_loss(const Model& model, const Tensor4& x, std::span<const std::size_t> labels);

TrainResult train(Model& model, const SyntheticDataset& data, const TrainOptions& opts);

}  // namespace tiedlab
