#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lssltc/losses.hpp"
#include "lssltc/metrics.hpp"
#include "lssltc/network.hpp"
#include "lssltc/synth.hpp"

namespace lssltc {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 2;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t shuffle_seed = 11;
    LossWeights weights;

    void validate() const;
};

/// Adam over a fixed list of parameter handles.
template <typename T>
class Adam {
public:
    Adam(std::vector<Tensor<T>> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step();
    void zero_grad();
    std::size_t steps() const { return t_; }

private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

/// A training/eval sample as tensors with its LSS map precomputed.
template <typename T>
struct PreparedSample {
    Tensor<T> image;  // {3,H,W}
    Tensor<T> mask;   // {1,H,W}
    Tensor<T> lss;    // {3,H,W}
};

template <typename T>
Tensor<T> image_tensor(const Image& image);

template <typename T>
std::vector<PreparedSample<T>> prepare_samples(const std::vector<Sample>& samples, const LssConfig& lss,
                                               unsigned threads = 1);

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    LossBundle mean;
    std::size_t clamp_events = 0;
    std::optional<MetricSummary> validation;

    /// "epoch=1 bce_main=... total=..." single line.
    std::string to_line() const;
};

/// Seeded Adam training over shuffled batches; the batch loss is the mean of
/// the per-sample objectives. Throws std::runtime_error with epoch/step
/// context if a loss becomes non-finite.
template <typename T>
std::vector<EpochLog> train(LssLtcNet<T>& net, const std::vector<PreparedSample<T>>& data, const TrainConfig& cfg,
                            const std::vector<PreparedSample<T>>* validation = nullptr,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

struct Prediction {
    SegMask mask;
    Image probability;  // 1 x H x W
    LssMap<float> lss;
};

/// Thresholds sigmoid(main_logits) at 0.5.
template <typename T>
Prediction predict(const LssLtcNet<T>& net, const Image& image, unsigned threads = 1);

template <typename T>
Prediction predict(const LssLtcNet<T>& net, const PreparedSample<T>& sample);

template <typename T>
MetricReport evaluate(const LssLtcNet<T>& net, const std::vector<PreparedSample<T>>& data);

// Checkpoint: "LTCK" | version u8 | header length u32 LE | JSON header |
// float32 LE payload. The header holds the network config, a free-form
// config echo and a manifest of {name, shape, offset} (offset in floats).
inline constexpr std::uint8_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const LssLtcNet<T>& net, const std::string& config_echo = {});

struct Checkpoint {
    NetworkConfig network;
    std::string config_echo;
    std::vector<std::pair<std::string, std::vector<float>>> tensors;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Rebuilds the network described by a checkpoint and loads its weights.
template <typename T>
LssLtcNet<T> load_network(const Checkpoint& ckpt);

}  // namespace lssltc
