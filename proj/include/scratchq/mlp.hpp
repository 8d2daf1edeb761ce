#pragma once

#include "scratchq/spectral.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace scratchq {

enum class OutputActivation { Identity, Sigmoid };
enum class LossKind { MAE, BCE };

std::string_view to_string(OutputActivation a);
std::string_view to_string(LossKind k);
OutputActivation parse_output_activation(std::string_view s);
LossKind parse_loss_kind(std::string_view s);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct MlpConfig {
    std::vector<std::size_t> layer_sizes; // input, hidden..., output
    OutputActivation output_activation = OutputActivation::Identity;
    double dropout = 0.0;
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 150;
    LossKind loss = LossKind::MAE;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const;
    AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_epsilon}; }
};

/// 575-1000-1000-1 regressor: identity output, dropout 0.1, lr 5e-6, MAE loss.
MlpConfig intensity_preset();
/// 475-1200-1200-1200-1 classifier: sigmoid output, dropout 0.2, lr 1e-5, BCE loss.
MlpConfig detection_preset();
MlpConfig preset_for(Task task);

using Rng = std::mt19937_64;

/// Activations recorded by a training-mode pass; columns are samples.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> inputs;      // input to each layer (post-dropout for hidden)
    std::vector<Eigen::MatrixXd> preacts;     // affine outputs per layer
    std::vector<Eigen::MatrixXd> masks;       // inverted-dropout scale per hidden layer
    Eigen::RowVectorXd output;
};

/// Weights and biases in the same order the optimiser sees them:
/// params[2l] is layer l's (out x in) weight, params[2l + 1] its (out x 1) bias.
using ParamList = std::vector<Eigen::MatrixXd>;

class Network {
public:
    Network() = default;
    Network(MlpConfig config, ParamList params);

    /// Glorot-uniform weights, zero biases, drawn from `seed`.
    static Network initialize(const MlpConfig& config);

    const MlpConfig& config() const noexcept { return config_; }
    std::size_t layers() const noexcept { return params_.size() / 2; }
    const ParamList& params() const noexcept { return params_; }
    ParamList& params() noexcept { return params_; }
    const Eigen::MatrixXd& weight(std::size_t l) const { return params_[2 * l]; }
    const Eigen::MatrixXd& bias(std::size_t l) const { return params_[2 * l + 1]; }
    std::size_t input_size() const { return config_.layer_sizes.front(); }

    /// Inference: no dropout. `x` holds one sample per column.
    Eigen::RowVectorXd forward(const Eigen::MatrixXd& x) const;
    double predict(std::span<const double> features) const;

    /// Training pass with freshly drawn inverted-dropout masks.
    ForwardCache forward_train(const Eigen::MatrixXd& x, Rng& rng) const;
    /// Training pass with caller-supplied masks (one per hidden layer, or none for p = 0).
    ForwardCache forward_masked(const Eigen::MatrixXd& x, const std::vector<Eigen::MatrixXd>& masks) const;

    /// Gradient of the batch-mean loss with respect to every parameter.
    ParamList backward(const ForwardCache& cache, const Eigen::RowVectorXd& targets) const;

private:
    void check_input(const Eigen::MatrixXd& x) const;

    MlpConfig config_;
    ParamList params_;
};

inline constexpr double kBceEpsilon = 1e-7;

/// Batch-mean loss. MAE: |y - p|. BCE: p clipped to [1e-7, 1 - 1e-7].
double loss(std::span<const double> pred, std::span<const double> target, LossKind kind);
double loss(const Eigen::RowVectorXd& pred, const Eigen::RowVectorXd& target, LossKind kind);

/// Bias-corrected Adam over a parameter list.
class Adam {
public:
    Adam(AdamConfig config, const ParamList& shapes);

    void step(ParamList& params, const ParamList& grads);
    std::uint64_t steps() const noexcept { return t_; }

private:
    AdamConfig config_;
    ParamList m_;
    ParamList v_;
    std::uint64_t t_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double eval_loss = 0.0; // NaN when no evaluation set was supplied
};

/// Dense sample-major data: one row per sample.
struct Dataset {
    Eigen::MatrixXd features; // samples x dims
    Eigen::VectorXd targets;

    std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
};

struct TrainResult {
    Network network;
    std::vector<EpochRecord> history;
};

/// Seeded mini-batch Adam for a fixed number of epochs. Features must already be
/// normalised. Throws NonFiniteLoss if a batch loss becomes NaN or infinite.
TrainResult train(const MlpConfig& config, const Dataset& train_set, const Dataset* eval_set = nullptr);

/// Inference over every row of `features`.
Eigen::VectorXd predict_rows(const Network& network, const Eigen::MatrixXd& features);

} // namespace scratchq
