#include "scratchq/mlp.hpp"

#include "scratchq/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace scratchq {

std::string_view to_string(OutputActivation a) {
    return a == OutputActivation::Identity ? "identity" : "sigmoid";
}

std::string_view to_string(LossKind k) { return k == LossKind::MAE ? "mae" : "bce"; }

OutputActivation parse_output_activation(std::string_view s) {
    if (s == "identity") {
        return OutputActivation::Identity;
    }
    if (s == "sigmoid") {
        return OutputActivation::Sigmoid;
    }
    throw Error(ErrorKind::InvalidConfig, "unknown output activation '" + std::string(s) + "'");
}

LossKind parse_loss_kind(std::string_view s) {
    if (s == "mae") {
        return LossKind::MAE;
    }
    if (s == "bce") {
        return LossKind::BCE;
    }
    throw Error(ErrorKind::InvalidConfig, "unknown loss '" + std::string(s) + "'");
}

void MlpConfig::validate() const {
    if (layer_sizes.size() < 2) {
        throw Error(ErrorKind::InvalidConfig, "need at least input and output layer sizes");
    }
    if (std::find(layer_sizes.begin(), layer_sizes.end(), std::size_t{0}) != layer_sizes.end()) {
        throw Error(ErrorKind::InvalidConfig, "layer sizes must be positive");
    }
    if (layer_sizes.back() != 1) {
        throw Error(ErrorKind::InvalidConfig, "networks have a single output unit");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw Error(ErrorKind::InvalidConfig, "dropout must lie in [0, 1)");
    }
    if (!(learning_rate > 0.0) || batch_size == 0) {
        throw Error(ErrorKind::InvalidConfig, "learning rate and batch size must be positive");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 &&
          adam_epsilon > 0.0)) {
        throw Error(ErrorKind::InvalidConfig, "Adam betas must lie in [0, 1) and epsilon be positive");
    }
}

MlpConfig intensity_preset() {
    MlpConfig c;
    c.layer_sizes = {575, 1000, 1000, 1};
    c.output_activation = OutputActivation::Identity;
    c.dropout = 0.1;
    c.learning_rate = 5e-6;
    c.batch_size = 64;
    c.epochs = 150;
    c.loss = LossKind::MAE;
    return c;
}

MlpConfig detection_preset() {
    MlpConfig c;
    c.layer_sizes = {475, 1200, 1200, 1200, 1};
    c.output_activation = OutputActivation::Sigmoid;
    c.dropout = 0.2;
    c.learning_rate = 1e-5;
    c.batch_size = 64;
    c.epochs = 150;
    c.loss = LossKind::BCE;
    return c;
}

MlpConfig preset_for(Task task) {
    return task == Task::Intensity ? intensity_preset() : detection_preset();
}

Network::Network(MlpConfig config, ParamList params) : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
    const auto& sizes = config_.layer_sizes;
    if (params_.size() != 2 * (sizes.size() - 1)) {
        throw Error(ErrorKind::ShapeMismatch, "parameter count does not match layer sizes");
    }
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const auto& w = params_[2 * l];
        const auto& b = params_[2 * l + 1];
        if (static_cast<std::size_t>(w.rows()) != sizes[l + 1] || static_cast<std::size_t>(w.cols()) != sizes[l] ||
            static_cast<std::size_t>(b.rows()) != sizes[l + 1] || b.cols() != 1) {
            throw Error(ErrorKind::ShapeMismatch, "layer " + std::to_string(l) + " has inconsistent shape");
        }
    }
}

Network Network::initialize(const MlpConfig& config) {
    config.validate();
    Rng rng(config.seed);
    ParamList params;
    const auto& sizes = config.layer_sizes;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const auto fan_in = static_cast<Eigen::Index>(sizes[l]);
        const auto fan_out = static_cast<Eigen::Index>(sizes[l + 1]);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        Eigen::MatrixXd w(fan_out, fan_in);
        // Row-major fill so the draw order matches the serialised layout.
        for (Eigen::Index r = 0; r < fan_out; ++r) {
            for (Eigen::Index c = 0; c < fan_in; ++c) {
                w(r, c) = dist(rng);
            }
        }
        params.push_back(std::move(w));
        params.push_back(Eigen::MatrixXd::Zero(fan_out, 1));
    }
    return Network(config, std::move(params));
}

void Network::check_input(const Eigen::MatrixXd& x) const {
    if (static_cast<std::size_t>(x.rows()) != input_size()) {
        throw Error(ErrorKind::ShapeMismatch, "input has " + std::to_string(x.rows()) + " features, network expects " +
                                                  std::to_string(input_size()));
    }
}

namespace {

Eigen::RowVectorXd apply_output(const Eigen::MatrixXd& z, OutputActivation act) {
    if (act == OutputActivation::Identity) {
        return z.row(0);
    }
    return z.row(0).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

} // namespace

Eigen::RowVectorXd Network::forward(const Eigen::MatrixXd& x) const {
    check_input(x);
    Eigen::MatrixXd a = x;
    const std::size_t n = layers();
    for (std::size_t l = 0; l + 1 < n; ++l) {
        Eigen::MatrixXd z = weight(l) * a;
        z.colwise() += bias(l).col(0);
        a = z.cwiseMax(0.0);
    }
    Eigen::MatrixXd z = weight(n - 1) * a;
    z.colwise() += bias(n - 1).col(0);
    return apply_output(z, config_.output_activation);
}

double Network::predict(std::span<const double> features) const {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(features.size()), 1);
    std::copy(features.begin(), features.end(), x.data());
    return forward(x)(0);
}

ForwardCache Network::forward_train(const Eigen::MatrixXd& x, Rng& rng) const {
    std::vector<Eigen::MatrixXd> masks;
    const double p = config_.dropout;
    if (p > 0.0) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double keep_scale = 1.0 / (1.0 - p);
        for (std::size_t l = 0; l + 1 < layers(); ++l) {
            Eigen::MatrixXd m(weight(l).rows(), x.cols());
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                for (Eigen::Index r = 0; r < m.rows(); ++r) {
                    m(r, c) = u(rng) < p ? 0.0 : keep_scale;
                }
            }
            masks.push_back(std::move(m));
        }
    }
    return forward_masked(x, masks);
}

ForwardCache Network::forward_masked(const Eigen::MatrixXd& x, const std::vector<Eigen::MatrixXd>& masks) const {
    check_input(x);
    const std::size_t n = layers();
    if (!masks.empty() && masks.size() != n - 1) {
        throw Error(ErrorKind::ShapeMismatch, "one dropout mask per hidden layer expected");
    }
    ForwardCache cache;
    cache.masks = masks;
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l + 1 < n; ++l) {
        Eigen::MatrixXd z = weight(l) * a;
        z.colwise() += bias(l).col(0);
        Eigen::MatrixXd h = z.cwiseMax(0.0);
        if (!masks.empty()) {
            h.array() *= masks[l].array();
        }
        cache.inputs.push_back(std::move(a));
        cache.preacts.push_back(std::move(z));
        a = std::move(h);
    }
    Eigen::MatrixXd z = weight(n - 1) * a;
    z.colwise() += bias(n - 1).col(0);
    cache.inputs.push_back(std::move(a));
    cache.output = apply_output(z, config_.output_activation);
    cache.preacts.push_back(std::move(z));
    return cache;
}

ParamList Network::backward(const ForwardCache& cache, const Eigen::RowVectorXd& targets) const {
    const Eigen::Index batch = cache.output.size();
    if (targets.size() != batch) {
        throw Error(ErrorKind::ShapeMismatch, "target count does not match batch");
    }
    if (batch == 0) {
        throw Error(ErrorKind::EmptyBatch, "backward on an empty batch");
    }
    const double inv_b = 1.0 / static_cast<double>(batch);

    // dL/d(output preactivation)
    Eigen::MatrixXd delta(1, batch);
    for (Eigen::Index i = 0; i < batch; ++i) {
        const double p = cache.output(i);
        const double y = targets(i);
        double dl_dp = 0.0;
        if (config_.loss == LossKind::MAE) {
            const double r = p - y;
            dl_dp = (r > 0.0) - (r < 0.0);
        } else if (p >= kBceEpsilon && p <= 1.0 - kBceEpsilon) {
            dl_dp = -y / p + (1.0 - y) / (1.0 - p);
        }
        const double dp_dz = config_.output_activation == OutputActivation::Sigmoid ? p * (1.0 - p) : 1.0;
        delta(0, i) = dl_dp * dp_dz * inv_b;
    }

    const std::size_t n = layers();
    ParamList grads(2 * n);
    for (std::size_t l = n; l-- > 0;) {
        grads[2 * l] = delta * cache.inputs[l].transpose();
        grads[2 * l + 1] = delta.rowwise().sum();
        if (l == 0) {
            break;
        }
        Eigen::MatrixXd upstream = weight(l).transpose() * delta;
        if (!cache.masks.empty()) {
            upstream.array() *= cache.masks[l - 1].array();
        }
        upstream.array() *= (cache.preacts[l - 1].array() > 0.0).cast<double>();
        delta = std::move(upstream);
    }
    return grads;
}

double loss(const Eigen::RowVectorXd& pred, const Eigen::RowVectorXd& target, LossKind kind) {
    return loss(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                std::span<const double>(target.data(), static_cast<std::size_t>(target.size())), kind);
}

double loss(std::span<const double> pred, std::span<const double> target, LossKind kind) {
    if (pred.size() != target.size()) {
        throw Error(ErrorKind::ShapeMismatch, "prediction and target lengths differ");
    }
    if (pred.empty()) {
        throw Error(ErrorKind::EmptyBatch, "loss of an empty batch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (kind == LossKind::MAE) {
            sum += std::abs(target[i] - pred[i]);
        } else {
            const double p = std::clamp(pred[i], kBceEpsilon, 1.0 - kBceEpsilon);
            sum -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
        }
    }
    return sum / static_cast<double>(pred.size());
}

Adam::Adam(AdamConfig config, const ParamList& shapes) : config_(config) {
    for (const auto& p : shapes) {
        m_.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
        v_.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
}

void Adam::step(ParamList& params, const ParamList& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw Error(ErrorKind::ShapeMismatch, "optimizer state does not match parameters");
    }
    ++t_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].rows() != m_[i].rows() || grads[i].cols() != m_[i].cols()) {
            throw Error(ErrorKind::ShapeMismatch, "gradient shape mismatch at parameter " + std::to_string(i));
        }
        m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
        v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i].cwiseProduct(grads[i]);
        params[i].array() -= config_.learning_rate * (m_[i].array() / correction1) /
                             ((v_[i].array() / correction2).sqrt() + config_.epsilon);
    }
}

Eigen::VectorXd predict_rows(const Network& network, const Eigen::MatrixXd& features) {
    const Eigen::Index n = features.rows();
    Eigen::VectorXd out(n);
    constexpr Eigen::Index chunk = 256;
    for (Eigen::Index start = 0; start < n; start += chunk) {
        const Eigen::Index len = std::min(chunk, n - start);
        out.segment(start, len) = network.forward(features.middleRows(start, len).transpose()).transpose();
    }
    return out;
}

TrainResult train(const MlpConfig& config, const Dataset& train_set, const Dataset* eval_set) {
    config.validate();
    if (train_set.size() == 0) {
        throw Error(ErrorKind::EmptyTrainingSet, "no training samples");
    }
    if (static_cast<std::size_t>(train_set.features.cols()) != config.layer_sizes.front()) {
        throw Error(ErrorKind::ShapeMismatch, "training features have " + std::to_string(train_set.features.cols()) +
                                                  " columns, network expects " +
                                                  std::to_string(config.layer_sizes.front()));
    }
    TrainResult result{Network::initialize(config), {}};
    Network& net = result.network;
    Adam adam(config.adam(), net.params());
    // Separate stream from initialisation so changing epochs never alters the init.
    Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

    const std::size_t n = train_set.size();
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double weighted_loss = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, n - start);
            const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(start + len));
            const Eigen::MatrixXd xb = train_set.features(idx, Eigen::all).transpose();
            const Eigen::RowVectorXd yb = train_set.targets(idx).transpose();
            const ForwardCache cache = net.forward_train(xb, rng);
            const double batch_loss = loss(cache.output, yb, config.loss);
            if (!std::isfinite(batch_loss)) {
                throw Error(ErrorKind::NonFiniteLoss, "loss became non-finite in epoch " + std::to_string(epoch + 1));
            }
            weighted_loss += batch_loss * static_cast<double>(len);
            const ParamList grads = net.backward(cache, yb);
            adam.step(net.params(), grads);
        }
        EpochRecord record;
        record.epoch = epoch + 1;
        record.train_loss = weighted_loss / static_cast<double>(n);
        record.eval_loss = std::numeric_limits<double>::quiet_NaN();
        if (eval_set != nullptr && eval_set->size() > 0) {
            const Eigen::VectorXd pred = predict_rows(net, eval_set->features);
            record.eval_loss = loss(pred.transpose(), eval_set->targets.transpose(), config.loss);
        }
        result.history.push_back(record);
    }
    return result;
}

} // namespace scratchq
