#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nncov/dataset.hpp"
#include "nncov/errors.hpp"
#include "nncov/tensor.hpp"

namespace nncov {

enum class Activation { relu, sigmoid, identity };

std::string_view to_string(Activation a);
/// Throws ArgumentError for unknown names.
Activation parse_activation(std::string_view name);

/// Fully connected layer: out = act(in * weights + bias).
template <typename Scalar>
struct DenseLayer {
    Matrix<Scalar> weights;  // input_size x output_size
    RowVector<Scalar> bias;  // 1 x output_size
    Activation activation = Activation::identity;

    std::size_t input_size() const { return static_cast<std::size_t>(weights.rows()); }
    std::size_t output_size() const { return static_cast<std::size_t>(weights.cols()); }

    template <typename Other>
    DenseLayer<Other> cast() const {
        return {weights.template cast<Other>(), bias.template cast<Other>(), activation};
    }

    bool operator==(const DenseLayer& o) const {
        return activation == o.activation && weights.rows() == o.weights.rows() &&
               weights.cols() == o.weights.cols() && bias.cols() == o.bias.cols() &&
               weights == o.weights && bias == o.bias;
    }
};

/// Feedforward stack of dense layers. Immutable once constructed; the
/// constructor enforces that layer sizes chain.
template <typename Scalar>
class BasicModel {
public:
    BasicModel() = default;

    explicit BasicModel(std::vector<DenseLayer<Scalar>> layers) : layers_(std::move(layers)) {
        if (layers_.empty()) throw ArgumentError("model needs at least one layer");
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& l = layers_[i];
            if (l.weights.rows() == 0 || l.weights.cols() == 0) {
                throw DimensionError("layer " + std::to_string(i) + " has an empty weight matrix");
            }
            if (l.bias.cols() != l.weights.cols()) {
                throw DimensionError("layer " + std::to_string(i) + " bias " +
                                     shape_string(l.bias) + " does not match weights " +
                                     shape_string(l.weights));
            }
            if (i > 0 && layers_[i - 1].output_size() != l.input_size()) {
                throw DimensionError("layer " + std::to_string(i) + " expects " +
                                     std::to_string(l.input_size()) + " inputs but layer " +
                                     std::to_string(i - 1) + " produces " +
                                     std::to_string(layers_[i - 1].output_size()));
            }
        }
    }

    const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }
    const DenseLayer<Scalar>& layer(std::size_t i) const { return layers_.at(i); }
    std::size_t num_layers() const { return layers_.size(); }
    std::size_t input_size() const { return layers_.empty() ? 0 : layers_.front().input_size(); }
    std::size_t num_classes() const { return layers_.empty() ? 0 : layers_.back().output_size(); }

    std::vector<std::size_t> layer_sizes() const {
        std::vector<std::size_t> sizes;
        sizes.reserve(layers_.size());
        for (const auto& l : layers_) sizes.push_back(l.output_size());
        return sizes;
    }

    std::size_t num_neurons() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.output_size();
        return n;
    }

    template <typename Other>
    BasicModel<Other> cast() const {
        std::vector<DenseLayer<Other>> out;
        out.reserve(layers_.size());
        for (const auto& l : layers_) out.push_back(l.template cast<Other>());
        return BasicModel<Other>(std::move(out));
    }

    bool operator==(const BasicModel&) const = default;

private:
    std::vector<DenseLayer<Scalar>> layers_;
};

using Model = BasicModel<float>;

/// Content hash of architecture and weights (FNV-1a over the canonical bytes).
std::uint64_t model_id(const Model& model);

/// Fresh model with uniform(-s, s) weights, s = sqrt(6 / (fan_in + fan_out)),
/// drawn layer by layer in row-major order from SplitMix64(seed); zero biases.
/// `sizes` lists the input width followed by every layer width.
Model init_model(const std::vector<std::size_t>& sizes, Activation hidden, Activation output,
                 std::uint64_t seed);

/// (layer, index) of one neuron. Layers count hidden and output layers from 0.
struct NeuronId {
    std::size_t layer = 0;
    std::size_t index = 0;
    auto operator<=>(const NeuronId&) const = default;
};

/// Post-activation value of every neuron for a single input.
struct ActivationTrace {
    std::string input_id;
    std::vector<std::vector<float>> layers;

    float value(NeuronId n) const { return layers.at(n.layer).at(n.index); }
    bool operator==(const ActivationTrace&) const = default;
};

template <typename Scalar>
Scalar apply_activation(Activation a, Scalar z) {
    switch (a) {
        case Activation::relu:
            return z > Scalar(0) ? z : Scalar(0);
        case Activation::sigmoid:
            return static_cast<Scalar>(Accum(1) / (Accum(1) + std::exp(-static_cast<Accum>(z))));
        case Activation::identity:
            return z;
    }
    return z;
}

/// Derivative of the activation, expressed through the pre-activation z.
/// relu'(0) is taken as 0.
inline Accum activation_derivative(Activation a, Accum z) {
    switch (a) {
        case Activation::relu:
            return z > 0 ? 1.0 : 0.0;
        case Activation::sigmoid: {
            const Accum s = 1.0 / (1.0 + std::exp(-z));
            return s * (1.0 - s);
        }
        case Activation::identity:
            return 1.0;
    }
    return 1.0;
}

/// Intermediate values of one forward pass.
template <typename Scalar>
struct ForwardPass {
    std::vector<RowVector<Scalar>> pre;   // per layer, before activation
    std::vector<RowVector<Scalar>> post;  // per layer, after activation
    const RowVector<Scalar>& logits() const { return post.back(); }
};

template <typename Scalar, typename Derived>
ForwardPass<Scalar> forward_pass(const BasicModel<Scalar>& model,
                                 const Eigen::MatrixBase<Derived>& input) {
    if (input.size() != static_cast<Eigen::Index>(model.input_size())) {
        throw DimensionError("input has " + std::to_string(input.size()) +
                             " values, model expects " + std::to_string(model.input_size()));
    }
    ForwardPass<Scalar> pass;
    pass.pre.reserve(model.num_layers());
    pass.post.reserve(model.num_layers());
    RowVector<Scalar> h = input.reshaped().transpose().template cast<Scalar>();
    for (const auto& layer : model.layers()) {
        RowVector<Scalar> z = matmul(h, layer.weights);
        z = (z.template cast<Accum>() + layer.bias.template cast<Accum>()).template cast<Scalar>();
        h = z.unaryExpr([&](Scalar v) { return apply_activation(layer.activation, v); });
        pass.pre.push_back(std::move(z));
        pass.post.push_back(h);
    }
    return pass;
}

struct ForwardResult {
    ActivationTrace trace;
    Tensor logits;  // 1 x num_classes
};

/// Runs the model and captures every neuron's post-activation value.
ForwardResult forward(const Model& model, const Tensor& input, std::string input_id = {});

/// Argmax of the logits, ties to the lowest index.
std::size_t predict(const Model& model, const Tensor& input);

/// Gradients of the softmax cross-entropy loss.
template <typename Scalar>
struct Gradients {
    Accum loss = 0;
    std::vector<Matrix<Scalar>> weights;
    std::vector<RowVector<Scalar>> bias;
    RowVector<Scalar> input;
};

/// Softmax cross-entropy loss of one example and exact backprop gradients for
/// every parameter and the input. The backward sweep runs in 64-bit.
template <typename Scalar, typename Derived>
Gradients<Scalar> loss_and_gradients(const BasicModel<Scalar>& model,
                                     const Eigen::MatrixBase<Derived>& input, std::size_t label) {
    if (label >= model.num_classes()) {
        throw ArgumentError("label " + std::to_string(label) + " out of range for " +
                            std::to_string(model.num_classes()) + " classes");
    }
    const ForwardPass<Scalar> pass = forward_pass(model, input);
    const RowVector<Accum> logits = pass.logits().template cast<Accum>();
    const Accum max_logit = logits.maxCoeff();
    const Accum log_sum = max_logit + std::log((logits.array() - max_logit).exp().sum());

    Gradients<Scalar> grads;
    grads.loss = log_sum - logits(static_cast<Eigen::Index>(label));

    const std::size_t depth = model.num_layers();
    grads.weights.resize(depth);
    grads.bias.resize(depth);

    // d loss / d (final post-activation)
    RowVector<Accum> upstream = (logits.array() - log_sum).exp().matrix();
    upstream(static_cast<Eigen::Index>(label)) -= 1.0;

    const RowVector<Accum> x = input.reshaped().transpose().template cast<Accum>();
    for (std::size_t li = depth; li-- > 0;) {
        const auto& layer = model.layer(li);
        const RowVector<Accum> z = pass.pre[li].template cast<Accum>();
        RowVector<Accum> delta(z.cols());
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            delta(j) = upstream(j) * activation_derivative(layer.activation, z(j));
        }
        const RowVector<Accum> below = li == 0 ? x : RowVector<Accum>(pass.post[li - 1].template cast<Accum>());
        const Matrix<Accum> w = layer.weights.template cast<Accum>();
        grads.weights[li] = (below.transpose() * delta).template cast<Scalar>();
        grads.bias[li] = delta.template cast<Scalar>();
        upstream = delta * w.transpose();
    }
    grads.input = upstream.template cast<Scalar>();
    return grads;
}

struct TrainOptions {
    std::size_t epochs = 50;
    double learning_rate = 0.1;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
};

struct TrainResult {
    Model model;
    double initial_loss = 0;          // mean loss over the dataset before training
    std::vector<double> epoch_loss;   // mean loss over the dataset after each epoch
    double train_accuracy = 0;        // after the last epoch
};

/// Mini-batch SGD on the mean softmax cross-entropy. The example order of
/// every epoch is a Fisher-Yates shuffle driven by SplitMix64(seed).
TrainResult train_sgd(const Model& model, const Dataset& data, const TrainOptions& options);

/// Mean loss and accuracy of the model over a dataset.
struct Evaluation {
    double mean_loss = 0;
    double accuracy = 0;
};
Evaluation evaluate(const Model& model, const Dataset& data);

}  // namespace nncov
