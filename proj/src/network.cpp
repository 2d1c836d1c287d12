#include "nncov/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nncov/hash.hpp"
#include "nncov/rng.hpp"

namespace nncov {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::relu:
            return "relu";
        case Activation::sigmoid:
            return "sigmoid";
        case Activation::identity:
            return "identity";
    }
    return "identity";
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "identity") return Activation::identity;
    throw ArgumentError("unknown activation '" + std::string(name) + "'");
}

namespace {

std::uint32_t activation_code(Activation a) {
    switch (a) {
        case Activation::relu:
            return 0;
        case Activation::sigmoid:
            return 1;
        case Activation::identity:
            return 2;
    }
    return 2;
}

}  // namespace

std::uint64_t model_id(const Model& model) {
    Fnv1a64 h;
    h.u32(static_cast<std::uint32_t>(model.input_size()));
    h.u32(static_cast<std::uint32_t>(model.num_classes()));
    h.u32(static_cast<std::uint32_t>(model.num_layers()));
    for (const auto& layer : model.layers()) {
        h.u32(0);  // dense
        h.u32(static_cast<std::uint32_t>(layer.input_size()));
        h.u32(static_cast<std::uint32_t>(layer.output_size()));
        h.u32(activation_code(layer.activation));
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) h.f32(layer.weights.data()[i]);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) h.f32(layer.bias.data()[i]);
    }
    return h.digest();
}

Model init_model(const std::vector<std::size_t>& sizes, Activation hidden, Activation output,
                 std::uint64_t seed) {
    if (sizes.size() < 2) throw ArgumentError("init_model needs an input width and at least one layer");
    if (std::find(sizes.begin(), sizes.end(), std::size_t{0}) != sizes.end()) {
        throw ArgumentError("layer widths must be positive");
    }
    SplitMix64 rng(seed);
    std::vector<DenseLayer<float>> layers;
    for (std::size_t i = 1; i < sizes.size(); ++i) {
        const auto fan_in = sizes[i - 1];
        const auto fan_out = sizes[i];
        const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        DenseLayer<float> layer;
        layer.weights.resize(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
        for (Eigen::Index k = 0; k < layer.weights.size(); ++k) {
            layer.weights.data()[k] = static_cast<float>((2.0 * rng.uniform() - 1.0) * s);
        }
        layer.bias = RowVector<float>::Zero(static_cast<Eigen::Index>(fan_out));
        layer.activation = i + 1 == sizes.size() ? output : hidden;
        layers.push_back(std::move(layer));
    }
    return Model(std::move(layers));
}

ForwardResult forward(const Model& model, const Tensor& input, std::string input_id) {
    const ForwardPass<float> pass = forward_pass(model, input);
    ForwardResult result;
    result.trace.input_id = std::move(input_id);
    result.trace.layers.reserve(pass.post.size());
    for (const auto& h : pass.post) result.trace.layers.emplace_back(h.data(), h.data() + h.size());
    result.logits = pass.logits();
    return result;
}

std::size_t predict(const Model& model, const Tensor& input) {
    return argmax(forward_pass(model, input).logits());
}

Evaluation evaluate(const Model& model, const Dataset& data) {
    Evaluation ev;
    if (data.size() == 0) return ev;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto pass = forward_pass(model, data.input(i));
        const RowVector<Accum> logits = pass.logits().cast<Accum>();
        const Accum m = logits.maxCoeff();
        const Accum lse = m + std::log((logits.array() - m).exp().sum());
        ev.mean_loss += lse - logits(static_cast<Eigen::Index>(data.labels[i]));
        if (argmax(pass.logits()) == data.labels[i]) ++correct;
    }
    ev.mean_loss /= static_cast<double>(data.size());
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return ev;
}

TrainResult train_sgd(const Model& model, const Dataset& data, const TrainOptions& options) {
    if (data.size() == 0) throw ArgumentError("train_sgd: empty dataset");
    if (!(options.learning_rate >= 0.0)) {
        throw ArgumentError("train_sgd: learning rate must be non-negative");
    }
    if (options.batch_size == 0) throw ArgumentError("train_sgd: batch size must be positive");
    if (data.input_size != model.input_size()) {
        throw DimensionError("train_sgd: dataset input_size " + std::to_string(data.input_size) +
                             " != model input_size " + std::to_string(model.input_size()));
    }
    check_dataset(data);

    TrainResult result;
    result.initial_loss = evaluate(model, data).mean_loss;

    std::vector<DenseLayer<float>> layers = model.layers();
    Model current = model;
    SplitMix64 rng(options.seed);
    std::vector<std::size_t> order(data.size());

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i-- > 1;) {
            std::swap(order[i], order[rng.below(i + 1)]);
        }
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            std::vector<Matrix<Accum>> gw(layers.size());
            std::vector<RowVector<Accum>> gb(layers.size());
            for (std::size_t l = 0; l < layers.size(); ++l) {
                gw[l] = Matrix<Accum>::Zero(layers[l].weights.rows(), layers[l].weights.cols());
                gb[l] = RowVector<Accum>::Zero(layers[l].bias.cols());
            }
            for (std::size_t b = start; b < end; ++b) {
                const auto idx = order[b];
                const auto g = loss_and_gradients(current, data.input(idx), data.labels[idx]);
                for (std::size_t l = 0; l < layers.size(); ++l) {
                    gw[l] += g.weights[l].cast<Accum>();
                    gb[l] += g.bias[l].cast<Accum>();
                }
            }
            if (options.learning_rate == 0.0) continue;
            const Accum scale = options.learning_rate / static_cast<Accum>(end - start);
            for (std::size_t l = 0; l < layers.size(); ++l) {
                layers[l].weights = (layers[l].weights.cast<Accum>() - scale * gw[l]).cast<float>();
                layers[l].bias = (layers[l].bias.cast<Accum>() - scale * gb[l]).cast<float>();
            }
            current = Model(layers);
        }
        result.epoch_loss.push_back(evaluate(current, data).mean_loss);
    }
    result.train_accuracy = evaluate(current, data).accuracy;
    result.model = std::move(current);
    return result;
}

}  // namespace nncov
