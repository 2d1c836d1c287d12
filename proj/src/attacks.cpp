#include "nncov/attacks.hpp"

#include <algorithm>
#include <cmath>

namespace nncov {

std::string_view to_string(AttackMethod m) { return m == AttackMethod::fgsm ? "fgsm" : "bim"; }

AttackMethod parse_attack_method(std::string_view name) {
    if (name == "fgsm") return AttackMethod::fgsm;
    if (name == "bim") return AttackMethod::bim;
    throw ArgumentError("unknown attack method '" + std::string(name) + "'");
}

namespace {

void check_common(const AttackConfig& cfg, const Tensor& input) {
    if (!(cfg.epsilon >= 0.0f) || !std::isfinite(cfg.epsilon)) {
        throw ArgumentError("attack epsilon must be a finite non-negative number");
    }
    if (!(cfg.clip_min < cfg.clip_max)) throw ArgumentError("attack needs clip_min < clip_max");
    if (!input.allFinite() || input.minCoeff() < cfg.clip_min || input.maxCoeff() > cfg.clip_max) {
        throw ArgumentError("attack input lies outside [clip_min, clip_max]");
    }
}

float sign(float g) { return g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f); }

RowVector<float> input_gradient(const Model& model, const Tensor& x, std::size_t label) {
    return loss_and_gradients(model, x, label).input;
}

}  // namespace

Tensor fgsm(const Model& model, const Tensor& input, std::size_t label, const AttackConfig& cfg) {
    check_common(cfg, input);
    const RowVector<float> g = input_gradient(model, input, label);
    Tensor out = input;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const float step = cfg.epsilon * sign(g(i));
        if (step == 0.0f) continue;
        out.data()[i] = std::clamp(out.data()[i] + step, cfg.clip_min, cfg.clip_max);
    }
    return out;
}

Tensor bim(const Model& model, const Tensor& input, std::size_t label, const AttackConfig& cfg) {
    check_common(cfg, input);
    if (cfg.iterations == 0) throw ArgumentError("BIM needs at least one iteration");
    if (!(cfg.alpha > 0.0f) || !std::isfinite(cfg.alpha)) {
        throw ArgumentError("BIM step alpha must be positive");
    }
    if (cfg.epsilon > 0.0f && cfg.alpha > cfg.epsilon) {
        throw ArgumentError("BIM step alpha must not exceed epsilon");
    }
    Tensor x = input;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const RowVector<float> g = input_gradient(model, x, label);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const float origin = input.data()[i];
            const float step = cfg.alpha * sign(g(i));
            if (step == 0.0f) continue;
            float v = x.data()[i] + step;
            v = std::clamp(v, origin - cfg.epsilon, origin + cfg.epsilon);
            x.data()[i] = std::clamp(v, cfg.clip_min, cfg.clip_max);
        }
    }
    return x;
}

Dataset attack_suite(const Model& model, const Dataset& data, AttackMethod method,
                     const AttackConfig& cfg) {
    if (data.size() == 0) throw ArgumentError("attack_suite: empty dataset");
    check_dataset(data);
    Dataset out = data;
    const std::string suffix = "+" + std::string(to_string(method));
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Tensor x = data.input(i);
        const Tensor adv = method == AttackMethod::fgsm ? fgsm(model, x, data.labels[i], cfg)
                                                        : bim(model, x, data.labels[i], cfg);
        out.inputs.row(static_cast<Eigen::Index>(i)) = adv.reshaped<Eigen::RowMajor>().transpose();
        out.input_ids[i] = data.input_ids[i] + suffix;
    }
    out.provenance = data.provenance.empty() ? suffix.substr(1) : data.provenance + suffix;
    return out;
}

}  // namespace nncov
