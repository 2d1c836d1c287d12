#pragma once

#include <cstddef>
#include <string_view>

#include "nncov/dataset.hpp"
#include "nncov/network.hpp"

namespace nncov {

struct AttackConfig {
    float epsilon = 0.3f;     // L-infinity budget
    float alpha = 0.05f;      // BIM step size
    std::size_t iterations = 10;
    float clip_min = 0.0f;
    float clip_max = 1.0f;
};

enum class AttackMethod { fgsm, bim };

std::string_view to_string(AttackMethod m);
AttackMethod parse_attack_method(std::string_view name);

/// x' = clip(x + epsilon * sign(grad_x loss)). A zero gradient component
/// leaves its coordinate unchanged.
Tensor fgsm(const Model& model, const Tensor& input, std::size_t label, const AttackConfig& cfg);

/// Iterated FGSM with step alpha; after every step the result is projected
/// onto the epsilon ball around the original input and into the clip range.
Tensor bim(const Model& model, const Tensor& input, std::size_t label, const AttackConfig& cfg);

/// One adversarial example per row, order preserved, labels kept, ids
/// suffixed with "+fgsm" / "+bim".
Dataset attack_suite(const Model& model, const Dataset& data, AttackMethod method,
                     const AttackConfig& cfg);

}  // namespace nncov
