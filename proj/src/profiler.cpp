#include "nncov/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "nncov/hash.hpp"

namespace nncov {

std::vector<std::size_t> NeuronProfile::layer_sizes() const {
    std::vector<std::size_t> sizes;
    sizes.reserve(layers.size());
    for (const auto& l : layers) sizes.push_back(l.size());
    return sizes;
}

std::size_t NeuronProfile::num_neurons() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
}

const NeuronBounds& NeuronProfile::bounds(NeuronId n) const {
    if (n.layer >= layers.size() || n.index >= layers[n.layer].size()) {
        throw LookupError("neuron (" + std::to_string(n.layer) + ", " + std::to_string(n.index) +
                          ") is not in the profile");
    }
    return layers[n.layer][n.index];
}

std::uint64_t profile_hash(const NeuronProfile& profile) {
    Fnv1a64 h;
    h.u64(profile.model_id);
    h.u32(static_cast<std::uint32_t>(profile.layers.size()));
    for (const auto& layer : profile.layers) {
        h.u32(static_cast<std::uint32_t>(layer.size()));
        for (const auto& b : layer) {
            h.f32(b.low);
            h.f32(b.high);
        }
    }
    return h.digest();
}

ProfileAccumulator::ProfileAccumulator(std::uint64_t model_id, std::vector<std::size_t> layer_sizes)
    : model_id_(model_id), sizes_(std::move(layer_sizes)) {
    std::size_t n = 0;
    for (auto s : sizes_) n += s;
    low_.assign(n, 0.0f);
    high_.assign(n, 0.0f);
    sum_.assign(n, 0.0);
    sum_sq_.assign(n, 0.0);
}

void ProfileAccumulator::add(const ActivationTrace& trace) {
    if (trace.layers.size() != sizes_.size()) {
        throw TraceError("trace has " + std::to_string(trace.layers.size()) +
                         " layers, profile expects " + std::to_string(sizes_.size()));
    }
    std::size_t flat = 0;
    for (std::size_t l = 0; l < sizes_.size(); ++l) {
        const auto& values = trace.layers[l];
        if (values.size() != sizes_[l]) {
            throw TraceError("trace layer " + std::to_string(l) + " has " +
                             std::to_string(values.size()) + " values, expected " +
                             std::to_string(sizes_[l]));
        }
        for (std::size_t i = 0; i < values.size(); ++i, ++flat) {
            const float v = values[i];
            if (!std::isfinite(v)) {
                throw DataError("non-finite activation at neuron (" + std::to_string(l) + ", " +
                                std::to_string(i) + ")");
            }
            if (count_ == 0) {
                low_[flat] = high_[flat] = v;
            } else {
                low_[flat] = std::min(low_[flat], v);
                high_[flat] = std::max(high_[flat], v);
            }
            sum_[flat] += v;
            sum_sq_[flat] += static_cast<double>(v) * v;
        }
    }
    ++count_;
}

void ProfileAccumulator::merge(const ProfileAccumulator& other) {
    if (other.model_id_ != model_id_ || other.sizes_ != sizes_) {
        throw BindingError("cannot merge profile accumulators of different models");
    }
    if (other.count_ == 0) return;
    for (std::size_t i = 0; i < low_.size(); ++i) {
        if (count_ == 0) {
            low_[i] = other.low_[i];
            high_[i] = other.high_[i];
        } else {
            low_[i] = std::min(low_[i], other.low_[i]);
            high_[i] = std::max(high_[i], other.high_[i]);
        }
        sum_[i] += other.sum_[i];
        sum_sq_[i] += other.sum_sq_[i];
    }
    count_ += other.count_;
}

NeuronProfile ProfileAccumulator::finish() const {
    if (count_ == 0) throw ArgumentError("cannot build a profile from zero inputs");
    NeuronProfile p;
    p.model_id = model_id_;
    p.sample_count = count_;
    std::size_t flat = 0;
    const double n = static_cast<double>(count_);
    for (auto size : sizes_) {
        std::vector<NeuronBounds> bounds(size);
        std::vector<NeuronStats> stats(size);
        for (std::size_t i = 0; i < size; ++i, ++flat) {
            bounds[i] = {low_[flat], high_[flat]};
            const double mean = sum_[flat] / n;
            const double var = std::max(0.0, sum_sq_[flat] / n - mean * mean);
            stats[i] = {static_cast<float>(mean), static_cast<float>(std::sqrt(var))};
        }
        p.layers.push_back(std::move(bounds));
        p.stats.push_back(std::move(stats));
    }
    return p;
}

NeuronProfile profile(const Model& model, const Dataset& training_set, std::size_t workers) {
    if (training_set.size() == 0) throw ArgumentError("profile: empty training set");
    if (training_set.input_size != model.input_size()) {
        throw DimensionError("profile: dataset input_size " +
                             std::to_string(training_set.input_size) + " != model input_size " +
                             std::to_string(model.input_size()));
    }
    const auto id = model_id(model);
    const auto sizes = model.layer_sizes();
    workers = std::clamp<std::size_t>(workers, 1, training_set.size());

    std::vector<ProfileAccumulator> parts(workers, ProfileAccumulator(id, sizes));
    auto run = [&](std::size_t w) {
        const std::size_t begin = training_set.size() * w / workers;
        const std::size_t end = training_set.size() * (w + 1) / workers;
        for (std::size_t i = begin; i < end; ++i) {
            parts[w].add(forward(model, training_set.input(i)).trace);
        }
    };
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::jthread> threads;
        for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w);
    }
    for (std::size_t w = 1; w < workers; ++w) parts[0].merge(parts[w]);
    return parts[0].finish();
}

Region classify(NeuronBounds bounds, float value, std::size_t k) {
    if (k == 0) throw ArgumentError("number of sections must be at least 1");
    if (std::isnan(value)) throw DataError("cannot classify NaN");
    if (value < bounds.low) return Region::lower();
    if (value > bounds.high) return Region::upper();
    if (bounds.low == bounds.high) return Region::at(0);
    const double width = (static_cast<double>(bounds.high) - bounds.low) / static_cast<double>(k);
    const double pos = std::floor((static_cast<double>(value) - bounds.low) / width);
    const auto section = pos < 0 ? std::size_t{0} : static_cast<std::size_t>(pos);
    return Region::at(std::min(section, k - 1));
}

Region region_of(const NeuronProfile& profile, NeuronId neuron, float value, std::size_t k) {
    return classify(profile.bounds(neuron), value, k);
}

}  // namespace nncov
