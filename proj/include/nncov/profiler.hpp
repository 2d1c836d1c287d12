#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "nncov/dataset.hpp"
#include "nncov/network.hpp"

namespace nncov {

struct NeuronBounds {
    float low = 0;
    float high = 0;
    bool operator==(const NeuronBounds&) const = default;
};

/// Optional per-neuron diagnostics gathered while profiling.
struct NeuronStats {
    float mean = 0;
    float stddev = 0;
    bool operator==(const NeuronStats&) const = default;
};

/// Activation bounds [low, high] of every neuron over the training set.
struct NeuronProfile {
    std::uint64_t model_id = 0;
    std::vector<std::vector<NeuronBounds>> layers;
    std::uint64_t sample_count = 0;
    std::vector<std::vector<NeuronStats>> stats;  // empty, or shaped like `layers`

    std::vector<std::size_t> layer_sizes() const;
    std::size_t num_neurons() const;
    /// Throws LookupError for a neuron outside the profile.
    const NeuronBounds& bounds(NeuronId n) const;

    bool operator==(const NeuronProfile&) const = default;
};

/// FNV-1a over the model id and every (low, high) pair. Diagnostics are not hashed.
std::uint64_t profile_hash(const NeuronProfile& profile);

/// Min/max accumulator. Forms a commutative monoid under merge, so
/// profiling can be split across workers.
class ProfileAccumulator {
public:
    ProfileAccumulator(std::uint64_t model_id, std::vector<std::size_t> layer_sizes);

    void add(const ActivationTrace& trace);
    void merge(const ProfileAccumulator& other);
    /// Throws ArgumentError if nothing was added.
    NeuronProfile finish() const;

private:
    std::uint64_t model_id_;
    std::vector<std::size_t> sizes_;
    std::vector<float> low_;
    std::vector<float> high_;
    std::vector<double> sum_;
    std::vector<double> sum_sq_;
    std::uint64_t count_ = 0;
};

/// low = min, high = max of every neuron's activation over the training inputs.
/// `workers` > 1 splits the inputs into contiguous chunks profiled in parallel.
NeuronProfile profile(const Model& model, const Dataset& training_set, std::size_t workers = 1);

/// Where a value falls relative to a neuron's training range.
struct Region {
    enum class Kind { lower_corner = 0, section = 1, upper_corner = 2 };
    Kind kind = Kind::section;
    std::size_t section = 0;  // meaningful only for Kind::section

    static Region lower() { return {Kind::lower_corner, 0}; }
    static Region upper() { return {Kind::upper_corner, 0}; }
    static Region at(std::size_t i) { return {Kind::section, i}; }

    bool operator==(const Region&) const = default;
    std::strong_ordering operator<=>(const Region& o) const {
        if (auto c = kind <=> o.kind; c != 0) return c;
        return section <=> o.section;
    }
};

/// Classifies a value against [low, high] split into k equal sections.
/// Corners are strict; a value equal to high lands in section k-1. When
/// low == high the single point maps to section 0.
Region classify(NeuronBounds bounds, float value, std::size_t k);

/// classify() for a neuron of a profile. Throws LookupError for unknown neurons
/// and ArgumentError for k == 0.
Region region_of(const NeuronProfile& profile, NeuronId neuron, float value, std::size_t k);

}  // namespace nncov
