#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nncov/network.hpp"
#include "nncov/profiler.hpp"

namespace nncov {

struct CoverageConfig {
    std::size_t k_sections = 1000;  // sections per neuron for KMNC
    std::size_t top_k = 1;          // per-layer k for TKNC / TKNP
    double nc_threshold = 0.75;     // baseline neuron coverage threshold

    bool operator==(const CoverageConfig&) const = default;
};

/// Canonical byte encoding of one input's per-layer top-k sets: for every
/// layer, a little-endian u32 count followed by the sorted neuron indices as
/// little-endian u32.
std::string encode_pattern(const std::vector<std::vector<std::uint32_t>>& per_layer_topk);

/// Indices of the k largest values, ties toward the lower index, returned sorted ascending.
std::vector<std::uint32_t> top_k_indices(std::span<const float> values, std::size_t k);

/// Per-layer min-max scaled activations as used by the baseline neuron
/// coverage. A layer whose values are all equal scales to 0.
std::vector<double> scale_layer(std::span<const float> values);

/// Mergeable accumulator behind every criterion. Flags only go false -> true
/// and the pattern set only grows.
class CoverageState {
public:
    /// Throws BindingError if the profile was not built from this model, and
    /// ArgumentError for an invalid config.
    CoverageState(const Model& model, NeuronProfile profile, CoverageConfig config);

    /// Applies every criterion to one input. Throws TraceError on shape
    /// mismatch and DataError on a non-finite value; the state is unchanged
    /// when it throws.
    void update(const ActivationTrace& trace);

    /// Folds another state into this one. Throws BindingError unless both
    /// share model id, profile and config.
    void merge(const CoverageState& other);

    std::uint64_t model_id() const { return model_id_; }
    std::uint64_t profile_hash() const { return profile_hash_; }
    const CoverageConfig& config() const { return config_; }
    const NeuronProfile& profile() const { return profile_; }
    const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
    std::size_t num_neurons() const { return upper_.size(); }
    std::uint64_t inputs_seen() const { return inputs_seen_; }
    const std::set<std::string>& patterns() const { return patterns_; }

    std::size_t flat_index(NeuronId n) const { return offsets_.at(n.layer) + n.index; }
    bool section_hit(std::size_t neuron, std::size_t section) const;
    std::size_t sections_hit(std::size_t neuron) const;
    bool upper_hit(std::size_t neuron) const { return upper_[neuron] != 0; }
    bool lower_hit(std::size_t neuron) const { return lower_[neuron] != 0; }
    bool topk_hit(std::size_t neuron) const { return topk_[neuron] != 0; }
    bool nc_hit(std::size_t neuron) const { return nc_[neuron] != 0; }

    bool operator==(const CoverageState&) const = default;

    /// Raw storage, exposed for serialization.
    struct Raw {
        std::vector<std::uint64_t> sections;  // words_per_neuron words per neuron
        std::vector<std::uint8_t> upper, lower, topk, nc;
        std::set<std::string> patterns;
        std::uint64_t inputs_seen = 0;
    };
    Raw raw() const;
    /// Rebuilds a state from its bindings and raw storage. Throws
    /// DimensionError if the storage does not fit the bindings.
    static CoverageState from_raw(std::uint64_t model_id, NeuronProfile profile,
                                  CoverageConfig config, Raw raw);
    std::size_t words_per_neuron() const { return words_; }

private:
    CoverageState(std::uint64_t model_id, NeuronProfile profile, CoverageConfig config);

    std::uint64_t model_id_;
    NeuronProfile profile_;
    std::uint64_t profile_hash_;
    CoverageConfig config_;
    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offsets_;
    std::size_t words_ = 0;

    std::vector<std::uint64_t> sections_;
    std::vector<std::uint8_t> upper_, lower_, topk_, nc_;
    std::set<std::string> patterns_;
    std::uint64_t inputs_seen_ = 0;
};

/// Commutative merge; new states act as identity.
CoverageState merge(CoverageState a, const CoverageState& b);

struct CoverageCounts {
    std::uint64_t neurons = 0;
    std::uint64_t covered_sections = 0;
    std::uint64_t upper_corner_neurons = 0;
    std::uint64_t lower_corner_neurons = 0;
    std::uint64_t topk_neurons = 0;
    std::uint64_t nc_neurons = 0;
    std::uint64_t patterns = 0;
    bool operator==(const CoverageCounts&) const = default;
};

struct CoverageReport {
    double kmnc = 0;
    double nbc = 0;
    double snac = 0;
    double tknc = 0;
    double nc = 0;
    std::uint64_t tknp = 0;
    CoverageCounts counts;
    std::uint64_t inputs_seen = 0;
    CoverageConfig config;
    std::uint64_t model_id = 0;
    std::uint64_t profile_hash = 0;

    bool operator==(const CoverageReport&) const = default;
};

/// Ratios from raw counts, using the formulas
///   kmnc = covered sections / (k * |N|)
///   nbc  = (upper + lower corner neurons) / (2 |N|)
///   snac = upper corner neurons / |N|
///   tknc = neurons ever in a layer top-k / |N|
///   nc   = neurons over the baseline threshold / |N|
CoverageReport make_report(const CoverageCounts& counts, std::uint64_t inputs_seen,
                           const CoverageConfig& config, std::uint64_t model_id,
                           std::uint64_t profile_hash);

CoverageReport report(const CoverageState& state);

struct CoverageDelta {
    double kmnc = 0;
    double nbc = 0;
    double snac = 0;
    double tknc = 0;
    double nc = 0;
    std::int64_t tknp = 0;
    std::int64_t inputs = 0;
    bool operator==(const CoverageDelta&) const = default;
};

/// extended - base, per criterion. Throws BindingError when the reports were
/// produced under different model, profile or config.
CoverageDelta diff(const CoverageReport& base, const CoverageReport& extended);

}  // namespace nncov
