#include "nncov/coverage.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "nncov/hash.hpp"

namespace nncov {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void check_config(const CoverageConfig& config, const std::vector<std::size_t>& sizes) {
    if (config.k_sections == 0) throw ArgumentError("k_sections must be at least 1");
    if (config.top_k == 0) throw ArgumentError("top_k must be at least 1");
    if (!(config.nc_threshold >= 0.0 && config.nc_threshold <= 1.0)) {
        throw ArgumentError("nc_threshold must lie in [0, 1]");
    }
    for (std::size_t l = 0; l < sizes.size(); ++l) {
        if (config.top_k > sizes[l]) {
            throw ArgumentError("top_k " + std::to_string(config.top_k) + " exceeds width " +
                                std::to_string(sizes[l]) + " of layer " + std::to_string(l));
        }
    }
}

std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

// Checks that a stored pattern is a canonical encoding for these layer sizes
// and marks its neurons in `seen`.
void check_pattern(const std::string& pattern, const std::vector<std::size_t>& sizes, std::size_t top_k,
                   std::vector<std::uint8_t>& seen) {
    if (pattern.size() != sizes.size() * 4 * (1 + top_k)) {
        throw DimensionError("coverage state pattern has the wrong length");
    }
    const char* p = pattern.data();
    std::size_t base = 0;
    for (auto width : sizes) {
        if (get_u32(p) != top_k) throw DimensionError("coverage state pattern has the wrong per-layer count");
        p += 4;
        std::int64_t prev = -1;
        for (std::size_t j = 0; j < top_k; ++j, p += 4) {
            const std::uint32_t idx = get_u32(p);
            if (static_cast<std::int64_t>(idx) <= prev || idx >= width) {
                throw DimensionError("coverage state pattern indices are not ascending within the layer");
            }
            prev = idx;
            seen[base + idx] = 1;
        }
        base += width;
    }
}

}  // namespace

std::string encode_pattern(const std::vector<std::vector<std::uint32_t>>& per_layer_topk) {
    std::string out;
    for (const auto& layer : per_layer_topk) {
        std::vector<std::uint32_t> sorted = layer;
        std::sort(sorted.begin(), sorted.end());
        put_u32(out, static_cast<std::uint32_t>(sorted.size()));
        for (auto idx : sorted) put_u32(out, idx);
    }
    return out;
}

std::vector<std::uint32_t> top_k_indices(std::span<const float> values, std::size_t k) {
    k = std::min(k, values.size());
    std::vector<std::uint32_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0u);
    auto before = [&](std::uint32_t a, std::uint32_t b) {
        return values[a] > values[b] || (values[a] == values[b] && a < b);
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<double> scale_layer(std::span<const float> values) {
    std::vector<double> out(values.size(), 0.0);
    if (values.empty()) return out;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double low = *lo;
    const double range = static_cast<double>(*hi) - low;
    if (range == 0.0) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - low) / range;
    return out;
}

CoverageState::CoverageState(std::uint64_t model_id, NeuronProfile profile, CoverageConfig config)
    : model_id_(model_id),
      profile_(std::move(profile)),
      profile_hash_(nncov::profile_hash(profile_)),
      config_(config),
      sizes_(profile_.layer_sizes()) {
    if (profile_.model_id != model_id_) {
        throw BindingError("profile was built from model " + to_hex(profile_.model_id) +
                           ", not model " + to_hex(model_id_));
    }
    for (const auto& layer : profile_.layers) {
        for (const auto& b : layer) {
            if (!(b.low <= b.high)) throw ArgumentError("profile has a neuron with low > high");
        }
    }
    check_config(config_, sizes_);
    offsets_.resize(sizes_.size());
    std::size_t n = 0;
    for (std::size_t l = 0; l < sizes_.size(); ++l) {
        offsets_[l] = n;
        n += sizes_[l];
    }
    words_ = (config_.k_sections + 63) / 64;
    sections_.assign(n * words_, 0);
    upper_.assign(n, 0);
    lower_.assign(n, 0);
    topk_.assign(n, 0);
    nc_.assign(n, 0);
}

CoverageState::CoverageState(const Model& model, NeuronProfile profile, CoverageConfig config)
    : CoverageState(nncov::model_id(model), std::move(profile), config) {
    if (sizes_ != model.layer_sizes()) {
        throw BindingError("profile layer sizes do not match the model");
    }
}

void CoverageState::update(const ActivationTrace& trace) {
    if (trace.layers.size() != sizes_.size()) {
        throw TraceError("trace '" + trace.input_id + "' has " +
                         std::to_string(trace.layers.size()) + " layers, model has " +
                         std::to_string(sizes_.size()));
    }
    for (std::size_t l = 0; l < sizes_.size(); ++l) {
        if (trace.layers[l].size() != sizes_[l]) {
            throw TraceError("trace '" + trace.input_id + "' layer " + std::to_string(l) + " has " +
                             std::to_string(trace.layers[l].size()) + " values, model has " +
                             std::to_string(sizes_[l]));
        }
        for (std::size_t i = 0; i < sizes_[l]; ++i) {
            if (!std::isfinite(trace.layers[l][i])) {
                throw DataError("trace '" + trace.input_id + "': non-finite activation at neuron (" +
                                std::to_string(l) + ", " + std::to_string(i) + ")");
            }
        }
    }

    std::vector<std::vector<std::uint32_t>> pattern;
    pattern.reserve(sizes_.size());
    for (std::size_t l = 0; l < sizes_.size(); ++l) {
        const auto& values = trace.layers[l];
        const auto scaled = scale_layer(values);
        for (std::size_t i = 0; i < values.size(); ++i) {
            const std::size_t n = offsets_[l] + i;
            const Region r = classify(profile_.layers[l][i], values[i], config_.k_sections);
            switch (r.kind) {
                case Region::Kind::lower_corner:
                    lower_[n] = 1;
                    break;
                case Region::Kind::upper_corner:
                    upper_[n] = 1;
                    break;
                case Region::Kind::section:
                    sections_[n * words_ + r.section / 64] |= std::uint64_t{1} << (r.section % 64);
                    break;
            }
            if (scaled[i] > config_.nc_threshold) nc_[n] = 1;
        }
        auto top = top_k_indices(values, config_.top_k);
        for (auto idx : top) topk_[offsets_[l] + idx] = 1;
        pattern.push_back(std::move(top));
    }
    patterns_.insert(encode_pattern(pattern));
    ++inputs_seen_;
}

void CoverageState::merge(const CoverageState& other) {
    if (other.model_id_ != model_id_ || other.profile_hash_ != profile_hash_ ||
        !(other.config_ == config_)) {
        throw BindingError("cannot merge coverage states: model " + to_hex(model_id_) + "/" +
                           to_hex(other.model_id_) + ", profile " + to_hex(profile_hash_) + "/" +
                           to_hex(other.profile_hash_) +
                           (other.config_ == config_ ? "" : ", configs differ"));
    }
    for (std::size_t i = 0; i < sections_.size(); ++i) sections_[i] |= other.sections_[i];
    for (std::size_t i = 0; i < upper_.size(); ++i) {
        upper_[i] |= other.upper_[i];
        lower_[i] |= other.lower_[i];
        topk_[i] |= other.topk_[i];
        nc_[i] |= other.nc_[i];
    }
    patterns_.insert(other.patterns_.begin(), other.patterns_.end());
    inputs_seen_ += other.inputs_seen_;
}

bool CoverageState::section_hit(std::size_t neuron, std::size_t section) const {
    return (sections_[neuron * words_ + section / 64] >> (section % 64)) & 1u;
}

std::size_t CoverageState::sections_hit(std::size_t neuron) const {
    std::size_t c = 0;
    for (std::size_t w = 0; w < words_; ++w) c += std::popcount(sections_[neuron * words_ + w]);
    return c;
}

CoverageState::Raw CoverageState::raw() const {
    return {sections_, upper_, lower_, topk_, nc_, patterns_, inputs_seen_};
}

CoverageState CoverageState::from_raw(std::uint64_t model_id, NeuronProfile profile,
                                      CoverageConfig config, Raw raw) {
    CoverageState s(model_id, std::move(profile), config);
    const auto n = s.upper_.size();
    if (raw.sections.size() != s.sections_.size() || raw.upper.size() != n ||
        raw.lower.size() != n || raw.topk.size() != n || raw.nc.size() != n) {
        throw DimensionError("coverage state storage does not match its bindings");
    }
    // Bits past k_sections in the last word must stay clear.
    if (s.config_.k_sections % 64 != 0) {
        const std::uint64_t tail = ~((std::uint64_t{1} << (s.config_.k_sections % 64)) - 1);
        for (std::size_t i = 0; i < n; ++i) {
            if (raw.sections[i * s.words_ + s.words_ - 1] & tail) {
                throw DimensionError("coverage state has section bits beyond k_sections");
            }
        }
    }
    for (const auto* flags : {&raw.upper, &raw.lower, &raw.topk, &raw.nc}) {
        for (auto f : *flags) {
            if (f > 1) throw DimensionError("coverage state flag is neither 0 nor 1");
        }
    }
    if (raw.patterns.size() > raw.inputs_seen) {
        throw DimensionError("coverage state holds more patterns than inputs seen");
    }
    std::vector<std::uint8_t> pattern_neurons(n, 0);
    for (const auto& p : raw.patterns) check_pattern(p, s.layer_sizes(), s.config_.top_k, pattern_neurons);
    if (pattern_neurons != raw.topk) {
        throw DimensionError("coverage state top-k flags disagree with its patterns");
    }
    s.sections_ = std::move(raw.sections);
    s.upper_ = std::move(raw.upper);
    s.lower_ = std::move(raw.lower);
    s.topk_ = std::move(raw.topk);
    s.nc_ = std::move(raw.nc);
    s.patterns_ = std::move(raw.patterns);
    s.inputs_seen_ = raw.inputs_seen;
    return s;
}

CoverageState merge(CoverageState a, const CoverageState& b) {
    a.merge(b);
    return a;
}

CoverageReport make_report(const CoverageCounts& counts, std::uint64_t inputs_seen,
                           const CoverageConfig& config, std::uint64_t model_id,
                           std::uint64_t profile_hash) {
    CoverageReport r;
    r.counts = counts;
    r.inputs_seen = inputs_seen;
    r.config = config;
    r.model_id = model_id;
    r.profile_hash = profile_hash;
    r.tknp = counts.patterns;
    if (counts.neurons == 0) return r;
    const double n = static_cast<double>(counts.neurons);
    r.kmnc = static_cast<double>(counts.covered_sections) /
             (static_cast<double>(config.k_sections) * n);
    r.nbc = static_cast<double>(counts.upper_corner_neurons + counts.lower_corner_neurons) / (2.0 * n);
    r.snac = static_cast<double>(counts.upper_corner_neurons) / n;
    r.tknc = static_cast<double>(counts.topk_neurons) / n;
    r.nc = static_cast<double>(counts.nc_neurons) / n;
    return r;
}

CoverageReport report(const CoverageState& state) {
    CoverageCounts c;
    c.neurons = state.num_neurons();
    for (std::size_t i = 0; i < state.num_neurons(); ++i) {
        c.covered_sections += state.sections_hit(i);
        c.upper_corner_neurons += state.upper_hit(i);
        c.lower_corner_neurons += state.lower_hit(i);
        c.topk_neurons += state.topk_hit(i);
        c.nc_neurons += state.nc_hit(i);
    }
    c.patterns = state.patterns().size();
    return make_report(c, state.inputs_seen(), state.config(), state.model_id(),
                       state.profile_hash());
}

CoverageDelta diff(const CoverageReport& base, const CoverageReport& extended) {
    if (base.model_id != extended.model_id || base.profile_hash != extended.profile_hash ||
        !(base.config == extended.config)) {
        throw BindingError("reports are not comparable: model " + to_hex(base.model_id) + " vs " +
                           to_hex(extended.model_id) + ", profile " + to_hex(base.profile_hash) +
                           " vs " + to_hex(extended.profile_hash) +
                           (base.config == extended.config ? "" : ", configs differ"));
    }
    CoverageDelta d;
    d.kmnc = extended.kmnc - base.kmnc;
    d.nbc = extended.nbc - base.nbc;
    d.snac = extended.snac - base.snac;
    d.tknc = extended.tknc - base.tknc;
    d.nc = extended.nc - base.nc;
    d.tknp = static_cast<std::int64_t>(extended.tknp) - static_cast<std::int64_t>(base.tknp);
    d.inputs = static_cast<std::int64_t>(extended.inputs_seen) -
               static_cast<std::int64_t>(base.inputs_seen);
    return d;
}

}  // namespace nncov
