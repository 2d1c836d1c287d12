#include "nncov/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nncov/errors.hpp"
#include "nncov/rng.hpp"

namespace nncov {

bool Dataset::operator==(const Dataset& o) const {
    return input_size == o.input_size && num_classes == o.num_classes &&
           inputs.rows() == o.inputs.rows() && inputs.cols() == o.inputs.cols() &&
           inputs == o.inputs && labels == o.labels && input_ids == o.input_ids &&
           provenance == o.provenance;
}

void check_dataset(const Dataset& ds) {
    const auto n = ds.labels.size();
    if (ds.input_size == 0) throw ArgumentError("dataset input_size must be positive");
    if (ds.num_classes == 0) throw ArgumentError("dataset num_classes must be positive");
    if (static_cast<std::size_t>(ds.inputs.rows()) != n ||
        (n > 0 && static_cast<std::size_t>(ds.inputs.cols()) != ds.input_size)) {
        throw ArgumentError("dataset inputs " + shape_string(ds.inputs) + " do not match " +
                            std::to_string(n) + " labels x " + std::to_string(ds.input_size));
    }
    if (ds.input_ids.size() != n) {
        throw ArgumentError("dataset has " + std::to_string(ds.input_ids.size()) + " ids for " +
                            std::to_string(n) + " rows");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (ds.labels[i] >= ds.num_classes) {
            throw ArgumentError("label " + std::to_string(ds.labels[i]) + " at row " +
                                std::to_string(i) + " exceeds num_classes " +
                                std::to_string(ds.num_classes));
        }
    }
}

std::vector<std::string> index_ids(std::size_t count) {
    std::vector<std::string> ids;
    ids.reserve(count);
    for (std::size_t i = 0; i < count; ++i) ids.push_back(std::to_string(i));
    return ids;
}

Dataset slice(const Dataset& ds, std::size_t begin, std::size_t end) {
    if (begin > end || end > ds.size()) throw ArgumentError("slice out of range");
    Dataset out;
    out.input_size = ds.input_size;
    out.num_classes = ds.num_classes;
    out.provenance = ds.provenance;
    const auto rows = static_cast<Eigen::Index>(end - begin);
    out.inputs = ds.inputs.middleRows(static_cast<Eigen::Index>(begin), rows);
    out.labels.assign(ds.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      ds.labels.begin() + static_cast<std::ptrdiff_t>(end));
    out.input_ids.assign(ds.input_ids.begin() + static_cast<std::ptrdiff_t>(begin),
                         ds.input_ids.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.input_size != b.input_size || a.num_classes != b.num_classes) {
        throw ArgumentError("cannot concatenate datasets with different input_size/num_classes");
    }
    Dataset out;
    out.input_size = a.input_size;
    out.num_classes = a.num_classes;
    out.provenance = a.provenance == b.provenance ? a.provenance : a.provenance + "+" + b.provenance;
    out.inputs.resize(a.inputs.rows() + b.inputs.rows(), static_cast<Eigen::Index>(a.input_size));
    if (a.inputs.rows() > 0) out.inputs.topRows(a.inputs.rows()) = a.inputs;
    if (b.inputs.rows() > 0) out.inputs.bottomRows(b.inputs.rows()) = b.inputs;
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.input_ids = a.input_ids;
    out.input_ids.insert(out.input_ids.end(), b.input_ids.begin(), b.input_ids.end());
    return out;
}

namespace {

// Box-Muller pair from u1 in (0, 1] and u2 in [0, 1).
std::pair<double, double> normal_pair(SplitMix64& rng) {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
}

float unit_clamp(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

Dataset make_synthetic_dataset(SyntheticKind kind, std::size_t n, std::uint64_t seed) {
    if (n < 2) throw ArgumentError("synthetic dataset needs n >= 2, got " + std::to_string(n));
    SplitMix64 rng(seed);
    Dataset ds;
    ds.input_size = 2;
    ds.num_classes = 2;
    ds.inputs.resize(static_cast<Eigen::Index>(n), 2);
    ds.labels.resize(n);
    ds.input_ids = index_ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto label = static_cast<std::uint32_t>(i % 2);
        const auto row = static_cast<Eigen::Index>(i);
        ds.labels[i] = label;
        if (kind == SyntheticKind::blobs) {
            const double center = label == 0 ? 0.25 : 0.75;
            const auto [z0, z1] = normal_pair(rng);
            ds.inputs(row, 0) = unit_clamp(center + 0.08 * z0);
            ds.inputs(row, 1) = unit_clamp(center + 0.08 * z1);
        } else {
            const double t = std::numbers::pi * rng.uniform();
            double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
            double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
            const auto [z0, z1] = normal_pair(rng);
            x += 0.1 * z0;
            y += 0.1 * z1;
            ds.inputs(row, 0) = unit_clamp((x + 1.0) / 3.0);
            ds.inputs(row, 1) = unit_clamp((y + 0.5) / 1.5);
        }
    }
    ds.provenance = std::string("synthetic:") + (kind == SyntheticKind::blobs ? "blobs" : "moons") +
                    ":n=" + std::to_string(n) + ":seed=" + std::to_string(seed);
    return ds;
}

}  // namespace nncov
