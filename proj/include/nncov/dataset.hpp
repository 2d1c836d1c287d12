#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nncov/tensor.hpp"

namespace nncov {

/// Labelled inputs, one row per example.
struct Dataset {
    std::size_t input_size = 0;
    std::size_t num_classes = 0;
    Tensor inputs;                       // count x input_size
    std::vector<std::uint32_t> labels;   // count entries, each < num_classes
    std::vector<std::string> input_ids;  // count entries
    std::string provenance;

    std::size_t size() const { return labels.size(); }
    auto input(std::size_t i) const { return inputs.row(static_cast<Eigen::Index>(i)); }

    /// Value equality (shape-aware; floats compared with ==).
    bool operator==(const Dataset& o) const;
};

/// Validates the structural invariants; throws ArgumentError.
void check_dataset(const Dataset& ds);

/// Default ids are the decimal row indices.
std::vector<std::string> index_ids(std::size_t count);

/// Rows [begin, end) of a dataset, ids and labels included.
Dataset slice(const Dataset& ds, std::size_t begin, std::size_t end);

/// Row-wise concatenation. Both datasets must agree on input_size and num_classes.
Dataset concat(const Dataset& a, const Dataset& b);

enum class SyntheticKind { blobs, moons };

/// Seeded two-class 2-D dataset with inputs in [0,1]^2 and alternating labels.
///
/// blobs: centers (0.25,0.25) and (0.75,0.75), sigma 0.08, one Box-Muller pair per point.
/// moons: upper arc (cos t, sin t) and lower arc (1 - cos t, 0.5 - sin t) with
///        t ~ U[0, pi), Gaussian noise sigma 0.1, mapped affinely from
///        [-1,2]x[-0.5,1] onto [0,1]^2.
/// Coordinates are clamped to [0,1] after scaling.
Dataset make_synthetic_dataset(SyntheticKind kind, std::size_t n, std::uint64_t seed);

}  // namespace nncov
