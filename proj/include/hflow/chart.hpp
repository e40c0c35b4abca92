#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hflow {

enum class ChartKind {
    periodic_box, ///< flat torus: equispaced nodes, no duplicated endpoint
    open_box      ///< closed interval product: both endpoints are nodes
};

/// A single-chart discretized domain. Nodes are laid out row-major with the
/// last axis fastest; `flatten`/`unflatten` convert between multi-indices and
/// flat node ids.
class Chart {
public:
    Chart(ChartKind kind,
          std::vector<int> resolution,
          std::vector<double> origin,
          std::vector<double> length);

    /// Uniform periodic box (torus) with the same resolution and period on
    /// every axis; nodes at origin + i * period / resolution.
    static Chart periodic(int dim, int resolution, double period, double origin = 0.0);

    /// Uniform open box [lo, hi]^dim including both endpoints on every axis.
    static Chart box(int dim, int resolution, double lo, double hi);

    ChartKind kind() const { return kind_; }
    int dim() const { return static_cast<int>(resolution_.size()); }
    int resolution(int axis) const { return resolution_[static_cast<std::size_t>(axis)]; }
    double origin(int axis) const { return origin_[static_cast<std::size_t>(axis)]; }
    double length(int axis) const { return length_[static_cast<std::size_t>(axis)]; }

    /// Node spacing: length/resolution on periodic axes (no duplicated
    /// endpoint), length/(resolution-1) on open-box axes.
    double spacing(int axis) const;

    /// Coordinate of the idx-th node along an axis.
    double coordinate(int axis, int idx) const;

    std::size_t node_count() const { return node_count_; }

    std::size_t flatten(std::span<const int> idx) const;
    void unflatten(std::size_t node, std::span<int> idx) const;
    std::vector<double> node_position(std::size_t node) const;

    /// Whether a point can be evaluated: always true on a torus (coordinates
    /// wrap), inside the closed box otherwise.
    bool contains(std::span<const double> x) const;

    bool operator==(const Chart& other) const;

private:
    ChartKind kind_;
    std::vector<int> resolution_;
    std::vector<double> origin_;
    std::vector<double> length_;
    std::size_t node_count_ = 0;
};

} // namespace hflow
