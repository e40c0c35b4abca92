#pragma once

#include <complex>
#include <span>
#include <vector>

#include "hflow/tensor_field.hpp"

namespace hflow {

/// Off-grid evaluation of a sampled field: trigonometric interpolation on
/// periodic charts (exact for band-limited data), natural cubic splines on
/// open boxes. Built once per field, then evaluated at arbitrary points.
class FieldInterpolant {
public:
    explicit FieldInterpolant(const TensorField& f);

    int dim() const { return static_cast<int>(resolution_.size()); }
    std::size_t comps() const { return comps_; }

    /// Evaluates every component at x; out must hold comps() values.
    void eval(std::span<const double> x, std::span<double> out) const;

private:
    ChartKind kind_;
    std::vector<int> resolution_;
    std::vector<double> origin_;
    std::vector<double> length_;
    std::size_t comps_;
    // periodic: full complex spectrum per component, component-major
    std::vector<std::vector<std::complex<double>>> spectra_;
    // open box: raw node values per component, component-major
    std::vector<std::vector<double>> grids_;
};

} // namespace hflow
