#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include <hflow/frame_field.hpp>

namespace hflow {

/// Pointwise second-order data of a frame: the matrix E, its inverse F, and
/// the first and second coordinate partials of E at every node. Analytic
/// frames fill the partials from their closed forms; sampled frames fall back
/// to the chart's grid differentiation scheme. All downstream invariants
/// (connection, torsion, curvature, metric, evolution operator) are assembled
/// from this data alone.
///
/// Buffers are node-major; matrices are row-major to match TensorField
/// component layout.
class FrameJet {
public:
    using MatMap = Eigen::Map<
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    static FrameJet build(const FrameField& frame);

    const Chart& chart() const { return *chart_; }
    std::shared_ptr<const Chart> chart_ptr() const { return chart_; }
    int dim() const { return n_; }
    std::size_t node_count() const { return chart_->node_count(); }

    /// E at a node: coordinate index up (rows), reference index down (cols).
    MatMap e(std::size_t node) const { return {e_.data() + node * nn_, n_, n_}; }
    /// F = E^{-1}: reference index up (rows), coordinate index down (cols).
    MatMap f(std::size_t node) const { return {f_.data() + node * nn_, n_, n_}; }
    /// dE_r = partial of E along coordinate r.
    MatMap de(std::size_t node, int r) const {
        return {de_.data() + (node * static_cast<std::size_t>(n_) + static_cast<std::size_t>(r)) * nn_,
                n_, n_};
    }
    /// ddE_{sr} = partial_s partial_r E (symmetric in s,r up to the grid
    /// scheme's rounding).
    MatMap dde(std::size_t node, int s, int r) const {
        const std::size_t slot =
            node * static_cast<std::size_t>(n_ * n_) +
            static_cast<std::size_t>(s * n_ + r);
        return {dde_.data() + slot * nn_, n_, n_};
    }

    /// Connection matrix A_r = dE_r * F (rows: coordinate up; cols:
    /// coordinate down).
    Eigen::MatrixXd a(std::size_t node, int r) const { return de(node, r) * f(node); }

    /// d_s A_r = ddE_{sr} * F - A_r * A_s.
    Eigen::MatrixXd da(std::size_t node, int s, int r) const {
        const Eigen::MatrixXd ar = a(node, r);
        const Eigen::MatrixXd as = a(node, s);
        return dde(node, s, r) * f(node) - ar * as;
    }

private:
    std::shared_ptr<const Chart> chart_;
    int n_ = 0;
    std::size_t nn_ = 0; ///< n*n doubles per matrix
    std::vector<double> e_, f_, de_, dde_;
};

} // namespace hflow
