#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>

#include "hflow/tensor_field.hpp"

namespace hflow {

/// Closed-form matrix field with closed-form first and second partials.
/// entry(i,j,x) is the (i,j) matrix element at point x; d1 adds one
/// derivative direction r; d2 adds a second direction s (d_s d_r entry).
/// The optional matrix-level evaluators return whole matrices at once;
/// recipes whose entries share work (e.g. a matrix exponential) provide
/// them so consumers avoid re-deriving every element separately.
struct AnalyticFrame {
    int n = 0;
    std::function<double(int, int, std::span<const double>)> entry;
    std::function<double(int, int, int, std::span<const double>)> d1;
    std::function<double(int, int, int, int, std::span<const double>)> d2;
    std::function<Eigen::MatrixXd(std::span<const double>)> matrix;
    std::function<Eigen::MatrixXd(std::span<const double>, int)> matrix_d1;
    std::function<Eigen::MatrixXd(std::span<const double>, int, int)> matrix_d2;
};

/// Whole-matrix evaluation helpers: use the bulk closures when present,
/// assemble from scalar accessors otherwise.
Eigen::MatrixXd analytic_matrix(const AnalyticFrame& af, std::span<const double> x);
Eigen::MatrixXd analytic_matrix_d1(const AnalyticFrame& af, std::span<const double> x, int r);
Eigen::MatrixXd analytic_matrix_d2(const AnalyticFrame& af, std::span<const double> x, int r, int s);

/// An invertible matrix at every chart node. Direct orientation carries the
/// splitting (first index coord-up, second rn-down); the inverse orientation
/// swaps both tags. Sampled values are always materialized; an analytic
/// backing, when present, supplies exact off-grid values and derivatives.
class FrameField {
public:
    static constexpr double kDetFloor = 1e-8;

    static FrameField from_values(TensorField values,
                                  std::shared_ptr<const AnalyticFrame> analytic = nullptr);
    static FrameField from_function(std::shared_ptr<const Chart> chart,
                                    const std::function<double(int, int, std::span<const double>)>& fn);
    static FrameField from_analytic(std::shared_ptr<const Chart> chart,
                                    std::shared_ptr<const AnalyticFrame> analytic);

    const Chart& chart() const { return values_.chart(); }
    std::shared_ptr<const Chart> chart_ptr() const { return values_.chart_ptr(); }
    int dim() const { return values_.dim(); }
    const TensorField& values() const { return values_; }
    TensorField& values() { return values_; }

    bool has_analytic() const { return static_cast<bool>(analytic_); }
    const AnalyticFrame& analytic() const { return *analytic_; }
    std::shared_ptr<const AnalyticFrame> analytic_ptr() const { return analytic_; }

    Eigen::MatrixXd matrix_at(std::size_t node) const;
    void set_matrix_at(std::size_t node, const Eigen::MatrixXd& m);

    /// Off-grid evaluation through the analytic backing. Throws ConfigError
    /// when no backing is present (sampled frames evaluate off-grid through
    /// groupoid evaluators, which interpolate).
    Eigen::MatrixXd eval(std::span<const double> x) const;
    Eigen::MatrixXd eval_d1(std::span<const double> x, int r) const;
    Eigen::MatrixXd eval_d2(std::span<const double> x, int r, int s) const;

    double min_abs_det() const;

    /// Verifies min |det| > kDetFloor and finiteness; throws
    /// SingularFrameError / NumericalError naming the offending node.
    void check_invertible() const;

private:
    FrameField(TensorField values, std::shared_ptr<const AnalyticFrame> analytic);

    TensorField values_;
    std::shared_ptr<const AnalyticFrame> analytic_;
};

/// Pointwise matrix inverse with index tags swapped between the direct and
/// inverse orientations; wraps the analytic backing when present.
FrameField invert_frame(const FrameField& frame);

} // namespace hflow
