#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hflow/frame_field.hpp"
#include "hflow/interpolate.hpp"

namespace hflow {

/// Two-point frame comparison: the matrix carrying frame components at x to
/// frame components at y, factored through the reference basis as
/// direct(y) * inverse(x). Analytic frames evaluate their closed forms at
/// arbitrary points; sampled frames evaluate through off-grid interpolants of
/// the matrix values and their grid first derivatives. The factored form
/// makes the composition law
///   pair(z, y) * pair(x, z) = pair(x, y)
/// and the diagonal identity pair(x, x) = I hold to rounding by
/// construction.
class TwoPointSplitting {
public:
    explicit TwoPointSplitting(const FrameField& frame);

    int dim() const { return n_; }
    const Chart& chart() const { return *chart_; }
    std::shared_ptr<const Chart> chart_ptr() const { return chart_; }

    /// Frame matrix at an arbitrary point; throws ConfigError outside the
    /// chart.
    Eigen::MatrixXd direct(std::span<const double> x) const;

    /// Pointwise inverse of `direct`; throws SingularFrameError at points
    /// where the interpolated matrix degenerates.
    Eigen::MatrixXd inverse(std::span<const double> x) const;

    /// The two-point matrix direct(y) * inverse(x).
    Eigen::MatrixXd pair(std::span<const double> x, std::span<const double> y) const;

    /// Connection matrix A_r(x): (d_r direct) * inverse at x. The pair matrix
    /// differentiates as d_{x^r} pair = -pair * A_r(x) and
    /// d_{y^r} pair = A_r(y) * pair.
    Eigen::MatrixXd connection_matrix(std::span<const double> x, int r) const;

    /// All connection matrices at x with the frame data evaluated once.
    std::vector<Eigen::MatrixXd> connection_matrices(std::span<const double> x) const;

    /// sum_r v^r A_r(x), evaluating the frame data once.
    Eigen::MatrixXd connection_contraction(std::span<const double> x,
                                           std::span<const double> v) const;

private:
    std::shared_ptr<const Chart> chart_;
    int n_ = 0;
    std::shared_ptr<const AnalyticFrame> analytic_;
    std::shared_ptr<const FieldInterpolant> values_;
    std::shared_ptr<const FieldInterpolant> derivatives_;
};

/// Obstruction to solving the development PDE through the point pair (x, y):
/// for each up index i and antisymmetric pair (j, k),
///   out[(i*n + j)*n + k] =
///     [d_{x^j} pair^i_k + d_{y^a} pair^i_k * pair^a_j] - (j <-> k).
/// Vanishes at y = x for every frame; vanishes at all pairs exactly for the
/// group frames in the catalog.
std::vector<double> groupoid_curvature(const TwoPointSplitting& s, std::span<const double> x,
                                       std::span<const double> y);

/// Central difference in t of the two-point obstruction at (x, x + t*xi) at
/// t = 0; components (i, j, k) as above. Matches the frame curvature with its
/// acting index contracted against xi. step = 0 picks 1e-5 of the smallest
/// axis extent scaled down by sup|xi| when that exceeds one. Throws
/// ConfigError when the probe points leave the chart.
std::vector<double> linearize_groupoid_curvature(const TwoPointSplitting& s,
                                                 std::span<const double> x,
                                                 std::span<const double> xi, double step = 0.0);

/// A development: base-path samples, transported solution samples, the
/// candidate Jacobian, and the discrepancy between that Jacobian and the
/// two-point matrix. The Jacobian follows the prolonged transport system a
/// genuine solution's derivative would satisfy; when the two-point
/// obstruction vanishes along the path it coincides with the two-point
/// matrix up to integration error (shrinking at the integrator's order),
/// and otherwise the discrepancy grows at the obstruction's rate — it is
/// the per-sample report of whether the transport equations are solvable.
struct Development {
    std::vector<double> s;                  ///< polygonal arclength at samples
    std::vector<std::vector<double>> base;  ///< c(s)
    std::vector<std::vector<double>> value; ///< f(s)
    std::vector<double> residual_at;        ///< sup|jet - pair(c, f)| per sample
    Eigen::MatrixXd terminal_jet;           ///< transported Jacobian at the end
    double residual = 0.0;                  ///< max of residual_at

    const std::vector<double>& terminal() const { return value.back(); }
};

/// Integrates df/ds = pair(c(s), f) * dc/ds with f(p) = q along the polygonal
/// base path (which must start at p), transporting the candidate Jacobian
/// alongside via the prolonged system
///   dJ^i_k/ds = sum_a (A_a(f) df/ds)^i J^a_k - (pair * A_k(c) * dc/ds)^i,
///   J(0) = pair(p, q),
/// with classical 4th-order Runge-Kutta, `steps` total steps split across
/// segments by length. Throws ConfigError for malformed inputs and
/// NumericalError when the transported point leaves the chart.
Development develop(const TwoPointSplitting& s, std::span<const double> p,
                    std::span<const double> q, const std::vector<std::vector<double>>& path,
                    int steps);

/// Straight-segment development from base p with initial value q to base
/// point `target`.
Development develop_segment(const TwoPointSplitting& s, std::span<const double> p,
                            std::span<const double> q, std::span<const double> target, int steps);

/// Development of the identity pair (p, p) around a closed polygonal loop:
/// reports how far the transported point and Jacobian return from where they
/// started. Exactly zero deviation characterizes frames whose developments
/// depend only on endpoints within the chart.
struct MonodromyReport {
    std::vector<double> displacement; ///< f(end) - p
    Eigen::MatrixXd terminal_jet;
    double jet_deviation = 0.0; ///< sup|terminal_jet - I|
    double residual = 0.0;      ///< develop residual along the loop
};
MonodromyReport monodromy(const TwoPointSplitting& s, std::span<const double> p,
                          const std::vector<std::vector<double>>& loop, int steps);

/// Derivative of the development value at base q with respect to the initial
/// value at base p: column j is the central difference of
/// develop(p, p +- h e_j, p -> q) endpoints. h = 0 picks 1e-4 of the smallest
/// axis extent. The result is the companion two-point matrix whose
/// y-derivative at y = x reproduces the connection with its lower indices
/// swapped relative to `pair`.
Eigen::MatrixXd tilde_splitting(const TwoPointSplitting& s, std::span<const double> p,
                                std::span<const double> q, double h = 0.0, int steps = 256);

/// CSV rows (s, c components, f components, residual) with round-trip float
/// formatting; header row first.
std::string development_csv(const Development& dev);
void development_csv(const Development& dev, std::ostream& out);

} // namespace hflow
