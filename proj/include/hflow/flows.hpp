#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hflow/frame_calculus.hpp"
#include "hflow/frame_field.hpp"
#include "hflow/tensor_field.hpp"

namespace hflow {

/// How an integration run ended.
///  - completed:    reached the requested final time.
///  - blow_up:      a state invariant failed (determinant collapsed below the
///                  floor, magnitude exceeded the ceiling, or the step size
///                  underflowed while error control kept rejecting); the
///                  reported final state is the last one that satisfied every
///                  invariant, so the failure time can be refined by re-running
///                  on the bracketed interval.
///  - step_failure: arithmetic broke down (non-finite values) in a way that is
///                  a property of the scheme rather than of the trajectory;
///                  the last clean state is reported.
enum class FlowTermination { completed, blow_up, step_failure };

const char* flow_termination_name(FlowTermination termination);

/// Fully evaluated snapshot of an evolving frame: the frame itself plus the
/// derived quantities consumers repeatedly need and the health indicators the
/// integrators watch.
struct FlowState {
    double t;
    FrameField frame;
    Connection conn;
    TensorField torsion;
    TensorField curvature;
    CanonicalMetric metric;
    double min_abs_det;
    double sup_frame;
};

/// Build the full snapshot for a frame at a given time.
FlowState flow_state(double t, FrameField frame);

/// Scalar diagnostics recorded at each accepted time step.
struct FlowSample {
    double t;
    double sup_torsion;
    double sup_curvature;
    double sup_operator;
    double min_abs_det;
    double sup_frame;
};

/// Tuning and reporting knobs for the grid evolutions.
struct FlowOptions {
    /// Declare blow-up when min |det| over nodes drops below this.
    double det_floor = 1e-6;
    /// Declare blow-up when any frame entry exceeds this in magnitude.
    double magnitude_ceiling = 1e6;
    /// Keep a copy of the frame values at every accepted time (and at t = 0).
    bool record_snapshots = false;
};

/// Result of a grid evolution: per-time diagnostics, optional state
/// snapshots, and how/where the run ended. `final_values` always holds the
/// last state that satisfied every invariant; `final_time` its time.
struct FlowTrace {
    explicit FlowTrace(double t0, TensorField initial_values);

    std::vector<FlowSample> samples;
    std::vector<std::pair<double, TensorField>> snapshots;
    FlowTermination termination = FlowTermination::completed;
    double final_time = 0.0;
    TensorField final_values;
    std::string diagnostic;
};

/// One classical fourth-order step of the frame evolution
/// d eps/dt = H(eps), where H is the second-order operator assembled from the
/// frame's curvature, metric, and torsion. Throws NumericalError if any stage
/// leaves the admissible region (default floors/ceilings).
FrameField hf_pde_step(const FrameField& state, double dt);

/// Method-of-lines integration of d eps/dt = H(eps) from t = 0 to t_end with
/// fixed step dt (the last step is shortened to land on t_end exactly).
/// Spatial derivatives use the chart's grid scheme; time stepping is the
/// classical fourth-order scheme. Requires t_end >= 0 and dt > 0.
FlowTrace hf_pde_integrate(const FrameField& initial, double t_end, double dt,
                           const FlowOptions& options = {});

/// Same time stepping for the gauge-fixed evolution
/// d eps/dt = H(eps) + Wq(eps; reference), where Wq is the reparametrization
/// term built against the fixed reference connection. With reference equal to
/// the connection of the initial frame the correction vanishes at t = 0, so
/// the initial velocity coincides with the plain evolution exactly.
FlowTrace deturck_pde_integrate(const FrameField& initial,
                                const Connection& reference, double t_end,
                                double dt, const FlowOptions& options = {});

/// CSV export: header
/// t,sup_torsion,sup_curvature,sup_operator,min_abs_det,sup_frame
/// and one row per sample, every value printed with %.17g.
std::string flow_trace_csv(const FlowTrace& trace);
void flow_trace_csv(const FlowTrace& trace, std::ostream& out);

/// Matrix trajectory a(t) at one node, produced by the pointwise gauge
/// evolution. gauges[k] is the transition matrix at times[k]; the first
/// sample is (0, identity) exactly. If the run stopped early, `blew_up` is
/// set and `blow_up_estimate` holds the last time reached, with the failing
/// bracket described in `diagnostic`.
struct GaugeTrajectory {
    std::size_t node = 0;
    std::vector<double> times;
    std::vector<Eigen::MatrixXd> gauges;
    bool blew_up = false;
    double blow_up_estimate = 0.0;
    std::string diagnostic;
};

/// Pointwise evolution of the transition matrix a(t) at a single node,
/// driven by the frozen initial data at that node:
///
///   curvature0   flattened ((i*n + j)*n + k)*n + m component block,
///   metric_inv0  inverse metric matrix,
///   frame0       frame matrix.
///
/// The right-hand side is assembled from first principles at every
/// evaluation: b = a^{-1}; the transported curvature a . r0 . b, the
/// transported inverse metric a . ginv0 . a^T, and the transported frame
/// a . frame0 feed the same operator contraction used on the grid,
/// H^i_j = -ginv^{bc} r^i_{ac,b} frame^a_j, and da/dt = H . frame0^{-1}.
///
/// Time integration is an embedded adaptive 4(5) pair (relative tolerance
/// rtol, absolute tolerance atol). t_end may be negative (backward
/// evolution). Samples are emitted at multiples of dt_out plus t_end itself.
/// Blow-up is declared when |a| exceeds 1e6, when the step size falls below
/// 1e-12, or when the right-hand side stops being finite.
GaugeTrajectory gauge_ode_integrate(std::span<const double> curvature0,
                                    const Eigen::MatrixXd& metric_inv0,
                                    const Eigen::MatrixXd& frame0,
                                    double t_end, double dt_out,
                                    std::size_t node = 0, double rtol = 1e-9,
                                    double atol = 1e-12);

/// CSV export: header t,a00,a01,...,a{n-1}{n-1} (row-major matrix entries)
/// and one row per sample time, every value printed with %.17g.
std::string gauge_trajectory_csv(const GaugeTrajectory& trajectory);
void gauge_trajectory_csv(const GaugeTrajectory& trajectory, std::ostream& out);

/// Closed-form solution exp(t * generator) of the constant-coefficient gauge
/// evolution da/dt = generator . a, a(0) = I (one-parameter matrix
/// subgroup). Uses scaling-and-squaring.
Eigen::MatrixXd exp_subgroup(const Eigen::MatrixXd& generator, double t);

/// Model scalar evolution da/dt = rate * a^3: adaptive numerical trajectory
/// together with the closed form a(t) = a0 / sqrt(1 - 2 * rate * a0^2 * t),
/// which has a pole at t = 1 / (2 * rate * a0^2) when rate * a0^2 > 0.
struct ScalarBlowup {
    double a0 = 0.0;
    double rate = 0.0;
    /// Accepted integration times (starting at 0) and values.
    std::vector<double> times;
    std::vector<double> values;
    /// Closed-form pole, when one exists in forward time.
    bool has_pole = false;
    double pole_time = 0.0;
    /// Numerical detection: |a| reached 1e8 (or the step underflowed);
    /// `numeric_estimate` is the time of the last accepted state.
    bool numeric_blow_up = false;
    double numeric_estimate = 0.0;

    /// Closed-form value; valid for t < pole_time when a pole exists.
    double closed_form(double t) const;
};

/// Integrate the model equation from a0 over [0, t_end]. Requires a0 != 0
/// (the zero solution is stationary and carries no information), t_end > 0.
ScalarBlowup scalar_blowup(double a0, double rate, double t_end);

/// Side-by-side comparison of the two routes to the evolved frame:
///  - the grid evolution of d eps/dt = H(eps), and
///  - the per-node matrix evolution, reconstructing eps(t) = a(t) . eps(0).
/// `deviation[k]` is sup over nodes and entries of the reconstruction
/// mismatch at times[k], divided by sup |eps_pde(t_k)|.
struct CrossValidationReport {
    std::vector<double> times;
    std::vector<double> deviation;
    double max_deviation = 0.0;
    FlowTermination pde_termination = FlowTermination::completed;
    bool ode_blew_up = false;
    double ode_time_reached = 0.0;
    std::string diagnostic;
};

/// Run both routes from the same initial frame and frozen initial data
/// (curvature, metric, frame, all evaluated once at t = 0) and compare over
/// the common sample times. If either branch stops early the report covers
/// the interval both reached.
CrossValidationReport cross_validate(const FrameField& initial, double t_end,
                                     double dt, const FlowOptions& options = {});

/// Human-readable rendering: one line per compared time plus a summary line.
std::string cross_validation_report_text(const CrossValidationReport& report);

} // namespace hflow
