#include "hflow/flows.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <utility>

#include <unsupported/Eigen/MatrixFunctions>

#include "hflow/errors.hpp"
#include "hflow/frame_jet.hpp"
#include "hflow/parallel_for.hpp"

namespace hflow {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void append_g17(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

struct StateHealth {
    bool finite = true;
    double min_abs_det = 0.0;
    double sup = 0.0;
};

StateHealth inspect_values(const TensorField& values) {
    const int n = values.dim();
    const std::size_t nodes = values.chart().node_count();
    StateHealth h;
    h.min_abs_det = std::numeric_limits<double>::infinity();
    for (std::size_t node = 0; node < nodes; ++node) {
        const double* p = values.node_data(node);
        for (int c = 0; c < n * n; ++c) {
            const double v = p[c];
            if (!std::isfinite(v)) {
                h.finite = false;
                return h;
            }
            h.sup = std::max(h.sup, std::abs(v));
        }
        Eigen::Map<const RowMat> m(p, n, n);
        h.min_abs_det = std::min(h.min_abs_det, std::abs(m.determinant()));
    }
    return h;
}

bool all_finite(const TensorField& f) {
    const double* p = f.data();
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!std::isfinite(p[i])) return false;
    }
    return true;
}

enum class StateClass { ok, blow_up, step_failure };

StateClass classify(const StateHealth& h, const FlowOptions& opt,
                    std::string& why) {
    if (!h.finite) {
        why = "non-finite frame entry";
        return StateClass::step_failure;
    }
    if (h.min_abs_det < opt.det_floor) {
        why = "min |det| fell below the floor";
        return StateClass::blow_up;
    }
    if (h.sup > opt.magnitude_ceiling) {
        why = "frame magnitude exceeded the ceiling";
        return StateClass::blow_up;
    }
    why.clear();
    return StateClass::ok;
}

std::string bracket_text(double lo, double hi) {
    std::string s = " on step [";
    append_g17(s, lo);
    s += ", ";
    append_g17(s, hi);
    s += "]";
    return s;
}

using RhsFn = std::function<TensorField(const FrameJet&)>;

struct EvalResult {
    std::optional<TensorField> value;
    StateClass cls = StateClass::ok;
    std::string why;
};

/// Evaluate the spatial operator on a candidate state, with the full guard
/// protocol: classify the state first, then run the operator and classify
/// its output.
EvalResult eval_rhs(const TensorField& values, const FlowOptions& opt,
                    const RhsFn& rhs) {
    EvalResult res;
    const StateHealth h = inspect_values(values);
    res.cls = classify(h, opt, res.why);
    if (res.cls != StateClass::ok) return res;
    try {
        FrameField frame = FrameField::from_values(TensorField(values));
        FrameJet jet = FrameJet::build(frame);
        TensorField k = rhs(jet);
        if (!all_finite(k)) {
            res.cls = StateClass::step_failure;
            res.why = "operator produced a non-finite value";
            return res;
        }
        res.value = std::move(k);
        return res;
    } catch (const SingularFrameError& e) {
        res.cls = StateClass::blow_up;
        res.why = e.what();
    } catch (const IdentityViolationError& e) {
        res.cls = StateClass::step_failure;
        res.why = e.what();
    } catch (const NumericalError& e) {
        res.cls = StateClass::step_failure;
        res.why = e.what();
    }
    return res;
}

FlowTermination to_termination(StateClass cls) {
    return cls == StateClass::blow_up ? FlowTermination::blow_up
                                      : FlowTermination::step_failure;
}

/// Number of fixed output steps covering [0, span] with nominal size dt.
/// A span that is a whole multiple of dt (to relative 1e-9) maps to exactly
/// that multiple, so the grid and per-node integrations emit identical
/// sample-time sequences.
std::size_t step_count(double span, double dt) {
    if (span == 0.0) return 0;
    const double ratio = span / dt;
    if (std::abs(ratio - std::round(ratio)) < 1e-9)
        return static_cast<std::size_t>(std::llround(ratio));
    return static_cast<std::size_t>(std::ceil(ratio));
}

/// Fixed-step method-of-lines driver shared by the plain and gauge-fixed
/// evolutions. Step targets are min(k*dt, t_end), so sample times align
/// bitwise with the per-node matrix evolution's output times.
FlowTrace integrate_lines(const FrameField& initial, double t_end, double dt,
                          const FlowOptions& opt, const RhsFn& rhs) {
    if (!std::isfinite(t_end) || t_end < 0.0)
        throw ConfigError("flow integration requires finite t_end >= 0");
    if (!std::isfinite(dt) || dt <= 0.0)
        throw ConfigError("flow integration requires finite dt > 0");
    if (!(opt.det_floor > 0.0) || !(opt.magnitude_ceiling > 0.0))
        throw ConfigError("flow options require positive det_floor and magnitude_ceiling");

    TensorField y = initial.values();
    FlowTrace trace(0.0, TensorField(y));

    auto measure = [&](double t, const TensorField& values) -> FlowSample {
        FrameField frame = FrameField::from_values(TensorField(values));
        FrameJet jet = FrameJet::build(frame);
        Connection conn = connection(jet);
        const TensorField tor = torsion(conn);
        const TensorField curv = algebroid_curvature(conn);
        const TensorField op = rhs(jet);
        const StateHealth h = inspect_values(values);
        return FlowSample{t,
                          norm_sup(tor),
                          norm_sup(curv),
                          norm_sup(op),
                          h.min_abs_det,
                          h.sup};
    };

    // The initial state must itself be admissible.
    {
        const StateHealth h0 = inspect_values(y);
        std::string why;
        const StateClass cls = classify(h0, opt, why);
        if (cls != StateClass::ok) {
            trace.termination = to_termination(cls);
            trace.diagnostic = "initial state rejected: " + why;
            return trace;
        }
    }

    try {
        trace.samples.push_back(measure(0.0, y));
    } catch (const std::runtime_error& e) {
        trace.termination = FlowTermination::step_failure;
        trace.diagnostic =
            std::string("initial diagnostics failed: ") + e.what();
        return trace;
    }
    if (opt.record_snapshots) trace.snapshots.emplace_back(0.0, TensorField(y));

    const std::size_t steps = step_count(t_end, dt);
    double t = 0.0;
    for (std::size_t step = 1; step <= steps; ++step) {
        const double target = std::min(static_cast<double>(step) * dt, t_end);
        const double h = target - t;

        EvalResult k1 = eval_rhs(y, opt, rhs);
        EvalResult k2 = k1.value
                            ? eval_rhs(axpby(1.0, y, 0.5 * h, *k1.value), opt, rhs)
                            : EvalResult{};
        EvalResult k3 = k2.value
                            ? eval_rhs(axpby(1.0, y, 0.5 * h, *k2.value), opt, rhs)
                            : EvalResult{};
        EvalResult k4 = k3.value
                            ? eval_rhs(axpby(1.0, y, h, *k3.value), opt, rhs)
                            : EvalResult{};
        const EvalResult* failed = nullptr;
        if (!k1.value) failed = &k1;
        else if (!k2.value) failed = &k2;
        else if (!k3.value) failed = &k3;
        else if (!k4.value) failed = &k4;
        if (failed) {
            trace.termination = to_termination(failed->cls);
            trace.diagnostic =
                "stage evaluation failed: " + failed->why + bracket_text(t, target);
            return trace;
        }

        TensorField incr = axpby(1.0, *k1.value, 2.0, *k2.value);
        incr = axpby(1.0, incr, 2.0, *k3.value);
        incr = axpby(1.0, incr, 1.0, *k4.value);
        TensorField candidate = axpby(1.0, y, h / 6.0, incr);

        {
            const StateHealth hc = inspect_values(candidate);
            std::string why;
            const StateClass cls = classify(hc, opt, why);
            if (cls != StateClass::ok) {
                trace.termination = to_termination(cls);
                trace.diagnostic =
                    "updated state rejected: " + why + bracket_text(t, target);
                return trace;
            }
        }

        FlowSample sample{};
        try {
            sample = measure(target, candidate);
        } catch (const SingularFrameError& e) {
            trace.termination = FlowTermination::blow_up;
            trace.diagnostic =
                std::string("diagnostics failed: ") + e.what() + bracket_text(t, target);
            return trace;
        } catch (const IdentityViolationError& e) {
            trace.termination = FlowTermination::step_failure;
            trace.diagnostic =
                std::string("diagnostics failed: ") + e.what() + bracket_text(t, target);
            return trace;
        } catch (const NumericalError& e) {
            trace.termination = FlowTermination::step_failure;
            trace.diagnostic =
                std::string("diagnostics failed: ") + e.what() + bracket_text(t, target);
            return trace;
        }

        t = target;
        y = std::move(candidate);
        trace.samples.push_back(sample);
        if (opt.record_snapshots)
            trace.snapshots.emplace_back(t, TensorField(y));
        trace.final_time = t;
        trace.final_values = TensorField(y);
    }
    trace.termination = FlowTermination::completed;
    return trace;
}

/// Dormand-Prince embedded 4(5) pair with standard PI-free step control.
struct Dp45Outcome {
    bool completed = false;
    bool blow_up = false;
    std::string diagnostic;
};

template <typename Rhs, typename OnAccept>
Dp45Outcome dp45_to(Eigen::VectorXd& y, double& t, double t_target, Rhs&& rhs,
                    OnAccept&& on_accept, double rtol, double atol,
                    double sup_ceiling) {
    Dp45Outcome out;
    if (t == t_target) {
        out.completed = true;
        return out;
    }
    constexpr double a21 = 1.0 / 5.0;
    constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
    constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
    constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                     a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
    constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                     a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                     a65 = -5103.0 / 18656.0;
    constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                     b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
    constexpr double e1 = b1 - 5179.0 / 57600.0, e3 = b3 - 7571.0 / 16695.0,
                     e4 = b4 - 393.0 / 640.0, e5 = b5 + 92097.0 / 339200.0,
                     e6 = b6 - 187.0 / 2100.0, e7 = -1.0 / 40.0;
    constexpr double hmin = 1e-12;

    const double dir = (t_target > t) ? 1.0 : -1.0;
    double h = t_target - t;
    const long n = y.size();
    Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y5(n),
        err(n);

    const std::size_t budget = 10'000'000;
    for (std::size_t iter = 0; iter < budget; ++iter) {
        if ((t_target - t) * dir <= 0.0) {
            t = t_target;
            out.completed = true;
            return out;
        }
        if (std::abs(h) > std::abs(t_target - t)) h = t_target - t;
        const bool final_step = (h == t_target - t);

        k1 = rhs(y);
        k2 = rhs((y + h * (a21 * k1)).eval());
        k3 = rhs((y + h * (a31 * k1 + a32 * k2)).eval());
        k4 = rhs((y + h * (a41 * k1 + a42 * k2 + a43 * k3)).eval());
        k5 = rhs((y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)).eval());
        k6 = rhs(
            (y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5))
                .eval());
        y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        k7 = rhs(y5);
        const bool stages_finite = k1.allFinite() && k2.allFinite() &&
                                   k3.allFinite() && k4.allFinite() &&
                                   k5.allFinite() && k6.allFinite() &&
                                   k7.allFinite() && y5.allFinite();
        if (!stages_finite) {
            h *= 0.5;
            if (std::abs(h) < hmin) {
                out.blow_up = true;
                out.diagnostic = "right-hand side stopped being finite" +
                                 bracket_text(t, t + 2.0 * h);
                return out;
            }
            continue;
        }

        err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double acc = 0.0;
        for (long i = 0; i < n; ++i) {
            const double sc =
                atol + rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
            const double q = err[i] / sc;
            acc += q * q;
        }
        const double err_norm = std::sqrt(acc / static_cast<double>(n));

        if (err_norm <= 1.0) {
            t = final_step ? t_target : t + h;
            y = y5;
            on_accept(t, y);
            if (y.lpNorm<Eigen::Infinity>() > sup_ceiling) {
                out.blow_up = true;
                out.diagnostic = "state magnitude exceeded the ceiling at t=";
                append_g17(out.diagnostic, t);
                return out;
            }
            if (final_step) {
                out.completed = true;
                return out;
            }
        }
        const double factor =
            (err_norm == 0.0)
                ? 5.0
                : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
        h *= factor;
        if (std::abs(h) < hmin) {
            out.blow_up = true;
            out.diagnostic = "step size underflow at t=";
            append_g17(out.diagnostic, t);
            return out;
        }
    }
    out.diagnostic = "iteration budget exhausted";
    return out;
}

} // namespace

const char* flow_termination_name(FlowTermination termination) {
    switch (termination) {
    case FlowTermination::completed: return "completed";
    case FlowTermination::blow_up: return "blow-up";
    case FlowTermination::step_failure: return "step-failure";
    }
    return "unknown";
}

FlowState flow_state(double t, FrameField frame) {
    FrameJet jet = FrameJet::build(frame);
    Connection conn = connection(jet);
    TensorField tor = torsion(conn);
    TensorField curv = algebroid_curvature(conn);
    CanonicalMetric met = canonical_metric(jet);
    const StateHealth h = inspect_values(frame.values());
    return FlowState{t,
                     std::move(frame),
                     std::move(conn),
                     std::move(tor),
                     std::move(curv),
                     std::move(met),
                     h.min_abs_det,
                     h.sup};
}

FlowTrace::FlowTrace(double t0, TensorField initial_values)
    : final_time(t0), final_values(std::move(initial_values)) {}

FrameField hf_pde_step(const FrameField& state, double dt) {
    FlowTrace trace = hf_pde_integrate(state, dt, dt);
    if (trace.termination != FlowTermination::completed)
        throw NumericalError("evolution step failed: " + trace.diagnostic);
    return FrameField::from_values(std::move(trace.final_values));
}

FlowTrace hf_pde_integrate(const FrameField& initial, double t_end, double dt,
                           const FlowOptions& options) {
    return integrate_lines(initial, t_end, dt, options,
                           [](const FrameJet& jet) {
                               return homogeneous_operator(jet);
                           });
}

FlowTrace deturck_pde_integrate(const FrameField& initial,
                                const Connection& reference, double t_end,
                                double dt, const FlowOptions& options) {
    if (reference.gamma.dim() != initial.dim() ||
        reference.gamma.chart().node_count() !=
            initial.chart().node_count())
        throw ConfigError(
            "reference connection does not match the initial frame's chart");
    const Connection* ref = &reference;
    return integrate_lines(initial, t_end, dt, options,
                           [ref](const FrameJet& jet) {
                               TensorField h = homogeneous_operator(jet);
                               TensorField w = deturck_operator(jet, ref);
                               return axpby(1.0, h, 1.0, w);
                           });
}

std::string flow_trace_csv(const FlowTrace& trace) {
    std::string out =
        "t,sup_torsion,sup_curvature,sup_operator,min_abs_det,sup_frame\n";
    for (const FlowSample& s : trace.samples) {
        append_g17(out, s.t);
        out += ',';
        append_g17(out, s.sup_torsion);
        out += ',';
        append_g17(out, s.sup_curvature);
        out += ',';
        append_g17(out, s.sup_operator);
        out += ',';
        append_g17(out, s.min_abs_det);
        out += ',';
        append_g17(out, s.sup_frame);
        out += '\n';
    }
    return out;
}

void flow_trace_csv(const FlowTrace& trace, std::ostream& out) {
    out << flow_trace_csv(trace);
}

GaugeTrajectory gauge_ode_integrate(std::span<const double> curvature0,
                                    const Eigen::MatrixXd& metric_inv0,
                                    const Eigen::MatrixXd& frame0,
                                    double t_end, double dt_out,
                                    std::size_t node, double rtol,
                                    double atol) {
    const long n = frame0.rows();
    if (n < 1 || frame0.cols() != n)
        throw ConfigError("gauge evolution requires a square frame matrix");
    if (metric_inv0.rows() != n || metric_inv0.cols() != n)
        throw ConfigError("inverse metric shape does not match the frame");
    const std::size_t n4 = static_cast<std::size_t>(n) * static_cast<std::size_t>(n) *
                           static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    if (curvature0.size() != n4)
        throw ConfigError("curvature block size does not match the dimension");
    if (!std::isfinite(t_end))
        throw ConfigError("gauge evolution requires finite t_end");
    if (!std::isfinite(dt_out) || dt_out <= 0.0)
        throw ConfigError("gauge evolution requires dt_out > 0");
    if (!(rtol > 0.0) || !(atol > 0.0))
        throw ConfigError("gauge evolution requires positive tolerances");
    Eigen::MatrixXd frame0_inv = frame0.inverse();
    if (!frame0_inv.allFinite())
        throw ConfigError("frame matrix is not invertible");

    const std::vector<double> r0(curvature0.begin(), curvature0.end());
    const Eigen::MatrixXd ginv0 = metric_inv0;
    const Eigen::MatrixXd e0 = frame0;
    const int ni = static_cast<int>(n);

    auto rhs = [&](const Eigen::VectorXd& yy) -> Eigen::VectorXd {
        Eigen::Map<const RowMat> a(yy.data(), ni, ni);
        const Eigen::MatrixXd b = a.inverse();
        // Transported curvature: first contract the upper index with a,
        // then the acting index with b.
        std::vector<double> tmp(n4, 0.0), rt(n4, 0.0);
        for (int i = 0; i < ni; ++i)
            for (int j = 0; j < ni; ++j)
                for (int k = 0; k < ni; ++k)
                    for (int bb = 0; bb < ni; ++bb) {
                        double s = 0.0;
                        for (int aa = 0; aa < ni; ++aa)
                            s += a(i, aa) *
                                 r0[static_cast<std::size_t>(
                                     ((aa * ni + j) * ni + k) * ni + bb)];
                        tmp[static_cast<std::size_t>(
                            ((i * ni + j) * ni + k) * ni + bb)] = s;
                    }
        for (int i = 0; i < ni; ++i)
            for (int j = 0; j < ni; ++j)
                for (int k = 0; k < ni; ++k)
                    for (int m = 0; m < ni; ++m) {
                        double s = 0.0;
                        for (int bb = 0; bb < ni; ++bb)
                            s += tmp[static_cast<std::size_t>(
                                     ((i * ni + j) * ni + k) * ni + bb)] *
                                 b(bb, m);
                        rt[static_cast<std::size_t>(
                            ((i * ni + j) * ni + k) * ni + m)] = s;
                    }
        const Eigen::MatrixXd gi = a * ginv0 * a.transpose();
        const Eigen::MatrixXd et = a * e0;
        Eigen::MatrixXd hop = Eigen::MatrixXd::Zero(ni, ni);
        for (int i = 0; i < ni; ++i)
            for (int j = 0; j < ni; ++j) {
                double s = 0.0;
                for (int aa = 0; aa < ni; ++aa)
                    for (int bb = 0; bb < ni; ++bb)
                        for (int cc = 0; cc < ni; ++cc)
                            s += gi(bb, cc) *
                                 rt[static_cast<std::size_t>(
                                     ((i * ni + aa) * ni + cc) * ni + bb)] *
                                 et(aa, j);
                hop(i, j) = -s;
            }
        const Eigen::MatrixXd da = hop * frame0_inv;
        Eigen::VectorXd dy(ni * ni);
        for (int i = 0; i < ni; ++i)
            for (int j = 0; j < ni; ++j) dy[i * ni + j] = da(i, j);
        return dy;
    };

    GaugeTrajectory traj;
    traj.node = node;
    traj.times.push_back(0.0);
    traj.gauges.push_back(Eigen::MatrixXd::Identity(ni, ni));

    Eigen::VectorXd y(ni * ni);
    {
        Eigen::Map<RowMat> a(y.data(), ni, ni);
        a = Eigen::MatrixXd::Identity(ni, ni);
    }
    double t = 0.0;
    const double dir = (t_end >= 0.0) ? 1.0 : -1.0;
    const double span = std::abs(t_end);
    const std::size_t outputs = step_count(span, dt_out);
    for (std::size_t k = 1; k <= outputs; ++k) {
        const double target =
            dir * std::min(static_cast<double>(k) * dt_out, span);
        Dp45Outcome outcome = dp45_to(
            y, t, target, rhs, [](double, const Eigen::VectorXd&) {}, rtol,
            atol, 1e6);
        if (!outcome.completed) {
            traj.blew_up = true;
            traj.blow_up_estimate = t;
            traj.diagnostic = outcome.diagnostic;
            return traj;
        }
        Eigen::MatrixXd a(ni, ni);
        for (int i = 0; i < ni; ++i)
            for (int j = 0; j < ni; ++j) a(i, j) = y[i * ni + j];
        traj.times.push_back(target);
        traj.gauges.push_back(std::move(a));
    }
    return traj;
}

std::string gauge_trajectory_csv(const GaugeTrajectory& trajectory) {
    std::string out = "t";
    const long n = trajectory.gauges.empty() ? 0 : trajectory.gauges[0].rows();
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j) {
            out += ",a";
            out += std::to_string(i);
            out += std::to_string(j);
        }
    out += '\n';
    for (std::size_t k = 0; k < trajectory.times.size(); ++k) {
        append_g17(out, trajectory.times[k]);
        const Eigen::MatrixXd& a = trajectory.gauges[k];
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < n; ++j) {
                out += ',';
                append_g17(out, a(i, j));
            }
        out += '\n';
    }
    return out;
}

void gauge_trajectory_csv(const GaugeTrajectory& trajectory,
                          std::ostream& out) {
    out << gauge_trajectory_csv(trajectory);
}

Eigen::MatrixXd exp_subgroup(const Eigen::MatrixXd& generator, double t) {
    if (generator.rows() != generator.cols())
        throw ConfigError("subgroup generator must be a square matrix");
    if (!std::isfinite(t) || !generator.allFinite())
        throw ConfigError("subgroup generator and time must be finite");
    return (t * generator).exp();
}

double ScalarBlowup::closed_form(double t) const {
    return a0 / std::sqrt(1.0 - 2.0 * rate * a0 * a0 * t);
}

ScalarBlowup scalar_blowup(double a0, double rate, double t_end) {
    if (a0 == 0.0 || !std::isfinite(a0))
        throw ConfigError("scalar model requires a nonzero finite initial value");
    if (!std::isfinite(rate))
        throw ConfigError("scalar model requires a finite rate");
    if (!std::isfinite(t_end) || t_end <= 0.0)
        throw ConfigError("scalar model requires t_end > 0");

    ScalarBlowup out;
    out.a0 = a0;
    out.rate = rate;
    const double s = rate * a0 * a0;
    if (s > 0.0) {
        out.has_pole = true;
        out.pole_time = 1.0 / (2.0 * s);
    }
    out.times.push_back(0.0);
    out.values.push_back(a0);

    Eigen::VectorXd y(1);
    y[0] = a0;
    double t = 0.0;
    auto rhs = [rate](const Eigen::VectorXd& yy) {
        Eigen::VectorXd d(1);
        d[0] = rate * yy[0] * yy[0] * yy[0];
        return d;
    };
    Dp45Outcome outcome = dp45_to(
        y, t, t_end, rhs,
        [&](double tt, const Eigen::VectorXd& yy) {
            out.times.push_back(tt);
            out.values.push_back(yy[0]);
        },
        1e-10, 1e-14, 1e8);
    if (!outcome.completed) {
        out.numeric_blow_up = true;
        out.numeric_estimate = t;
    }
    return out;
}

CrossValidationReport cross_validate(const FrameField& initial, double t_end,
                                     double dt, const FlowOptions& options) {
    FlowOptions opt = options;
    opt.record_snapshots = true;
    const FlowTrace trace = hf_pde_integrate(initial, t_end, dt, opt);

    CrossValidationReport rep;
    rep.pde_termination = trace.termination;
    if (trace.snapshots.empty()) {
        rep.diagnostic = "grid evolution rejected the initial state: " +
                         trace.diagnostic;
        return rep;
    }

    const FrameJet jet0 = FrameJet::build(initial);
    const Connection conn0 = connection(jet0);
    const TensorField r0 = algebroid_curvature(conn0);
    const CanonicalMetric met0 = canonical_metric(jet0);
    const TensorField& e0 = initial.values();
    const int n = initial.dim();
    const std::size_t nodes = initial.chart().node_count();
    const std::size_t n4 = static_cast<std::size_t>(n) * static_cast<std::size_t>(n) *
                           static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    const double t_limit = trace.final_time;

    std::vector<Eigen::MatrixXd> e0m(nodes);
    for (std::size_t node = 0; node < nodes; ++node)
        e0m[node] = Eigen::Map<const RowMat>(e0.node_data(node), n, n);

    std::vector<GaugeTrajectory> per_node(nodes);
    parallel_for(nodes, [&](std::size_t node) {
        const Eigen::MatrixXd gi =
            Eigen::Map<const RowMat>(met0.ginv.node_data(node), n, n);
        const std::span<const double> rsp(r0.node_data(node), n4);
        per_node[node] =
            gauge_ode_integrate(rsp, gi, e0m[node], t_limit, dt, node);
    });

    bool ode_blew = false;
    double ode_reached = t_limit;
    std::size_t first_bad = nodes;
    std::size_t common = trace.snapshots.size();
    for (std::size_t node = 0; node < nodes; ++node) {
        const GaugeTrajectory& gt = per_node[node];
        common = std::min(common, gt.times.size());
        if (gt.blew_up) {
            if (!ode_blew || gt.blow_up_estimate < ode_reached) {
                ode_reached = gt.blow_up_estimate;
                first_bad = node;
            }
            ode_blew = true;
        }
    }
    rep.ode_blew_up = ode_blew;
    rep.ode_time_reached = ode_reached;

    for (std::size_t k = 0; k < common; ++k) {
        const double tk = trace.snapshots[k].first;
        const TensorField& snap = trace.snapshots[k].second;
        double num = 0.0;
        double den = 0.0;
        for (std::size_t node = 0; node < nodes; ++node) {
            const Eigen::MatrixXd rec = per_node[node].gauges[k] * e0m[node];
            const double* sp = snap.node_data(node);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const double sv = sp[i * n + j];
                    num = std::max(num, std::abs(rec(i, j) - sv));
                    den = std::max(den, std::abs(sv));
                }
        }
        rep.times.push_back(tk);
        rep.deviation.push_back(den > 0.0 ? num / den : num);
    }
    for (double d : rep.deviation)
        rep.max_deviation = std::max(rep.max_deviation, d);

    std::string diag;
    if (trace.termination != FlowTermination::completed)
        diag += "grid evolution: " + trace.diagnostic;
    if (ode_blew) {
        if (!diag.empty()) diag += "; ";
        diag += "matrix evolution stopped early at node " +
                std::to_string(first_bad) + " (t=";
        append_g17(diag, ode_reached);
        diag += "): " + per_node[first_bad].diagnostic;
    }
    rep.diagnostic = std::move(diag);
    return rep;
}

std::string cross_validation_report_text(const CrossValidationReport& report) {
    std::string out = "cross-validation over ";
    out += std::to_string(report.times.size());
    out += " sample times\n";
    for (std::size_t k = 0; k < report.times.size(); ++k) {
        out += "  t=";
        append_g17(out, report.times[k]);
        out += "  relative deviation=";
        append_g17(out, report.deviation[k]);
        out += '\n';
    }
    out += "max relative deviation = ";
    append_g17(out, report.max_deviation);
    out += '\n';
    out += "grid evolution: ";
    out += flow_termination_name(report.pde_termination);
    out += '\n';
    out += "matrix evolution: reached t=";
    append_g17(out, report.ode_time_reached);
    if (report.ode_blew_up) out += " (stopped early)";
    out += '\n';
    if (!report.diagnostic.empty()) {
        out += report.diagnostic;
        out += '\n';
    }
    return out;
}

} // namespace hflow
