#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "hflow/differentiate.hpp"
#include "hflow/errors.hpp"
#include "hflow/groupoid.hpp"
#include "hflow/parallel_for.hpp"

namespace hflow {

namespace {

void require_point(const Chart& chart, std::span<const double> x, const char* who) {
    if (static_cast<int>(x.size()) != chart.dim()) {
        std::ostringstream msg;
        msg << who << ": point has " << x.size() << " coordinates on a " << chart.dim()
            << "-dimensional chart";
        throw ConfigError(msg.str());
    }
    if (!chart.contains(x)) {
        std::ostringstream msg;
        msg << who << ": point (";
        for (std::size_t i = 0; i < x.size(); ++i) msg << (i ? "," : "") << x[i];
        msg << ") lies outside the chart";
        throw ConfigError(msg.str());
    }
}

double min_extent(const Chart& chart) {
    double ext = chart.length(0);
    for (int a = 1; a < chart.dim(); ++a) ext = std::min(ext, chart.length(a));
    return ext;
}

void append_g17(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

} // namespace

TwoPointSplitting::TwoPointSplitting(const FrameField& frame)
    : chart_(frame.chart_ptr()), n_(frame.dim()) {
    if (frame.has_analytic()) {
        analytic_ = frame.analytic_ptr();
    } else {
        values_ = std::make_shared<FieldInterpolant>(frame.values());
        derivatives_ = std::make_shared<FieldInterpolant>(differentiate_all(frame.values()));
    }
}

Eigen::MatrixXd TwoPointSplitting::direct(std::span<const double> x) const {
    require_point(*chart_, x, "two-point evaluation");
    if (analytic_) return analytic_matrix(*analytic_, x);
    std::vector<double> buf(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_));
    values_->eval(x, buf);
    Eigen::MatrixXd m(n_, n_);
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) m(i, j) = buf[static_cast<std::size_t>(i * n_ + j)];
    return m;
}

Eigen::MatrixXd TwoPointSplitting::inverse(std::span<const double> x) const {
    const Eigen::MatrixXd e = direct(x);
    const double det = e.determinant();
    if (!std::isfinite(det) || std::abs(det) < FrameField::kDetFloor) {
        std::ostringstream msg;
        msg << "two-point evaluation: frame matrix is not invertible (|det| = " << std::abs(det)
            << ") at (";
        for (std::size_t i = 0; i < x.size(); ++i) msg << (i ? "," : "") << x[i];
        msg << ")";
        throw SingularFrameError(msg.str());
    }
    return e.inverse();
}

Eigen::MatrixXd TwoPointSplitting::pair(std::span<const double> x,
                                        std::span<const double> y) const {
    return direct(y) * inverse(x);
}

std::vector<Eigen::MatrixXd> TwoPointSplitting::connection_matrices(
    std::span<const double> x) const {
    const Eigen::MatrixXd f = inverse(x);
    std::vector<Eigen::MatrixXd> a;
    a.reserve(static_cast<std::size_t>(n_));
    if (analytic_) {
        for (int r = 0; r < n_; ++r) a.push_back(analytic_matrix_d1(*analytic_, x, r) * f);
        return a;
    }
    const std::size_t nn = static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
    std::vector<double> buf(static_cast<std::size_t>(n_) * nn);
    derivatives_->eval(x, buf);
    for (int r = 0; r < n_; ++r) {
        Eigen::MatrixXd de(n_, n_);
        const double* block = buf.data() + static_cast<std::size_t>(r) * nn;
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) de(i, j) = block[i * n_ + j];
        a.push_back(de * f);
    }
    return a;
}

Eigen::MatrixXd TwoPointSplitting::connection_matrix(std::span<const double> x, int r) const {
    if (r < 0 || r >= n_) throw ConfigError("connection_matrix: direction out of range");
    return connection_matrices(x)[static_cast<std::size_t>(r)];
}

Eigen::MatrixXd TwoPointSplitting::connection_contraction(std::span<const double> x,
                                                          std::span<const double> v) const {
    if (static_cast<int>(v.size()) != n_) {
        throw ConfigError("connection_contraction: vector dimension mismatch");
    }
    const auto a = connection_matrices(x);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_, n_);
    for (int r = 0; r < n_; ++r) out += v[static_cast<std::size_t>(r)] * a[static_cast<std::size_t>(r)];
    return out;
}

std::vector<double> groupoid_curvature(const TwoPointSplitting& s, std::span<const double> x,
                                       std::span<const double> y) {
    const int n = s.dim();
    const Eigen::MatrixXd m = s.pair(x, y);
    const auto ax = s.connection_matrices(x);
    const auto ay = s.connection_matrices(y);

    std::vector<Eigen::MatrixXd> dx, dy;
    dx.reserve(static_cast<std::size_t>(n));
    dy.reserve(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
        dx.push_back(-m * ax[static_cast<std::size_t>(r)]);
        dy.push_back(ay[static_cast<std::size_t>(r)] * m);
    }

    std::vector<double> out(static_cast<std::size_t>(n) * static_cast<std::size_t>(n) *
                            static_cast<std::size_t>(n));
    const auto term = [&](int i, int j, int k) {
        double v = dx[static_cast<std::size_t>(j)](i, k);
        for (int a = 0; a < n; ++a) v += dy[static_cast<std::size_t>(a)](i, k) * m(a, j);
        return v;
    };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                out[static_cast<std::size_t>((i * n + j) * n + k)] = term(i, j, k) - term(i, k, j);
    return out;
}

std::vector<double> linearize_groupoid_curvature(const TwoPointSplitting& s,
                                                 std::span<const double> x,
                                                 std::span<const double> xi, double step) {
    const int n = s.dim();
    if (static_cast<int>(xi.size()) != n) {
        throw ConfigError("linearize_groupoid_curvature: direction dimension mismatch");
    }
    double sup = 0.0;
    for (double v : xi) sup = std::max(sup, std::abs(v));
    if (step <= 0.0) {
        step = 1e-5 * min_extent(s.chart());
        if (sup > 1.0) step /= sup;
    }
    std::vector<double> plus(x.begin(), x.end()), minus(x.begin(), x.end());
    for (int a = 0; a < n; ++a) {
        plus[static_cast<std::size_t>(a)] += step * xi[static_cast<std::size_t>(a)];
        minus[static_cast<std::size_t>(a)] -= step * xi[static_cast<std::size_t>(a)];
    }
    const std::vector<double> rp = groupoid_curvature(s, x, plus);
    const std::vector<double> rm = groupoid_curvature(s, x, minus);
    std::vector<double> out(rp.size());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = (rp[c] - rm[c]) / (2.0 * step);
    return out;
}

namespace {

struct DevState {
    Eigen::VectorXd f;
    Eigen::MatrixXd j;
};

// Transported point and candidate Jacobian. The Jacobian follows the
// prolonged system obtained by differentiating the transport rule in the
// base point and symmetrizing mixed partials, which couples it to the
// connection at the transported point:
//   dJ^i_k/ds = sum_a (A_a(f) * df/ds)^i J^a_k - (M * A_k(c) * dc/ds)^i.
// For an obstruction-free frame the two-point matrix solves this system, so
// J tracks it up to integration error; otherwise J drifts away at the
// obstruction's rate, which is what the recorded residual measures.
DevState rhs(const TwoPointSplitting& s, std::span<const double> c, const DevState& st,
             const Eigen::VectorXd& cdot, double arclength) {
    const Chart& chart = s.chart();
    const int n = s.dim();
    std::vector<double> fv(st.f.data(), st.f.data() + n);
    if (!chart.contains(fv)) {
        std::ostringstream msg;
        msg << "development left the chart near arclength " << arclength << " (value";
        for (int i = 0; i < n; ++i) msg << " " << fv[static_cast<std::size_t>(i)];
        msg << ")";
        throw NumericalError(msg.str());
    }
    const Eigen::MatrixXd m = s.pair(c, fv);
    DevState d;
    d.f = m * cdot;
    const auto ac = s.connection_matrices(c);
    const auto af = s.connection_matrices(fv);
    Eigen::MatrixXd coupling(n, n), drive(n, n);
    for (int a = 0; a < n; ++a) coupling.col(a) = af[static_cast<std::size_t>(a)] * d.f;
    for (int k = 0; k < n; ++k) drive.col(k) = m * (ac[static_cast<std::size_t>(k)] * cdot);
    d.j = coupling * st.j - drive;
    return d;
}

} // namespace

Development develop(const TwoPointSplitting& s, std::span<const double> p,
                    std::span<const double> q, const std::vector<std::vector<double>>& path,
                    int steps) {
    const int n = s.dim();
    if (steps < 1) throw ConfigError("develop: steps must be positive");
    if (path.empty()) throw ConfigError("develop: empty path");
    require_point(s.chart(), p, "develop base");
    require_point(s.chart(), q, "develop initial value");
    for (const auto& w : path) require_point(s.chart(), w, "develop path");
    for (int i = 0; i < n; ++i) {
        if (std::abs(path.front()[static_cast<std::size_t>(i)] - p[static_cast<std::size_t>(i)]) >
            1e-9) {
            throw ConfigError("develop: path must start at the base point");
        }
    }

    std::vector<double> seg_len;
    double total = 0.0;
    for (std::size_t seg = 0; seg + 1 < path.size(); ++seg) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d =
                path[seg + 1][static_cast<std::size_t>(i)] - path[seg][static_cast<std::size_t>(i)];
            acc += d * d;
        }
        seg_len.push_back(std::sqrt(acc));
        total += seg_len.back();
    }

    Development dev;
    DevState st;
    st.f = Eigen::Map<const Eigen::VectorXd>(q.data(), n);
    st.j = s.pair(p, q);

    auto push_sample = [&](double arc, std::span<const double> c) {
        std::vector<double> fv(st.f.data(), st.f.data() + n);
        if (!s.chart().contains(fv)) {
            std::ostringstream msg;
            msg << "development left the chart near arclength " << arc << " (value";
            for (int i = 0; i < n; ++i) msg << " " << fv[static_cast<std::size_t>(i)];
            msg << ")";
            throw NumericalError(msg.str());
        }
        dev.s.push_back(arc);
        dev.base.emplace_back(c.begin(), c.end());
        dev.value.emplace_back(st.f.data(), st.f.data() + n);
        const double r = (s.pair(c, fv) - st.j).cwiseAbs().maxCoeff();
        dev.residual_at.push_back(r);
        dev.residual = std::max(dev.residual, r);
    };

    push_sample(0.0, p);

    double arc = 0.0;
    for (std::size_t seg = 0; seg + 1 < path.size(); ++seg) {
        const double len = seg_len[seg];
        if (len == 0.0) continue;
        const int nsteps = std::max(
            1, static_cast<int>(std::lround(static_cast<double>(steps) * len / total)));
        const double h = 1.0 / static_cast<double>(nsteps);
        Eigen::VectorXd a(n), d(n);
        for (int i = 0; i < n; ++i) {
            a(i) = path[seg][static_cast<std::size_t>(i)];
            d(i) = path[seg + 1][static_cast<std::size_t>(i)] -
                   path[seg][static_cast<std::size_t>(i)];
        }
        const auto base_at = [&](double sigma) {
            std::vector<double> c(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) c[static_cast<std::size_t>(i)] = a(i) + sigma * d(i);
            return c;
        };
        for (int step = 0; step < nsteps; ++step) {
            const double s0 = static_cast<double>(step) * h;
            const auto c1 = base_at(s0);
            const DevState k1 = rhs(s, c1, st, d, arc);
            DevState mid1{st.f + 0.5 * h * k1.f, st.j + 0.5 * h * k1.j};
            const auto c2 = base_at(s0 + 0.5 * h);
            const DevState k2 = rhs(s, c2, mid1, d, arc);
            DevState mid2{st.f + 0.5 * h * k2.f, st.j + 0.5 * h * k2.j};
            const DevState k3 = rhs(s, c2, mid2, d, arc);
            DevState endp{st.f + h * k3.f, st.j + h * k3.j};
            const auto c4 = base_at(s0 + h);
            const DevState k4 = rhs(s, c4, endp, d, arc);
            st.f += (h / 6.0) * (k1.f + 2.0 * k2.f + 2.0 * k3.f + k4.f);
            st.j += (h / 6.0) * (k1.j + 2.0 * k2.j + 2.0 * k3.j + k4.j);
            arc += len * h;
            push_sample(arc, base_at(s0 + h));
        }
    }

    dev.terminal_jet = st.j;
    return dev;
}

Development develop_segment(const TwoPointSplitting& s, std::span<const double> p,
                            std::span<const double> q, std::span<const double> target,
                            int steps) {
    std::vector<std::vector<double>> path;
    path.emplace_back(p.begin(), p.end());
    path.emplace_back(target.begin(), target.end());
    return develop(s, p, q, path, steps);
}

MonodromyReport monodromy(const TwoPointSplitting& s, std::span<const double> p,
                          const std::vector<std::vector<double>>& loop, int steps) {
    const int n = s.dim();
    if (loop.empty()) throw ConfigError("monodromy: empty loop");
    std::vector<std::vector<double>> closed = loop;
    bool back_at_start = true;
    for (int i = 0; i < n; ++i) {
        if (std::abs(closed.back()[static_cast<std::size_t>(i)] -
                     closed.front()[static_cast<std::size_t>(i)]) > 1e-12) {
            back_at_start = false;
        }
    }
    if (!back_at_start) closed.push_back(closed.front());

    const Development dev = develop(s, p, p, closed, steps);
    MonodromyReport report;
    report.displacement.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        report.displacement[static_cast<std::size_t>(i)] =
            dev.terminal()[static_cast<std::size_t>(i)] - p[static_cast<std::size_t>(i)];
    }
    report.terminal_jet = dev.terminal_jet;
    report.jet_deviation =
        (dev.terminal_jet - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    report.residual = dev.residual;
    return report;
}

Eigen::MatrixXd tilde_splitting(const TwoPointSplitting& s, std::span<const double> p,
                                std::span<const double> q, double h, int steps) {
    const int n = s.dim();
    require_point(s.chart(), p, "tilde base");
    require_point(s.chart(), q, "tilde target");
    if (h <= 0.0) h = 1e-4 * min_extent(s.chart());

    std::vector<Eigen::VectorXd> ends(2 * static_cast<std::size_t>(n));
    parallel_for(ends.size(), [&](std::size_t slot) {
        const int j = static_cast<int>(slot) / 2;
        const double sign = (slot % 2 == 0) ? 1.0 : -1.0;
        std::vector<double> v(p.begin(), p.end());
        v[static_cast<std::size_t>(j)] += sign * h;
        const Development dev = develop_segment(s, p, v, q, steps);
        ends[slot] = Eigen::Map<const Eigen::VectorXd>(dev.terminal().data(), n);
    });

    Eigen::MatrixXd out(n, n);
    for (int j = 0; j < n; ++j) {
        const Eigen::VectorXd col =
            (ends[2 * static_cast<std::size_t>(j)] - ends[2 * static_cast<std::size_t>(j) + 1]) /
            (2.0 * h);
        out.col(j) = col;
    }
    return out;
}

std::string development_csv(const Development& dev) {
    std::string out;
    const std::size_t n = dev.base.empty() ? 0 : dev.base.front().size();
    out += "s";
    for (std::size_t i = 0; i < n; ++i) out += ",c" + std::to_string(i);
    for (std::size_t i = 0; i < n; ++i) out += ",f" + std::to_string(i);
    out += ",residual\n";
    for (std::size_t row = 0; row < dev.s.size(); ++row) {
        append_g17(out, dev.s[row]);
        for (std::size_t i = 0; i < n; ++i) {
            out += ',';
            append_g17(out, dev.base[row][i]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            out += ',';
            append_g17(out, dev.value[row][i]);
        }
        out += ',';
        append_g17(out, dev.residual_at[row]);
        out += '\n';
    }
    return out;
}

void development_csv(const Development& dev, std::ostream& out) { out << development_csv(dev); }

} // namespace hflow
