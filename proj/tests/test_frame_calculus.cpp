#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hflow/catalog.hpp"
#include "hflow/differentiate.hpp"
#include "hflow/errors.hpp"
#include "hflow/frame_calculus.hpp"
#include "hflow/frame_jet.hpp"

using namespace hflow;

namespace {

constexpr double kPi = std::numbers::pi;

FrameField pert_frame(std::uint64_t seed, double amp, int band, int dim, int res) {
    auto chart = std::make_shared<Chart>(Chart::periodic(dim, res, 2.0 * kPi));
    return realize_on(perturbation(seed, amp, band, *chart), chart);
}

Eigen::MatrixXd mat_of(const TensorField& f, std::size_t node) {
    const int n = f.dim();
    Eigen::MatrixXd m(n, n);
    const double* p = f.node_data(node);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = p[i * n + j];
    return m;
}

std::vector<double> shifted(std::span<const double> x, int axis, double h) {
    std::vector<double> y(x.begin(), x.end());
    y[static_cast<std::size_t>(axis)] += h;
    return y;
}

/// Connection matrices A_j at a point from the closed-form first derivatives.
std::vector<Eigen::MatrixXd> gamma_closed(const FrameField& frame, std::span<const double> x) {
    const int n = frame.dim();
    const Eigen::MatrixXd inv = frame.eval(x).inverse();
    std::vector<Eigen::MatrixXd> a;
    a.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) a.push_back(frame.eval_d1(x, j) * inv);
    return a;
}

/// Connection matrices from central differences of the matrix values alone.
std::vector<Eigen::MatrixXd> gamma_fd(const FrameField& frame, std::span<const double> x,
                                      double h) {
    const int n = frame.dim();
    const Eigen::MatrixXd inv = frame.eval(x).inverse();
    std::vector<Eigen::MatrixXd> a;
    a.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        const Eigen::MatrixXd de =
            (frame.eval(shifted(x, j, h)) - frame.eval(shifted(x, j, -h))) / (2.0 * h);
        a.push_back(de * inv);
    }
    return a;
}

/// d_s A_k from central differences of the closed-form connection matrices.
std::vector<std::vector<Eigen::MatrixXd>> dgamma_fd(const FrameField& frame,
                                                    std::span<const double> x, double h) {
    const int n = frame.dim();
    std::vector<std::vector<Eigen::MatrixXd>> da(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
        const auto plus = gamma_closed(frame, shifted(x, s, h));
        const auto minus = gamma_closed(frame, shifted(x, s, -h));
        for (int k = 0; k < n; ++k)
            da[static_cast<std::size_t>(s)].push_back((plus[static_cast<std::size_t>(k)] -
                                                       minus[static_cast<std::size_t>(k)]) /
                                                      (2.0 * h));
    }
    return da;
}

/// Curvature components at a point assembled from the finite-difference
/// connection derivatives; index order (up, pair, pair, acting).
double curvature_oracle(const std::vector<Eigen::MatrixXd>& a,
                        const std::vector<std::vector<Eigen::MatrixXd>>& da, int n, int i, int r,
                        int j, int k) {
    const auto su = [](int v) { return static_cast<std::size_t>(v); };
    double v = da[su(r)][su(k)](i, j) - da[su(j)][su(k)](i, r);
    for (int m = 0; m < n; ++m)
        v += a[su(k)](m, r) * a[su(m)](i, j) - a[su(k)](m, j) * a[su(m)](i, r);
    return v;
}

TensorField constant_vector(std::shared_ptr<const Chart> chart, std::vector<double> comps) {
    TensorField f(chart, {IndexKind::coord_up});
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        double* p = f.node_data(node);
        for (int i = 0; i < f.dim(); ++i) p[i] = comps[static_cast<std::size_t>(i)];
    }
    return f;
}

TensorField frame_column(const FrameField& frame, const std::vector<double>& coeff) {
    TensorField f(frame.chart_ptr(), {IndexKind::coord_up});
    const int n = frame.dim();
    for (std::size_t node = 0; node < frame.chart().node_count(); ++node) {
        const Eigen::MatrixXd e = frame.matrix_at(node);
        double* p = f.node_data(node);
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int c = 0; c < n; ++c) acc += e(i, c) * coeff[static_cast<std::size_t>(c)];
            p[i] = acc;
        }
    }
    return f;
}

/// Commutator of two vector fields through the grid differentiation scheme.
TensorField lie_bracket_grid(const TensorField& xi, const TensorField& eta) {
    const int n = xi.dim();
    const TensorField dxi = differentiate_all(xi);
    const TensorField deta = differentiate_all(eta);
    TensorField out(xi.chart_ptr(), {IndexKind::coord_up});
    for (std::size_t node = 0; node < xi.chart().node_count(); ++node) {
        const double* xp = xi.node_data(node);
        const double* ep = eta.node_data(node);
        const double* dxp = dxi.node_data(node);
        const double* dep = deta.node_data(node);
        double* op = out.node_data(node);
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int a = 0; a < n; ++a) acc += xp[a] * dep[a * n + i] - ep[a] * dxp[a * n + i];
            op[i] = acc;
        }
    }
    return out;
}

std::vector<std::size_t> sample_nodes(const Chart& chart, std::uint64_t seed, int count) {
    SplitMix64 rng(seed);
    std::vector<std::size_t> nodes;
    for (int i = 0; i < count; ++i)
        nodes.push_back(static_cast<std::size_t>(rng.next() % chart.node_count()));
    return nodes;
}

} // namespace

TEST_CASE("connection vanishes for constant frames") {
    const FrameField frame = realize(builtin("abelian"), 8);
    const Connection conn = connection(FrameJet::build(frame));
    CHECK_EQ(norm_sup(conn.gamma), 0.0);
    CHECK_EQ(norm_sup(conn.dgamma), 0.0);
}

TEST_CASE("connection of the nilpotent catalog frame has one constant entry") {
    const FrameField frame = realize(builtin("heisenberg"), 9);
    const Connection conn = connection(FrameJet::build(frame));
    const int n = 3;
    for (std::size_t node = 0; node < frame.chart().node_count(); ++node) {
        const double* g = conn.gamma.node_data(node);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    const double expect = (i == 2 && j == 0 && k == 1) ? 1.0 : 0.0;
                    CHECK_EQ(g[(i * n + j) * n + k], expect);
                }
    }
    CHECK_EQ(norm_sup(conn.dgamma), 0.0);
}

TEST_CASE("connection of the exponential catalog frame is constant in the frame slot") {
    const FrameField frame = realize(builtin("affine"), 8);
    const Connection conn = connection(FrameJet::build(frame));
    const int n = 2;
    for (std::size_t node = 0; node < frame.chart().node_count(); ++node) {
        const double* g = conn.gamma.node_data(node);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    const double expect = (i == 1 && j == 0 && k == 1) ? 1.0 : 0.0;
                    CHECK_LE(std::abs(g[(i * n + j) * n + k] - expect), 1e-14);
                }
    }
}

TEST_CASE("connection and its derivative match finite differences of a random frame") {
    const FrameField frame = pert_frame(7, 0.1, 2, 2, 16);
    const FrameJet jet = FrameJet::build(frame);
    const Connection conn = connection(jet);
    const int n = 2;
    for (std::size_t node : sample_nodes(frame.chart(), 99, 3)) {
        const auto x = frame.chart().node_position(node);
        const auto afd = gamma_fd(frame, x, 1e-6);
        const double* g = conn.gamma.node_data(node);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    CHECK_LE(std::abs(g[(i * n + j) * n + k] -
                                      afd[static_cast<std::size_t>(j)](i, k)),
                             1e-8);
        const auto dafd = dgamma_fd(frame, x, 1e-5);
        const double* dg = conn.dgamma.node_data(node);
        for (int s = 0; s < n; ++s)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k)
                        CHECK_LE(std::abs(dg[((s * n + i) * n + j) * n + k] -
                                          dafd[static_cast<std::size_t>(s)]
                                              [static_cast<std::size_t>(j)](i, k)),
                                 1e-6);
    }
    const Connection direct = connection(frame);
    CHECK_LE(max_abs_difference(direct.gamma, conn.gamma), 1e-15);
    CHECK_LE(max_abs_difference(direct.dgamma, conn.dgamma), 1e-15);
}

TEST_CASE("torsion is the antisymmetrized connection") {
    const FrameField heis = realize(builtin("heisenberg"), 9);
    const Connection conn = connection(FrameJet::build(heis));
    const TensorField t = torsion(conn);
    const int n = 3;
    for (std::size_t node = 0; node < heis.chart().node_count(); ++node) {
        const double* p = t.node_data(node);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    double expect = 0.0;
                    if (i == 2 && j == 0 && k == 1) expect = 1.0;
                    if (i == 2 && j == 1 && k == 0) expect = -1.0;
                    CHECK_EQ(p[(i * n + j) * n + k], expect);
                }
    }

    const FrameField pert = pert_frame(11, 0.1, 2, 2, 12);
    const TensorField tp = torsion(connection(FrameJet::build(pert)));
    double worst = 0.0;
    const int m = 2;
    for (std::size_t node = 0; node < pert.chart().node_count(); ++node) {
        const double* p = tp.node_data(node);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                for (int k = 0; k < m; ++k)
                    worst = std::max(worst,
                                     std::abs(p[(i * m + j) * m + k] + p[(i * m + k) * m + j]));
    }
    CHECK_EQ(worst, 0.0);
}

TEST_CASE("curvature vanishes for the catalog frames and matches finite differences") {
    const FrameField heis = realize(builtin("heisenberg"), 9);
    const TensorField rheis = algebroid_curvature(connection(FrameJet::build(heis)));
    CHECK_LE(norm_sup(rheis), 1e-14);

    const FrameField pert = pert_frame(5, 0.1, 2, 2, 16);
    const FrameJet jet = FrameJet::build(pert);
    const TensorField rr = algebroid_curvature(connection(jet));
    CHECK_GT(norm_sup(rr), 1e-4);

    const int n = 2;
    double antis = 0.0;
    for (std::size_t node = 0; node < pert.chart().node_count(); ++node) {
        const double* p = rr.node_data(node);
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < n; ++r)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k)
                        antis = std::max(antis, std::abs(p[((i * n + r) * n + j) * n + k] +
                                                         p[((i * n + j) * n + r) * n + k]));
    }
    CHECK_EQ(antis, 0.0);

    for (std::size_t node : sample_nodes(pert.chart(), 12345, 3)) {
        const auto x = pert.chart().node_position(node);
        const auto a = gamma_closed(pert, x);
        const auto da = dgamma_fd(pert, x, 1e-5);
        const double* p = rr.node_data(node);
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < n; ++r)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k)
                        CHECK_LE(std::abs(p[((i * n + r) * n + j) * n + k] -
                                          curvature_oracle(a, da, n, i, r, j, k)),
                                 1e-6);
    }
}

TEST_CASE("second-slot curvature cancels identically") {
    const FrameField pert = pert_frame(21, 0.15, 2, 2, 16);
    const TensorField exact = tilde_curvature(connection(FrameJet::build(pert)));
    CHECK_LE(norm_sup(exact), 1e-12);

    const FrameField sampled = FrameField::from_values(TensorField(pert_frame(22, 0.1, 2, 2, 64).values()));
    CHECK(!sampled.has_analytic());
    const TensorField gridded = tilde_curvature(connection(FrameJet::build(sampled)));
    CHECK_LE(norm_sup(gridded), 1e-6);
}

TEST_CASE("covariant derivative of the torsion reproduces the curvature") {
    const FrameField pert = pert_frame(31, 0.1, 2, 2, 16);
    const FrameJet jet = FrameJet::build(pert);
    const Connection conn = connection(jet);
    const TensorField t = torsion(conn);
    const TensorField rr = algebroid_curvature(conn);
    const TensorField nt = nabla(t, conn);
    const int n = 2;
    double worst = 0.0;
    for (std::size_t node = 0; node < pert.chart().node_count(); ++node) {
        const double* np = nt.node_data(node);
        const double* rp = rr.node_data(node);
        for (int r = 0; r < n; ++r)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k)
                        worst = std::max(worst,
                                         std::abs(np[((r * n + i) * n + j) * n + k] -
                                                  rp[((i * n + j) * n + k) * n + r]));
    }
    CHECK_LE(worst, 1e-10);
}

TEST_CASE("the frame, its inverse, and the metric are covariantly constant") {
    for (const char* name : {"heisenberg", "affine"}) {
        const FrameField frame = realize(builtin(name), 9);
        const FrameJet jet = FrameJet::build(frame);
        const Connection conn = connection(jet);
        CHECK_LE(norm_sup(nabla(frame_values(jet), conn)), 1e-13);
        CHECK_LE(norm_sup(nabla(inverse_frame_values(jet), conn)), 1e-13);
        CHECK_LE(norm_sup(nabla(canonical_metric(jet).g, conn)), 1e-13);
    }
    const FrameField pert = pert_frame(41, 0.1, 2, 2, 16);
    const FrameJet jet = FrameJet::build(pert);
    const Connection conn = connection(jet);
    CHECK_LE(norm_sup(nabla(frame_values(jet), conn)), 1e-13);
    CHECK_LE(norm_sup(nabla(inverse_frame_values(jet), conn)), 1e-13);
    CHECK_LE(norm_sup(nabla(canonical_metric(jet).g, conn)), 1e-13);
}

TEST_CASE("the two covariant derivatives differ by a torsion contraction") {
    const FrameField pert = pert_frame(51, 0.12, 2, 2, 16);
    const FrameJet jet = FrameJet::build(pert);
    const Connection conn = connection(jet);
    const TensorField t = torsion(conn);
    const int n = 2;

    TensorField xi(pert.chart_ptr(), {IndexKind::coord_up});
    for (std::size_t node = 0; node < pert.chart().node_count(); ++node) {
        const auto x = pert.chart().node_position(node);
        double* p = xi.node_data(node);
        for (int i = 0; i < n; ++i) p[i] = std::sin(x[0] + 0.3 * i) + 0.5 * std::cos(x[1]);
    }

    const TensorField first = nabla(xi, conn);
    const TensorField second = nabla_tilde(xi, conn);
    double worst = 0.0;
    for (std::size_t node = 0; node < pert.chart().node_count(); ++node) {
        const double* fp = first.node_data(node);
        const double* sp = second.node_data(node);
        const double* tp = t.node_data(node);
        const double* xp = xi.node_data(node);
        for (int r = 0; r < n; ++r)
            for (int i = 0; i < n; ++i) {
                double contraction = 0.0;
                for (int a = 0; a < n; ++a) contraction += tp[(i * n + r) * n + a] * xp[a];
                worst = std::max(worst, std::abs(fp[r * n + i] - sp[r * n + i] + contraction));
            }
    }
    CHECK_LE(worst, 1e-12);
}

TEST_CASE("canonical metric has the expected closed form and exact inverse") {
    const FrameField heis = realize(builtin("heisenberg"), 9);
    const CanonicalMetric metric = canonical_metric(FrameJet::build(heis));
    for (std::size_t node = 0; node < heis.chart().node_count(); ++node) {
        const double x = heis.chart().node_position(node)[0];
        Eigen::Matrix3d g_expect;
        g_expect << 1, 0, 0, 0, 1 + x * x, -x, 0, -x, 1;
        Eigen::Matrix3d gi_expect;
        gi_expect << 1, 0, 0, 0, 1, x, 0, x, 1 + x * x;
        CHECK_LE((mat_of(metric.g, node) - g_expect).cwiseAbs().maxCoeff(), 1e-13);
        CHECK_LE((mat_of(metric.ginv, node) - gi_expect).cwiseAbs().maxCoeff(), 1e-13);
    }

    const FrameField pert = pert_frame(61, 0.2, 2, 2, 12);
    const CanonicalMetric pm = canonical_metric(FrameJet::build(pert));
    const int n = 2;
    for (std::size_t node = 0; node < pert.chart().node_count(); ++node) {
        const Eigen::MatrixXd g = mat_of(pm.g, node);
        const Eigen::MatrixXd gi = mat_of(pm.ginv, node);
        CHECK_LE((g * gi - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-12);
        CHECK_LE((g - g.transpose()).cwiseAbs().maxCoeff(), 1e-14);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
        CHECK_GT(es.eigenvalues().minCoeff(), 0.0);
    }
    for (std::size_t node : sample_nodes(pert.chart(), 777, 3)) {
        const auto x = pert.chart().node_position(node);
        const double h = 1e-5;
        const double* dp = pm.dg.node_data(node);
        for (int r = 0; r < n; ++r) {
            const Eigen::MatrixXd ep = pert.eval(shifted(x, r, h));
            const Eigen::MatrixXd em = pert.eval(shifted(x, r, -h));
            const Eigen::MatrixXd fd =
                ((ep * ep.transpose()).inverse() - (em * em.transpose()).inverse()) / (2.0 * h);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    CHECK_LE(std::abs(dp[(r * n + i) * n + j] - fd(i, j)), 1e-7);
        }
    }

    const FrameField doubled = FrameField::from_function(
        heis.chart_ptr(), [](int i, int j, std::span<const double>) {
            return i == j ? 2.0 : 0.0;
        });
    const CanonicalMetric dm = canonical_metric(FrameJet::build(doubled));
    for (std::size_t node : sample_nodes(heis.chart(), 4, 2)) {
        CHECK_LE((mat_of(dm.ginv, node) - 4.0 * Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(),
                 1e-14);
        CHECK_LE((mat_of(dm.g, node) - 0.25 * Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(),
                 1e-14);
    }
}

TEST_CASE("index moves are inverse to each other and contract with the frame") {
    const FrameField affine = realize(builtin("affine"), 8);
    const FrameJet jet = FrameJet::build(affine);
    const TensorField t = torsion(connection(jet));
    const int n = 2;

    const TensorField moved = move_index(t, 1, jet);
    CHECK(moved.signature()[1] == IndexKind::rn_down);
    for (std::size_t node = 0; node < affine.chart().node_count(); ++node) {
        const double x0 = affine.chart().node_position(node)[0];
        const double* p = moved.node_data(node);
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < n; ++a)
                for (int k = 0; k < n; ++k) {
                    double expect = 0.0;
                    if (i == 1 && a == 0 && k == 1) expect = 1.0;
                    if (i == 1 && a == 1 && k == 0) expect = -std::exp(x0);
                    CHECK_LE(std::abs(p[(i * n + a) * n + k] - expect), 1e-12);
                }
    }
    const TensorField back = move_index(moved, 1, jet);
    CHECK(back.signature() == t.signature());
    CHECK_LE(max_abs_difference(back, t), 1e-13);

    const FrameField pert = pert_frame(71, 0.15, 2, 2, 12);
    const FrameJet pjet = FrameJet::build(pert);
    const TensorField tp = torsion(connection(pjet));
    for (int position = 0; position < 3; ++position) {
        const TensorField there = move_index(tp, position, pjet);
        const TensorField and_back = move_index(there, position, pjet);
        CHECK(and_back.signature() == tp.signature());
        CHECK_LE(max_abs_difference(and_back, tp), 1e-12);
    }

    const FrameField abelian = realize(builtin("abelian"), 8);
    const FrameJet ajet = FrameJet::build(abelian);
    const TensorField ta = torsion(connection(ajet));
    const TensorField ma = move_index(ta, 0, ajet);
    CHECK(ma.signature()[0] == IndexKind::rn_up);
    double value_change = 0.0;
    for (std::size_t c = 0; c < ta.size(); ++c)
        value_change = std::max(value_change, std::abs(ma.data()[c] - ta.data()[c]));
    CHECK_EQ(value_change, 0.0);

    CHECK_THROWS_AS(move_index(tp, 3, pjet), ConfigError);
    CHECK_THROWS_AS(move_index(tp, -1, pjet), ConfigError);
}

TEST_CASE("pointwise frame transport extends values covariantly constantly") {
    const FrameField pert = pert_frame(81, 0.12, 2, 2, 16);
    const FrameJet jet = FrameJet::build(pert);
    const Connection conn = connection(jet);
    const std::size_t base_node = 37;

    const std::vector<double> v{0.7, -0.3};
    const TensorField xi = parallel_extend(jet, base_node, {IndexKind::coord_up}, v);
    CHECK_LE(std::abs(xi.node_data(base_node)[0] - 0.7), 1e-13);
    CHECK_LE(std::abs(xi.node_data(base_node)[1] + 0.3), 1e-13);
    CHECK_LE(norm_sup(nabla(xi, conn)), 1e-10);

    const std::vector<double> mixed{0.3, -1.2, 0.8, 0.01};
    const TensorField t2 =
        parallel_extend(jet, base_node, {IndexKind::coord_up, IndexKind::coord_down}, mixed);
    for (int c = 0; c < 4; ++c)
        CHECK_LE(std::abs(t2.node_data(base_node)[c] - mixed[static_cast<std::size_t>(c)]), 1e-12);
    CHECK_LE(norm_sup(nabla(t2, conn)), 1e-10);

    const FrameField abelian = realize(builtin("abelian"), 8);
    const FrameJet ajet = FrameJet::build(abelian);
    const TensorField ext = parallel_extend(ajet, 5, {IndexKind::coord_up}, v);
    for (std::size_t node = 0; node < abelian.chart().node_count(); ++node) {
        CHECK_EQ(ext.node_data(node)[0], 0.7);
        CHECK_EQ(ext.node_data(node)[1], -0.3);
    }

    CHECK_THROWS_AS(parallel_extend(jet, base_node, {IndexKind::rn_up}, v), ConfigError);
    CHECK_THROWS_AS(parallel_extend(jet, jet.node_count(), {IndexKind::coord_up}, v), ConfigError);
    const std::vector<double> short_value{1.0};
    CHECK_THROWS_AS(parallel_extend(jet, base_node, {IndexKind::coord_up}, short_value),
                    ConfigError);
}

TEST_CASE("second-order evolution operator vanishes exactly for flat frames") {
    const FrameField abelian = realize(builtin("abelian"), 8);
    CHECK_LE(norm_sup(homogeneous_operator(FrameJet::build(abelian))), 1e-15);

    const FrameField heis = realize(builtin("heisenberg"), 9);
    CHECK_LE(norm_sup(homogeneous_operator(FrameJet::build(heis))), 1e-12);
}

TEST_CASE("second-order evolution operator matches a finite-difference assembly") {
    const FrameField pert = pert_frame(91, 0.1, 2, 2, 16);
    const FrameJet jet = FrameJet::build(pert);
    const TensorField h = homogeneous_operator(jet);
    CHECK_GT(norm_sup(h), 1e-4);

    const int n = 2;
    for (std::size_t node : sample_nodes(pert.chart(), 2024, 3)) {
        const auto x = pert.chart().node_position(node);
        const auto a = gamma_closed(pert, x);
        const auto da = dgamma_fd(pert, x, 1e-5);
        const Eigen::MatrixXd e = pert.eval(x);
        const Eigen::MatrixXd gi = e * e.transpose();
        const double* hp = h.node_data(node);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double expect = 0.0;
                for (int av = 0; av < n; ++av)
                    for (int b = 0; b < n; ++b)
                        for (int c = 0; c < n; ++c)
                            expect -= gi(b, c) * curvature_oracle(a, da, n, i, av, c, b) * e(av, j);
                CHECK_LE(std::abs(hp[i * n + j] - expect), 1e-6);
            }
    }

    const FrameField sampled = FrameField::from_values(TensorField(pert_frame(92, 0.1, 2, 2, 64).values()));
    const TensorField hs = homogeneous_operator(FrameJet::build(sampled));
    CHECK(std::isfinite(norm_sup(hs)));
    CHECK_GT(norm_sup(hs), 1e-4);
}

TEST_CASE("torsion pairing of frame columns matches their commutator") {
    const FrameField heis = realize(builtin("heisenberg"), 9);
    const FrameJet jet = FrameJet::build(heis);
    const TensorField t = torsion(connection(jet));

    const TensorField x0 = frame_column(heis, {1.0, 0.0, 0.0});
    const TensorField x1 = frame_column(heis, {0.0, 1.0, 0.0});
    const TensorField x2 = frame_column(heis, {0.0, 0.0, 1.0});

    const TensorField paired = torsion_bracket(t, x0, x1);
    CHECK_LE(max_abs_difference(paired, x2), 1e-13);
    const TensorField commuted = lie_bracket_grid(x0, x1);
    CHECK_LE(max_abs_difference(paired, commuted), 1e-10);

    const TensorField extended = parallel_extend(jet, 0, {IndexKind::coord_up},
                                                 std::vector<double>{0.0, 0.0, 1.0});
    CHECK_LE(max_abs_difference(paired, extended), 1e-10);

    const FrameField pert = pert_frame(14, 0.1, 2, 2, 64);
    const TensorField tp = torsion(connection(FrameJet::build(pert)));
    const TensorField xi = frame_column(pert, {0.3, -0.7});
    const TensorField eta = frame_column(pert, {0.5, 0.2});
    CHECK_LE(max_abs_difference(torsion_bracket(tp, xi, eta), lie_bracket_grid(xi, eta)), 1e-8);

    const FrameField abelian = realize(builtin("abelian"), 8);
    const TensorField ta = torsion(connection(FrameJet::build(abelian)));
    const TensorField ca = constant_vector(abelian.chart_ptr(), {0.4, 0.6});
    const TensorField cb = constant_vector(abelian.chart_ptr(), {-0.2, 0.9});
    CHECK_EQ(norm_sup(torsion_bracket(ta, ca, cb)), 0.0);

    CHECK_THROWS_AS(torsion_bracket(ta, move_index(ca, 0, FrameJet::build(abelian)), cb),
                    ConfigError);
}

TEST_CASE("nested torsion pairings vanish for the nilpotent frame and stay cyclic") {
    const FrameField heis = realize(builtin("heisenberg"), 9);
    const TensorField t = torsion(connection(FrameJet::build(heis)));
    SplitMix64 rng(606);
    std::vector<double> c1, c2, c3;
    for (int i = 0; i < 3; ++i) {
        c1.push_back(rng.uniform_symmetric());
        c2.push_back(rng.uniform_symmetric());
        c3.push_back(rng.uniform_symmetric());
    }
    const TensorField xi = constant_vector(heis.chart_ptr(), c1);
    const TensorField eta = constant_vector(heis.chart_ptr(), c2);
    const TensorField sigma = constant_vector(heis.chart_ptr(), c3);
    CHECK_EQ(norm_sup(jacobi_form(t, xi, eta, sigma)), 0.0);

    const FrameField pert = pert_frame(17, 0.15, 2, 2, 12);
    const TensorField tp = torsion(connection(FrameJet::build(pert)));
    const TensorField p1 = frame_column(pert, {0.9, 0.1});
    const TensorField p2 = frame_column(pert, {-0.4, 0.8});
    const TensorField p3 = frame_column(pert, {0.2, 0.5});
    const TensorField j123 = jacobi_form(tp, p1, p2, p3);
    const TensorField j231 = jacobi_form(tp, p2, p3, p1);
    CHECK_LE(max_abs_difference(j123, j231), 1e-13);
}

TEST_CASE("cyclic torsion identity links derivative, curvature, and double pairing") {
    const FrameField abelian = realize(builtin("abelian"), 8);
    {
        const FrameJet jet = FrameJet::build(abelian);
        const TensorField xi = constant_vector(abelian.chart_ptr(), {1.0, 2.0});
        const TensorField eta = constant_vector(abelian.chart_ptr(), {-0.5, 0.25});
        const TensorField sigma = constant_vector(abelian.chart_ptr(), {0.75, -1.5});
        CHECK_LE(bianchi_residual(jet, xi, eta, sigma), 1e-15);
    }

    const FrameField heis = realize(builtin("heisenberg"), 9);
    {
        const FrameJet jet = FrameJet::build(heis);
        SplitMix64 rng(19);
        std::vector<double> c1, c2, c3;
        for (int i = 0; i < 3; ++i) {
            c1.push_back(rng.uniform_symmetric());
            c2.push_back(rng.uniform_symmetric());
            c3.push_back(rng.uniform_symmetric());
        }
        CHECK_LE(bianchi_residual(jet, constant_vector(heis.chart_ptr(), c1),
                                  constant_vector(heis.chart_ptr(), c2),
                                  constant_vector(heis.chart_ptr(), c3)),
                 1e-10);
    }

    const FrameField pert = pert_frame(23, 0.1, 2, 2, 16);
    {
        const FrameJet jet = FrameJet::build(pert);
        TensorField xi(pert.chart_ptr(), {IndexKind::coord_up});
        TensorField eta(pert.chart_ptr(), {IndexKind::coord_up});
        TensorField sigma(pert.chart_ptr(), {IndexKind::coord_up});
        SplitMix64 rng(4242);
        for (std::size_t node = 0; node < pert.chart().node_count(); ++node) {
            for (int i = 0; i < 2; ++i) {
                xi.node_data(node)[i] = rng.uniform_symmetric();
                eta.node_data(node)[i] = rng.uniform_symmetric();
                sigma.node_data(node)[i] = rng.uniform_symmetric();
            }
        }
        CHECK_LE(bianchi_residual(jet, xi, eta, sigma), 1e-8);
    }
}

TEST_CASE("gauge action composes frames with pointwise matrices") {
    const FrameField heis = realize(builtin("heisenberg"), 9);
    const auto chart = heis.chart_ptr();

    const GaugeField id = GaugeField::identity(chart);
    const FrameField same = gauge_act(id, heis);
    CHECK_EQ(max_abs_difference(same.values(), heis.values()), 0.0);

    const FrameField target = realize_on(perturbation(5, 0.1, 1, *chart), chart);
    TensorField ratio(chart, {IndexKind::coord_up, IndexKind::coord_down});
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        const Eigen::MatrixXd m = target.matrix_at(node) * heis.matrix_at(node).inverse();
        double* p = ratio.node_data(node);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) p[i * 3 + j] = m(i, j);
    }
    const GaugeField g = GaugeField::from_values(std::move(ratio));
    for (std::size_t node : sample_nodes(*chart, 31, 3)) {
        CHECK_LE((mat_of(g.a, node) * mat_of(g.b, node) - Eigen::Matrix3d::Identity())
                     .cwiseAbs()
                     .maxCoeff(),
                 1e-13);
    }
    const FrameField recovered = gauge_act(g, heis);
    CHECK_LE(max_abs_difference(recovered.values(), target.values()), 1e-12);

    const FrameField abelian = realize(builtin("abelian"), 8);
    TensorField diag(abelian.chart_ptr(), {IndexKind::coord_up, IndexKind::coord_down});
    for (std::size_t node = 0; node < abelian.chart().node_count(); ++node) {
        double* p = diag.node_data(node);
        p[0] = 2.0;
        p[3] = 1.0;
    }
    const FrameField scaled = gauge_act(GaugeField::from_values(std::move(diag)), abelian);
    for (std::size_t node = 0; node < abelian.chart().node_count(); ++node) {
        const Eigen::MatrixXd m = scaled.matrix_at(node);
        CHECK_EQ(m(0, 0), 2.0);
        CHECK_EQ(m(1, 1), 1.0);
        CHECK_EQ(m(0, 1), 0.0);
        CHECK_EQ(m(1, 0), 0.0);
    }

    TensorField bad_sig(chart, {IndexKind::coord_up, IndexKind::rn_down});
    CHECK_THROWS_AS(GaugeField::from_values(std::move(bad_sig)), ConfigError);

    TensorField singular(chart, {IndexKind::coord_up, IndexKind::coord_down});
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        double* p = singular.node_data(node);
        for (int i = 0; i < 3; ++i) p[i * 3 + i] = 1.0;
    }
    for (int c = 0; c < 9; ++c) singular.node_data(3)[c] = 0.0;
    CHECK_THROWS_AS(GaugeField::from_values(std::move(singular)), SingularFrameError);
}

TEST_CASE("curvature conjugation scales the outer indices only") {
    const FrameField pert = pert_frame(27, 0.1, 2, 2, 8);
    const auto chart = pert.chart_ptr();
    const TensorField rr = algebroid_curvature(connection(FrameJet::build(pert)));

    const TensorField same = gauge_transform_curvature(GaugeField::identity(chart), rr);
    CHECK_EQ(max_abs_difference(same, rr), 0.0);

    TensorField diag(chart, {IndexKind::coord_up, IndexKind::coord_down});
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        double* p = diag.node_data(node);
        p[0] = 2.0;
        p[3] = 1.0;
    }
    const TensorField scaled =
        gauge_transform_curvature(GaugeField::from_values(std::move(diag)), rr);
    const int n = 2;
    double worst = 0.0;
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        const double* sp = scaled.node_data(node);
        const double* rp = rr.node_data(node);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int m = 0; m < n; ++m) {
                        const double factor = (i == 0 ? 2.0 : 1.0) * (m == 0 ? 0.5 : 1.0);
                        worst = std::max(worst,
                                         std::abs(sp[((i * n + j) * n + k) * n + m] -
                                                  factor * rp[((i * n + j) * n + k) * n + m]));
                    }
    }
    CHECK_LE(worst, 1e-13);
}

TEST_CASE("trace vector of the connection against the metric and its flow operator") {
    const FrameField abelian = realize(builtin("abelian"), 8);
    {
        const FrameJet jet = FrameJet::build(abelian);
        CHECK_EQ(norm_sup(deturck_vector(jet)), 0.0);
        CHECK_EQ(norm_sup(deturck_operator(jet)), 0.0);
    }

    const FrameField heis = realize(builtin("heisenberg"), 9);
    {
        const FrameJet jet = FrameJet::build(heis);
        CHECK_LE(norm_sup(deturck_vector(jet)), 1e-14);
        CHECK_LE(norm_sup(deturck_operator(jet)), 1e-13);
    }

    const FrameField pert = pert_frame(33, 0.1, 2, 2, 32);
    const FrameJet jet = FrameJet::build(pert);
    const Connection conn = connection(jet);
    const int n = 2;

    const TensorField self_ref = deturck_vector(jet, &conn);
    CHECK_EQ(norm_sup(self_ref), 0.0);

    const TensorField w = deturck_vector(jet);
    CHECK_GT(norm_sup(w), 1e-4);
    for (std::size_t node : sample_nodes(pert.chart(), 55, 3)) {
        const auto x = pert.chart().node_position(node);
        const auto afd = gamma_fd(pert, x, 1e-6);
        const Eigen::MatrixXd e = pert.eval(x);
        const Eigen::MatrixXd gi = e * e.transpose();
        const double* wp = w.node_data(node);
        for (int i = 0; i < n; ++i) {
            double expect = 0.0;
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b)
                    expect += gi(a, b) * afd[static_cast<std::size_t>(a)](i, b);
            CHECK_LE(std::abs(wp[i] - expect), 1e-8);
        }
    }

    REQUIRE(w.has_exact_derivative());
    CHECK_LE(max_abs_difference(w.exact_derivative(), differentiate_all(w)), 1e-8);

    const auto w_closed = [&](std::span<const double> x) {
        const auto a = gamma_closed(pert, x);
        const Eigen::MatrixXd e = pert.eval(x);
        const Eigen::MatrixXd gi = e * e.transpose();
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i)
            for (int av = 0; av < n; ++av)
                for (int b = 0; b < n; ++b)
                    out(i) += gi(av, b) * a[static_cast<std::size_t>(av)](i, b);
        return out;
    };
    const TensorField wq = deturck_operator(jet);
    for (std::size_t node : sample_nodes(pert.chart(), 56, 3)) {
        const auto x = pert.chart().node_position(node);
        const auto a = gamma_closed(pert, x);
        const Eigen::MatrixXd e = pert.eval(x);
        const Eigen::VectorXd wv = w_closed(x);
        const double h = 1e-5;
        Eigen::MatrixXd nw(n, n); // (row a = direction, col i = component)
        for (int dir = 0; dir < n; ++dir) {
            const Eigen::VectorXd dplus = w_closed(shifted(x, dir, h));
            const Eigen::VectorXd dminus = w_closed(shifted(x, dir, -h));
            for (int i = 0; i < n; ++i) {
                double cov = (dplus(i) - dminus(i)) / (2.0 * h);
                for (int b = 0; b < n; ++b) cov -= a[static_cast<std::size_t>(dir)](i, b) * wv(b);
                nw(dir, i) = cov;
            }
        }
        const double* qp = wq.node_data(node);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double expect = 0.0;
                for (int av = 0; av < n; ++av) expect += e(av, j) * nw(av, i);
                CHECK_LE(std::abs(qp[i * n + j] - expect), 1e-6);
            }
    }
}

TEST_CASE("first variation of the connection follows the covariant derivative formula") {
    const FrameField heis = realize(builtin("heisenberg"), 9);

    AnalyticFrame zero;
    zero.n = 3;
    zero.entry = [](int, int, std::span<const double>) { return 0.0; };
    zero.d1 = [](int, int, int, std::span<const double>) { return 0.0; };
    zero.d2 = [](int, int, int, int, std::span<const double>) { return 0.0; };
    const VariationReport none = variation_check(heis, zero);
    CHECK_EQ(none.connection_residual, 0.0);
    CHECK_EQ(none.torsion_residual, 0.0);

    const FrameField abelian = realize(builtin("abelian"), 12);
    AnalyticFrame wave;
    wave.n = 2;
    const Eigen::Matrix2d c = (Eigen::Matrix2d() << 0.3, -0.1, 0.2, 0.05).finished();
    const Eigen::Matrix2d d = (Eigen::Matrix2d() << -0.2, 0.4, 0.1, -0.3).finished();
    wave.matrix = [c, d](std::span<const double> x) {
        return Eigen::MatrixXd(std::sin(x[0]) * c + std::cos(x[1]) * d);
    };
    wave.matrix_d1 = [c, d](std::span<const double> x, int r) {
        return Eigen::MatrixXd(r == 0 ? Eigen::Matrix2d(std::cos(x[0]) * c)
                                      : Eigen::Matrix2d(-std::sin(x[1]) * d));
    };
    wave.matrix_d2 = [c, d](std::span<const double> x, int r, int s) {
        if (r == 0 && s == 0) return Eigen::MatrixXd(-std::sin(x[0]) * c);
        if (r == 1 && s == 1) return Eigen::MatrixXd(-std::cos(x[1]) * d);
        return Eigen::MatrixXd(Eigen::Matrix2d::Zero());
    };
    const VariationReport flat = variation_check(abelian, wave);
    CHECK_LE(flat.connection_residual, 1e-8);
    CHECK_LE(flat.torsion_residual, 1e-8);

    AnalyticFrame poly;
    poly.n = 3;
    const Eigen::Matrix3d c3 =
        (Eigen::Matrix3d() << 0.3, -0.1, 0.2, 0.05, 0.15, -0.25, 0.1, 0.0, -0.2).finished();
    const Eigen::Matrix3d d3 =
        (Eigen::Matrix3d() << -0.2, 0.4, 0.1, -0.3, 0.2, 0.05, 0.0, -0.15, 0.1).finished();
    poly.matrix = [c3, d3](std::span<const double> x) {
        return Eigen::MatrixXd(std::sin(x[0]) * c3 + x[1] * x[2] * d3);
    };
    poly.matrix_d1 = [c3, d3](std::span<const double> x, int r) {
        if (r == 0) return Eigen::MatrixXd(std::cos(x[0]) * c3);
        if (r == 1) return Eigen::MatrixXd(x[2] * d3);
        return Eigen::MatrixXd(x[1] * d3);
    };
    poly.matrix_d2 = [c3, d3](std::span<const double> x, int r, int s) {
        if (r == 0 && s == 0) return Eigen::MatrixXd(-std::sin(x[0]) * c3);
        if ((r == 1 && s == 2) || (r == 2 && s == 1)) return Eigen::MatrixXd(d3);
        return Eigen::MatrixXd(Eigen::Matrix3d::Zero());
    };
    const VariationReport curved = variation_check(heis, poly);
    CHECK_LE(curved.connection_residual, 1e-6);
    CHECK_LE(curved.torsion_residual, 1e-6);

    const FrameField sampled = FrameField::from_values(TensorField(heis.values()));
    CHECK_THROWS_AS(variation_check(sampled, zero), ConfigError);
}

TEST_CASE("symmetrized metric symbols are metric-compatible") {
    const FrameField abelian = realize(builtin("abelian"), 8);
    CHECK_EQ(norm_sup(christoffel_sigma(FrameJet::build(abelian))), 0.0);

    const FrameField heis = realize(builtin("heisenberg"), 9);
    const FrameJet jet = FrameJet::build(heis);
    const TensorField sigma = christoffel_sigma(jet);
    const int n = 3;

    double asym = 0.0;
    for (std::size_t node = 0; node < heis.chart().node_count(); ++node) {
        const double* p = sigma.node_data(node);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    asym = std::max(asym,
                                    std::abs(p[(i * n + j) * n + k] - p[(i * n + k) * n + j]));
    }
    CHECK_EQ(asym, 0.0);

    for (std::size_t node = 0; node < heis.chart().node_count(); ++node) {
        const double x = heis.chart().node_position(node)[0];
        const double* p = sigma.node_data(node);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    double expect = 0.0;
                    if (i == 0 && j == 1 && k == 1) expect = x;
                    if (i == 0 && ((j == 1 && k == 2) || (j == 2 && k == 1))) expect = -0.5;
                    if (i == 1 && ((j == 0 && k == 1) || (j == 1 && k == 0))) expect = -0.5 * x;
                    if (i == 1 && ((j == 0 && k == 2) || (j == 2 && k == 0))) expect = 0.5;
                    if (i == 2 && ((j == 0 && k == 1) || (j == 1 && k == 0)))
                        expect = 0.5 * (1.0 - x * x);
                    if (i == 2 && ((j == 0 && k == 2) || (j == 2 && k == 0))) expect = 0.5 * x;
                    CHECK_LE(std::abs(p[(i * n + j) * n + k] - expect), 1e-10);
                }
    }

    const CanonicalMetric metric = canonical_metric(jet);
    CHECK_LE(metric_compat_residual(sigma, metric), 1e-12);
    CHECK_LE(metric_compat_residual(connection(jet).gamma, metric), 1e-13);

    TensorField doubled = sigma;
    for (std::size_t c = 0; c < doubled.size(); ++c) doubled.data()[c] *= 2.0;
    CHECK_GT(metric_compat_residual(doubled, metric), 0.5);
}

TEST_CASE("symmetrized metric symbols negate the textbook symbols of the metric") {
    const FrameField pert = pert_frame(37, 0.1, 2, 2, 16);
    const FrameJet jet = FrameJet::build(pert);
    const TensorField sigma = christoffel_sigma(jet);
    const CanonicalMetric metric = canonical_metric(jet);
    CHECK_LE(metric_compat_residual(sigma, metric), 1e-12);
    CHECK_LE(metric_compat_residual(connection(jet).gamma, metric), 1e-12);

    const int n = 2;
    const auto g_at = [&](std::span<const double> x) {
        const Eigen::MatrixXd e = pert.eval(x);
        return Eigen::MatrixXd((e * e.transpose()).inverse());
    };
    for (std::size_t node : sample_nodes(pert.chart(), 404, 3)) {
        const auto x = pert.chart().node_position(node);
        const double h = 1e-5;
        std::vector<Eigen::MatrixXd> dg;
        for (int r = 0; r < n; ++r)
            dg.push_back((g_at(shifted(x, r, h)) - g_at(shifted(x, r, -h))) / (2.0 * h));
        const Eigen::MatrixXd gi = g_at(x).inverse();
        const double* sp = sigma.node_data(node);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    double classical = 0.0;
                    for (int a = 0; a < n; ++a)
                        classical += 0.5 * gi(i, a) *
                                     (dg[static_cast<std::size_t>(j)](a, k) +
                                      dg[static_cast<std::size_t>(k)](a, j) -
                                      dg[static_cast<std::size_t>(a)](j, k));
                    CHECK_LE(std::abs(sp[(i * n + j) * n + k] + classical), 1e-6);
                }
    }
}
