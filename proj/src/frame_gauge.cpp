#include <algorithm>
#include <cmath>
#include <sstream>

#include "hflow/errors.hpp"
#include "hflow/frame_calculus.hpp"
#include "hflow/parallel_for.hpp"

namespace hflow {

namespace {

using Sig = std::vector<IndexKind>;

Eigen::MatrixXd node_matrix(const TensorField& f, std::size_t node) {
    const int n = f.dim();
    Eigen::MatrixXd m(n, n);
    const double* p = f.node_data(node);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = p[i * n + j];
    return m;
}

void store_matrix(TensorField& f, std::size_t node, const Eigen::MatrixXd& m) {
    const int n = f.dim();
    double* p = f.node_data(node);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) p[i * n + j] = m(i, j);
}

} // namespace

GaugeField GaugeField::from_values(TensorField values) {
    if (values.signature() != Sig{IndexKind::coord_up, IndexKind::coord_down}) {
        throw ConfigError("gauge fields carry one coord-up and one coord-down index");
    }
    TensorField inverse(values.chart_ptr(), values.signature());
    for (std::size_t node = 0; node < values.chart().node_count(); ++node) {
        const Eigen::MatrixXd m = node_matrix(values, node);
        const double det = m.determinant();
        if (!std::isfinite(det)) {
            throw NumericalError("gauge field has non-finite entries");
        }
        if (std::abs(det) < 1e-8) {
            std::ostringstream msg;
            msg << "gauge field is near singular at node " << node << " (|det| = " << std::abs(det)
                << ")";
            throw SingularFrameError(msg.str());
        }
        store_matrix(inverse, node, m.inverse());
    }
    return GaugeField{std::move(values), std::move(inverse)};
}

GaugeField GaugeField::identity(std::shared_ptr<const Chart> chart) {
    TensorField values(chart, Sig{IndexKind::coord_up, IndexKind::coord_down});
    const int n = chart->dim();
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        double* p = values.node_data(node);
        for (int i = 0; i < n; ++i) p[i * n + i] = 1.0;
    }
    return GaugeField::from_values(std::move(values));
}

FrameField gauge_act(const GaugeField& gauge, const FrameField& frame) {
    if (!(gauge.a.chart() == frame.chart())) {
        throw ConfigError("gauge field and frame live on different charts");
    }
    TensorField values(frame.chart_ptr(), frame.values().signature());
    for (std::size_t node = 0; node < frame.chart().node_count(); ++node) {
        store_matrix(values, node, node_matrix(gauge.a, node) * frame.matrix_at(node));
    }
    return FrameField::from_values(std::move(values));
}

TensorField gauge_transform_curvature(const GaugeField& gauge, const TensorField& curvature) {
    const int n = curvature.dim();
    if (curvature.rank() != 4) throw ConfigError("curvature fields have rank 4");
    TensorField out(curvature.chart_ptr(), curvature.signature());
    parallel_for(curvature.chart().node_count(), [&](std::size_t node) {
        const double* ap = gauge.a.node_data(node);
        const double* bp = gauge.b.node_data(node);
        const double* rp = curvature.node_data(node);
        double* op = out.node_data(node);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                for (int k = 0; k < n; ++k) {
                    for (int m = 0; m < n; ++m) {
                        double v = 0.0;
                        for (int p = 0; p < n; ++p) {
                            for (int q = 0; q < n; ++q) {
                                v += ap[i * n + p] * rp[((p * n + j) * n + k) * n + q] *
                                     bp[q * n + m];
                            }
                        }
                        op[((i * n + j) * n + k) * n + m] = v;
                    }
                }
            }
        }
    });
    return out;
}

TensorField deturck_vector(const FrameJet& jet, const Connection* reference) {
    const int n = jet.dim();
    const Connection conn = connection(jet);
    TensorField w(jet.chart_ptr(), Sig{IndexKind::coord_up});
    TensorField dw(jet.chart_ptr(), Sig{IndexKind::coord_down, IndexKind::coord_up});
    for (std::size_t node = 0; node < jet.node_count(); ++node) {
        const auto em = jet.e(node);
        const Eigen::MatrixXd gi = em * em.transpose();
        const double* gp = conn.gamma.node_data(node);
        const double* dgp = conn.dgamma.node_data(node);
        const double* rp = reference ? reference->gamma.node_data(node) : nullptr;
        const double* drp = reference ? reference->dgamma.node_data(node) : nullptr;
        double* wp = w.node_data(node);
        double* dwp = dw.node_data(node);
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int a = 0; a < n; ++a) {
                for (int b = 0; b < n; ++b) {
                    double diff = gp[(i * n + a) * n + b];
                    if (rp) diff -= rp[(i * n + a) * n + b];
                    acc += gi(a, b) * diff;
                }
            }
            wp[i] = acc;
        }
        for (int s = 0; s < n; ++s) {
            const auto des = jet.de(node, s);
            const Eigen::MatrixXd dgi = des * em.transpose() + em * des.transpose();
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int a = 0; a < n; ++a) {
                    for (int b = 0; b < n; ++b) {
                        double diff = gp[(i * n + a) * n + b];
                        double ddiff = dgp[((s * n + i) * n + a) * n + b];
                        if (rp) {
                            diff -= rp[(i * n + a) * n + b];
                            ddiff -= drp[((s * n + i) * n + a) * n + b];
                        }
                        acc += dgi(a, b) * diff + gi(a, b) * ddiff;
                    }
                }
                dwp[s * n + i] = acc;
            }
        }
    }
    w.set_exact_derivative(std::move(dw));
    return w;
}

TensorField deturck_operator(const FrameJet& jet, const Connection* reference) {
    const int n = jet.dim();
    const Connection conn = connection(jet);
    const TensorField w = deturck_vector(jet, reference);
    const TensorField nw = nabla(w, conn); // (a, i)
    TensorField out(jet.chart_ptr(), Sig{IndexKind::coord_up, IndexKind::rn_down});
    for (std::size_t node = 0; node < jet.node_count(); ++node) {
        const auto em = jet.e(node);
        const double* np = nw.node_data(node);
        double* op = out.node_data(node);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int a = 0; a < n; ++a) acc += em(a, j) * np[a * n + i];
                op[i * n + j] = acc;
            }
        }
    }
    return out;
}

VariationReport variation_check(const FrameField& frame, const AnalyticFrame& h) {
    if (!frame.has_analytic()) {
        throw ConfigError("variation_check needs an analytic frame to displace");
    }
    if (h.n != frame.dim()) throw ConfigError("variation field dimension mismatch");
    const int n = frame.dim();
    const auto chart = frame.chart_ptr();
    const auto base = frame.analytic_ptr();
    constexpr double kStep = 1e-5;

    const auto displaced = [&](double s) {
        auto af = std::make_shared<AnalyticFrame>();
        af->n = n;
        af->matrix = [base, &h, s](std::span<const double> x) {
            return Eigen::MatrixXd(analytic_matrix(*base, x) + s * analytic_matrix(h, x));
        };
        af->matrix_d1 = [base, &h, s](std::span<const double> x, int r) {
            return Eigen::MatrixXd(analytic_matrix_d1(*base, x, r) +
                                   s * analytic_matrix_d1(h, x, r));
        };
        af->matrix_d2 = [base, &h, s](std::span<const double> x, int r, int ss) {
            return Eigen::MatrixXd(analytic_matrix_d2(*base, x, r, ss) +
                                   s * analytic_matrix_d2(h, x, r, ss));
        };
        af->entry = [mat = af->matrix](int i, int j, std::span<const double> x) {
            return mat(x)(i, j);
        };
        af->d1 = [dmat = af->matrix_d1](int i, int j, int r, std::span<const double> x) {
            return dmat(x, r)(i, j);
        };
        af->d2 = [ddmat = af->matrix_d2](int i, int j, int r, int s2, std::span<const double> x) {
            return ddmat(x, r, s2)(i, j);
        };
        return connection(FrameField::from_analytic(chart, af));
    };

    const Connection plus = displaced(kStep);
    const Connection minus = displaced(-kStep);

    const FrameJet jet = FrameJet::build(frame);
    const Connection conn = connection(jet);

    // Formula side: K^i_k = H^i_a F^a_k with exact derivative, then nabla.
    TensorField k(chart, Sig{IndexKind::coord_up, IndexKind::coord_down});
    TensorField dk(chart, Sig{IndexKind::coord_down, IndexKind::coord_up, IndexKind::coord_down});
    for (std::size_t node = 0; node < jet.node_count(); ++node) {
        const auto x = chart->node_position(node);
        const Eigen::MatrixXd hm = analytic_matrix(h, x);
        const Eigen::MatrixXd fm = jet.f(node);
        store_matrix(k, node, hm * fm);
        double* dp = dk.node_data(node);
        for (int r = 0; r < n; ++r) {
            const Eigen::MatrixXd dfr = -fm * jet.de(node, r) * fm;
            const Eigen::MatrixXd dkm = analytic_matrix_d1(h, x, r) * fm + hm * dfr;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) dp[(r * n + i) * n + j] = dkm(i, j);
        }
    }
    k.set_exact_derivative(std::move(dk));
    const TensorField nk = nabla(k, conn); // (j, i, k)

    VariationReport report;
    const std::size_t nodes = jet.node_count();
    for (std::size_t node = 0; node < nodes; ++node) {
        const double* gp = plus.gamma.node_data(node);
        const double* gm = minus.gamma.node_data(node);
        const double* np = nk.node_data(node);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                for (int kk = 0; kk < n; ++kk) {
                    const double fd =
                        (gp[(i * n + j) * n + kk] - gm[(i * n + j) * n + kk]) / (2.0 * kStep);
                    const double formula = np[(j * n + i) * n + kk];
                    report.connection_residual =
                        std::max(report.connection_residual, std::abs(fd - formula));

                    const double fd_t = fd - (gp[(i * n + kk) * n + j] -
                                              gm[(i * n + kk) * n + j]) /
                                                 (2.0 * kStep);
                    const double formula_t = formula - np[(kk * n + i) * n + j];
                    report.torsion_residual =
                        std::max(report.torsion_residual, std::abs(fd_t - formula_t));
                }
            }
        }
    }
    return report;
}

TensorField christoffel_sigma(const FrameJet& jet) {
    const int n = jet.dim();
    const Connection conn = connection(jet);
    const TensorField t = torsion(conn);
    const CanonicalMetric metric = canonical_metric(jet);
    TensorField out(jet.chart_ptr(),
                    Sig{IndexKind::coord_up, IndexKind::coord_down, IndexKind::coord_down});
    for (std::size_t node = 0; node < jet.node_count(); ++node) {
        const double* gp = conn.gamma.node_data(node);
        const double* tp = t.node_data(node);
        const double* mg = metric.g.node_data(node);
        const double* mi = metric.ginv.node_data(node);
        double* op = out.node_data(node);
        const auto base = [&](int i, int j, int k) {
            double v = gp[(i * n + j) * n + k];
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b)
                    v += tp[(a * n + j) * n + b] * mg[k * n + a] * mi[i * n + b];
            return v;
        };
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    op[(i * n + j) * n + k] = 0.5 * (base(i, j, k) + base(i, k, j));
    }
    return out;
}

double metric_compat_residual(const TensorField& connection_like, const CanonicalMetric& metric) {
    const int n = metric.g.dim();
    if (connection_like.rank() != 3) throw ConfigError("connection-shaped input has rank 3");
    double worst = 0.0;
    for (std::size_t node = 0; node < metric.g.chart().node_count(); ++node) {
        const double* cp = connection_like.node_data(node);
        const double* gp = metric.g.node_data(node);
        const double* dp = metric.dg.node_data(node);
        for (int r = 0; r < n; ++r) {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    double v = dp[(r * n + i) * n + j];
                    for (int a = 0; a < n; ++a) {
                        v += cp[(a * n + r) * n + i] * gp[a * n + j] +
                             cp[(a * n + r) * n + j] * gp[i * n + a];
                    }
                    worst = std::max(worst, std::abs(v));
                }
            }
        }
    }
    return worst;
}

} // namespace hflow
