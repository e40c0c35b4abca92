#include "hflow/frame_calculus.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hflow/differentiate.hpp"
#include "hflow/errors.hpp"
#include "hflow/parallel_for.hpp"

namespace hflow {

namespace {

using Sig = std::vector<IndexKind>;

bool is_coord(IndexKind k) {
    return k == IndexKind::coord_up || k == IndexKind::coord_down;
}
bool is_up(IndexKind k) { return k == IndexKind::coord_up || k == IndexKind::rn_up; }

/// Component stride of each index position for row-major all-n component
/// blocks: position p varies with stride n^(rank-1-p).
std::vector<std::size_t> comp_strides(int rank, int n) {
    std::vector<std::size_t> stride(static_cast<std::size_t>(rank), 1);
    for (int p = rank - 2; p >= 0; --p) {
        stride[static_cast<std::size_t>(p)] =
            stride[static_cast<std::size_t>(p + 1)] * static_cast<std::size_t>(n);
    }
    return stride;
}

} // namespace

Connection connection(const FrameJet& jet) {
    const int n = jet.dim();
    TensorField gamma(jet.chart_ptr(),
                      Sig{IndexKind::coord_up, IndexKind::coord_down, IndexKind::coord_down});
    TensorField dgamma(jet.chart_ptr(), Sig{IndexKind::coord_down, IndexKind::coord_up,
                                            IndexKind::coord_down, IndexKind::coord_down});
    parallel_for(jet.node_count(), [&](std::size_t node) {
        double* g = gamma.node_data(node);
        double* dg = dgamma.node_data(node);
        for (int j = 0; j < n; ++j) {
            const Eigen::MatrixXd aj = jet.a(node, j);
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < n; ++k) g[(i * n + j) * n + k] = aj(i, k);
        }
        for (int s = 0; s < n; ++s) {
            for (int j = 0; j < n; ++j) {
                const Eigen::MatrixXd daj = jet.da(node, s, j);
                for (int i = 0; i < n; ++i)
                    for (int k = 0; k < n; ++k)
                        dg[((s * n + i) * n + j) * n + k] = daj(i, k);
            }
        }
    });
    return Connection{std::move(gamma), std::move(dgamma)};
}

Connection connection(const FrameField& frame) { return connection(FrameJet::build(frame)); }

TensorField frame_values(const FrameJet& jet) {
    const int n = jet.dim();
    TensorField e(jet.chart_ptr(), Sig{IndexKind::coord_up, IndexKind::rn_down});
    TensorField de(jet.chart_ptr(),
                   Sig{IndexKind::coord_down, IndexKind::coord_up, IndexKind::rn_down});
    for (std::size_t node = 0; node < jet.node_count(); ++node) {
        double* ep = e.node_data(node);
        double* dp = de.node_data(node);
        const auto em = jet.e(node);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) ep[i * n + j] = em(i, j);
        for (int r = 0; r < n; ++r) {
            const auto dm = jet.de(node, r);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) dp[(r * n + i) * n + j] = dm(i, j);
        }
    }
    e.set_exact_derivative(std::move(de));
    return e;
}

TensorField inverse_frame_values(const FrameJet& jet) {
    const int n = jet.dim();
    TensorField f(jet.chart_ptr(), Sig{IndexKind::rn_up, IndexKind::coord_down});
    TensorField df(jet.chart_ptr(),
                   Sig{IndexKind::coord_down, IndexKind::rn_up, IndexKind::coord_down});
    for (std::size_t node = 0; node < jet.node_count(); ++node) {
        double* fp = f.node_data(node);
        double* dp = df.node_data(node);
        const auto fm = jet.f(node);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) fp[i * n + j] = fm(i, j);
        for (int r = 0; r < n; ++r) {
            const Eigen::MatrixXd dm = -fm * jet.de(node, r) * fm;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) dp[(r * n + i) * n + j] = dm(i, j);
        }
    }
    f.set_exact_derivative(std::move(df));
    return f;
}

TensorField torsion(const Connection& conn) {
    const int n = conn.gamma.dim();
    TensorField t(conn.gamma.chart_ptr(),
                  Sig{IndexKind::coord_up, IndexKind::coord_down, IndexKind::coord_down});
    TensorField dt(conn.gamma.chart_ptr(), Sig{IndexKind::coord_down, IndexKind::coord_up,
                                               IndexKind::coord_down, IndexKind::coord_down});
    for (std::size_t node = 0; node < t.chart().node_count(); ++node) {
        const double* g = conn.gamma.node_data(node);
        const double* dg = conn.dgamma.node_data(node);
        double* tp = t.node_data(node);
        double* dp = dt.node_data(node);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                for (int k = 0; k < n; ++k) {
                    tp[(i * n + j) * n + k] = g[(i * n + j) * n + k] - g[(i * n + k) * n + j];
                    for (int s = 0; s < n; ++s) {
                        dp[(((s * n + i) * n + j) * n + k)] =
                            dg[((s * n + i) * n + j) * n + k] - dg[((s * n + i) * n + k) * n + j];
                    }
                }
            }
        }
    }
    t.set_exact_derivative(std::move(dt));
    return t;
}

namespace {

/// Shared core of the two curvature contractions. `acting_last` selects which
/// lower slot of G pairs with the alternated derivative indices:
///   true  -> r^i_{rj,k} = d_r G^i_{kj} - d_j G^i_{kr} + G^a_{kr} G^i_{aj} - G^a_{kj} G^i_{ar}
///   false -> d_r G^i_{jk} - d_j G^i_{rk} + G^a_{rk} G^i_{ja} - G^a_{jk} G^i_{ra}
TensorField curvature_core(const Connection& conn, bool acting_last) {
    const int n = conn.gamma.dim();
    TensorField out(conn.gamma.chart_ptr(),
                    Sig{IndexKind::coord_up, IndexKind::coord_down, IndexKind::coord_down,
                        IndexKind::coord_down});
    parallel_for(out.chart().node_count(), [&](std::size_t node) {
        const double* g = conn.gamma.node_data(node);
        const double* dg = conn.dgamma.node_data(node);
        double* o = out.node_data(node);
        const auto G = [&](int i, int j, int k) { return g[(i * n + j) * n + k]; };
        const auto dG = [&](int s, int i, int j, int k) {
            return dg[((s * n + i) * n + j) * n + k];
        };
        for (int i = 0; i < n; ++i) {
            for (int r = 0; r < n; ++r) {
                for (int j = 0; j < n; ++j) {
                    for (int k = 0; k < n; ++k) {
                        double v;
                        if (acting_last) {
                            v = dG(r, i, k, j) - dG(j, i, k, r);
                            for (int a = 0; a < n; ++a)
                                v += G(a, k, r) * G(i, a, j) - G(a, k, j) * G(i, a, r);
                        } else {
                            v = dG(r, i, j, k) - dG(j, i, r, k);
                            for (int a = 0; a < n; ++a)
                                v += G(a, r, k) * G(i, j, a) - G(a, j, k) * G(i, r, a);
                        }
                        o[((i * n + r) * n + j) * n + k] = v;
                    }
                }
            }
        }
    });
    return out;
}

} // namespace

TensorField algebroid_curvature(const Connection& conn) { return curvature_core(conn, true); }

TensorField tilde_curvature(const Connection& conn) { return curvature_core(conn, false); }

namespace {

TensorField nabla_impl(const TensorField& t, const Connection& conn, bool second_slot) {
    if (t.chart_ptr().get() != conn.gamma.chart_ptr().get() &&
        !(t.chart() == conn.gamma.chart())) {
        throw ConfigError("tensor and connection live on different charts");
    }
    const int n = t.dim();
    const int rank = t.rank();
    Sig osig;
    osig.push_back(IndexKind::coord_down);
    for (IndexKind k : t.signature()) osig.push_back(k);
    TensorField out(t.chart_ptr(), osig);

    const TensorField grad = t.has_exact_derivative() ? t.exact_derivative() : differentiate_all(t);
    if (grad.size() != out.size()) throw ConfigError("derivative layout mismatch");
    std::copy(grad.data(), grad.data() + grad.size(), out.data());

    const std::size_t comps = t.comps_per_node();
    const auto stride = comp_strides(rank, n);
    const Sig& sig = t.signature();

    parallel_for(t.chart().node_count(), [&](std::size_t node) {
        const double* g = conn.gamma.node_data(node);
        const double* tp = t.node_data(node);
        double* op = out.node_data(node);
        const auto G = [&](int i, int j, int k) { return g[(i * n + j) * n + k]; };
        for (int r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < comps; ++c) {
                double corr = 0.0;
                for (int p = 0; p < rank; ++p) {
                    const IndexKind kind = sig[static_cast<std::size_t>(p)];
                    if (!is_coord(kind)) continue;
                    const std::size_t sp = stride[static_cast<std::size_t>(p)];
                    const int cp = static_cast<int>((c / sp) % static_cast<std::size_t>(n));
                    const std::size_t base = c - static_cast<std::size_t>(cp) * sp;
                    for (int a = 0; a < n; ++a) {
                        const double tv = tp[base + static_cast<std::size_t>(a) * sp];
                        if (kind == IndexKind::coord_up) {
                            corr -= (second_slot ? G(cp, a, r) : G(cp, r, a)) * tv;
                        } else {
                            corr += (second_slot ? G(a, cp, r) : G(a, r, cp)) * tv;
                        }
                    }
                }
                op[static_cast<std::size_t>(r) * comps + c] += corr;
            }
        }
    });
    return out;
}

} // namespace

TensorField nabla(const TensorField& t, const Connection& conn) {
    return nabla_impl(t, conn, false);
}

TensorField nabla_tilde(const TensorField& t, const Connection& conn) {
    return nabla_impl(t, conn, true);
}

CanonicalMetric canonical_metric(const FrameJet& jet) {
    const int n = jet.dim();
    TensorField g(jet.chart_ptr(), Sig{IndexKind::coord_down, IndexKind::coord_down});
    TensorField ginv(jet.chart_ptr(), Sig{IndexKind::coord_up, IndexKind::coord_up});
    TensorField dg(jet.chart_ptr(),
                   Sig{IndexKind::coord_down, IndexKind::coord_down, IndexKind::coord_down});
    TensorField dginv(jet.chart_ptr(),
                      Sig{IndexKind::coord_down, IndexKind::coord_up, IndexKind::coord_up});
    parallel_for(jet.node_count(), [&](std::size_t node) {
        const auto em = jet.e(node);
        const Eigen::MatrixXd gi = em * em.transpose();
        const Eigen::MatrixXd gm = gi.inverse();
        if (!gm.allFinite()) throw SingularFrameError("canonical metric inverse is not finite");
        double* gp = g.node_data(node);
        double* ip = ginv.node_data(node);
        double* dp = dg.node_data(node);
        double* dip = dginv.node_data(node);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                gp[i * n + j] = gm(i, j);
                ip[i * n + j] = gi(i, j);
            }
        }
        for (int r = 0; r < n; ++r) {
            const auto der = jet.de(node, r);
            const Eigen::MatrixXd dgi = der * em.transpose() + em * der.transpose();
            const Eigen::MatrixXd dgm = -gm * dgi * gm;
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    dp[(r * n + i) * n + j] = dgm(i, j);
                    dip[(r * n + i) * n + j] = dgi(i, j);
                }
            }
        }
    });
    TensorField g_with = std::move(g);
    g_with.set_exact_derivative(dg);
    TensorField ginv_with = std::move(ginv);
    ginv_with.set_exact_derivative(std::move(dginv));
    return CanonicalMetric{std::move(g_with), std::move(ginv_with), std::move(dg)};
}

CanonicalMetric canonical_metric(const FrameField& frame) {
    return canonical_metric(FrameJet::build(frame));
}

TensorField move_index(const TensorField& t, int position, const FrameJet& jet) {
    const int rank = t.rank();
    if (position < 0 || position >= rank) throw ConfigError("move_index position out of range");
    const int n = t.dim();
    const IndexKind kind = t.signature()[static_cast<std::size_t>(position)];
    IndexKind moved;
    switch (kind) {
    case IndexKind::coord_up: moved = IndexKind::rn_up; break;
    case IndexKind::coord_down: moved = IndexKind::rn_down; break;
    case IndexKind::rn_up: moved = IndexKind::coord_up; break;
    case IndexKind::rn_down: moved = IndexKind::coord_down; break;
    default: throw ConfigError("move_index: unsupported index kind");
    }
    Sig osig = t.signature();
    osig[static_cast<std::size_t>(position)] = moved;
    TensorField out(t.chart_ptr(), osig);

    const std::size_t comps = t.comps_per_node();
    const auto stride = comp_strides(rank, n);
    const std::size_t sp = stride[static_cast<std::size_t>(position)];

    parallel_for(t.chart().node_count(), [&](std::size_t node) {
        const auto em = jet.e(node);
        const auto fm = jet.f(node);
        const double* tp = t.node_data(node);
        double* op = out.node_data(node);
        for (std::size_t c = 0; c < comps; ++c) {
            const int cp = static_cast<int>((c / sp) % static_cast<std::size_t>(n));
            const std::size_t base = c - static_cast<std::size_t>(cp) * sp;
            double v = 0.0;
            for (int a = 0; a < n; ++a) {
                const double tv = tp[base + static_cast<std::size_t>(a) * sp];
                switch (kind) {
                case IndexKind::coord_up: v += fm(cp, a) * tv; break;   // out^c = F^c_a t^a
                case IndexKind::coord_down: v += em(a, cp) * tv; break; // out_c = t_a E^a_c
                case IndexKind::rn_up: v += em(cp, a) * tv; break;      // out^c = E^c_a t^a
                case IndexKind::rn_down: v += fm(a, cp) * tv; break;    // out_c = t_a F^a_c
                }
            }
            op[c] = v;
        }
    });
    return out;
}

TensorField parallel_extend(const FrameJet& jet, std::size_t node,
                            const std::vector<IndexKind>& signature,
                            std::span<const double> value) {
    const int n = jet.dim();
    const int rank = static_cast<int>(signature.size());
    for (IndexKind k : signature) {
        if (!is_coord(k)) throw ConfigError("parallel_extend expects coordinate indices only");
    }
    if (node >= jet.node_count()) throw ConfigError("parallel_extend: node out of range");
    std::size_t comps = 1;
    for (int p = 0; p < rank; ++p) comps *= static_cast<std::size_t>(n);
    if (value.size() != comps) throw ConfigError("parallel_extend: value size mismatch");

    TensorField out(jet.chart_ptr(), signature);
    Sig dsig;
    dsig.push_back(IndexKind::coord_down);
    for (IndexKind k : signature) dsig.push_back(k);
    TensorField dout(jet.chart_ptr(), dsig);

    const auto stride = comp_strides(rank, n);
    const Eigen::MatrixXd ep = jet.e(node);
    const Eigen::MatrixXd fp = jet.f(node);

    parallel_for(jet.node_count(), [&](std::size_t q) {
        const Eigen::MatrixXd m = jet.e(q) * fp;          // transport p -> q, up indices
        const Eigen::MatrixXd minv = ep * jet.f(q);       // down indices
        // d_r M = A_r M and d_r Minv = -Minv A_r, precomputed per direction.
        std::vector<Eigen::MatrixXd> dm(static_cast<std::size_t>(n));
        std::vector<Eigen::MatrixXd> dmi(static_cast<std::size_t>(n));
        for (int r = 0; r < n; ++r) {
            const Eigen::MatrixXd ar = jet.a(q, r);
            dm[static_cast<std::size_t>(r)] = ar * m;
            dmi[static_cast<std::size_t>(r)] = minv * ar;
        }

        double* op = out.node_data(q);
        double* dp = dout.node_data(q);
        std::vector<int> ci(static_cast<std::size_t>(rank));
        std::vector<int> si(static_cast<std::size_t>(rank));
        for (std::size_t c = 0; c < comps; ++c) {
            for (int p = 0; p < rank; ++p) {
                ci[static_cast<std::size_t>(p)] =
                    static_cast<int>((c / stride[static_cast<std::size_t>(p)]) %
                                     static_cast<std::size_t>(n));
            }
            double acc = 0.0;
            for (std::size_t c0 = 0; c0 < comps; ++c0) {
                for (int p = 0; p < rank; ++p) {
                    si[static_cast<std::size_t>(p)] =
                        static_cast<int>((c0 / stride[static_cast<std::size_t>(p)]) %
                                         static_cast<std::size_t>(n));
                }
                double w = value[c0];
                for (int p = 0; p < rank; ++p) {
                    const int cp = ci[static_cast<std::size_t>(p)];
                    const int s0 = si[static_cast<std::size_t>(p)];
                    w *= is_up(signature[static_cast<std::size_t>(p)]) ? m(cp, s0) : minv(s0, cp);
                }
                acc += w;
            }
            op[c] = acc;

            // Exact derivative: differentiate one transport factor at a time.
            for (int r = 0; r < n; ++r) {
                double dacc = 0.0;
                for (int pd = 0; pd < rank; ++pd) {
                    for (std::size_t c0 = 0; c0 < comps; ++c0) {
                        for (int p = 0; p < rank; ++p) {
                            si[static_cast<std::size_t>(p)] =
                                static_cast<int>((c0 / stride[static_cast<std::size_t>(p)]) %
                                                 static_cast<std::size_t>(n));
                        }
                        double w = value[c0];
                        for (int p = 0; p < rank; ++p) {
                            const int cp = ci[static_cast<std::size_t>(p)];
                            const int s0 = si[static_cast<std::size_t>(p)];
                            const bool up = is_up(signature[static_cast<std::size_t>(p)]);
                            double factor;
                            if (p == pd) {
                                factor = up ? dm[static_cast<std::size_t>(r)](cp, s0)
                                            : -dmi[static_cast<std::size_t>(r)](s0, cp);
                            } else {
                                factor = up ? m(cp, s0) : minv(s0, cp);
                            }
                            w *= factor;
                        }
                        dacc += w;
                    }
                }
                dp[static_cast<std::size_t>(r) * comps + c] = dacc;
            }
        }
    });
    out.set_exact_derivative(std::move(dout));
    return out;
}

TensorField homogeneous_operator(const FrameJet& jet) {
    const int n = jet.dim();
    const Connection conn = connection(jet);
    const CanonicalMetric metric = canonical_metric(jet);
    const TensorField rr = algebroid_curvature(conn);
    const TensorField t = torsion(conn);
    const TensorField nt = nabla(t, conn);

    TensorField out(jet.chart_ptr(), Sig{IndexKind::coord_up, IndexKind::rn_down});
    double mismatch = 0.0;
    for (std::size_t node = 0; node < jet.node_count(); ++node) {
        const double* gi = metric.ginv.node_data(node);
        const double* rp = rr.node_data(node);
        const double* np = nt.node_data(node);
        const auto em = jet.e(node);
        double* op = out.node_data(node);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                double h_curv = 0.0, h_nt = 0.0;
                for (int a = 0; a < n; ++a) {
                    for (int b = 0; b < n; ++b) {
                        for (int c = 0; c < n; ++c) {
                            const double w = gi[b * n + c] * em(a, j);
                            h_curv -= w * rp[((i * n + a) * n + c) * n + b];
                            h_nt -= w * np[((b * n + i) * n + a) * n + c];
                        }
                    }
                }
                op[i * n + j] = h_curv;
                mismatch = std::max(mismatch, std::abs(h_curv - h_nt));
            }
        }
    }
    if (!(mismatch <= 1e-8)) {
        std::ostringstream msg;
        msg << "evolution operator internal consistency failed: the curvature "
               "contraction and the derivative-of-torsion contraction differ by "
            << mismatch;
        throw IdentityViolationError(msg.str());
    }
    return out;
}

TensorField torsion_bracket(const TensorField& torsion_field, const TensorField& xi,
                            const TensorField& eta) {
    const int n = torsion_field.dim();
    if (xi.signature() != Sig{IndexKind::coord_up} || eta.signature() != Sig{IndexKind::coord_up}) {
        throw ConfigError("torsion_bracket expects coord-up vector fields");
    }
    TensorField out(torsion_field.chart_ptr(), Sig{IndexKind::coord_up});
    for (std::size_t node = 0; node < out.chart().node_count(); ++node) {
        const double* tp = torsion_field.node_data(node);
        const double* xp = xi.node_data(node);
        const double* ep = eta.node_data(node);
        double* op = out.node_data(node);
        for (int i = 0; i < n; ++i) {
            double v = 0.0;
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) v += tp[(i * n + a) * n + b] * xp[a] * ep[b];
            op[i] = v;
        }
    }
    return out;
}

TensorField jacobi_form(const TensorField& torsion_field, const TensorField& xi,
                        const TensorField& eta, const TensorField& sigma) {
    TensorField t1 = torsion_bracket(torsion_field, eta, sigma);
    TensorField t2 = torsion_bracket(torsion_field, sigma, xi);
    TensorField t3 = torsion_bracket(torsion_field, xi, eta);
    TensorField j1 = torsion_bracket(torsion_field, xi, t1);
    const TensorField j2 = torsion_bracket(torsion_field, eta, t2);
    const TensorField j3 = torsion_bracket(torsion_field, sigma, t3);
    for (std::size_t i = 0; i < j1.size(); ++i)
        j1.data()[i] += j2.data()[i] + j3.data()[i];
    return j1;
}

double bianchi_residual(const FrameJet& jet, const TensorField& xi, const TensorField& eta,
                        const TensorField& sigma) {
    const int n = jet.dim();
    const Connection conn = connection(jet);
    const TensorField t = torsion(conn);
    const TensorField nt = nabla(t, conn);
    const TensorField rr = algebroid_curvature(conn);
    const TensorField jform = jacobi_form(t, xi, eta, sigma);

    double worst = 0.0;
    for (std::size_t node = 0; node < jet.node_count(); ++node) {
        const double* np = nt.node_data(node);
        const double* rp = rr.node_data(node);
        const double* xp = xi.node_data(node);
        const double* ep = eta.node_data(node);
        const double* sp = sigma.node_data(node);
        const double* jp = jform.node_data(node);
        for (int i = 0; i < n; ++i) {
            double l1 = 0.0, l2 = 0.0;
            for (int r = 0; r < n; ++r) {
                for (int j = 0; j < n; ++j) {
                    for (int k = 0; k < n; ++k) {
                        const double cyc = xp[r] * ep[j] * sp[k] + ep[r] * sp[j] * xp[k] +
                                           sp[r] * xp[j] * ep[k];
                        l1 += np[((r * n + i) * n + j) * n + k] * cyc;
                        l2 += rp[((i * n + j) * n + k) * n + r] * cyc;
                    }
                }
            }
            const double l3 = jp[i];
            worst = std::max({worst, std::abs(l1 - l2), std::abs(l1 - l3), std::abs(l2 - l3)});
        }
    }
    return worst;
}

} // namespace hflow
