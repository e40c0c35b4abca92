#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <hflow/frame_jet.hpp>
#include <hflow/tensor_field.hpp>

namespace hflow {

/// First-order connection data of a frame. gamma holds G^i_{jk} with
/// component order (i up, j down, k down); j is the differentiation index and
/// the array is NOT symmetric in (j,k). dgamma holds the exact partials
/// d_s G^i_{jk} with component order (s,i,j,k), assembled from the same jet,
/// so downstream curvature formulas never re-differentiate the grid.
struct Connection {
    TensorField gamma;
    TensorField dgamma;
};

/// Canonical metric of a frame: g = (E E^T)^{-1} entrywise, its pointwise
/// inverse, and the exact partials of g with component order (r,i,j).
struct CanonicalMetric {
    TensorField g;
    TensorField ginv;
    TensorField dg;
};

/// Pointwise invertible matrix field acting on frames, with its inverse
/// stored alongside. Component order (i up, j down) for both.
struct GaugeField {
    TensorField a;
    TensorField b;

    /// Computes and stores the pointwise inverse; throws SingularFrameError
    /// when any node's matrix is near-singular.
    static GaugeField from_values(TensorField values);
    static GaugeField identity(std::shared_ptr<const Chart> chart);
};

/// Connection of a frame: G^i_{jk} = (dE_j * F)^i_k.
Connection connection(const FrameJet& jet);
Connection connection(const FrameField& frame);

/// The frame matrix E as a tensor field (coord-up, reference-down) with its
/// exact derivative attached, and likewise F = E^{-1} (reference-up,
/// coord-down) with dF = -F dE F. Both are parallel: nabla of either is zero.
TensorField frame_values(const FrameJet& jet);
TensorField inverse_frame_values(const FrameJet& jet);

/// T^i_{jk} = G^i_{jk} - G^i_{kj}; antisymmetric in (j,k) exactly. The exact
/// derivative field (from dgamma) is attached to the result.
TensorField torsion(const Connection& conn);

/// First-order curvature r^i_{rj,k}, component order (i,r,j,k):
///   d_r G^i_{kj} - d_j G^i_{kr} + G^a_{kr} G^i_{aj} - G^a_{kj} G^i_{ar},
/// antisymmetric in the (r,j) pair exactly (alternation weight 1, no 1/2).
TensorField algebroid_curvature(const Connection& conn);

/// Companion curvature with the derivative slot contracted the other way:
///   d_r G^i_{jk} - d_j G^i_{rk} + G^a_{rk} G^i_{ja} - G^a_{jk} G^i_{ra}.
/// Identically zero for every connection built from a frame; returned as a
/// diagnostic.
TensorField tilde_curvature(const Connection& conn);

/// Covariant derivative with the differentiation index r contracted into the
/// FIRST lower slot of G: output has a new leading coord-down index r, and per
/// input index the correction is
///   coord-up i:   - G^i_{ra} t^{...a...}
///   coord-down j: + G^a_{rj} t^{...a...}
/// Reference (Rn) indices are inert. Uses the input's exact derivative when
/// attached, the grid scheme otherwise.
TensorField nabla(const TensorField& t, const Connection& conn);

/// Same, contracting the SECOND lower slot of G (G^i_{ar} / G^a_{jr}).
TensorField nabla_tilde(const TensorField& t, const Connection& conn);

CanonicalMetric canonical_metric(const FrameJet& jet);
CanonicalMetric canonical_metric(const FrameField& frame);

/// Converts the index at `position` between coordinate and reference type,
/// preserving variance: coord-up contracts with F, coord-down with E,
/// reference-up with E, reference-down with F. Moving then moving back is the
/// identity.
TensorField move_index(const TensorField& t, int position, const FrameJet& jet);

/// The unique frame-parallel field with the given component values at the
/// given node; all indices of the value must be coordinate indices. The
/// result satisfies nabla = 0 (its exact derivative is attached).
TensorField parallel_extend(const FrameJet& jet, std::size_t node,
                            const std::vector<IndexKind>& signature,
                            std::span<const double> value);

/// Second-order evolution operator h^i_j with the signature of E (i coord-up,
/// j reference-down):  h^i_j = -g^{bc} r^i_{ac,b} E^a_j.
/// Internally re-evaluates the equivalent contraction -g^{bc} (nabla_b T)^i_{ac} E^a_j
/// and throws IdentityViolationError if the two disagree beyond 1e-8.
TensorField homogeneous_operator(const FrameJet& jet);

/// (T(xi,eta))^i = T^i_{ab} xi^a eta^b for coord-up vector fields.
TensorField torsion_bracket(const TensorField& torsion_field, const TensorField& xi,
                            const TensorField& eta);

/// J(xi,eta,sigma) = T(xi,T(eta,sigma)) + T(eta,T(sigma,xi)) + T(sigma,T(xi,eta)).
TensorField jacobi_form(const TensorField& torsion_field, const TensorField& xi,
                        const TensorField& eta, const TensorField& sigma);

/// Evaluates the three equivalent cyclic expressions (covariant-derivative
/// form, curvature form, and the 3-form J) and returns the largest pairwise
/// sup-norm difference.
double bianchi_residual(const FrameJet& jet, const TensorField& xi, const TensorField& eta,
                        const TensorField& sigma);

/// (a e)^i_j = a^i_k e^k_j pointwise. Result is a sampled frame (no analytic
/// backing).
FrameField gauge_act(const GaugeField& gauge, const FrameField& frame);

/// r'^i_{jk,m} = a^i_p r^p_{jk,q} b^q_m: conjugates the up index and the
/// acting index, leaves the antisymmetric pair untouched. The claim that this
/// matches recomputing the curvature after gauge_act is checked by the
/// validation suites, not assumed here.
TensorField gauge_transform_curvature(const GaugeField& gauge, const TensorField& curvature);

/// W^i = g^{ab} (G^i_{ab} - Gbar^i_{ab}); reference = nullptr means Gbar = 0.
/// The exact derivative of W is attached when the reference supplies dgamma.
TensorField deturck_vector(const FrameJet& jet, const Connection* reference = nullptr);

/// Wq^i_j = E^a_j (nabla_a W)^i, same signature as E.
TensorField deturck_operator(const FrameJet& jet, const Connection* reference = nullptr);

/// Sup-norm discrepancies between central finite differences of the
/// connection/torsion along E + s*H (s = ±1e-5) and the first-variation
/// formulas nabla_j (H F)^i_k and its antisymmetrization. Requires an
/// analytic frame; H is given by closed forms with the signature of E.
struct VariationReport {
    double connection_residual = 0.0;
    double torsion_residual = 0.0;
};
VariationReport variation_check(const FrameField& frame, const AnalyticFrame& h);

/// Symmetric second-kind symbols of the canonical metric in the frame's sign
/// convention: with base^i_{jk} = G^i_{jk} + T^a_{jb} g_{ka} g^{ib},
///   Sigma^i_{jk} = (base^i_{jk} + base^i_{kj}) / 2.
/// This symmetrized combination equals the NEGATIVE of the textbook
/// Levi-Civita symbols of g, so it satisfies the residual below.
TensorField christoffel_sigma(const FrameJet& jet);

/// Max over nodes/components of d_r g_ij + C^a_{ri} g_aj + C^a_{rj} g_ia for
/// any connection-shaped input C (component order (i,r,k) like gamma).
double metric_compat_residual(const TensorField& connection_like, const CanonicalMetric& metric);

} // namespace hflow
