#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <hflow/chart.hpp>
#include <hflow/frame_field.hpp>

namespace hflow {

/// A reproducible construction of an analytic frame: closed-form entries with
/// first and second partial derivatives on a fixed domain, plus the structural
/// properties the frame is expected to exhibit. Validation suites use the
/// expectation flags to decide which identities must vanish.
///
/// Recipes are immutable after construction and safe to share across threads.
struct FrameRecipe {
    std::string name;
    int dimension = 0;

    /// Domain description; realize()/recipe_chart() build charts on it.
    ChartKind chart_kind = ChartKind::periodic_box;
    std::vector<double> origin;
    std::vector<double> length;
    int default_resolution = 32;

    std::shared_ptr<const AnalyticFrame> frame;

    bool expect_zero_curvature = false; ///< algebroid curvature vanishes
    bool expect_zero_torsion = false;
    bool expect_zero_flow = false;      ///< evolution operator vanishes

    /// Free-form record of sign/orientation choices baked into the entries
    /// (e.g. which torsion component is +1).
    std::string notes;
};

/// Names accepted by builtin().
std::vector<std::string> builtin_names();

/// Built-in analytic frames:
///  - "abelian":    identity matrix on a periodic box, n = 2;
///  - "heisenberg": n = 3 on the open box [-1,1]^3, identity except entry
///                  (row 2, col 1) = x0 (zero-based), so the inverse is the
///                  identity with -x0 in the same position;
///  - "affine":     n = 2 on the open box [-1,1]^2, diag(1, e^{x0}).
/// Throws ConfigError for an unknown name.
FrameRecipe builtin(const std::string& name);

/// Seeded band-limited random frame exp(A(x)) on the given chart's domain.
/// A is a trigonometric-polynomial matrix field (modes up to `bandlimit` per
/// axis, coefficients from a splitmix64 stream) normalized so that
/// sup|A_ij| <= amplitude; amplitude must lie in [0, 0.5), which keeps the
/// exponential uniformly invertible. Entries and derivatives are evaluated
/// through a truncated power series whose remainder is below 1e-12.
/// The same (seed, amplitude, bandlimit, domain) is bit-identical every time.
FrameRecipe perturbation(std::uint64_t seed, double amplitude, int bandlimit,
                         const Chart& domain);

/// Chart over the recipe's domain with the given resolution on every axis.
std::shared_ptr<const Chart> recipe_chart(const FrameRecipe& recipe, int resolution);

/// Sample the recipe on its domain. resolution = 0 uses the recipe default.
/// The sampled frame keeps the analytic backing for off-grid evaluation.
FrameField realize(const FrameRecipe& recipe, int resolution = 0);
FrameField realize_on(const FrameRecipe& recipe, std::shared_ptr<const Chart> chart);

/// Closed-form derivative audit: compares d1 against central differences of
/// the entries and d2 against central differences of d1 at interior probe
/// points; throws IdentityViolationError if any residual exceeds 1e-6.
/// builtin() and perturbation() run this before returning.
void audit_recipe_derivatives(const FrameRecipe& recipe);

/// Deterministic 64-bit generator used for all seeded draws.
struct SplitMix64 {
    std::uint64_t state = 0;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    std::uint64_t next();
    /// Uniform draw in [-1, 1).
    double uniform_symmetric();
};

} // namespace hflow
