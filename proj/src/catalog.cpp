#include "hflow/catalog.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "hflow/errors.hpp"

namespace hflow {

namespace {

constexpr int kSeriesTerms = 25; ///< remainder < 1e-12 for matrix sup-norms < 2

/// Derives the per-element accessors from the whole-matrix closures.
void attach_scalar_accessors(AnalyticFrame& af) {
    af.entry = [mat = af.matrix](int i, int j, std::span<const double> x) {
        return mat(x)(i, j);
    };
    af.d1 = [dmat = af.matrix_d1](int i, int j, int r, std::span<const double> x) {
        return dmat(x, r)(i, j);
    };
    af.d2 = [ddmat = af.matrix_d2](int i, int j, int r, int s, std::span<const double> x) {
        return ddmat(x, r, s)(i, j);
    };
}

FrameRecipe make_abelian() {
    FrameRecipe recipe;
    recipe.name = "abelian";
    recipe.dimension = 2;
    recipe.chart_kind = ChartKind::periodic_box;
    recipe.origin = {0.0, 0.0};
    recipe.length = {2.0 * std::numbers::pi, 2.0 * std::numbers::pi};
    recipe.default_resolution = 32;
    recipe.expect_zero_curvature = true;
    recipe.expect_zero_torsion = true;
    recipe.expect_zero_flow = true;
    recipe.notes = "identity frame; every first-order invariant vanishes";

    auto af = std::make_shared<AnalyticFrame>();
    af->n = 2;
    af->matrix = [](std::span<const double>) { return Eigen::MatrixXd::Identity(2, 2).eval(); };
    af->matrix_d1 = [](std::span<const double>, int) { return Eigen::MatrixXd::Zero(2, 2).eval(); };
    af->matrix_d2 = [](std::span<const double>, int, int) {
        return Eigen::MatrixXd::Zero(2, 2).eval();
    };
    attach_scalar_accessors(*af);
    recipe.frame = af;
    return recipe;
}

FrameRecipe make_heisenberg() {
    FrameRecipe recipe;
    recipe.name = "heisenberg";
    recipe.dimension = 3;
    recipe.chart_kind = ChartKind::open_box;
    recipe.origin = {-1.0, -1.0, -1.0};
    recipe.length = {2.0, 2.0, 2.0};
    recipe.default_resolution = 32;
    recipe.expect_zero_curvature = true;
    recipe.expect_zero_torsion = false;
    recipe.expect_zero_flow = true;
    recipe.notes = "torsion orientation: component (up 2, lower 0 1) = +1 (zero-based)";

    auto af = std::make_shared<AnalyticFrame>();
    af->n = 3;
    af->matrix = [](std::span<const double> x) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(3, 3);
        m(2, 1) = x[0];
        return m;
    };
    af->matrix_d1 = [](std::span<const double>, int r) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
        if (r == 0) m(2, 1) = 1.0;
        return m;
    };
    af->matrix_d2 = [](std::span<const double>, int, int) {
        return Eigen::MatrixXd::Zero(3, 3).eval();
    };
    attach_scalar_accessors(*af);
    recipe.frame = af;
    return recipe;
}

FrameRecipe make_affine() {
    FrameRecipe recipe;
    recipe.name = "affine";
    recipe.dimension = 2;
    recipe.chart_kind = ChartKind::open_box;
    recipe.origin = {-1.0, -1.0};
    recipe.length = {2.0, 2.0};
    recipe.default_resolution = 32;
    recipe.expect_zero_curvature = true;
    recipe.expect_zero_torsion = false;
    recipe.expect_zero_flow = true;
    recipe.notes = "torsion orientation: component (up 1, lower 0 1) = +1 (zero-based)";

    auto af = std::make_shared<AnalyticFrame>();
    af->n = 2;
    af->matrix = [](std::span<const double> x) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2, 2);
        m(1, 1) = std::exp(x[0]);
        return m;
    };
    af->matrix_d1 = [](std::span<const double> x, int r) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
        if (r == 0) m(1, 1) = std::exp(x[0]);
        return m;
    };
    af->matrix_d2 = [](std::span<const double> x, int r, int s) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
        if (r == 0 && s == 0) m(1, 1) = std::exp(x[0]);
        return m;
    };
    attach_scalar_accessors(*af);
    recipe.frame = af;
    return recipe;
}

/// Coefficient data for the band-limited generator field A(x). Each matrix
/// entry carries one cosine and one sine coefficient per retained mode; the
/// phase of mode m is sum_a m_a * kappa_a * (x_a - origin_a).
struct WaveData {
    int n = 0;
    std::vector<double> kappa;
    std::vector<double> origin;
    std::vector<std::vector<int>> modes;
    std::vector<double> cos_coeff; ///< index (i*n + j)*modes.size() + m
    std::vector<double> sin_coeff;

    std::size_t mode_count() const { return modes.size(); }

    void phases(std::span<const double> x, std::vector<double>& cth,
                std::vector<double>& sth) const {
        cth.resize(modes.size());
        sth.resize(modes.size());
        for (std::size_t m = 0; m < modes.size(); ++m) {
            double theta = 0.0;
            for (int a = 0; a < n; ++a) {
                theta += modes[m][static_cast<std::size_t>(a)] * kappa[static_cast<std::size_t>(a)] *
                         (x[static_cast<std::size_t>(a)] - origin[static_cast<std::size_t>(a)]);
            }
            cth[m] = std::cos(theta);
            sth[m] = std::sin(theta);
        }
    }

    /// 0th/1st/2nd derivative of A in directions r (and s); order 0 ignores
    /// both directions, order 1 ignores s.
    Eigen::MatrixXd generator(std::span<const double> x, int order, int r, int s) const {
        std::vector<double> cth, sth;
        phases(x, cth, sth);
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
        for (std::size_t m = 0; m < modes.size(); ++m) {
            double wave = 0.0, factor = 1.0;
            switch (order) {
            case 0:
                break;
            case 1:
                factor = modes[m][static_cast<std::size_t>(r)] * kappa[static_cast<std::size_t>(r)];
                break;
            default:
                factor = modes[m][static_cast<std::size_t>(r)] * kappa[static_cast<std::size_t>(r)] *
                         modes[m][static_cast<std::size_t>(s)] * kappa[static_cast<std::size_t>(s)];
                break;
            }
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    const std::size_t at = (static_cast<std::size_t>(i * n + j)) * modes.size() + m;
                    switch (order) {
                    case 0: wave = cos_coeff[at] * cth[m] + sin_coeff[at] * sth[m]; break;
                    case 1: wave = -cos_coeff[at] * sth[m] + sin_coeff[at] * cth[m]; break;
                    default: wave = -cos_coeff[at] * cth[m] - sin_coeff[at] * sth[m]; break;
                    }
                    out(i, j) += factor * wave;
                }
            }
        }
        return out;
    }
};

/// exp(A) through the truncated power series.
Eigen::MatrixXd series_exp(const Eigen::MatrixXd& a) {
    const auto n = a.rows();
    Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
    double fact = 1.0;
    for (int m = 1; m <= kSeriesTerms; ++m) {
        fact *= m;
        term = (a * term).eval();
        acc += term / fact;
    }
    return acc;
}

/// d/dx_r exp(A) via the term recursion D_m = A D_{m-1} + dA_r A^{m-1}.
Eigen::MatrixXd series_exp_d1(const Eigen::MatrixXd& a, const Eigen::MatrixXd& da) {
    const auto n = a.rows();
    Eigen::MatrixXd p = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
    double fact = 1.0;
    for (int m = 1; m <= kSeriesTerms; ++m) {
        fact *= m;
        d = (a * d + da * p).eval();
        p = (a * p).eval();
        acc += d / fact;
    }
    return acc;
}

/// d^2/dx_s dx_r exp(A) by differentiating the first-derivative recursion.
Eigen::MatrixXd series_exp_d2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& dar,
                              const Eigen::MatrixXd& das, const Eigen::MatrixXd& ddars) {
    const auto n = a.rows();
    Eigen::MatrixXd p = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd dr = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd dd = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
    double fact = 1.0;
    for (int m = 1; m <= kSeriesTerms; ++m) {
        fact *= m;
        dd = (das * dr + a * dd + ddars * p + dar * ds).eval();
        dr = (a * dr + dar * p).eval();
        ds = (a * ds + das * p).eval();
        p = (a * p).eval();
        acc += dd / fact;
    }
    return acc;
}

} // namespace

std::uint64_t SplitMix64::next() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double SplitMix64::uniform_symmetric() {
    const double unit = static_cast<double>(next() >> 11) * 0x1.0p-53; // [0,1)
    return 2.0 * unit - 1.0;
}

std::vector<std::string> builtin_names() { return {"abelian", "heisenberg", "affine"}; }

FrameRecipe builtin(const std::string& name) {
    FrameRecipe recipe;
    if (name == "abelian") {
        recipe = make_abelian();
    } else if (name == "heisenberg") {
        recipe = make_heisenberg();
    } else if (name == "affine") {
        recipe = make_affine();
    } else {
        throw ConfigError("unknown builtin frame \"" + name +
                          "\" (known: abelian, heisenberg, affine)");
    }
    audit_recipe_derivatives(recipe);
    return recipe;
}

FrameRecipe perturbation(std::uint64_t seed, double amplitude, int bandlimit,
                         const Chart& domain) {
    if (!(amplitude >= 0.0) || amplitude >= 0.5) {
        std::ostringstream msg;
        msg << "perturbation amplitude must lie in [0, 0.5), got " << amplitude;
        throw ConfigError(msg.str());
    }
    if (bandlimit < 0) throw ConfigError("perturbation bandlimit must be non-negative");

    const int n = domain.dim();
    auto data = std::make_shared<WaveData>();
    data->n = n;
    data->kappa.resize(static_cast<std::size_t>(n));
    data->origin.resize(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
        data->kappa[static_cast<std::size_t>(a)] = 2.0 * std::numbers::pi / domain.length(a);
        data->origin[static_cast<std::size_t>(a)] = domain.origin(a);
    }

    // Modes: every multi-index in {0..bandlimit}^n except all-zero, in
    // row-major (first axis slowest) order.
    std::vector<int> digits(static_cast<std::size_t>(n), 0);
    while (true) {
        bool all_zero = true;
        for (int d : digits) all_zero = all_zero && d == 0;
        if (!all_zero) data->modes.push_back(digits);
        int axis = n - 1;
        while (axis >= 0) {
            if (++digits[static_cast<std::size_t>(axis)] <= bandlimit) break;
            digits[static_cast<std::size_t>(axis)] = 0;
            --axis;
        }
        if (axis < 0) break;
    }

    // Coefficient draw order is part of the determinism contract: entries in
    // row-major order, modes in the order above, cosine before sine.
    const std::size_t mcount = data->mode_count();
    data->cos_coeff.resize(static_cast<std::size_t>(n * n) * mcount);
    data->sin_coeff.resize(static_cast<std::size_t>(n * n) * mcount);
    SplitMix64 rng(seed);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            for (std::size_t m = 0; m < mcount; ++m) {
                const std::size_t at = static_cast<std::size_t>(i * n + j) * mcount + m;
                data->cos_coeff[at] = rng.uniform_symmetric();
                data->sin_coeff[at] = rng.uniform_symmetric();
            }
        }
    }

    // Normalize so sup_x |A_ij(x)| <= amplitude for every entry.
    double worst = 0.0;
    for (int e = 0; e < n * n; ++e) {
        double weight = 0.0;
        for (std::size_t m = 0; m < mcount; ++m) {
            const std::size_t at = static_cast<std::size_t>(e) * mcount + m;
            weight += std::abs(data->cos_coeff[at]) + std::abs(data->sin_coeff[at]);
        }
        worst = std::max(worst, weight);
    }
    const double scale = (worst > 0.0) ? amplitude / worst : 0.0;
    for (double& c : data->cos_coeff) c *= scale;
    for (double& c : data->sin_coeff) c *= scale;

    auto af = std::make_shared<AnalyticFrame>();
    af->n = n;
    af->matrix = [data](std::span<const double> x) {
        return series_exp(data->generator(x, 0, 0, 0));
    };
    af->matrix_d1 = [data](std::span<const double> x, int r) {
        return series_exp_d1(data->generator(x, 0, 0, 0), data->generator(x, 1, r, 0));
    };
    af->matrix_d2 = [data](std::span<const double> x, int r, int s) {
        return series_exp_d2(data->generator(x, 0, 0, 0), data->generator(x, 1, r, 0),
                             data->generator(x, 1, s, 0), data->generator(x, 2, r, s));
    };
    attach_scalar_accessors(*af);

    FrameRecipe recipe;
    std::ostringstream label;
    label << "perturbation:seed=" << seed << ",amplitude=" << amplitude
          << ",bandlimit=" << bandlimit;
    recipe.name = label.str();
    recipe.dimension = n;
    recipe.chart_kind = domain.kind();
    recipe.origin.resize(static_cast<std::size_t>(n));
    recipe.length.resize(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
        recipe.origin[static_cast<std::size_t>(a)] = domain.origin(a);
        recipe.length[static_cast<std::size_t>(a)] = domain.length(a);
    }
    recipe.default_resolution = domain.resolution(0);
    recipe.frame = af;
    recipe.expect_zero_curvature = false;
    recipe.expect_zero_torsion = false;
    recipe.expect_zero_flow = false;
    recipe.notes = "seeded band-limited exponential frame";
    audit_recipe_derivatives(recipe);
    return recipe;
}

std::shared_ptr<const Chart> recipe_chart(const FrameRecipe& recipe, int resolution) {
    if (resolution <= 0) resolution = recipe.default_resolution;
    std::vector<int> res(static_cast<std::size_t>(recipe.dimension), resolution);
    return std::make_shared<Chart>(recipe.chart_kind, res, recipe.origin, recipe.length);
}

FrameField realize(const FrameRecipe& recipe, int resolution) {
    return realize_on(recipe, recipe_chart(recipe, resolution));
}

FrameField realize_on(const FrameRecipe& recipe, std::shared_ptr<const Chart> chart) {
    if (!chart) throw ConfigError("realize_on requires a chart");
    if (chart->dim() != recipe.dimension) {
        throw ConfigError("chart dimension does not match the recipe");
    }
    if (chart->kind() != recipe.chart_kind) {
        throw ConfigError("chart kind does not match the recipe domain");
    }
    for (int a = 0; a < chart->dim(); ++a) {
        const double tol = 1e-12 * (1.0 + std::abs(recipe.length[static_cast<std::size_t>(a)]));
        if (std::abs(chart->origin(a) - recipe.origin[static_cast<std::size_t>(a)]) > tol ||
            std::abs(chart->length(a) - recipe.length[static_cast<std::size_t>(a)]) > tol) {
            throw ConfigError("chart domain does not match the recipe domain");
        }
    }
    return FrameField::from_analytic(std::move(chart), recipe.frame);
}

void audit_recipe_derivatives(const FrameRecipe& recipe) {
    if (!recipe.frame) throw ConfigError("recipe has no analytic frame");
    const AnalyticFrame& af = *recipe.frame;
    const int n = recipe.dimension;
    constexpr double kTol = 1e-6;
    constexpr int kProbes = 5;

    SplitMix64 rng(0x9d5f31a7c2e84b61ULL);
    double worst = 0.0;
    std::vector<double> x(static_cast<std::size_t>(n));
    std::vector<double> xp(static_cast<std::size_t>(n));
    std::vector<double> xm(static_cast<std::size_t>(n));
    for (int probe = 0; probe < kProbes; ++probe) {
        for (int a = 0; a < n; ++a) {
            const double u = 0.5 * (rng.uniform_symmetric() + 1.0); // [0,1)
            x[static_cast<std::size_t>(a)] = recipe.origin[static_cast<std::size_t>(a)] +
                                             (0.1 + 0.8 * u) * recipe.length[static_cast<std::size_t>(a)];
        }
        for (int r = 0; r < n; ++r) {
            const double h = 1e-5 * recipe.length[static_cast<std::size_t>(r)];
            xp = x;
            xm = x;
            xp[static_cast<std::size_t>(r)] += h;
            xm[static_cast<std::size_t>(r)] -= h;
            const Eigen::MatrixXd fd1 =
                (analytic_matrix(af, xp) - analytic_matrix(af, xm)) / (2.0 * h);
            worst = std::max(worst,
                             (fd1 - analytic_matrix_d1(af, x, r)).cwiseAbs().maxCoeff());
            for (int s = 0; s < n; ++s) {
                const double hs = 1e-5 * recipe.length[static_cast<std::size_t>(s)];
                xp = x;
                xm = x;
                xp[static_cast<std::size_t>(s)] += hs;
                xm[static_cast<std::size_t>(s)] -= hs;
                const Eigen::MatrixXd fd2 =
                    (analytic_matrix_d1(af, xp, r) - analytic_matrix_d1(af, xm, r)) / (2.0 * hs);
                worst = std::max(worst,
                                 (fd2 - analytic_matrix_d2(af, x, r, s)).cwiseAbs().maxCoeff());
            }
        }
    }
    if (!(worst <= kTol)) {
        std::ostringstream msg;
        msg << "recipe \"" << recipe.name
            << "\" failed its derivative audit: max residual " << worst << " exceeds " << kTol;
        throw IdentityViolationError(msg.str());
    }
}

} // namespace hflow
