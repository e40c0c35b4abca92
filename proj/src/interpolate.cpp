#include "hflow/interpolate.hpp"

#include <fftw3.h>

#include <cmath>
#include <numbers>

#include "hflow/errors.hpp"

namespace hflow {

namespace {

/// Natural cubic spline through equispaced samples; evaluates at local
/// coordinate t measured in units of the spacing (t = 0 at the first sample).
double spline_eval(const double* y, int n, double t) {
    // second-derivative moments via the standard tridiagonal system with
    // natural boundary conditions M[0] = M[n-1] = 0
    std::vector<double> m(static_cast<std::size_t>(n), 0.0);
    std::vector<double> c_prime(static_cast<std::size_t>(n), 0.0);
    std::vector<double> d_prime(static_cast<std::size_t>(n), 0.0);
    if (n > 2) {
        // rows i = 1..n-2: m[i-1] + 4 m[i] + m[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1])
        for (int i = 1; i <= n - 2; ++i) {
            const double rhs = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
            const double lower = (i == 1) ? 0.0 : 1.0;
            const double denom = 4.0 - lower * c_prime[static_cast<std::size_t>(i - 1)];
            c_prime[static_cast<std::size_t>(i)] = 1.0 / denom;
            d_prime[static_cast<std::size_t>(i)] =
                (rhs - lower * d_prime[static_cast<std::size_t>(i - 1)]) / denom;
        }
        for (int i = n - 2; i >= 1; --i) {
            m[static_cast<std::size_t>(i)] = d_prime[static_cast<std::size_t>(i)] -
                                             c_prime[static_cast<std::size_t>(i)] *
                                                 m[static_cast<std::size_t>(i + 1)];
        }
    }
    int i = static_cast<int>(std::floor(t));
    if (i < 0) i = 0;
    if (i > n - 2) i = n - 2;
    const double u = t - i;
    const double a = 1.0 - u;
    return a * y[i] + u * y[i + 1] +
           ((a * a * a - a) * m[static_cast<std::size_t>(i)] +
            (u * u * u - u) * m[static_cast<std::size_t>(i + 1)]) / 6.0;
}

} // namespace

FieldInterpolant::FieldInterpolant(const TensorField& f) {
    const Chart& chart = f.chart();
    kind_ = chart.kind();
    const int n = chart.dim();
    for (int a = 0; a < n; ++a) {
        resolution_.push_back(chart.resolution(a));
        origin_.push_back(chart.origin(a));
        length_.push_back(chart.length(a));
    }
    comps_ = f.comps_per_node();
    const std::size_t nodes = chart.node_count();

    if (kind_ == ChartKind::periodic_box) {
        spectra_.resize(comps_);
        std::vector<std::complex<double>> in(nodes), out(nodes);
        std::vector<int> dims(static_cast<std::size_t>(n));
        for (int a = 0; a < n; ++a) dims[static_cast<std::size_t>(a)] = resolution_[static_cast<std::size_t>(a)];
        fftw_plan plan = fftw_plan_dft(
            n, dims.data(), reinterpret_cast<fftw_complex*>(in.data()),
            reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD, FFTW_ESTIMATE);
        for (std::size_t c = 0; c < comps_; ++c) {
            for (std::size_t node = 0; node < nodes; ++node) {
                in[node] = f.data()[node * comps_ + c];
            }
            fftw_execute(plan);
            spectra_[c].assign(out.begin(), out.end());
        }
        fftw_destroy_plan(plan);
    } else {
        grids_.resize(comps_);
        for (std::size_t c = 0; c < comps_; ++c) {
            grids_[c].resize(nodes);
            for (std::size_t node = 0; node < nodes; ++node) {
                grids_[c][node] = f.data()[node * comps_ + c];
            }
        }
    }
}

void FieldInterpolant::eval(std::span<const double> x, std::span<double> out) const {
    const int n = dim();
    if (kind_ == ChartKind::periodic_box) {
        // per-axis phase weights; the unmatched top mode of an even-length
        // axis is evaluated as a pure cosine so the interpolant stays real
        std::vector<std::vector<std::complex<double>>> w(static_cast<std::size_t>(n));
        double norm = 1.0;
        for (int a = 0; a < n; ++a) {
            const int N = resolution_[static_cast<std::size_t>(a)];
            norm *= N;
            const double rel = x[static_cast<std::size_t>(a)] - origin_[static_cast<std::size_t>(a)];
            const double base = 2.0 * std::numbers::pi * rel / length_[static_cast<std::size_t>(a)];
            auto& wa = w[static_cast<std::size_t>(a)];
            wa.resize(static_cast<std::size_t>(N));
            for (int j = 0; j < N; ++j) {
                const int freq = (j <= N / 2) ? j : j - N;
                if (N % 2 == 0 && j == N / 2) {
                    wa[static_cast<std::size_t>(j)] = std::cos(base * freq);
                } else {
                    wa[static_cast<std::size_t>(j)] =
                        std::complex<double>(std::cos(base * freq), std::sin(base * freq));
                }
            }
        }
        std::vector<int> mode(static_cast<std::size_t>(n), 0);
        const std::size_t nmodes = spectra_.empty() ? 0 : spectra_[0].size();
        for (std::size_t c = 0; c < comps_; ++c) {
            std::complex<double> acc = 0.0;
            for (std::size_t flat = 0; flat < nmodes; ++flat) {
                std::size_t rem = flat;
                for (int a = n - 1; a >= 0; --a) {
                    const auto res = static_cast<std::size_t>(resolution_[static_cast<std::size_t>(a)]);
                    mode[static_cast<std::size_t>(a)] = static_cast<int>(rem % res);
                    rem /= res;
                }
                std::complex<double> weight = 1.0;
                for (int a = 0; a < n; ++a) {
                    weight *= w[static_cast<std::size_t>(a)][static_cast<std::size_t>(mode[static_cast<std::size_t>(a)])];
                }
                acc += spectra_[c][flat] * weight;
            }
            out[c] = acc.real() / norm;
        }
    } else {
        // tensor-product natural splines: repeatedly collapse the trailing
        // axis, which stays contiguous at every stage of the reduction
        std::vector<double> t(static_cast<std::size_t>(n));
        for (int a = 0; a < n; ++a) {
            const int N = resolution_[static_cast<std::size_t>(a)];
            const double h = length_[static_cast<std::size_t>(a)] / (N - 1);
            t[static_cast<std::size_t>(a)] =
                (x[static_cast<std::size_t>(a)] - origin_[static_cast<std::size_t>(a)]) / h;
        }
        for (std::size_t c = 0; c < comps_; ++c) {
            std::vector<double> work = grids_[c];
            std::vector<double> next;
            for (int a = n - 1; a >= 0; --a) {
                const auto na = static_cast<std::size_t>(resolution_[static_cast<std::size_t>(a)]);
                const std::size_t cur = work.size() / na;
                next.assign(cur, 0.0);
                for (std::size_t rest = 0; rest < cur; ++rest) {
                    next[rest] = spline_eval(work.data() + rest * na, static_cast<int>(na),
                                             t[static_cast<std::size_t>(a)]);
                }
                work = next;
            }
            out[c] = work[0];
        }
    }
}

} // namespace hflow
