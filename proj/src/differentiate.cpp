#include "hflow/differentiate.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <vector>

#include "hflow/errors.hpp"

namespace hflow {

namespace {

/// Enumerates flat scalar offsets of line starts along `axis`: every grid
/// node whose index along `axis` is zero, times every component.
std::vector<std::size_t> line_starts(const TensorField& f, int axis) {
    const Chart& chart = f.chart();
    const int n = chart.dim();
    const std::size_t comps = f.comps_per_node();
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::vector<std::size_t> starts;
    starts.reserve(f.size() / static_cast<std::size_t>(chart.resolution(axis)));
    for (std::size_t node = 0; node < chart.node_count(); ++node) {
        chart.unflatten(node, idx);
        if (idx[static_cast<std::size_t>(axis)] != 0) continue;
        for (std::size_t c = 0; c < comps; ++c) starts.push_back(node * comps + c);
    }
    return starts;
}

/// Scalar stride between consecutive nodes along `axis`.
std::size_t axis_stride(const TensorField& f, int axis) {
    const Chart& chart = f.chart();
    std::size_t stride = f.comps_per_node();
    for (int b = chart.dim() - 1; b > axis; --b) {
        stride *= static_cast<std::size_t>(chart.resolution(b));
    }
    return stride;
}

void spectral_lines(const TensorField& f, int axis, TensorField& out) {
    const int N = f.chart().resolution(axis);
    const double L = f.chart().length(axis);
    const std::size_t stride = axis_stride(f, axis);
    const auto starts = line_starts(f, axis);

    double* buf = fftw_alloc_real(static_cast<std::size_t>(N));
    fftw_complex* spec = fftw_alloc_complex(static_cast<std::size_t>(N / 2 + 1));
    fftw_plan fwd = fftw_plan_dft_r2c_1d(N, buf, spec, FFTW_ESTIMATE);
    fftw_plan bwd = fftw_plan_dft_c2r_1d(N, spec, buf, FFTW_ESTIMATE);

    const double two_pi = 2.0 * std::numbers::pi;
    for (const std::size_t s0 : starts) {
        for (int k = 0; k < N; ++k) buf[k] = f.data()[s0 + static_cast<std::size_t>(k) * stride];
        fftw_execute(fwd);
        for (int k = 0; k <= N / 2; ++k) {
            const double kappa = two_pi * k / L;
            const double re = spec[k][0];
            const double im = spec[k][1];
            // multiply by i*kappa and fold in the 1/N round-trip normalization
            spec[k][0] = -kappa * im / N;
            spec[k][1] = kappa * re / N;
        }
        if (N % 2 == 0) {
            // the unmatched highest mode carries no usable derivative phase
            spec[N / 2][0] = 0.0;
            spec[N / 2][1] = 0.0;
        }
        fftw_execute(bwd);
        for (int k = 0; k < N; ++k) {
            out.data()[s0 + static_cast<std::size_t>(k) * stride] = buf[k];
        }
    }

    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(buf);
    fftw_free(spec);
}

void fd4_lines(const TensorField& f, int axis, TensorField& out) {
    const int N = f.chart().resolution(axis);
    const double h = f.chart().spacing(axis);
    const std::size_t stride = axis_stride(f, axis);
    const auto starts = line_starts(f, axis);
    std::vector<double> line(static_cast<std::size_t>(N));

    for (const std::size_t s0 : starts) {
        for (int k = 0; k < N; ++k) {
            line[static_cast<std::size_t>(k)] = f.data()[s0 + static_cast<std::size_t>(k) * stride];
        }
        auto put = [&](int k, double v) {
            out.data()[s0 + static_cast<std::size_t>(k) * stride] = v / (12.0 * h);
        };
        put(0, -25.0 * line[0] + 48.0 * line[1] - 36.0 * line[2] + 16.0 * line[3] - 3.0 * line[4]);
        put(1, -3.0 * line[0] - 10.0 * line[1] + 18.0 * line[2] - 6.0 * line[3] + line[4]);
        for (int k = 2; k < N - 2; ++k) {
            const auto u = static_cast<std::size_t>(k);
            put(k, line[u - 2] - 8.0 * line[u - 1] + 8.0 * line[u + 1] - line[u + 2]);
        }
        const auto m = static_cast<std::size_t>(N - 1);
        put(N - 2, 3.0 * line[m] + 10.0 * line[m - 1] - 18.0 * line[m - 2] + 6.0 * line[m - 3] - line[m - 4]);
        put(N - 1, 25.0 * line[m] - 48.0 * line[m - 1] + 36.0 * line[m - 2] - 16.0 * line[m - 3] + 3.0 * line[m - 4]);
    }
}

void scheme_derivative(const TensorField& f, int axis, TensorField& out) {
    if (f.chart().kind() == ChartKind::periodic_box) {
        spectral_lines(f, axis, out);
    } else {
        fd4_lines(f, axis, out);
    }
}

} // namespace

TensorField differentiate(const TensorField& f, int axis) {
    if (axis < 0 || axis >= f.dim()) throw ConfigError("differentiate: axis out of range");
    TensorField out(f.chart_ptr(), f.signature());
    scheme_derivative(f, axis, out);
    return out;
}

TensorField differentiate_all(const TensorField& f) {
    std::vector<IndexKind> sig;
    sig.reserve(f.signature().size() + 1);
    sig.push_back(IndexKind::coord_down);
    sig.insert(sig.end(), f.signature().begin(), f.signature().end());
    TensorField out(f.chart_ptr(), sig);
    const std::size_t comps = f.comps_per_node();
    const std::size_t n = static_cast<std::size_t>(f.dim());
    for (int axis = 0; axis < f.dim(); ++axis) {
        TensorField scratch(f.chart_ptr(), f.signature());
        scheme_derivative(f, axis, scratch);
        for (std::size_t node = 0; node < f.chart().node_count(); ++node) {
            std::memcpy(out.data() + (node * n + static_cast<std::size_t>(axis)) * comps,
                        scratch.data() + node * comps, comps * sizeof(double));
        }
    }
    return out;
}

TensorField slice_leading_index(const TensorField& stacked, int axis,
                                std::vector<IndexKind> signature) {
    TensorField out(stacked.chart_ptr(), std::move(signature));
    const std::size_t comps = out.comps_per_node();
    const std::size_t n = static_cast<std::size_t>(stacked.dim());
    for (std::size_t node = 0; node < stacked.chart().node_count(); ++node) {
        std::memcpy(out.data() + node * comps,
                    stacked.data() + (node * n + static_cast<std::size_t>(axis)) * comps,
                    comps * sizeof(double));
    }
    return out;
}

TensorField partial(const TensorField& f, int axis) {
    if (f.has_exact_derivative()) {
        return slice_leading_index(f.exact_derivative(), axis, f.signature());
    }
    return differentiate(f, axis);
}

} // namespace hflow
