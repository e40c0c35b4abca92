#include "hflow/frame_field.hpp"

#include <cmath>
#include <sstream>

#include "hflow/errors.hpp"

namespace hflow {

namespace {

std::vector<IndexKind> direct_signature() {
    return {IndexKind::coord_up, IndexKind::rn_down};
}

std::string node_label(const Chart& chart, std::size_t node) {
    std::vector<int> idx(static_cast<std::size_t>(chart.dim()));
    chart.unflatten(node, idx);
    std::ostringstream s;
    s << "node " << node << " (";
    for (std::size_t a = 0; a < idx.size(); ++a) s << (a ? "," : "") << idx[a];
    s << ")";
    return s.str();
}

} // namespace

FrameField::FrameField(TensorField values, std::shared_ptr<const AnalyticFrame> analytic)
    : values_(std::move(values)), analytic_(std::move(analytic)) {
    if (values_.rank() != 2) throw ConfigError("frame fields are rank-2 matrix fields");
    check_invertible();
}

FrameField FrameField::from_values(TensorField values,
                                   std::shared_ptr<const AnalyticFrame> analytic) {
    return FrameField(std::move(values), std::move(analytic));
}

FrameField FrameField::from_function(
    std::shared_ptr<const Chart> chart,
    const std::function<double(int, int, std::span<const double>)>& fn) {
    TensorField values(chart, direct_signature());
    const int n = chart->dim();
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        const auto x = chart->node_position(node);
        double* out = values.node_data(node);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) out[i * n + j] = fn(i, j, x);
        }
    }
    return FrameField(std::move(values), nullptr);
}

FrameField FrameField::from_analytic(std::shared_ptr<const Chart> chart,
                                     std::shared_ptr<const AnalyticFrame> analytic) {
    if (!analytic || analytic->n != chart->dim()) {
        throw ConfigError("analytic frame dimension does not match the chart");
    }
    TensorField values(chart, direct_signature());
    const int n = chart->dim();
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        const auto x = chart->node_position(node);
        const Eigen::MatrixXd m = analytic_matrix(*analytic, x);
        double* out = values.node_data(node);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) out[i * n + j] = m(i, j);
        }
    }
    return FrameField(std::move(values), std::move(analytic));
}

Eigen::MatrixXd FrameField::matrix_at(std::size_t node) const {
    const int n = dim();
    Eigen::MatrixXd m(n, n);
    const double* p = values_.node_data(node);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) m(i, j) = p[i * n + j];
    }
    return m;
}

void FrameField::set_matrix_at(std::size_t node, const Eigen::MatrixXd& m) {
    const int n = dim();
    double* p = values_.node_data(node);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) p[i * n + j] = m(i, j);
    }
}

Eigen::MatrixXd analytic_matrix(const AnalyticFrame& af, std::span<const double> x) {
    if (af.matrix) return af.matrix(x);
    Eigen::MatrixXd m(af.n, af.n);
    for (int i = 0; i < af.n; ++i) {
        for (int j = 0; j < af.n; ++j) m(i, j) = af.entry(i, j, x);
    }
    return m;
}

Eigen::MatrixXd analytic_matrix_d1(const AnalyticFrame& af, std::span<const double> x, int r) {
    if (af.matrix_d1) return af.matrix_d1(x, r);
    Eigen::MatrixXd m(af.n, af.n);
    for (int i = 0; i < af.n; ++i) {
        for (int j = 0; j < af.n; ++j) m(i, j) = af.d1(i, j, r, x);
    }
    return m;
}

Eigen::MatrixXd analytic_matrix_d2(const AnalyticFrame& af, std::span<const double> x, int r, int s) {
    if (af.matrix_d2) return af.matrix_d2(x, r, s);
    Eigen::MatrixXd m(af.n, af.n);
    for (int i = 0; i < af.n; ++i) {
        for (int j = 0; j < af.n; ++j) m(i, j) = af.d2(i, j, r, s, x);
    }
    return m;
}

Eigen::MatrixXd FrameField::eval(std::span<const double> x) const {
    if (!analytic_) throw ConfigError("frame has no analytic backing for off-grid evaluation");
    return analytic_matrix(*analytic_, x);
}

Eigen::MatrixXd FrameField::eval_d1(std::span<const double> x, int r) const {
    if (!analytic_) throw ConfigError("frame has no analytic backing for off-grid evaluation");
    return analytic_matrix_d1(*analytic_, x, r);
}

Eigen::MatrixXd FrameField::eval_d2(std::span<const double> x, int r, int s) const {
    if (!analytic_) throw ConfigError("frame has no analytic backing for off-grid evaluation");
    return analytic_matrix_d2(*analytic_, x, r, s);
}

double FrameField::min_abs_det() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t node = 0; node < chart().node_count(); ++node) {
        const double d = std::abs(matrix_at(node).determinant());
        if (d < best) best = d;
    }
    return best;
}

void FrameField::check_invertible() const {
    for (std::size_t node = 0; node < chart().node_count(); ++node) {
        const double* p = values_.node_data(node);
        const std::size_t comps = values_.comps_per_node();
        for (std::size_t c = 0; c < comps; ++c) {
            if (!std::isfinite(p[c])) {
                throw NumericalError("non-finite frame entry at " + node_label(chart(), node));
            }
        }
        const double d = std::abs(matrix_at(node).determinant());
        if (!(d > kDetFloor)) {
            std::ostringstream msg;
            msg << "frame determinant " << d << " below floor " << kDetFloor << " at "
                << node_label(chart(), node);
            throw SingularFrameError(msg.str());
        }
    }
}

FrameField invert_frame(const FrameField& frame) {
    const int n = frame.dim();
    std::vector<IndexKind> sig;
    if (frame.values().signature() == std::vector<IndexKind>{IndexKind::coord_up, IndexKind::rn_down}) {
        sig = {IndexKind::rn_up, IndexKind::coord_down};
    } else {
        sig = {IndexKind::coord_up, IndexKind::rn_down};
    }
    TensorField values(frame.chart_ptr(), sig);
    for (std::size_t node = 0; node < frame.chart().node_count(); ++node) {
        const Eigen::MatrixXd inv = frame.matrix_at(node).inverse();
        double* out = values.node_data(node);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) out[i * n + j] = inv(i, j);
        }
    }

    std::shared_ptr<const AnalyticFrame> analytic;
    if (frame.has_analytic()) {
        auto base = frame.analytic_ptr();
        auto wrapped = std::make_shared<AnalyticFrame>();
        wrapped->n = n;
        wrapped->matrix = [base](std::span<const double> x) {
            return Eigen::MatrixXd(analytic_matrix(*base, x).inverse());
        };
        // dF = -F (dE) F, ddF = -F ddE F + F dE_s F dE_r F + F dE_r F dE_s F
        wrapped->matrix_d1 = [base](std::span<const double> x, int r) {
            const Eigen::MatrixXd F = analytic_matrix(*base, x).inverse();
            return Eigen::MatrixXd(-F * analytic_matrix_d1(*base, x, r) * F);
        };
        wrapped->matrix_d2 = [base](std::span<const double> x, int r, int s) {
            const Eigen::MatrixXd F = analytic_matrix(*base, x).inverse();
            const Eigen::MatrixXd Er = analytic_matrix_d1(*base, x, r);
            const Eigen::MatrixXd Es = analytic_matrix_d1(*base, x, s);
            const Eigen::MatrixXd m = F * Es * F * Er * F -
                                      F * analytic_matrix_d2(*base, x, r, s) * F +
                                      F * Er * F * Es * F;
            return m;
        };
        wrapped->entry = [mat = wrapped->matrix](int i, int j, std::span<const double> x) {
            return mat(x)(i, j);
        };
        wrapped->d1 = [dmat = wrapped->matrix_d1](int i, int j, int r,
                                                  std::span<const double> x) {
            return dmat(x, r)(i, j);
        };
        wrapped->d2 = [ddmat = wrapped->matrix_d2](int i, int j, int r, int s,
                                                   std::span<const double> x) {
            return ddmat(x, r, s)(i, j);
        };
        analytic = wrapped;
    }
    return FrameField::from_values(std::move(values), std::move(analytic));
}

} // namespace hflow
