#include "hflow/frame_jet.hpp"

#include <cstring>

#include "hflow/differentiate.hpp"
#include "hflow/errors.hpp"
#include "hflow/parallel_for.hpp"

namespace hflow {

FrameJet FrameJet::build(const FrameField& frame) {
    FrameJet jet;
    jet.chart_ = frame.chart_ptr();
    jet.n_ = frame.dim();
    const int n = jet.n_;
    jet.nn_ = static_cast<std::size_t>(n * n);
    const std::size_t nodes = jet.chart_->node_count();
    const std::size_t nn = jet.nn_;

    jet.e_.resize(nodes * nn);
    jet.f_.resize(nodes * nn);
    jet.de_.resize(nodes * static_cast<std::size_t>(n) * nn);
    jet.dde_.resize(nodes * static_cast<std::size_t>(n * n) * nn);

    std::memcpy(jet.e_.data(), frame.values().data(), nodes * nn * sizeof(double));

    if (frame.has_analytic()) {
        const AnalyticFrame& af = frame.analytic();
        parallel_for(nodes, [&](std::size_t node) {
            const auto x = jet.chart_->node_position(node);
            for (int r = 0; r < n; ++r) {
                const Eigen::MatrixXd d = analytic_matrix_d1(af, x, r);
                double* out = jet.de_.data() +
                              (node * static_cast<std::size_t>(n) + static_cast<std::size_t>(r)) * nn;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) out[i * n + j] = d(i, j);
            }
            for (int s = 0; s < n; ++s) {
                for (int r = s; r < n; ++r) {
                    const Eigen::MatrixXd d = analytic_matrix_d2(af, x, r, s);
                    for (const int slot : {s * n + r, r * n + s}) {
                        double* out = jet.dde_.data() +
                                      (node * static_cast<std::size_t>(n * n) +
                                       static_cast<std::size_t>(slot)) *
                                          nn;
                        for (int i = 0; i < n; ++i)
                            for (int j = 0; j < n; ++j) out[i * n + j] = d(i, j);
                    }
                }
            }
        });
    } else {
        const TensorField d1 = differentiate_all(frame.values());
        if (d1.size() != jet.de_.size()) throw NumericalError("frame jet layout mismatch");
        std::memcpy(jet.de_.data(), d1.data(), d1.size() * sizeof(double));
        const TensorField d2 = differentiate_all(d1);
        if (d2.size() != jet.dde_.size()) throw NumericalError("frame jet layout mismatch");
        std::memcpy(jet.dde_.data(), d2.data(), d2.size() * sizeof(double));
    }

    parallel_for(nodes, [&](std::size_t node) {
        const Eigen::MatrixXd inv = jet.e(node).inverse();
        if (!inv.allFinite()) throw SingularFrameError("frame inverse is not finite");
        double* out = jet.f_.data() + node * nn;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) out[i * n + j] = inv(i, j);
    });

    return jet;
}

} // namespace hflow
