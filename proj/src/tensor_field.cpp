#include "hflow/tensor_field.hpp"

#include <cmath>
#include <cstdlib>

#include "hflow/errors.hpp"

namespace hflow {

std::string index_kind_name(IndexKind kind) {
    switch (kind) {
        case IndexKind::coord_up: return "coord-up";
        case IndexKind::coord_down: return "coord-down";
        case IndexKind::rn_up: return "rn-up";
        case IndexKind::rn_down: return "rn-down";
    }
    return "unknown";
}

IndexKind index_kind_from_name(const std::string& name) {
    if (name == "coord-up") return IndexKind::coord_up;
    if (name == "coord-down") return IndexKind::coord_down;
    if (name == "rn-up") return IndexKind::rn_up;
    if (name == "rn-down") return IndexKind::rn_down;
    throw IoError("unknown index kind: " + name);
}

TensorField::TensorField(std::shared_ptr<const Chart> chart, std::vector<IndexKind> signature)
    : chart_(std::move(chart)), signature_(std::move(signature)) {
    comps_ = 1;
    const auto n = static_cast<std::size_t>(chart_->dim());
    for (std::size_t r = 0; r < signature_.size(); ++r) comps_ *= n;
    data_.assign(chart_->node_count() * comps_, 0.0);
}

std::size_t TensorField::comp_offset(std::span<const int> comp) const {
    const auto n = static_cast<std::size_t>(chart_->dim());
    std::size_t off = 0;
    for (std::size_t r = 0; r < signature_.size(); ++r) {
        off = off * n + static_cast<std::size_t>(comp[r]);
    }
    return off;
}

double& TensorField::at(std::size_t node, std::initializer_list<int> comp) {
    return at(node, std::span<const int>(comp.begin(), comp.size()));
}

double TensorField::at(std::size_t node, std::initializer_list<int> comp) const {
    return at(node, std::span<const int>(comp.begin(), comp.size()));
}

double& TensorField::at(std::size_t node, std::span<const int> comp) {
    return data_[node * comps_ + comp_offset(comp)];
}

double TensorField::at(std::size_t node, std::span<const int> comp) const {
    return data_[node * comps_ + comp_offset(comp)];
}

void TensorField::set_exact_derivative(TensorField derivative) {
    if (derivative.rank() != rank() + 1 ||
        derivative.signature().front() != IndexKind::coord_down) {
        throw ConfigError("exact derivative must prepend one coord-down index");
    }
    exact_derivative_ = std::make_shared<const TensorField>(std::move(derivative));
}

bool TensorField::same_shape(const TensorField& other) const {
    return *chart_ == other.chart() && signature_ == other.signature_;
}

double norm_sup(const TensorField& f) {
    double m = 0.0;
    const double* p = f.data();
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double v = std::abs(p[i]);
        if (v > m) m = v;
    }
    return m;
}

double norm_l2(const TensorField& f) {
    double acc = 0.0;
    const double* p = f.data();
    for (std::size_t i = 0; i < f.size(); ++i) acc += p[i] * p[i];
    return f.size() == 0 ? 0.0 : std::sqrt(acc / static_cast<double>(f.size()));
}

TensorField axpby(double a, const TensorField& f, double b, const TensorField& g) {
    if (!f.same_shape(g)) throw ConfigError("axpby: mismatched field shapes");
    TensorField out(f.chart_ptr(), f.signature());
    for (std::size_t i = 0; i < f.size(); ++i) {
        out.data()[i] = a * f.data()[i] + b * g.data()[i];
    }
    return out;
}

double max_abs_difference(const TensorField& f, const TensorField& g) {
    if (!f.same_shape(g)) throw ConfigError("max_abs_difference: mismatched field shapes");
    double m = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double v = std::abs(f.data()[i] - g.data()[i]);
        if (v > m) m = v;
    }
    return m;
}

} // namespace hflow
