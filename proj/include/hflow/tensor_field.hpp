#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hflow/chart.hpp"

namespace hflow {

/// Index typing carried as metadata by every tensor field. Contraction is
/// only legal between a coord_up/coord_down pair or an rn_up/rn_down pair.
enum class IndexKind { coord_up, coord_down, rn_up, rn_down };

std::string index_kind_name(IndexKind kind);
IndexKind index_kind_from_name(const std::string& name);

/// A multi-index field over a chart. Storage is node-major (chart flatten
/// order) with components row-major in the index signature. An optional
/// attached derivative field carries exact closed-form partials for data
/// assembled from analytic recipes; consumers fall back to the chart's grid
/// differentiation scheme when it is absent.
class TensorField {
public:
    TensorField(std::shared_ptr<const Chart> chart, std::vector<IndexKind> signature);

    const Chart& chart() const { return *chart_; }
    std::shared_ptr<const Chart> chart_ptr() const { return chart_; }
    const std::vector<IndexKind>& signature() const { return signature_; }
    int rank() const { return static_cast<int>(signature_.size()); }
    int dim() const { return chart_->dim(); }
    std::size_t comps_per_node() const { return comps_; }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* node_data(std::size_t node) { return data_.data() + node * comps_; }
    const double* node_data(std::size_t node) const { return data_.data() + node * comps_; }

    std::size_t comp_offset(std::span<const int> comp) const;
    double& at(std::size_t node, std::initializer_list<int> comp);
    double at(std::size_t node, std::initializer_list<int> comp) const;
    double& at(std::size_t node, std::span<const int> comp);
    double at(std::size_t node, std::span<const int> comp) const;

    /// Attach the exact derivative field: signature {coord_down} + signature()
    /// with the differentiation index leading.
    void set_exact_derivative(TensorField derivative);
    bool has_exact_derivative() const { return static_cast<bool>(exact_derivative_); }
    const TensorField& exact_derivative() const { return *exact_derivative_; }

    bool same_shape(const TensorField& other) const;

private:
    std::shared_ptr<const Chart> chart_;
    std::vector<IndexKind> signature_;
    std::size_t comps_;
    std::vector<double> data_;
    std::shared_ptr<const TensorField> exact_derivative_;
};

/// max |component| over all nodes; deterministic sequential reduction.
double norm_sup(const TensorField& f);

/// root mean square over nodes and components; deterministic sequential sum.
double norm_l2(const TensorField& f);

/// Pointwise linear combination a*f + b*g; shapes must match.
TensorField axpby(double a, const TensorField& f, double b, const TensorField& g);

/// sup |f - g|; shapes must match.
double max_abs_difference(const TensorField& f, const TensorField& g);

} // namespace hflow
