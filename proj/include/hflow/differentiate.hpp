#pragma once

#include "hflow/tensor_field.hpp"

namespace hflow {

/// Partial derivative along one coordinate axis using the chart's scheme:
/// Fourier spectral differentiation on periodic boxes, 4th-order central
/// finite differences with one-sided 4th-order boundary stencils on open
/// boxes. Returns the axis-slice of the tensor derivative, so the signature
/// is unchanged; `differentiate_all` materializes the full derivative with
/// its new leading coord-down index.
TensorField differentiate(const TensorField& f, int axis);

/// Tensor derivative: all axes stacked into one field whose signature gains
/// a leading coord-down differentiation index, out(node, {s} + comp).
TensorField differentiate_all(const TensorField& f);

/// Slice one direction out of a stacked derivative field (the layout
/// produced by differentiate_all / set_exact_derivative).
TensorField slice_leading_index(const TensorField& stacked, int axis,
                                std::vector<IndexKind> signature);

/// The single-axis derivative a consumer should use: the attached exact
/// derivative slice when present, the grid scheme otherwise.
TensorField partial(const TensorField& f, int axis);

} // namespace hflow
