#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "hflow/tensor_field.hpp"

namespace hflow {

/// One named field headed for disk.
struct NamedField {
    std::string name;
    TensorField field;
};

/// Serializes fields to the on-disk document: a JSON object holding a format
/// tag, version, chart descriptor, and per-field signature + base64-encoded
/// little-endian 64-bit float payload in node-major, row-major component
/// order. Round trips are bit-exact.
std::string save_fields(const Chart& chart, const std::vector<NamedField>& fields);
void save_fields_file(const std::string& path, const Chart& chart,
                      const std::vector<NamedField>& fields);

struct LoadedFields {
    std::shared_ptr<const Chart> chart;
    std::vector<NamedField> fields;
};

LoadedFields load_fields(const std::string& document);
LoadedFields load_fields_file(const std::string& path);

/// CSV export: one row per node, coordinate columns first, then one column
/// per component named from the index signature, values formatted with
/// round-trip precision so identical runs are byte-identical.
void export_csv(const TensorField& field, std::ostream& out);
void export_csv_file(const std::string& path, const TensorField& field);

} // namespace hflow
