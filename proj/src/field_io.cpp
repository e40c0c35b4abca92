#include "hflow/field_io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "hflow/errors.hpp"

namespace hflow {

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kFormatTag = "hflow-fieldfile";

const char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve(((len + 2) / 3) * 4);
    std::size_t i = 0;
    for (; i + 3 <= len; i += 3) {
        const std::uint32_t v = (static_cast<std::uint32_t>(data[i]) << 16) |
                                (static_cast<std::uint32_t>(data[i + 1]) << 8) |
                                static_cast<std::uint32_t>(data[i + 2]);
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back(kB64Alphabet[v & 63]);
    }
    const std::size_t rem = len - i;
    if (rem == 1) {
        const std::uint32_t v = static_cast<std::uint32_t>(data[i]) << 16;
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back('=');
        out.push_back('=');
    } else if (rem == 2) {
        const std::uint32_t v = (static_cast<std::uint32_t>(data[i]) << 16) |
                                (static_cast<std::uint32_t>(data[i + 1]) << 8);
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int v = b64_value(c);
        if (v < 0) throw IoError("invalid base64 payload character");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<unsigned char>((acc >> bits) & 0xff));
        }
    }
    return out;
}

/// Payload bytes are little-endian on disk regardless of host order.
void to_little_endian(std::vector<unsigned char>& bytes) {
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i + 8 <= bytes.size(); i += 8) {
            for (int k = 0; k < 4; ++k) std::swap(bytes[i + static_cast<std::size_t>(k)], bytes[i + static_cast<std::size_t>(7 - k)]);
        }
    }
}

nlohmann::json chart_to_json(const Chart& chart) {
    nlohmann::json j;
    j["kind"] = chart.kind() == ChartKind::periodic_box ? "periodic-box" : "open-box";
    std::vector<int> res;
    std::vector<double> origin, length;
    for (int a = 0; a < chart.dim(); ++a) {
        res.push_back(chart.resolution(a));
        origin.push_back(chart.origin(a));
        length.push_back(chart.length(a));
    }
    j["resolution"] = res;
    j["origin"] = origin;
    j["length"] = length;
    return j;
}

Chart chart_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    ChartKind k;
    if (kind == "periodic-box") {
        k = ChartKind::periodic_box;
    } else if (kind == "open-box") {
        k = ChartKind::open_box;
    } else {
        throw IoError("unknown chart kind: " + kind);
    }
    return Chart(k, j.at("resolution").get<std::vector<int>>(),
                 j.at("origin").get<std::vector<double>>(),
                 j.at("length").get<std::vector<double>>());
}

} // namespace

std::string save_fields(const Chart& chart, const std::vector<NamedField>& fields) {
    nlohmann::json doc;
    doc["format"] = kFormatTag;
    doc["version"] = kFormatVersion;
    doc["chart"] = chart_to_json(chart);
    doc["fields"] = nlohmann::json::array();
    for (const auto& nf : fields) {
        if (!(nf.field.chart() == chart)) {
            throw IoError("field '" + nf.name + "' lives on a different chart than the file");
        }
        nlohmann::json fj;
        fj["name"] = nf.name;
        std::vector<std::string> sig;
        for (IndexKind kind : nf.field.signature()) sig.push_back(index_kind_name(kind));
        fj["signature"] = sig;
        std::vector<unsigned char> bytes(nf.field.size() * sizeof(double));
        std::memcpy(bytes.data(), nf.field.data(), bytes.size());
        to_little_endian(bytes);
        fj["data"] = base64_encode(bytes.data(), bytes.size());
        doc["fields"].push_back(std::move(fj));
    }
    return doc.dump(2);
}

void save_fields_file(const std::string& path, const Chart& chart,
                      const std::vector<NamedField>& fields) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << save_fields(chart, fields);
    if (!out) throw IoError("write failed: " + path);
}

LoadedFields load_fields(const std::string& document) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(document);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("field file is not valid JSON: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != kFormatTag) {
            throw IoError("not a field file (wrong format tag)");
        }
        if (doc.at("version").get<int>() != kFormatVersion) {
            std::ostringstream msg;
            msg << "unsupported field file version " << doc.at("version").get<int>()
                << " (expected " << kFormatVersion << ")";
            throw IoError(msg.str());
        }
        LoadedFields result;
        result.chart = std::make_shared<const Chart>(chart_from_json(doc.at("chart")));
        for (const auto& fj : doc.at("fields")) {
            std::vector<IndexKind> sig;
            for (const auto& name : fj.at("signature")) {
                sig.push_back(index_kind_from_name(name.get<std::string>()));
            }
            TensorField field(result.chart, sig);
            std::vector<unsigned char> bytes = base64_decode(fj.at("data").get<std::string>());
            if (bytes.size() != field.size() * sizeof(double)) {
                std::ostringstream msg;
                msg << "payload shape mismatch for field '" << fj.at("name").get<std::string>()
                    << "': got " << bytes.size() << " bytes, expected "
                    << field.size() * sizeof(double);
                throw IoError(msg.str());
            }
            to_little_endian(bytes); // self-inverse byte swap on big-endian hosts
            std::memcpy(field.data(), bytes.data(), bytes.size());
            result.fields.push_back({fj.at("name").get<std::string>(), std::move(field)});
        }
        return result;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed field file: ") + e.what());
    }
}

LoadedFields load_fields_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_fields(buf.str());
}

void export_csv(const TensorField& field, std::ostream& out) {
    const Chart& chart = field.chart();
    const int n = chart.dim();
    const int rank = field.rank();
    const auto nsz = static_cast<std::size_t>(n);

    for (int a = 0; a < n; ++a) out << (a ? "," : "") << "x" << a;
    std::vector<int> comp(static_cast<std::size_t>(rank), 0);
    const std::size_t comps = field.comps_per_node();
    for (std::size_t c = 0; c < comps; ++c) {
        std::size_t rem = c;
        for (int r = rank - 1; r >= 0; --r) {
            comp[static_cast<std::size_t>(r)] = static_cast<int>(rem % nsz);
            rem /= nsz;
        }
        out << (n || c ? "," : "") << "c";
        for (int r = 0; r < rank; ++r) out << "_" << comp[static_cast<std::size_t>(r)];
        if (rank == 0) out << "_0";
    }
    out << "\n";

    char buf[40];
    for (std::size_t node = 0; node < chart.node_count(); ++node) {
        const auto x = chart.node_position(node);
        bool first = true;
        for (int a = 0; a < n; ++a) {
            std::snprintf(buf, sizeof(buf), "%.17g", x[static_cast<std::size_t>(a)]);
            out << (first ? "" : ",") << buf;
            first = false;
        }
        const double* p = field.node_data(node);
        for (std::size_t c = 0; c < comps; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", p[c]);
            out << (first ? "" : ",") << buf;
            first = false;
        }
        out << "\n";
    }
}

void export_csv_file(const std::string& path, const TensorField& field) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    export_csv(field, out);
    if (!out) throw IoError("write failed: " + path);
}

} // namespace hflow
