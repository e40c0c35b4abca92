#include "hflow/chart.hpp"

#include <cmath>
#include <sstream>

#include "hflow/errors.hpp"

namespace hflow {

namespace {
constexpr int kMinResolution = 8;
constexpr int kMaxDim = 4;
} // namespace

Chart::Chart(ChartKind kind,
             std::vector<int> resolution,
             std::vector<double> origin,
             std::vector<double> length)
    : kind_(kind),
      resolution_(std::move(resolution)),
      origin_(std::move(origin)),
      length_(std::move(length)) {
    const std::size_t n = resolution_.size();
    if (n < 1 || n > kMaxDim) {
        std::ostringstream msg;
        msg << "chart dimension must be between 1 and " << kMaxDim << ", got " << n;
        throw ConfigError(msg.str());
    }
    if (origin_.size() != n || length_.size() != n) {
        throw ConfigError("chart origin/length arrays must match the dimension");
    }
    node_count_ = 1;
    for (std::size_t a = 0; a < n; ++a) {
        if (resolution_[a] < kMinResolution) {
            std::ostringstream msg;
            msg << "resolution along axis " << a << " is " << resolution_[a]
                << "; at least " << kMinResolution << " nodes per axis are required";
            throw ConfigError(msg.str());
        }
        if (!(length_[a] > 0.0) || !std::isfinite(length_[a]) || !std::isfinite(origin_[a])) {
            throw ConfigError("chart extents must be finite with positive length");
        }
        node_count_ *= static_cast<std::size_t>(resolution_[a]);
    }
}

Chart Chart::periodic(int dim, int resolution, double period, double origin) {
    return Chart(ChartKind::periodic_box,
                 std::vector<int>(static_cast<std::size_t>(dim), resolution),
                 std::vector<double>(static_cast<std::size_t>(dim), origin),
                 std::vector<double>(static_cast<std::size_t>(dim), period));
}

Chart Chart::box(int dim, int resolution, double lo, double hi) {
    return Chart(ChartKind::open_box,
                 std::vector<int>(static_cast<std::size_t>(dim), resolution),
                 std::vector<double>(static_cast<std::size_t>(dim), lo),
                 std::vector<double>(static_cast<std::size_t>(dim), hi - lo));
}

double Chart::spacing(int axis) const {
    const auto a = static_cast<std::size_t>(axis);
    const int n = resolution_[a];
    return kind_ == ChartKind::periodic_box ? length_[a] / n : length_[a] / (n - 1);
}

double Chart::coordinate(int axis, int idx) const {
    return origin_[static_cast<std::size_t>(axis)] + spacing(axis) * idx;
}

std::size_t Chart::flatten(std::span<const int> idx) const {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < resolution_.size(); ++a) {
        flat = flat * static_cast<std::size_t>(resolution_[a]) + static_cast<std::size_t>(idx[a]);
    }
    return flat;
}

void Chart::unflatten(std::size_t node, std::span<int> idx) const {
    for (std::size_t a = resolution_.size(); a-- > 0;) {
        const auto res = static_cast<std::size_t>(resolution_[a]);
        idx[a] = static_cast<int>(node % res);
        node /= res;
    }
}

std::vector<double> Chart::node_position(std::size_t node) const {
    std::vector<int> idx(resolution_.size());
    unflatten(node, idx);
    std::vector<double> x(resolution_.size());
    for (std::size_t a = 0; a < resolution_.size(); ++a) {
        x[a] = coordinate(static_cast<int>(a), idx[a]);
    }
    return x;
}

bool Chart::contains(std::span<const double> x) const {
    if (x.size() != resolution_.size()) return false;
    if (kind_ == ChartKind::periodic_box) return true;
    constexpr double slack = 1e-12;
    for (std::size_t a = 0; a < resolution_.size(); ++a) {
        const double rel = slack * (1.0 + std::abs(length_[a]));
        if (x[a] < origin_[a] - rel || x[a] > origin_[a] + length_[a] + rel) return false;
    }
    return true;
}

bool Chart::operator==(const Chart& other) const {
    return kind_ == other.kind_ && resolution_ == other.resolution_ &&
           origin_ == other.origin_ && length_ == other.length_;
}

} // namespace hflow
