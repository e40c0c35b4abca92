#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "hflow/chart.hpp"
#include "hflow/differentiate.hpp"
#include "hflow/errors.hpp"
#include "hflow/field_io.hpp"
#include "hflow/frame_field.hpp"
#include "hflow/interpolate.hpp"
#include "hflow/parallel_for.hpp"
#include "hflow/tensor_field.hpp"

using namespace hflow;

namespace {

constexpr double kPi = std::numbers::pi;

std::shared_ptr<const Chart> torus(int dim, int res, double period = 2.0 * kPi) {
    return std::make_shared<const Chart>(Chart::periodic(dim, res, period));
}

std::shared_ptr<const Chart> box(int dim, int res, double lo = -1.0, double hi = 1.0) {
    return std::make_shared<const Chart>(Chart::box(dim, res, lo, hi));
}

TensorField scalar_field(std::shared_ptr<const Chart> chart,
                         const std::function<double(std::span<const double>)>& fn) {
    TensorField f(chart, {});
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        const auto x = chart->node_position(node);
        f.node_data(node)[0] = fn(x);
    }
    return f;
}

// deterministic filler with irregular mantissas for round-trip checks
double lcg_double(std::uint64_t& state) {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<double>(state >> 11) / 9007199254740992.0 - 0.5;
}

} // namespace

TEST_CASE("chart rejects resolutions below the stencil minimum") {
    CHECK_THROWS_AS(Chart::periodic(2, 4, 2.0 * kPi), ConfigError);
    CHECK_THROWS_AS(Chart::box(2, 7, -1.0, 1.0), ConfigError);
    CHECK_NOTHROW(Chart::periodic(2, 8, 2.0 * kPi));
}

TEST_CASE("chart node layout and spacing") {
    const auto t = torus(2, 8);
    CHECK(t->node_count() == 64);
    CHECK(t->spacing(0) == doctest::Approx(2.0 * kPi / 8).epsilon(1e-15));
    // periodic: no duplicated endpoint
    CHECK(t->coordinate(0, 7) == doctest::Approx(2.0 * kPi * 7.0 / 8.0));

    const auto b = box(1, 9);
    CHECK(b->spacing(0) == doctest::Approx(2.0 / 8.0));
    CHECK(b->coordinate(0, 0) == doctest::Approx(-1.0));
    CHECK(b->coordinate(0, 8) == doctest::Approx(1.0)); // both endpoints present

    std::vector<int> idx{3, 5};
    const std::size_t node = t->flatten(idx);
    std::vector<int> back(2);
    t->unflatten(node, back);
    CHECK(back == idx);
}

TEST_CASE("derivative of a constant field vanishes") {
    const auto chart = torus(2, 16);
    const auto f = scalar_field(chart, [](std::span<const double>) { return 4.25; });
    CHECK(norm_sup(differentiate(f, 0)) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(norm_sup(differentiate(f, 1)) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("spectral derivative of sin is cos to near machine precision") {
    const auto chart = torus(1, 32);
    const auto f = scalar_field(chart, [](std::span<const double> x) { return std::sin(x[0]); });
    const auto df = differentiate(f, 0);
    double worst = 0.0;
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        const auto x = chart->node_position(node);
        worst = std::max(worst, std::abs(df.node_data(node)[0] - std::cos(x[0])));
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("finite-difference derivative of a bilinear product is exact") {
    const auto chart = box(2, 32);
    const auto f = scalar_field(chart, [](std::span<const double> x) { return x[0] * x[1]; });
    const auto df = differentiate(f, 0);
    double worst = 0.0;
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        const auto x = chart->node_position(node);
        worst = std::max(worst, std::abs(df.node_data(node)[0] - x[1]));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("spectral differentiation is exact on band-limited data") {
    const auto chart = torus(2, 16);
    const auto f = scalar_field(chart, [](std::span<const double> x) {
        return std::sin(3.0 * x[0]) * std::cos(2.0 * x[1]) + std::cos(5.0 * x[0]);
    });
    const auto df = differentiate(f, 0);
    double worst = 0.0;
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        const auto x = chart->node_position(node);
        const double expect =
            3.0 * std::cos(3.0 * x[0]) * std::cos(2.0 * x[1]) - 5.0 * std::sin(5.0 * x[0]);
        worst = std::max(worst, std::abs(df.node_data(node)[0] - expect));
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("mixed partials commute to scheme order") {
    SUBCASE("periodic") {
        const auto chart = torus(2, 64);
        const auto f = scalar_field(chart, [](std::span<const double> x) {
            return std::exp(std::sin(x[0])) * std::cos(x[1]);
        });
        const auto dxy = differentiate(differentiate(f, 0), 1);
        const auto dyx = differentiate(differentiate(f, 1), 0);
        CHECK(max_abs_difference(dxy, dyx) <= 1e-6);
    }
    SUBCASE("open box") {
        const auto chart = box(2, 64);
        const auto f = scalar_field(chart, [](std::span<const double> x) {
            return std::sin(x[0] + 0.5 * x[1]);
        });
        const auto dxy = differentiate(differentiate(f, 0), 1);
        const auto dyx = differentiate(differentiate(f, 1), 0);
        CHECK(max_abs_difference(dxy, dyx) <= 1e-6);
    }
}

TEST_CASE("stacked derivative carries the leading differentiation index") {
    const auto chart = torus(2, 16);
    const auto f = scalar_field(chart, [](std::span<const double> x) {
        return std::sin(x[0]) + std::cos(x[1]);
    });
    const auto all = differentiate_all(f);
    REQUIRE(all.rank() == 1);
    CHECK(all.signature()[0] == IndexKind::coord_down);
    const auto d0 = differentiate(f, 0);
    const auto slice0 = slice_leading_index(all, 0, {});
    CHECK(max_abs_difference(d0, slice0) == doctest::Approx(0.0));
}

TEST_CASE("identity frame inverts to itself") {
    const auto chart = box(2, 8);
    const auto fr = FrameField::from_function(
        chart, [](int i, int j, std::span<const double>) { return i == j ? 1.0 : 0.0; });
    const auto inv = invert_frame(fr);
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        CHECK((inv.matrix_at(node) - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <=
              1e-14);
    }
}

TEST_CASE("shear frame inverse has the single negated off-diagonal entry") {
    // matrix = identity except entry (upper index 3, lower index 2) = x^1;
    // its inverse negates exactly that entry
    const auto chart = box(3, 8);
    const auto fr = FrameField::from_function(chart, [](int i, int j, std::span<const double> x) {
        if (i == j) return 1.0;
        if (i == 2 && j == 1) return x[0];
        return 0.0;
    });
    const auto inv = invert_frame(fr);
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        const auto x = chart->node_position(node);
        Eigen::MatrixXd expect = Eigen::MatrixXd::Identity(3, 3);
        expect(2, 1) = -x[0];
        CHECK((inv.matrix_at(node) - expect).cwiseAbs().maxCoeff() <= 1e-14);
    }
    // index tags swapped to the inverse orientation
    CHECK(inv.values().signature()[0] == IndexKind::rn_up);
    CHECK(inv.values().signature()[1] == IndexKind::coord_down);
}

TEST_CASE("uniform scaling inverts to the reciprocal scaling") {
    const auto chart = box(2, 8);
    const auto fr = FrameField::from_function(
        chart, [](int i, int j, std::span<const double>) { return i == j ? 2.0 : 0.0; });
    const auto inv = invert_frame(fr);
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        CHECK((inv.matrix_at(node) - 0.5 * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <=
              1e-15);
    }
}

TEST_CASE("double inversion returns the original frame") {
    const auto chart = box(2, 8);
    const auto fr = FrameField::from_function(chart, [](int i, int j, std::span<const double> x) {
        const double base = (i == j) ? 2.0 + 0.3 * x[0] : 0.25 * x[1];
        return base;
    });
    const auto back = invert_frame(invert_frame(fr));
    CHECK(max_abs_difference(fr.values(), back.values()) <= 1e-12);
    // and the product with the single inverse is the identity at every node
    const auto inv = invert_frame(fr);
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        const Eigen::MatrixXd prod = fr.matrix_at(node) * inv.matrix_at(node);
        CHECK((prod - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("a singular frame is rejected with the offending node named") {
    const auto chart = box(1, 9);
    try {
        // determinant crosses zero at the center node x = 0
        FrameField::from_function(chart,
                                  [](int, int, std::span<const double> x) { return x[0]; });
        FAIL("expected a singularity error");
    } catch (const SingularFrameError& e) {
        CHECK(std::string(e.what()).find("node") != std::string::npos);
    }
}

TEST_CASE("norms: zero field, single spike, constant field") {
    const auto chart = torus(2, 8);
    TensorField zero(chart, {IndexKind::coord_up});
    CHECK(norm_sup(zero) == 0.0);
    CHECK(norm_l2(zero) == 0.0);

    TensorField spike(chart, {IndexKind::coord_up});
    spike.at(5, {1}) = 3.0;
    CHECK(norm_sup(spike) == 3.0);

    TensorField constant(chart, {});
    for (std::size_t node = 0; node < chart->node_count(); ++node) {
        constant.node_data(node)[0] = -1.75;
    }
    CHECK(norm_l2(constant) == doctest::Approx(1.75).epsilon(1e-15));
}

TEST_CASE("field files round-trip bit-exactly") {
    const auto chart = torus(2, 8);
    TensorField f(chart, {IndexKind::coord_up, IndexKind::rn_down});
    std::uint64_t state = 12345;
    for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = lcg_double(state);

    const std::string doc = save_fields(*chart, {{"sample", f}});
    const auto loaded = load_fields(doc);
    REQUIRE(loaded.fields.size() == 1);
    CHECK(loaded.fields[0].name == "sample");
    CHECK(*loaded.chart == *chart);
    CHECK(loaded.fields[0].field.signature() == f.signature());
    REQUIRE(loaded.fields[0].field.size() == f.size());
    CHECK(std::memcmp(loaded.fields[0].field.data(), f.data(),
                      f.size() * sizeof(double)) == 0);
}

TEST_CASE("corrupted payloads and version mismatches are rejected") {
    const auto chart = torus(1, 8);
    TensorField f(chart, {});
    for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = static_cast<double>(i);
    std::string doc = save_fields(*chart, {{"v", f}});

    SUBCASE("truncated payload") {
        const auto pos = doc.find("\"data\": \"");
        REQUIRE(pos != std::string::npos);
        doc.erase(pos + 9, 8); // drop 8 payload characters
        CHECK_THROWS_AS(load_fields(doc), IoError);
    }
    SUBCASE("version mismatch") {
        const auto pos = doc.find("\"version\": 1");
        REQUIRE(pos != std::string::npos);
        doc.replace(pos, 12, "\"version\": 99");
        CHECK_THROWS_AS(load_fields(doc), IoError);
    }
    SUBCASE("garbage document") { CHECK_THROWS_AS(load_fields("not json"), IoError); }
}

TEST_CASE("an empty field list is a valid file") {
    const auto chart = box(2, 8);
    const std::string doc = save_fields(*chart, {});
    const auto loaded = load_fields(doc);
    CHECK(loaded.fields.empty());
    CHECK(*loaded.chart == *chart);
}

TEST_CASE("csv export is deterministic with named multi-index headers") {
    const auto chart = box(2, 8);
    TensorField f(chart, {IndexKind::coord_up, IndexKind::coord_down});
    std::uint64_t state = 99;
    for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = lcg_double(state);

    std::ostringstream a, b;
    export_csv(f, a);
    export_csv(f, b);
    CHECK(a.str() == b.str());
    const std::string header = a.str().substr(0, a.str().find('\n'));
    CHECK(header == "x0,x1,c_0_0,c_0_1,c_1_0,c_1_1");
}

TEST_CASE("interpolation reproduces values between nodes") {
    SUBCASE("trigonometric on the torus") {
        const auto chart = torus(2, 16);
        const auto f = scalar_field(chart, [](std::span<const double> x) {
            return std::sin(2.0 * x[0]) * std::cos(x[1]);
        });
        FieldInterpolant interp(f);
        const double x[2] = {0.731, 4.112};
        double out = 0.0;
        interp.eval(std::span<const double>(x, 2), std::span<double>(&out, 1));
        CHECK(out == doctest::Approx(std::sin(2.0 * x[0]) * std::cos(x[1])).epsilon(1e-10));
    }
    SUBCASE("cubic spline on the box") {
        const auto chart = box(2, 32);
        const auto f = scalar_field(chart, [](std::span<const double> x) {
            return std::sin(x[0]) * std::cos(0.5 * x[1]);
        });
        FieldInterpolant interp(f);
        const double x[2] = {0.3117, -0.642};
        double out = 0.0;
        interp.eval(std::span<const double>(x, 2), std::span<double>(&out, 1));
        CHECK(out == doctest::Approx(std::sin(x[0]) * std::cos(0.5 * x[1])).epsilon(1e-5));
    }
}

TEST_CASE("parallel maps match serial execution") {
    std::vector<double> serial(100000), parallel(100000);
    set_max_threads(1);
    parallel_for(serial.size(), [&](std::size_t i) { serial[i] = std::sin(0.001 * i); });
    set_max_threads(4);
    parallel_for(parallel.size(), [&](std::size_t i) { parallel[i] = std::sin(0.001 * i); });
    set_max_threads(1);
    CHECK(serial == parallel);
}
