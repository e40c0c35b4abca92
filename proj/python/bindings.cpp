// Python bindings: frames, invariants, evolution, pointwise reconstruction,
// development, the scalar comparison model, and the validation battery.
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "hflow/catalog.hpp"
#include "hflow/errors.hpp"
#include "hflow/field_io.hpp"
#include "hflow/flows.hpp"
#include "hflow/frame_calculus.hpp"
#include "hflow/frame_jet.hpp"
#include "hflow/groupoid.hpp"
#include "hflow/validate.hpp"

namespace py = pybind11;
using namespace hflow;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Copies a field into an array shaped (nodes, n, n, ...) with one trailing
/// axis per component index.
py::array_t<double> field_to_array(const TensorField& field) {
    const int n = field.dim();
    std::vector<py::ssize_t> shape{
        static_cast<py::ssize_t>(field.chart().node_count())};
    for (std::size_t r = 0; r < field.signature().size(); ++r)
        shape.push_back(n);
    py::array_t<double> out(shape);
    std::memcpy(out.mutable_data(), field.data(),
                field.size() * sizeof(double));
    return out;
}

py::array_t<double> vector_to_array(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(double));
    return out;
}

FrameField make_builtin(const std::string& name, int res) {
    return realize(builtin(name), res);
}

FrameField make_perturbation(std::uint64_t seed, double amplitude,
                             int bandlimit, int dim, int res) {
    auto chart = std::make_shared<Chart>(Chart::periodic(dim, res, kTwoPi));
    return realize_on(perturbation(seed, amplitude, bandlimit, *chart), chart);
}

py::dict frame_invariants(const FrameField& frame) {
    const FrameJet jet = FrameJet::build(frame);
    const Connection conn = connection(jet);
    const FlowState state = flow_state(0.0, frame);
    py::dict out;
    out["sup_torsion"] = norm_sup(torsion(conn));
    out["sup_curvature"] = norm_sup(algebroid_curvature(conn));
    out["sup_tilde_curvature"] = norm_sup(tilde_curvature(conn));
    out["sup_operator"] = norm_sup(homogeneous_operator(jet));
    out["min_abs_det"] = state.min_abs_det;
    out["sup_frame"] = state.sup_frame;
    return out;
}

py::dict evolve(const FrameField& frame, double t_end, double dt,
                bool correct_against_initial) {
    FlowTrace trace = [&] {
        if (correct_against_initial) {
            const Connection ref = connection(FrameJet::build(frame));
            return deturck_pde_integrate(frame, ref, t_end, dt);
        }
        return hf_pde_integrate(frame, t_end, dt);
    }();
    std::vector<double> times, sup_op, sup_tor;
    for (const FlowSample& s : trace.samples) {
        times.push_back(s.t);
        sup_op.push_back(s.sup_operator);
        sup_tor.push_back(s.sup_torsion);
    }
    py::dict out;
    out["termination"] = std::string(flow_termination_name(trace.termination));
    out["final_time"] = trace.final_time;
    out["times"] = vector_to_array(times);
    out["sup_operator"] = vector_to_array(sup_op);
    out["sup_torsion"] = vector_to_array(sup_tor);
    out["final_values"] = field_to_array(trace.final_values);
    out["drift"] = max_abs_difference(trace.final_values, frame.values());
    out["diagnostic"] = trace.diagnostic;
    return out;
}

py::dict cross_validate_py(const FrameField& frame, double t_end, double dt) {
    const CrossValidationReport rep = cross_validate(frame, t_end, dt);
    py::dict out;
    out["times"] = vector_to_array(rep.times);
    out["deviation"] = vector_to_array(rep.deviation);
    out["max_deviation"] = rep.max_deviation;
    out["completed"] =
        rep.pde_termination == FlowTermination::completed && !rep.ode_blew_up;
    out["diagnostic"] = rep.diagnostic;
    return out;
}

py::dict scalar_blowup_py(double a0, double rate, double t_end) {
    const ScalarBlowup s = scalar_blowup(a0, rate, t_end);
    py::dict out;
    out["has_pole"] = s.has_pole;
    out["pole_time"] = s.pole_time;
    out["numeric_blow_up"] = s.numeric_blow_up;
    out["numeric_estimate"] = s.numeric_estimate;
    out["times"] = vector_to_array(s.times);
    out["values"] = vector_to_array(s.values);
    return out;
}

py::dict develop_segment_py(const FrameField& frame,
                            const std::vector<double>& p,
                            const std::vector<double>& q,
                            const std::vector<double>& target, int steps) {
    const TwoPointSplitting splitting(frame);
    const Development dev = develop_segment(splitting, p, q, target, steps);
    py::dict out;
    out["residual"] = dev.residual;
    out["terminal"] = vector_to_array(dev.terminal());
    out["terminal_jet"] = dev.terminal_jet;
    return out;
}

py::dict suite_to_dict(const SuiteResult& r) {
    py::list assertions;
    for (const ValidationAssertion& a : r.assertions) {
        py::dict d;
        d["name"] = a.name;
        d["tolerance"] = a.tolerance;
        d["measured"] = a.measured;
        d["passed"] = a.pass;
        d["note"] = a.note;
        assertions.append(std::move(d));
    }
    py::dict out;
    out["suite"] = r.suite;
    out["criterion"] = r.criterion;
    out["passed"] = r.pass;
    out["assertions"] = std::move(assertions);
    out["seconds"] = r.seconds;
    return out;
}

py::dict run_suite_py(const std::string& name, int res2, int res3) {
    ValidationConfig cfg;
    cfg.resolution2 = res2;
    cfg.resolution3 = res3;
    return suite_to_dict(run_validation_suite(name, cfg));
}

void save_frame(const FrameField& frame, const std::string& path) {
    save_fields_file(path, frame.chart(), {{"frame", frame.values()}});
}

FrameField load_frame(const std::string& path) {
    LoadedFields loaded = load_fields_file(path);
    for (NamedField& f : loaded.fields)
        if (f.name == "frame") return FrameField::from_values(std::move(f.field));
    if (loaded.fields.size() == 1)
        return FrameField::from_values(std::move(loaded.fields.front().field));
    throw ConfigError("field file \"" + path +
                      "\" holds no field named \"frame\"");
}

} // namespace

PYBIND11_MODULE(hflowlab, m) {
    m.doc() = "numerical laboratory for frame fields on parallelizable "
              "domains";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<NumericalError>(m, "NumericalError");

    py::class_<FrameField>(m, "Frame",
                           "an everywhere-invertible matrix field on a grid")
        .def_property_readonly("dim", &FrameField::dim)
        .def_property_readonly("nodes",
                               [](const FrameField& f) {
                                   return f.chart().node_count();
                               })
        .def_property_readonly("resolution",
                               [](const FrameField& f) {
                                   return f.chart().resolution(0);
                               })
        .def("values",
             [](const FrameField& f) { return field_to_array(f.values()); },
             "frame entries shaped (nodes, n, n)");

    m.def("builtin_names", &builtin_names,
          "names accepted by frame()");
    m.def("frame", &make_builtin, py::arg("name"), py::arg("res") = 0,
          "realize a named analytic frame (res 0 = its default)");
    m.def("perturbation_frame", &make_perturbation, py::arg("seed") = 0,
          py::arg("amp") = 0.1, py::arg("band") = 2, py::arg("dim") = 2,
          py::arg("res") = 64,
          "seeded band-limited random frame on a periodic chart");
    m.def("invariants", &frame_invariants, py::arg("frame"),
          "sup norms of torsion/curvature/operator plus frame bounds");
    m.def("torsion_field",
          [](const FrameField& f) {
              return field_to_array(
                  torsion(connection(FrameJet::build(f))));
          },
          py::arg("frame"), "torsion components shaped (nodes, n, n, n)");
    m.def("curvature_field",
          [](const FrameField& f) {
              return field_to_array(
                  algebroid_curvature(connection(FrameJet::build(f))));
          },
          py::arg("frame"),
          "curvature components shaped (nodes, n, n, n, n)");
    m.def("evolve", &evolve, py::arg("frame"), py::arg("t_end"),
          py::arg("dt"), py::arg("correct_against_initial") = false,
          "integrate the frame evolution; returns the recorded trace");
    m.def("cross_validate", &cross_validate_py, py::arg("frame"),
          py::arg("t_end"), py::arg("dt"),
          "grid evolution vs pointwise reconstruction deviation per time");
    m.def("scalar_blowup", &scalar_blowup_py, py::arg("a0"), py::arg("rate"),
          py::arg("t_end"),
          "one-dimensional comparison model with its closed form");
    m.def("exp_subgroup", &exp_subgroup, py::arg("generator"), py::arg("t"),
          "matrix exponential exp(t * generator)");
    m.def("develop_segment", &develop_segment_py, py::arg("frame"),
          py::arg("p"), py::arg("q"), py::arg("target"),
          py::arg("steps") = 256,
          "transport an initial value along a straight segment");
    m.def("suite_names", &validation_suite_names,
          "validation suites in battery order");
    m.def("run_suite", &run_suite_py, py::arg("name"), py::arg("res2") = 64,
          py::arg("res3") = 32, "run one validation suite");
    m.def("save_frame", &save_frame, py::arg("frame"), py::arg("path"),
          "write a frame to a field file (bit-exact round trip)");
    m.def("load_frame", &load_frame, py::arg("path"),
          "read a frame back from a field file");
}
