// Batch front door: configure a frame and a task, run it, write a structured
// report plus CSV/field-file artifacts. Exit status: 0 all assertions passed,
// 1 some assertion failed, 2 unusable configuration, 3 numerical failure
// (partial artifacts are still written).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <fftw3.h>

#include "hflow/catalog.hpp"
#include "hflow/errors.hpp"
#include "hflow/field_io.hpp"
#include "hflow/flows.hpp"
#include "hflow/frame_calculus.hpp"
#include "hflow/frame_jet.hpp"
#include "hflow/groupoid.hpp"
#include "hflow/parallel_for.hpp"
#include "hflow/validate.hpp"

namespace {

using namespace hflow;

constexpr const char* kToolVersion = "0.1.0";
constexpr double kTwoPi = 2.0 * std::numbers::pi;

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Report assembly. Stable key names; every default the run used is echoed so
// the report alone reproduces the run.

struct ReportBuilder {
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::pair<std::string, std::string>> results;
    std::vector<ValidationAssertion> assertions;
    std::vector<std::pair<std::string, double>> timings;
    bool numerical_failure = false;
    std::string failure_note;

    void conf(std::string key, std::string value) {
        config.emplace_back(std::move(key), std::move(value));
    }
    void conf(std::string key, double value) { conf(std::move(key), g17(value)); }
    void conf(std::string key, int value) {
        conf(std::move(key), std::to_string(value));
    }
    void result(std::string key, std::string value) {
        results.emplace_back(std::move(key), std::move(value));
    }
    void result(std::string key, double value) {
        result(std::move(key), g17(value));
    }
    void assert_leq(std::string name, double tolerance, double measured,
                    std::string note = {}) {
        ValidationAssertion a;
        a.name = std::move(name);
        a.tolerance = tolerance;
        a.measured = measured;
        a.pass = std::isfinite(measured) && measured <= tolerance;
        a.note = std::move(note);
        assertions.push_back(std::move(a));
    }
    /// A yes/no condition rendered as measured 0 (holds) vs 1 against
    /// tolerance 0; failures of these mark the run as a numerical failure.
    void assert_completed(std::string name, bool completed,
                          std::string note = {}) {
        assert_leq(std::move(name), 0.0, completed ? 0.0 : 1.0,
                   std::move(note));
        if (!completed) numerical_failure = true;
    }

    bool all_pass() const {
        for (const auto& a : assertions)
            if (!a.pass) return false;
        return true;
    }
    int exit_code() const {
        if (numerical_failure) return 3;
        return all_pass() ? 0 : 1;
    }

    std::string render(const std::string& task) const {
        std::string out = "hflow-report\n";
        out += "version = ";
        out += kToolVersion;
        out += "\neigen = " + std::to_string(EIGEN_WORLD_VERSION) + "." +
               std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
        out += "\nfftw = ";
        out += fftw_version;
        out += "\n\n[config]\ntask = " + task + "\n";
        for (const auto& [k, v] : config) out += k + " = " + v + "\n";
        out += "\n[results]\n";
        for (const auto& [k, v] : results) out += k + " = " + v + "\n";
        out += "\n[assertions]\n";
        for (const auto& a : assertions) {
            out += a.pass ? "[pass] " : "[FAIL] ";
            out += a.name + ": measured " + g17(a.measured);
            out += a.pass ? " <= tolerance " : " > tolerance ";
            out += g17(a.tolerance);
            if (!a.note.empty()) out += " (" + a.note + ")";
            out += "\n";
        }
        out += "\n[timings]\n";
        for (const auto& [k, v] : timings) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.3f", v);
            out += k + "-seconds = ";
            out += buf;
            out += "\n";
        }
        out += "\nstatus = ";
        if (numerical_failure) {
            out += "numerical-failure";
            if (!failure_note.empty()) out += " (" + failure_note + ")";
        } else {
            out += all_pass() ? "pass" : "assertions-failed";
        }
        out += "\nexit-code = " + std::to_string(exit_code()) + "\n";
        return out;
    }
};

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - start_).count();
        start_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Frame specification: "abelian" | "heisenberg" | "affine" |
// "perturbation:seed=S,amp=A[,band=B][,dim=D]" | "file:PATH".

struct FrameSpec {
    std::string text;
    FrameField frame;
    std::optional<FrameRecipe> recipe; ///< absent for file-loaded frames
    int resolution = 0;                ///< nodes per axis actually used
};

std::vector<std::pair<std::string, std::string>> split_params(
    const std::string& s) {
    std::vector<std::pair<std::string, std::string>> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("malformed parameter \"" + item +
                              "\" (expected key=value)");
        out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
    return out;
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse " + what + " from \"" + s + "\"");
    }
}

long long parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse " + what + " from \"" + s + "\"");
    }
}

void require_finite_values(const TensorField& values) {
    const double* p = values.data();
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(p[i]))
            throw NumericalError("frame values contain a non-finite entry");
}

FrameSpec build_frame(const std::string& spec, int res) {
    if (spec.rfind("file:", 0) == 0) {
        const std::string path = spec.substr(5);
        LoadedFields loaded = load_fields_file(path);
        const NamedField* chosen = nullptr;
        for (const NamedField& f : loaded.fields)
            if (f.name == "frame") chosen = &f;
        if (chosen == nullptr && loaded.fields.size() == 1)
            chosen = &loaded.fields.front();
        if (chosen == nullptr)
            throw ConfigError("field file \"" + path +
                              "\" holds no field named \"frame\"");
        if (res != 0 && res != loaded.chart->resolution(0))
            throw ConfigError(
                "--res disagrees with the chart stored in \"" + path + "\"");
        require_finite_values(chosen->field);
        return FrameSpec{spec, FrameField::from_values(chosen->field),
                         std::nullopt, loaded.chart->resolution(0)};
    }

    if (spec.rfind("perturbation", 0) == 0) {
        std::uint64_t seed = 0;
        double amp = 0.1;
        int band = 2;
        int dim = 2;
        if (spec.size() > 12) {
            if (spec[12] != ':')
                throw ConfigError("malformed frame spec \"" + spec + "\"");
            for (const auto& [key, value] : split_params(spec.substr(13))) {
                if (key == "seed")
                    seed = static_cast<std::uint64_t>(
                        parse_int(value, "seed"));
                else if (key == "amp")
                    amp = parse_double(value, "amp");
                else if (key == "band")
                    band = static_cast<int>(parse_int(value, "band"));
                else if (key == "dim")
                    dim = static_cast<int>(parse_int(value, "dim"));
                else
                    throw ConfigError("unknown perturbation parameter \"" +
                                      key + "\"");
            }
        }
        const int use_res = res != 0 ? res : 64;
        auto chart =
            std::make_shared<Chart>(Chart::periodic(dim, use_res, kTwoPi));
        FrameRecipe recipe = perturbation(seed, amp, band, *chart);
        FrameField frame = realize_on(recipe, chart);
        return FrameSpec{spec, std::move(frame), std::move(recipe), use_res};
    }

    FrameRecipe recipe = builtin(spec); // unknown names throw ConfigError
    const int use_res = res != 0 ? res : recipe.default_resolution;
    FrameField frame = realize(recipe, use_res);
    return FrameSpec{spec, std::move(frame), std::move(recipe), use_res};
}

std::vector<double> parse_point(const std::string& s, int dim) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(parse_double(item, "coordinate"));
    if (dim != 0 && static_cast<int>(out.size()) != dim)
        throw ConfigError("point \"" + s + "\" has " +
                          std::to_string(out.size()) + " coordinates, chart needs " +
                          std::to_string(dim));
    return out;
}

std::size_t worst_operator_node(const FrameField& frame, const TensorField& hop,
                                Eigen::MatrixXd* generator) {
    const int n = frame.dim();
    std::size_t node = 0;
    double biggest = -1.0;
    for (std::size_t cand = 0; cand < frame.chart().node_count(); ++cand) {
        const Eigen::MatrixXd e0 =
            Eigen::Map<const RowMat>(frame.values().node_data(cand), n, n);
        const Eigen::MatrixXd h0 =
            Eigen::Map<const RowMat>(hop.node_data(cand), n, n);
        const Eigen::MatrixXd m = h0 * e0.inverse();
        const double size = m.cwiseAbs().maxCoeff();
        if (size > biggest) {
            biggest = size;
            node = cand;
            if (generator != nullptr) *generator = m;
        }
    }
    return node;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open \"" + path.string() + "\" for writing");
    out << text;
    if (!out) throw IoError("failed writing \"" + path.string() + "\"");
}

// ---------------------------------------------------------------------------
// Shared options and per-task runners. Each runner fills the report and
// writes its artifacts into the output directory.

struct CommonOpts {
    std::string frame_spec = "heisenberg";
    int res = 0;
    std::string out_dir;
    int threads = 0;
};

struct TaskContext {
    ReportBuilder report;
    std::filesystem::path out;
};

void echo_common(ReportBuilder& rb, const CommonOpts& c, const FrameSpec& fs) {
    rb.conf("frame", fs.text);
    rb.conf("resolution", fs.resolution);
    rb.conf("output-directory", c.out_dir);
    rb.conf("threads", c.threads == 0 ? std::string("0 (no cap)")
                                      : std::to_string(c.threads));
}

void run_inspect(const CommonOpts& c, bool dump_frame, TaskContext& ctx) {
    Stopwatch watch;
    const FrameSpec fs = build_frame(c.frame_spec, c.res);
    echo_common(ctx.report, c, fs);
    ctx.report.conf("dump-frame", dump_frame ? "true" : "false");
    ctx.report.timings.emplace_back("setup", watch.lap());

    const FrameJet jet = FrameJet::build(fs.frame);
    const Connection conn = connection(jet);
    const TensorField tor = torsion(conn);
    const TensorField curv = algebroid_curvature(conn);
    const TensorField tilde = tilde_curvature(conn);
    const TensorField hop = homogeneous_operator(jet);

    const FlowState state = flow_state(0.0, fs.frame);
    ctx.report.result("sup-frame", state.sup_frame);
    ctx.report.result("min-abs-det", state.min_abs_det);
    ctx.report.result("sup-torsion", norm_sup(tor));
    ctx.report.result("sup-curvature", norm_sup(curv));
    ctx.report.result("sup-tilde-curvature", norm_sup(tilde));
    ctx.report.result("sup-operator", norm_sup(hop));

    // Surface the largest torsion component with its index triple.
    {
        const int n = fs.frame.dim();
        double best = -1.0;
        int bi = 0, bj = 0, bk = 0;
        double value = 0.0;
        for (std::size_t node = 0; node < fs.frame.chart().node_count(); ++node)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k) {
                        const double v = tor.at(node, {i, j, k});
                        if (std::abs(v) > best) {
                            best = std::abs(v);
                            bi = i;
                            bj = j;
                            bk = k;
                            value = v;
                        }
                    }
        ctx.report.result("largest-torsion-component",
                          "[" + std::to_string(bi) + "," + std::to_string(bj) +
                              "," + std::to_string(bk) + "] = " + g17(value));
    }

    ctx.report.assert_leq("tilde-curvature-vanishes", 1e-10, norm_sup(tilde));
    if (fs.recipe) {
        if (fs.recipe->expect_zero_curvature)
            ctx.report.assert_leq("curvature-vanishes", 1e-10, norm_sup(curv),
                                  "declared by the recipe");
        if (fs.recipe->expect_zero_torsion)
            ctx.report.assert_leq("torsion-vanishes", 1e-10, norm_sup(tor),
                                  "declared by the recipe");
        if (fs.recipe->expect_zero_flow)
            ctx.report.assert_leq("operator-vanishes", 1e-10, norm_sup(hop),
                                  "declared by the recipe");
        if (!fs.recipe->notes.empty())
            ctx.report.result("recipe-notes", fs.recipe->notes);
    }

    if (dump_frame)
        save_fields_file((ctx.out / "frame.json").string(), fs.frame.chart(),
                         {{"frame", fs.frame.values()}});
    ctx.report.timings.emplace_back("task", watch.lap());
}

void run_flow(const CommonOpts& c, double t_end, double dt,
              const std::string& reference, TaskContext& ctx) {
    Stopwatch watch;
    const FrameSpec fs = build_frame(c.frame_spec, c.res);
    echo_common(ctx.report, c, fs);
    ctx.report.conf("t-end", t_end);
    ctx.report.conf("dt", dt);
    ctx.report.conf("reference-connection", reference);
    ctx.report.timings.emplace_back("setup", watch.lap());

    FlowTrace trace = [&] {
        if (reference == "none") return hf_pde_integrate(fs.frame, t_end, dt);
        if (reference == "initial") {
            const Connection ref = connection(FrameJet::build(fs.frame));
            return deturck_pde_integrate(fs.frame, ref, t_end, dt);
        }
        throw ConfigError("--reference must be \"none\" or \"initial\"");
    }();

    write_text(ctx.out / "flow.csv", flow_trace_csv(trace));
    ctx.report.result("termination", flow_termination_name(trace.termination));
    ctx.report.result("final-time", trace.final_time);
    ctx.report.result("samples", std::to_string(trace.samples.size()));
    if (!trace.samples.empty()) {
        const FlowSample& last = trace.samples.back();
        ctx.report.result("final-sup-torsion", last.sup_torsion);
        ctx.report.result("final-sup-curvature", last.sup_curvature);
        ctx.report.result("final-sup-operator", last.sup_operator);
        ctx.report.result("final-min-abs-det", last.min_abs_det);
    }
    ctx.report.result("drift-from-initial",
                      max_abs_difference(trace.final_values,
                                         fs.frame.values()));
    if (!trace.diagnostic.empty())
        ctx.report.result("diagnostic", trace.diagnostic);

    ctx.report.assert_completed(
        "evolution-completes",
        trace.termination == FlowTermination::completed, trace.diagnostic);
    ctx.report.timings.emplace_back("task", watch.lap());
}

void run_gauge_ode(const CommonOpts& c, double t_end, double dt,
                   long long node_flag, TaskContext& ctx) {
    Stopwatch watch;
    const FrameSpec fs = build_frame(c.frame_spec, c.res);
    echo_common(ctx.report, c, fs);
    ctx.report.conf("t-end", t_end);
    ctx.report.conf("dt", dt);
    ctx.report.conf("node", node_flag < 0
                                ? std::string("auto (largest operator)")
                                : std::to_string(node_flag));
    ctx.report.timings.emplace_back("setup", watch.lap());

    const FrameJet jet = FrameJet::build(fs.frame);
    const TensorField curv = algebroid_curvature(connection(jet));
    const CanonicalMetric met = canonical_metric(jet);
    const TensorField hop = homogeneous_operator(jet);
    const int n = fs.frame.dim();
    const std::size_t n4 = static_cast<std::size_t>(n) * n * n * n;

    Eigen::MatrixXd generator;
    std::size_t node = 0;
    if (node_flag < 0) {
        node = worst_operator_node(fs.frame, hop, &generator);
    } else {
        node = static_cast<std::size_t>(node_flag);
        if (node >= fs.frame.chart().node_count())
            throw ConfigError("--node is outside the chart");
        const Eigen::MatrixXd e0 =
            Eigen::Map<const RowMat>(fs.frame.values().node_data(node), n, n);
        generator =
            Eigen::Map<const RowMat>(hop.node_data(node), n, n) * e0.inverse();
    }
    ctx.report.result("node", std::to_string(node));
    ctx.report.result("generator-sup", generator.cwiseAbs().maxCoeff());

    const Eigen::MatrixXd e0 =
        Eigen::Map<const RowMat>(fs.frame.values().node_data(node), n, n);
    const Eigen::MatrixXd gi =
        Eigen::Map<const RowMat>(met.ginv.node_data(node), n, n);
    const GaugeTrajectory traj = gauge_ode_integrate(
        std::span<const double>(curv.node_data(node), n4), gi, e0, t_end, dt,
        node);

    write_text(ctx.out / "gauge_ode.csv", gauge_trajectory_csv(traj));
    ctx.report.result("samples", std::to_string(traj.times.size()));
    if (!traj.times.empty()) {
        ctx.report.result("final-ode-time", traj.times.back());
        ctx.report.result("final-gauge-sup",
                          traj.gauges.back().cwiseAbs().maxCoeff());
        const Eigen::MatrixXd frozen =
            exp_subgroup(generator, traj.times.back());
        ctx.report.result("frozen-generator-gap",
                          (traj.gauges.back() - frozen).cwiseAbs().maxCoeff());
    }
    if (!traj.diagnostic.empty())
        ctx.report.result("diagnostic", traj.diagnostic);
    ctx.report.assert_completed("trajectory-completes", !traj.blew_up,
                                traj.diagnostic);
    ctx.report.timings.emplace_back("task", watch.lap());
}

void run_develop(const CommonOpts& c, const std::string& from_s,
                 const std::string& to_s, const std::string& via_s,
                 const std::string& value_s, int steps, double tolerance,
                 TaskContext& ctx) {
    Stopwatch watch;
    const FrameSpec fs = build_frame(c.frame_spec, c.res);
    const int dim = fs.frame.dim();
    const std::vector<double> p = parse_point(from_s, dim);
    const std::vector<double> target = parse_point(to_s, dim);
    const std::vector<double> q =
        value_s.empty() ? p : parse_point(value_s, dim);
    std::vector<std::vector<double>> path = {p};
    if (!via_s.empty()) {
        std::stringstream ss(via_s);
        std::string item;
        while (std::getline(ss, item, ';'))
            path.push_back(parse_point(item, dim));
    }
    path.push_back(target);

    echo_common(ctx.report, c, fs);
    ctx.report.conf("from", from_s);
    ctx.report.conf("to", to_s);
    ctx.report.conf("via", via_s.empty() ? std::string("(direct)") : via_s);
    ctx.report.conf("value", value_s.empty() ? from_s + " (default)" : value_s);
    ctx.report.conf("steps", steps);
    ctx.report.conf("tolerance",
                    tolerance > 0 ? g17(tolerance) : std::string("(none)"));
    ctx.report.timings.emplace_back("setup", watch.lap());

    const TwoPointSplitting splitting(fs.frame);
    const Development dev = develop(splitting, p, q, path, steps);

    std::string csv = "s";
    for (int a = 0; a < dim; ++a) csv += ",c" + std::to_string(a);
    for (int a = 0; a < dim; ++a) csv += ",f" + std::to_string(a);
    csv += ",residual\n";
    for (std::size_t k = 0; k < dev.s.size(); ++k) {
        csv += g17(dev.s[k]);
        for (int a = 0; a < dim; ++a) csv += "," + g17(dev.base[k][a]);
        for (int a = 0; a < dim; ++a) csv += "," + g17(dev.value[k][a]);
        csv += "," + g17(dev.residual_at[k]) + "\n";
    }
    write_text(ctx.out / "develop.csv", csv);

    ctx.report.result("residual", dev.residual);
    std::string terminal;
    for (int a = 0; a < dim; ++a)
        terminal += (a != 0 ? "," : "") + g17(dev.terminal()[a]);
    ctx.report.result("terminal-value", terminal);
    ctx.report.result("terminal-jet-sup", dev.terminal_jet.cwiseAbs().maxCoeff());
    if (tolerance > 0)
        ctx.report.assert_leq("transport-residual", tolerance, dev.residual);
    ctx.report.timings.emplace_back("task", watch.lap());
}

void run_validate(const std::string& suite, const ValidationConfig& vcfg,
                  const CommonOpts& c, TaskContext& ctx) {
    ctx.report.conf("suite", suite.empty() ? std::string("(full battery)")
                                           : suite);
    ctx.report.conf("resolution-2d", vcfg.resolution2);
    ctx.report.conf("resolution-3d", vcfg.resolution3);
    ctx.report.conf("output-directory", c.out_dir);
    ctx.report.conf("threads", c.threads == 0 ? std::string("0 (no cap)")
                                              : std::to_string(c.threads));

    std::vector<SuiteResult> results;
    if (suite.empty()) {
        results = run_validation_battery(vcfg);
    } else {
        results.push_back(run_validation_suite(suite, vcfg));
    }
    std::string full_text;
    for (const SuiteResult& r : results) {
        full_text += suite_report_text(r);
        ctx.report.result("suite." + r.suite,
                          std::string(r.pass ? "pass" : "FAIL") + " (" +
                              std::to_string(r.assertions.size()) +
                              " assertions)");
        for (const ValidationAssertion& a : r.assertions) {
            ValidationAssertion copy = a;
            copy.name = r.suite + "/" + a.name;
            ctx.report.assertions.push_back(std::move(copy));
        }
        ctx.report.timings.emplace_back("suite." + r.suite, r.seconds);
    }
    write_text(ctx.out / "validate.txt", full_text);
}

void run_cross_validate(const CommonOpts& c, double t_end, double dt,
                        double tolerance, TaskContext& ctx) {
    Stopwatch watch;
    const FrameSpec fs = build_frame(c.frame_spec, c.res);
    echo_common(ctx.report, c, fs);
    ctx.report.conf("t-end", t_end);
    ctx.report.conf("dt", dt);
    ctx.report.conf("tolerance",
                    tolerance > 0 ? g17(tolerance) : std::string("(none)"));
    ctx.report.timings.emplace_back("setup", watch.lap());

    const CrossValidationReport rep = cross_validate(fs.frame, t_end, dt);

    std::string csv = "t,relative_deviation\n";
    for (std::size_t k = 0; k < rep.times.size(); ++k)
        csv += g17(rep.times[k]) + "," + g17(rep.deviation[k]) + "\n";
    write_text(ctx.out / "cross_validate.csv", csv);

    ctx.report.result("max-relative-deviation", rep.max_deviation);
    ctx.report.result("grid-evolution",
                      flow_termination_name(rep.pde_termination));
    ctx.report.result("pointwise-reconstruction",
                      rep.ode_blew_up ? "blow-up" : "completed");
    ctx.report.result("compared-sample-times",
                      std::to_string(rep.times.size()));
    if (!rep.diagnostic.empty())
        ctx.report.result("diagnostic", rep.diagnostic);

    ctx.report.assert_completed(
        "grid-evolution-completes",
        rep.pde_termination == FlowTermination::completed);
    ctx.report.assert_completed("pointwise-reconstruction-completes",
                                !rep.ode_blew_up);
    if (tolerance > 0)
        ctx.report.assert_leq("max-relative-deviation", tolerance,
                              rep.max_deviation);
    ctx.report.timings.emplace_back("task", watch.lap());
}

int finish(TaskContext& ctx, const std::string& task) {
    const std::string text = ctx.report.render(task);
    write_text(ctx.out / "report.txt", text);
    std::cout << text;
    return ctx.report.exit_code();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for frame fields on parallelizable "
                 "domains: invariants, evolution, pointwise reconstruction, "
                 "development, and the validation battery"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "read options from a file; command-line flags override it");
    app.allow_config_extras(CLI::config_extras_mode::error);

    CommonOpts common;
    const char* env_out = std::getenv("HFLOW_OUT_DIR");
    common.out_dir = env_out != nullptr ? env_out : ".";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--frame", common.frame_spec,
                        "frame spec: a builtin name, "
                        "perturbation:seed=S,amp=A[,band=B][,dim=D], or "
                        "file:PATH")
            ->capture_default_str();
        sub->add_option("--res", common.res,
                        "nodes per axis (0 = spec default)")
            ->capture_default_str();
        sub->add_option("--out-dir", common.out_dir,
                        "artifact directory (default: $HFLOW_OUT_DIR or .)")
            ->capture_default_str();
        sub->add_option("--threads", common.threads,
                        "cap worker threads, 0 = no cap; never changes "
                        "results")
            ->capture_default_str();
    };

    // inspect
    bool dump_frame = false;
    CLI::App* inspect =
        app.add_subcommand("inspect", "evaluate invariants of a frame");
    add_common(inspect);
    inspect->add_flag("--dump-frame", dump_frame,
                      "also write the frame as frame.json");

    // flow
    double flow_t_end = 0.05, flow_dt = 1e-3;
    std::string flow_reference = "none";
    CLI::App* flow =
        app.add_subcommand("flow", "evolve a frame and record its trace");
    add_common(flow);
    flow->add_option("--t-end", flow_t_end, "integration span")
        ->capture_default_str();
    flow->add_option("--dt", flow_dt, "fixed step size")->capture_default_str();
    flow->add_option("--reference", flow_reference,
                     "correction reference: none | initial (adds the "
                     "reparametrizing correction against the initial "
                     "connection)")
        ->capture_default_str();

    // gauge-ode
    double go_t_end = 1e-2, go_dt = 1e-3;
    long long go_node = -1;
    CLI::App* gauge =
        app.add_subcommand("gauge-ode", "pointwise matrix evolution at one node");
    add_common(gauge);
    gauge->add_option("--t-end", go_t_end, "integration span (may be negative)")
        ->capture_default_str();
    gauge->add_option("--dt", go_dt, "output sample spacing")
        ->capture_default_str();
    gauge->add_option("--node", go_node,
                      "node index; -1 picks the node with the largest "
                      "operator direction")
        ->capture_default_str();

    // develop
    std::string dev_from = "0,0,0", dev_to = "0.5,0.5,0.5", dev_via, dev_value;
    int dev_steps = 1000;
    double dev_tol = 0.0;
    CLI::App* devsub = app.add_subcommand(
        "develop", "transport an initial value along a polygonal path");
    add_common(devsub);
    devsub->add_option("--from", dev_from, "start point")->capture_default_str();
    devsub->add_option("--to", dev_to, "end point")->capture_default_str();
    devsub->add_option("--via", dev_via,
                       "semicolon-separated interior waypoints");
    devsub->add_option("--value", dev_value,
                       "initial transported value (default: --from)");
    devsub->add_option("--steps", dev_steps, "total integration steps")
        ->capture_default_str();
    devsub->add_option("--tolerance", dev_tol,
                       "when > 0, assert transport residual <= tolerance")
        ->capture_default_str();

    // validate
    std::string val_suite;
    ValidationConfig vcfg;
    CLI::App* validate = app.add_subcommand(
        "validate", "run the property-suite battery (or one suite)");
    validate->add_option("--suite", val_suite,
                         "run a single named suite (default: full battery)");
    validate->add_option("--res2", vcfg.resolution2,
                         "nodes per axis for 2-d suites")
        ->capture_default_str();
    validate->add_option("--res3", vcfg.resolution3,
                         "nodes per axis for 3-d suites")
        ->capture_default_str();
    validate->add_option("--out-dir", common.out_dir,
                         "artifact directory (default: $HFLOW_OUT_DIR or .)")
        ->capture_default_str();
    validate->add_option("--threads", common.threads,
                         "cap worker threads, 0 = no cap")
        ->capture_default_str();

    // cross-validate
    double cv_t_end = 0.05, cv_dt = 1e-3, cv_tol = 0.0;
    CLI::App* crossval = app.add_subcommand(
        "cross-validate",
        "compare grid evolution against pointwise reconstruction");
    add_common(crossval);
    crossval->add_option("--t-end", cv_t_end, "integration span")
        ->capture_default_str();
    crossval->add_option("--dt", cv_dt, "step and sample spacing")
        ->capture_default_str();
    crossval->add_option("--tolerance", cv_tol,
                         "when > 0, assert max deviation <= tolerance")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    TaskContext ctx;
    std::string task;
    try {
        if (common.threads < 0)
            throw ConfigError("--threads must be >= 0");
        if (common.threads > 0) set_max_threads(common.threads);

        ctx.out = common.out_dir;
        std::filesystem::create_directories(ctx.out);

        if (inspect->parsed()) {
            task = "inspect";
            run_inspect(common, dump_frame, ctx);
        } else if (flow->parsed()) {
            task = "flow";
            run_flow(common, flow_t_end, flow_dt, flow_reference, ctx);
        } else if (gauge->parsed()) {
            task = "gauge-ode";
            run_gauge_ode(common, go_t_end, go_dt, go_node, ctx);
        } else if (devsub->parsed()) {
            task = "develop";
            run_develop(common, dev_from, dev_to, dev_via, dev_value,
                        dev_steps, dev_tol, ctx);
        } else if (validate->parsed()) {
            task = "validate";
            run_validate(val_suite, vcfg, common, ctx);
        } else if (crossval->parsed()) {
            task = "cross-validate";
            run_cross_validate(common, cv_t_end, cv_dt, cv_tol, ctx);
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "input/output error: " << e.what() << "\n";
        return 2;
    } catch (const SingularFrameError& e) {
        ctx.report.numerical_failure = true;
        ctx.report.failure_note = e.what();
        return finish(ctx, task);
    } catch (const IdentityViolationError& e) {
        ctx.report.numerical_failure = true;
        ctx.report.failure_note = e.what();
        return finish(ctx, task);
    } catch (const NumericalError& e) {
        ctx.report.numerical_failure = true;
        ctx.report.failure_note = e.what();
        return finish(ctx, task);
    }
    return finish(ctx, task);
}
