#pragma once

#include <string>
#include <vector>

namespace hflow {

/// One measured property of the library, compared against its tolerance.
/// The check passes when measured <= tolerance.
struct ValidationAssertion {
    std::string name;
    double tolerance = 0.0;
    double measured = 0.0;
    bool pass = false;
    /// Optional recorded context (a convention choice, a sample count).
    std::string note;
};

/// Outcome of one property suite: every assertion with its numbers, the
/// aggregate verdict, and the wall-clock cost.
struct SuiteResult {
    std::string suite;
    /// 1-based position of the suite in the standard battery order.
    int criterion = 0;
    std::vector<ValidationAssertion> assertions;
    bool pass = true;
    double seconds = 0.0;
};

/// Grid resolutions used by the battery. The defaults are the reference
/// configuration; smaller values give a fast smoke run with looser meaning.
struct ValidationConfig {
    int resolution2 = 64; ///< frames on two-dimensional charts
    int resolution3 = 32; ///< frames on three-dimensional charts
};

/// Names of the property suites in battery order:
///   tilde-curvature, torsion-curvature, parallelism, bianchi, lie-frames,
///   gauge-covariance, variation, keystone, subgroup, blowup, develop,
///   christoffel, stationarity.
std::vector<std::string> validation_suite_names();

/// Run one suite by name. Throws ConfigError for an unknown name.
SuiteResult run_validation_suite(const std::string& name,
                                 const ValidationConfig& config = {});

/// Run every suite in battery order.
std::vector<SuiteResult> run_validation_battery(
    const ValidationConfig& config = {});

/// Plain-text rendering: a header line with the verdict, then one line per
/// assertion listing its tolerance and measured value.
std::string suite_report_text(const SuiteResult& result);

} // namespace hflow
