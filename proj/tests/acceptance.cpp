// Acceptance battery: one line per criterion, exit 0 iff every requested
// criterion passes. `--criterion N` runs a single one; no argument runs all.
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "hflow/validate.hpp"

namespace {

const hflow::ValidationAssertion* worst_assertion(
    const hflow::SuiteResult& result) {
    const hflow::ValidationAssertion* worst = nullptr;
    double worst_ratio = -1.0;
    for (const auto& a : result.assertions) {
        const double ratio = a.tolerance > 0.0
                                 ? a.measured / a.tolerance
                                 : (a.measured > 0.0 ? 1e300 : 0.0);
        if (ratio > worst_ratio) {
            worst_ratio = ratio;
            worst = &a;
        }
    }
    return worst;
}

void print_line(const hflow::SuiteResult& result) {
    std::string line = "criterion " + std::to_string(result.criterion) +
                       " [" + result.suite + "]: ";
    line += result.pass ? "PASS" : "FAIL";
    if (const auto* a = worst_assertion(result)) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), " (%s: measured %.3g, tolerance %.3g)",
                      a->name.c_str(), a->measured, a->tolerance);
        line += buf;
    }
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
}

} // namespace

int main(int argc, char** argv) {
    int requested = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            requested = std::atoi(argv[++i]);
            if (requested < 1 || requested > 13) {
                std::fprintf(stderr, "criterion must be 1..13\n");
                return 2;
            }
        } else {
            std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
            return 2;
        }
    }

    const hflow::ValidationConfig config;
    bool all_pass = true;
    const std::vector<std::string> names = hflow::validation_suite_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        const int criterion = static_cast<int>(i) + 1;
        if (requested != 0 && criterion != requested) continue;
        const hflow::SuiteResult result =
            hflow::run_validation_suite(names[i], config);
        print_line(result);
        all_pass = all_pass && result.pass;
    }
    return all_pass ? 0 : 1;
}
