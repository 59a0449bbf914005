#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "wbsde/scenario.hpp"

namespace wbsde {

struct CriterionResult {
    int id = 0;
    std::string name;
    Status status = Status::skipped;
    std::string detail;
    double runtime_limit = 0.0;
    /// Measured wall time; printed, never written to report.json.
    double seconds = 0.0;
};

struct VerifyOptions {
    /// Substring matched against "NN name"; empty runs everything.
    std::string filter;
    std::uint64_t seed = kDefaultSeed;
    /// Where report.json goes; empty skips the file.
    std::string out_dir;
    bool quiet = false;
};

struct VerifySummary {
    std::vector<CriterionResult> results;
    std::uint64_t seed = 0;

    bool any_fail() const;
    int count(Status s) const;
};

/// The built-in scenarios exercised by the catalogue-wide criteria.
std::vector<Scenario> builtin_catalogue();

/// Runs every acceptance criterion matching the filter, printing one line each.
VerifySummary verify_all(const VerifyOptions& opts, std::ostream& out);

std::string verify_report_json(const VerifySummary& s);

}  // namespace wbsde
