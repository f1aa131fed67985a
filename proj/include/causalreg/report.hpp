#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "causalreg/sweep.hpp"

namespace causalreg {

/// Trials sharing a shift and a training objective, aggregated like a sweep:
/// per dataset seed the best validation trial is kept.
struct ReportGroup {
    std::string shift;
    /// "a_cause|Y,E" style constraint list joined by ';', or the baseline.
    std::string method;
    std::size_t trials = 0;
    std::size_t failed_trials = 0;
    std::size_t excluded_seeds = 0;
    MeanSe train;
    MeanSe val;
    MeanSe test;
};

/// Reads TrialResult JSON lines (blank lines ignored). Groups appear in
/// first-seen order. Throws ValidationError("no trials") on empty input and
/// ParseError naming the line on malformed records.
[[nodiscard]] std::vector<ReportGroup> summarize_results(std::istream& jsonl);

[[nodiscard]] std::string report_markdown(const std::vector<ReportGroup>& groups);
[[nodiscard]] std::string report_csv(const std::vector<ReportGroup>& groups);

}  // namespace causalreg
