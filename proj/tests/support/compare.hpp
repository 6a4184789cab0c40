#pragma once

// Field-by-field report comparison. Counts must agree exactly, floating
// values within `tolerance`, and defined/undefined status must agree.
// Returns a description of the first difference, or an empty string.

#include <string>

#include "lexeval/retrieval.hpp"
#include "lexeval/seg_metrics.hpp"

namespace lexeval::testing {

std::string compare_reports(const SegmentationReport& actual, const SegmentationReport& expected,
                            double tolerance = 1e-12);
std::string compare_reports(const RetrievalReport& actual, const RetrievalReport& expected,
                            double tolerance = 1e-12);

}  // namespace lexeval::testing
