#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sctlab/eval.hpp"

namespace sctlab::cli {

/// Runs one subcommand (gen-data, train, eval, sweep, gradcheck, report).
/// Returns 0 on success, 2 on usage errors and 1 on any other failure.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

enum class Metric { Score, Accuracy };

/// CSV with one row per (dataset level, model), one column per
/// opponent in the order expert, alt-expert, still, random, blend. Throws
/// when the reports disagree on task or anchors, or two land in one cell.
std::string render_table(const std::vector<eval::EvalReport>& reports, Metric metric);

}  // namespace sctlab::cli
