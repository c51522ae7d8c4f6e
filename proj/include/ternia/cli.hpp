#pragma once

#include "ternia/model.hpp"
#include "ternia/quantized_model.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ternia::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kReportSchema = 1;

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kUsageError = 2 };

/// Runs one subcommand (args exclude the program name). Reports go to the files named by
/// --out, or to `out` when a subcommand allows omitting it; diagnostics go to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct LayerComparison {
  std::size_t layer = 0;
  std::string kind;
  int order = 0;
  double max_abs_error = 0.0;
  double mse = 0.0;
  double max_error_over_lambda = 0.0;  // worst row of max|w - w'| / max|w|
  std::int64_t count_neg = 0;          // first-term code histogram
  std::int64_t count_zero = 0;
  std::int64_t count_pos = 0;
};

/// Per weight layer error of `approx` against `reference`. Code histograms come from
/// `quantized` when given.
std::vector<LayerComparison> analyze(const ModelGraph& reference, const ModelGraph& approx,
                                     const QuantizedModel* quantized = nullptr);
std::string analyze_csv(const std::vector<LayerComparison>& rows);

}  // namespace ternia::cli
