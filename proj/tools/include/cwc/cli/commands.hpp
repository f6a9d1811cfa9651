#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cwc/cli/run_config.hpp"
#include "cwc/trainer.hpp"

namespace cwc::cli {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 1,
  kExitDataError = 2,
  kExitDivergence = 3,
};

/// Parses `argv` (verb first after the program name) and runs it. Errors
/// go to `err` and map to ExitCode.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Keeps freed training buffers mapped between batches (glibc only).
void tune_allocator();

struct SummaryLine {
  std::string dataset;
  std::string model;
  double test_error_pct = 0.0;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
};

std::string format_summary(const SummaryLine& line);

/// Per-layer and total parameters and mult-adds; CSV when `csv`.
void cmd_count_params(const RunConfig& config, bool csv, std::ostream& out);

/// Trains into config.run.out: metrics.csv, periodic epoch_<e>.ckpt,
/// final.ckpt, final.manifest and summary.txt. Returns one summary line per
/// configured head.
std::vector<SummaryLine> cmd_train(const RunConfig& config, std::ostream& log);

/// Top-1 error of every head stored in `checkpoint` on one split of the
/// configured dataset, normalized with the checkpoint's statistics.
EvaluationResult cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint,
                          Split split, std::ostream& out);

/// Feature grid of sample `index` of `split`; throws DataError when the
/// index is out of range.
std::vector<std::filesystem::path> cmd_export_features(const RunConfig& config,
                                                       const std::filesystem::path& checkpoint,
                                                       std::size_t index, Split split,
                                                       const std::filesystem::path& directory);

/// Discovers the schedule and writes `config` with the found [ilt] windows
/// to `output`.
IltSchedule cmd_discover_schedule(const RunConfig& config, const SessionFactory& sessions,
                                  const std::filesystem::path& output, std::ostream& log);
IltSchedule cmd_discover_schedule(const RunConfig& config, const std::filesystem::path& output,
                                  std::ostream& log);

}  // namespace cwc::cli
