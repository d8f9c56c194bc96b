// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: one flat key = value config file, every key also
// a --flag, and subcommands init, maps, grow, render and eval.

#pragma once

#include "ggrow/pipeline.hpp"

#include <iosfwd>
#include <string>

namespace ggrow {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitBackend = 4;

struct RunConfig {
  PipelineConfig pipeline;
  std::string input;
  std::string output = "out";
  std::string backend = "procedural";
  std::string backend_url;
  double backend_timeout_s = 300.0;
  int backend_retries = 2;
  double fov_deg = 45.0;
  int resolution = 512;
  /// 0 selects 6 + n_additional.
  int k_total = 0;
};

/// Applies camera, thread and view-count settings to the pipeline fields,
/// then validates. Throws Config.
PipelineConfig effective_pipeline(const RunConfig& rc);

/// Exit code for an error raised by the library.
int exit_code_for(ErrorCode code);

/// Parses and runs one command line. Progress goes to err, results to out.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ggrow
