#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "heightnet/segmentation.hpp"

// Command implementations behind the `heightnet` executable. Each command
// writes its outputs plus a JSON run manifest and throws heightnet::Error
// subclasses on failure; run() maps those onto exit codes.

namespace heightnet::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,       // bad flags or config
  kIo = 3,          // missing/unreadable/unwritable files
  kData = 4,        // shape, format or non-finite data
  kDivergence = 5,  // training produced a non-finite loss
  kTolerance = 6,   // gradient check over tolerance
};

int exit_code_for(const std::exception& e) noexcept;

/// Common to every command; recorded in the manifest.
struct Invocation {
  std::vector<std::string> argv;  // as typed, for replay
  std::size_t threads = 0;        // 0 = runtime default
};

struct SynthOptions {
  fs::path spec;  // [scene] keys plus optional [synth] count
  fs::path out_dir;
  std::optional<std::size_t> count;
  std::optional<std::uint64_t> seed;
};

struct TrainOptions {
  std::optional<fs::path> config;  // [network] + [train] sections
  std::string preset = "tiny";     // used when no config file is given
  fs::path data_dir;
  fs::path out_dir;
  // Flag overrides of [train] keys.
  std::optional<std::size_t> epochs, patience, batch_size, max_steps, patch;
  std::optional<double> learning_rate, validation_fraction;
  std::optional<std::uint64_t> seed, network_seed;
  std::optional<bool> augment;
};

struct PredictOptions {
  fs::path weights;
  fs::path image;
  fs::path out;
  std::optional<fs::path> pointcloud;
  double height_min_m = 0.0;
  double height_max_m = 30.0;
  double ground_spacing_m = 0.7;
};

struct EvalOptions {
  fs::path pred;
  fs::path truth;
  fs::path report_dir;
  std::size_t patch = 256;
};

struct SegmentOptions {
  fs::path height;
  fs::path rgb;
  fs::path out_dir;
  SegmentParams params;
};

struct GradcheckOptions {
  std::optional<fs::path> config;
  std::string preset = "gradcheck";
  double tolerance = 1e-4;
  std::size_t trials = 20;
  std::uint64_t seed = 1234;
  std::size_t spatial = 0;
  std::size_t max_coordinates = 0;
  bool primitives = true;
  std::optional<fs::path> report;
};

void cmd_synth(const SynthOptions& o, const Invocation& inv, std::ostream& log);
void cmd_train(const TrainOptions& o, const Invocation& inv, std::ostream& log);
void cmd_predict(const PredictOptions& o, const Invocation& inv, std::ostream& log);
void cmd_eval(const EvalOptions& o, const Invocation& inv, std::ostream& log);
void cmd_segment(const SegmentOptions& o, const Invocation& inv, std::ostream& log);
/// Throws ToleranceError when any check exceeds the tolerance.
void cmd_gradcheck(const GradcheckOptions& o, const Invocation& inv, std::ostream& log);
/// Re-runs the command line recorded in a manifest.
int cmd_replay(const fs::path& manifest, std::ostream& log, std::ostream& err);

/// Full command-line entry point: parses, dispatches, reports errors on
/// `err` and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& log, std::ostream& err);

/// Image/height pairs found in a directory: every `<stem>.png` or
/// `<stem>.ppm` with a `<stem>.hgt` beside it, in sorted stem order.
std::vector<std::pair<fs::path, fs::path>> find_pairs(const fs::path& dir);

}  // namespace heightnet::cli
