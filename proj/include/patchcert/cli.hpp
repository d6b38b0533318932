#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "patchcert/ablation.hpp"
#include "patchcert/certify.hpp"
#include "patchcert/report.hpp"
#include "patchcert/train.hpp"
#include "patchcert/vit.hpp"

namespace patchcert {

/// Stable process exit codes.
enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitMissingInput = 2, kExitInvalidParams = 3 };

/// Everything a command needs. Round-trips through JSON losslessly.
struct RunConfig {
  std::string command;
  std::string data;
  std::string labels;  // IDX label file
  std::string data_format = "stripe";
  std::string ckpt;
  std::string out = ".";
  AblationSpec spec{AblationKind::column, 3, 1, 0};
  ViTConfig vit;
  TrainConfig train;
  std::vector<int> patch_sizes{2};
  DeltaMode delta_mode = DeltaMode::safe;
  std::uint64_t seed = 0;
  int workers = 1;
  // Image size for the `delta` command.
  int height = 224;
  int width = 224;
  // Synthetic stripe data.
  int stripe_n = 512;
  float stripe_noise = 0.1f;
  // Sweep and bench grids.
  std::vector<int> b_values;
  std::vector<int> strides;
  int trials = 5;
  // `ablate`: which image to dump.
  int index = 0;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

Json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const Json& j);

/// Hash of the configuration fields that determine a command's output
/// (worker count and output directory excluded).
std::string run_config_hash(const RunConfig& cfg);

/// Parses argv and runs one command. Human output goes to `out`; logs and
/// machine-readable error records go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Individual commands on an already-resolved configuration. Each returns an
// exit code and throws nothing.
int run_ablate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_certify(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_delta(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_bench(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace patchcert
