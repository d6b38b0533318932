#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchcert/bench.hpp"
#include "patchcert/certify.hpp"
#include "patchcert/train.hpp"
#include "patchcert/vit.hpp"

namespace patchcert {

using Json = nlohmann::json;

Json config_to_json(const ViTConfig& cfg);
ViTConfig config_from_json(const Json& j);

Json spec_to_json(const AblationSpec& spec);
AblationSpec spec_from_json(const Json& j);

Json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j);

/// { "spec", "delta_mode", "standard_accuracy", "certified": [{m, delta, accuracy}], "per_image": [...] }
Json certification_to_json(const CertificationReport& report);

/// CSV with header m,delta,standard_accuracy,certified_accuracy; one row per m.
std::string certification_csv(const CertificationReport& report);

/// One JSON line: {"epoch", "train_loss", "val_ablation_acc", "lr"}.
std::string epoch_log_line(const EpochLog& log);

std::string bench_csv(const std::vector<BenchRow>& rows);

struct SweepRow {
  int b = 0;
  int stride = 1;
  int m = 0;
  std::int64_t delta = 0;
  std::size_t ablations = 0;
  double standard_accuracy = 0.0;
  double certified_accuracy = 0.0;
};

std::string sweep_csv(const std::vector<SweepRow>& rows);

/// 64-bit FNV-1a of `text`, as 16 lowercase hex digits.
std::string content_hash(const std::string& text);

/// Writes `contents` to dir/stem.ext unless a file already holds exactly
/// those bytes. Existing files with different contents are never replaced;
/// the next free stem.N.ext is used instead. Returns the path holding the
/// contents.
std::filesystem::path write_append_only(const std::filesystem::path& dir, const std::string& stem,
                                        const std::string& ext, const std::string& contents);

}  // namespace patchcert
