#include "patchcert/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "patchcert/bench.hpp"
#include "patchcert/io.hpp"

namespace patchcert {
namespace fs = std::filesystem;

namespace {

enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("PATCHCERT_LOG");
  if (!env) return LogLevel::info;
  const std::string v(env);
  if (v == "error") return LogLevel::error;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::info;
}

void log(std::ostream& err, LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  static const char* names[] = {"error", "info", "debug"};
  err << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

int report_error(std::ostream& err, int code, const std::string& kind, const std::string& message) {
  const Json record = {{"error", {{"exit_code", code}, {"kind", kind}, {"message", message}}}};
  err << record.dump() << '\n';
  return code;
}

// Maps exceptions onto the exit-code contract.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const MissingInputError& e) {
    return report_error(err, kExitMissingInput, "missing_input", e.what());
  } catch (const FormatError& e) {
    return report_error(err, kExitInvalidParams, "format_error", e.what());
  } catch (const ParameterError& e) {
    return report_error(err, kExitInvalidParams, "invalid_parameter", e.what());
  } catch (const DimensionError& e) {
    return report_error(err, kExitInvalidParams, "invalid_parameter", e.what());
  } catch (const Json::exception& e) {
    return report_error(err, kExitInvalidParams, "invalid_config", e.what());
  } catch (const std::exception& e) {
    return report_error(err, kExitInternal, "internal", e.what());
  }
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty() || !fs::exists(path)) throw MissingInputError(what + " not found: " + path);
}

LabeledDataset load_data(const RunConfig& cfg, const ViTConfig& vit) {
  if (cfg.data_format == "stripe") {
    return make_stripe_dataset(cfg.stripe_n, vit.height, vit.width, vit.classes, cfg.stripe_noise, cfg.seed,
                               vit.channels);
  }
  if (cfg.data_format == "cifar10") {
    require_file(cfg.data, "data");
    return load_cifar10_binary(cfg.data);
  }
  if (cfg.data_format == "idx") {
    require_file(cfg.data, "data");
    require_file(cfg.labels, "labels");
    return load_idx_dataset(cfg.data, cfg.labels, vit.classes);
  }
  throw ParameterError("unknown data format '" + cfg.data_format + "' (expected cifar10, idx or stripe)");
}

// Evaluation data: the held-out split for stripe data, everything otherwise.
LabeledDataset load_eval_data(const RunConfig& cfg, const ViTConfig& vit) {
  LabeledDataset data = load_data(cfg, vit);
  if (cfg.data_format == "stripe") data = data.subset(Split::test);
  if (data.empty()) throw ParameterError("evaluation dataset is empty");
  const Image& first = data.images.front();
  if (first.height != vit.height || first.width != vit.width || first.channels != vit.channels ||
      data.num_classes > vit.classes) {
    throw ParameterError("checkpoint config (" + std::to_string(vit.height) + "x" + std::to_string(vit.width) + "x" +
                         std::to_string(vit.channels) + ", " + std::to_string(vit.classes) +
                         " classes) is incompatible with dataset (" + std::to_string(first.height) + "x" +
                         std::to_string(first.width) + "x" + std::to_string(first.channels) + ", " +
                         std::to_string(data.num_classes) + " classes)");
  }
  data.num_classes = vit.classes;
  return data;
}

void validate_patch_sizes(const std::vector<int>& sizes, int h, int w) {
  if (sizes.empty()) throw ParameterError("no patch sizes given");
  for (int m : sizes) PatchThreatModel{m}.validate(h, w);
}

std::string hash_for(const RunConfig& cfg, const std::string& command) {
  RunConfig c = cfg;
  c.command = command;
  return run_config_hash(c);
}

}  // namespace

Json run_config_to_json(const RunConfig& c) {
  return {{"command", c.command},
          {"data", c.data},
          {"labels", c.labels},
          {"data_format", c.data_format},
          {"ckpt", c.ckpt},
          {"out", c.out},
          {"spec", spec_to_json(c.spec)},
          {"vit", config_to_json(c.vit)},
          {"train", train_config_to_json(c.train)},
          {"patch_sizes", c.patch_sizes},
          {"delta_mode", to_string(c.delta_mode)},
          {"seed", c.seed},
          {"workers", c.workers},
          {"height", c.height},
          {"width", c.width},
          {"stripe_n", c.stripe_n},
          {"stripe_noise", c.stripe_noise},
          {"b_values", c.b_values},
          {"strides", c.strides},
          {"trials", c.trials},
          {"index", c.index}};
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  c.command = j.value("command", c.command);
  c.data = j.value("data", c.data);
  c.labels = j.value("labels", c.labels);
  c.data_format = j.value("data_format", c.data_format);
  c.ckpt = j.value("ckpt", c.ckpt);
  c.out = j.value("out", c.out);
  if (j.contains("spec")) c.spec = spec_from_json(j.at("spec"));
  if (j.contains("vit")) c.vit = config_from_json(j.at("vit"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  c.patch_sizes = j.value("patch_sizes", c.patch_sizes);
  c.delta_mode = delta_mode_from_string(j.value("delta_mode", to_string(c.delta_mode)));
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.stripe_n = j.value("stripe_n", c.stripe_n);
  c.stripe_noise = j.value("stripe_noise", c.stripe_noise);
  c.b_values = j.value("b_values", c.b_values);
  c.strides = j.value("strides", c.strides);
  c.trials = j.value("trials", c.trials);
  c.index = j.value("index", c.index);
  return c;
}

std::string run_config_hash(const RunConfig& cfg) {
  Json j = run_config_to_json(cfg);
  j.erase("workers");
  j.erase("out");
  return content_hash(j.dump());
}

int run_ablate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const LabeledDataset data = load_eval_data(cfg, cfg.vit);
    if (cfg.index < 0 || static_cast<std::size_t>(cfg.index) >= data.size()) {
      throw ParameterError("image index " + std::to_string(cfg.index) + " outside [0," + std::to_string(data.size()) + ")");
    }
    const Image& x = data.images[static_cast<std::size_t>(cfg.index)];
    const auto set = ablation_set(x, cfg.spec);
    fs::create_directories(cfg.out);
    for (std::size_t i = 0; i < set.size(); ++i) {
      write_file_bytes(fs::path(cfg.out) / ("abl_" + std::to_string(i) + ".ppm"), encode_ppm(set[i].pixels));
      write_file_bytes(fs::path(cfg.out) / ("mask_" + std::to_string(i) + ".pgm"), encode_pgm(set[i].mask));
    }
    out << "wrote " << set.size() << " ablations to " << cfg.out << '\n';
    return kExitOk;
  });
}

int run_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    cfg.vit.validate();
    LabeledDataset data = load_data(cfg, cfg.vit);
    if (cfg.data_format != "stripe") {
      // Real datasets: hold out the last tenth for early stopping.
      const std::size_t val_from = data.size() - data.size() / 10;
      for (std::size_t i = 0; i < data.size(); ++i) data.splits[i] = i < val_from ? Split::train : Split::val;
    }
    const LabeledDataset train_set = data.subset(Split::train);
    const LabeledDataset val_set = data.subset(Split::val);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const std::string hash = hash_for(cfg, "train");
    std::ostringstream log_text;
    const TrainResult result =
        train(init_params(cfg.vit, cfg.seed), train_set, val_set, cfg.vit, tc,
              [&](const EpochLog& e) {
                const std::string line = epoch_log_line(e);
                log_text << line << '\n';
                out << line << '\n';
              },
              cfg.workers);
    const fs::path ckpt = cfg.ckpt.empty() ? fs::path(cfg.out) / ("model_" + hash + ".svit") : fs::path(cfg.ckpt);
    if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
    save_checkpoint(ckpt, cfg.vit, result.best);
    const fs::path log_path = write_append_only(cfg.out, "train_" + hash, "jsonl", log_text.str());
    log(err, LogLevel::info, "best epoch " + std::to_string(result.best_epoch) + ", log " + log_path.string());
    out << "checkpoint " << ckpt.string() << '\n';
    return kExitOk;
  });
}

int run_certify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.ckpt.empty() || !fs::exists(cfg.ckpt)) throw MissingInputError("checkpoint not found: " + cfg.ckpt);
    const Checkpoint ck = load_checkpoint(cfg.ckpt);
    const LabeledDataset data = load_eval_data(cfg, ck.config);
    validate_patch_sizes(cfg.patch_sizes, ck.config.height, ck.config.width);
    cfg.spec.validate(ck.config.height, ck.config.width);
    const CertificationReport report = certified_accuracy(data, make_vit_classifier(ck.params, ck.config), cfg.spec,
                                                          cfg.patch_sizes, cfg.delta_mode, cfg.workers);
    Json j = certification_to_json(report);
    const std::string hash = hash_for(cfg, "certify");
    j["config_hash"] = hash;
    const auto json_path = write_append_only(cfg.out, "certify_" + hash, "json", j.dump(2) + "\n");
    const auto csv_path = write_append_only(cfg.out, "certify_" + hash, "csv", certification_csv(report));
    out << "standard_accuracy " << std::fixed << std::setprecision(4) << report.standard_accuracy << '\n';
    for (const auto& row : report.certified) {
      out << "m=" << row.m << " delta=" << row.delta << " certified_accuracy " << row.accuracy << '\n';
    }
    out << "report " << json_path.string() << '\n' << "summary " << csv_path.string() << '\n';
    return kExitOk;
  });
}

int run_delta(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    cfg.spec.validate(cfg.height, cfg.width);
    validate_patch_sizes(cfg.patch_sizes, cfg.height, cfg.width);
    out << "image " << cfg.height << "x" << cfg.width << ", " << to_string(cfg.spec.kind) << " b=" << cfg.spec.b
        << " stride=" << cfg.spec.stride << " offset=" << cfg.spec.offset << '\n';
    out << std::left << std::setw(6) << "m" << std::setw(10) << "safe" << std::setw(10) << "nominal" << std::setw(10)
        << "paper" << std::setw(10) << "oracle" << "flags\n";
    for (int m : cfg.patch_sizes) {
      const auto safe = delta_closed_form(cfg.height, cfg.width, cfg.spec, m, DeltaMode::safe);
      const auto nominal = delta_closed_form(cfg.spec, m, DeltaMode::safe);
      const auto paper = delta_closed_form(cfg.spec, m, DeltaMode::paper);
      std::optional<std::int64_t> oracle;
      try {
        oracle = delta_oracle(cfg.height, cfg.width, cfg.spec, m);
      } catch (const BudgetError& e) {
        log(err, LogLevel::debug, e.what());
      }
      std::vector<std::string> flags;
      if (oracle) {
        if (paper < *oracle) flags.push_back("MISMATCH paper<oracle (unsound)");
        if (paper > *oracle) flags.push_back("MISMATCH paper>oracle");
        if (nominal < *oracle) flags.push_back("MISMATCH nominal<oracle (unsound)");
        if (nominal > *oracle) flags.push_back("nominal>oracle (loose)");
        if (safe != *oracle) flags.push_back("MISMATCH safe!=oracle");
      } else if (paper != safe) {
        flags.push_back("MISMATCH paper!=safe");
      }
      std::string flag_text;
      for (const auto& f : flags) flag_text += (flag_text.empty() ? "" : "; ") + f;
      out << std::left << std::setw(6) << m << std::setw(10) << safe << std::setw(10) << nominal << std::setw(10)
          << paper << std::setw(10) << (oracle ? std::to_string(*oracle) : std::string("skipped"))
          << (flag_text.empty() ? "ok" : flag_text) << '\n';
    }
    return kExitOk;
  });
}

int run_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.ckpt.empty() || !fs::exists(cfg.ckpt)) throw MissingInputError("checkpoint not found: " + cfg.ckpt);
    const Checkpoint ck = load_checkpoint(cfg.ckpt);
    const LabeledDataset data = load_eval_data(cfg, ck.config);
    validate_patch_sizes(cfg.patch_sizes, ck.config.height, ck.config.width);
    const std::vector<int> bs = cfg.b_values.empty() ? std::vector<int>{cfg.spec.b} : cfg.b_values;
    const std::vector<int> ss = cfg.strides.empty() ? std::vector<int>{cfg.spec.stride} : cfg.strides;
    std::vector<std::pair<int, int>> grid;
    std::set<std::pair<int, int>> seen;
    for (int b : bs) {
      for (int s : ss) {
        if (!seen.insert({b, s}).second) {
          log(err, LogLevel::error, "warning: duplicate grid point b=" + std::to_string(b) + " stride=" +
                                        std::to_string(s) + " ignored");
          continue;
        }
        grid.emplace_back(b, s);
      }
    }
    const BaseClassifier classify = make_vit_classifier(ck.params, ck.config);
    std::vector<SweepRow> rows;
    for (const auto& [b, s] : grid) {
      AblationSpec spec = cfg.spec;
      spec.b = b;
      spec.stride = s;
      spec.offset = std::min(spec.offset, s - 1);
      const auto report = certified_accuracy(data, classify, spec, cfg.patch_sizes, cfg.delta_mode, cfg.workers);
      const std::size_t count = ablation_count(ck.config.height, ck.config.width, spec);
      for (const auto& row : report.certified) {
        rows.push_back({b, s, row.m, row.delta, count, report.standard_accuracy, row.accuracy});
      }
      log(err, LogLevel::debug, "sweep point b=" + std::to_string(b) + " s=" + std::to_string(s) + " done");
    }
    const std::string csv = sweep_csv(rows);
    const auto path = write_append_only(cfg.out, "sweep_" + hash_for(cfg, "sweep"), "csv", csv);
    out << csv << "report " << path.string() << '\n';
    return kExitOk;
  });
}

int run_bench(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Checkpoint ck;
    if (!cfg.ckpt.empty()) {
      ck = load_checkpoint(cfg.ckpt);
    } else {
      ck.config = cfg.vit;
      ck.params = init_params(cfg.vit, cfg.seed);
    }
    const LabeledDataset data = load_eval_data(cfg, ck.config);
    std::vector<int> bs = cfg.b_values;
    if (bs.empty()) {
      for (int b = ck.config.patch; b <= ck.config.width; b += ck.config.patch) bs.push_back(b);
    }
    const auto rows = bench_sweep(ck.params, ck.config, data.images.front(), cfg.spec.kind, bs, cfg.spec.stride, cfg.trials);
    const std::string csv = bench_csv(rows);
    // Timings vary run to run, so bench reports are keyed by config and
    // never deduplicated against earlier runs.
    const auto path = write_append_only(cfg.out, "bench_" + hash_for(cfg, "bench"), "csv", csv);
    out << "# one smoothed forward pass over the ablation set of one image, per b\n" << csv << "report "
        << path.string() << '\n';
    return kExitOk;
  });
}

namespace {

struct Override {
  CLI::Option* option;
  std::function<void(RunConfig&)> apply;
};

struct FlagSink {
  RunConfig values;
  std::string ablation = "column";
  std::string delta_mode = "safe";
  std::string config_path;
  std::vector<Override> overrides;
};

template <typename Access>
void bind(CLI::App* app, FlagSink& sink, const std::string& name, Access access, const std::string& desc) {
  CLI::Option* opt = app->add_option(name, access(sink.values), desc);
  sink.overrides.push_back({opt, [access, &sink](RunConfig& c) { access(c) = access(sink.values); }});
}

void add_shared(CLI::App* app, FlagSink& s) {
  app->add_option("--config", s.config_path, "JSON run configuration (flags override it)");
  bind(app, s, "--seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }, "Random seed");
  bind(app, s, "--workers", [](RunConfig& c) -> int& { return c.workers; }, "Worker threads");
  bind(app, s, "--out", [](RunConfig& c) -> std::string& { return c.out; }, "Output directory");
}

void add_data(CLI::App* app, FlagSink& s) {
  bind(app, s, "--data", [](RunConfig& c) -> std::string& { return c.data; }, "Dataset path");
  bind(app, s, "--labels", [](RunConfig& c) -> std::string& { return c.labels; }, "IDX label file");
  auto* fmt = app->add_option("--data-format", s.values.data_format, "cifar10, idx or stripe")
                  ->check(CLI::IsMember({"cifar10", "idx", "stripe"}));
  s.overrides.push_back({fmt, [&s](RunConfig& c) { c.data_format = s.values.data_format; }});
  bind(app, s, "--stripe-n", [](RunConfig& c) -> int& { return c.stripe_n; }, "Stripe dataset size");
  bind(app, s, "--stripe-noise", [](RunConfig& c) -> float& { return c.stripe_noise; }, "Stripe noise amplitude");
}

void add_ablation(CLI::App* app, FlagSink& s) {
  auto* kind = app->add_option("--ablation", s.ablation, "column or block")->check(CLI::IsMember({"column", "block"}));
  s.overrides.push_back({kind, [&s](RunConfig& c) { c.spec.kind = ablation_kind_from_string(s.ablation); }});
  bind(app, s, "--b", [](RunConfig& c) -> int& { return c.spec.b; }, "Retained ablation width/side");
  bind(app, s, "--stride", [](RunConfig& c) -> int& { return c.spec.stride; }, "Ablation stride");
  bind(app, s, "--offset", [](RunConfig& c) -> int& { return c.spec.offset; }, "Strided grid offset");
}

void add_certify(CLI::App* app, FlagSink& s) {
  bind(app, s, "--ckpt", [](RunConfig& c) -> std::string& { return c.ckpt; }, "Checkpoint path");
  auto* ps = app->add_option("--patch-sizes", s.values.patch_sizes, "Comma-separated patch sides")->delimiter(',');
  s.overrides.push_back({ps, [&s](RunConfig& c) { c.patch_sizes = s.values.patch_sizes; }});
  auto* mode = app->add_option("--delta-mode", s.delta_mode, "safe, paper or oracle")
                   ->check(CLI::IsMember({"safe", "paper", "oracle"}));
  s.overrides.push_back({mode, [&s](RunConfig& c) { c.delta_mode = delta_mode_from_string(s.delta_mode); }});
}

void add_vit(CLI::App* app, FlagSink& s) {
  bind(app, s, "--height", [](RunConfig& c) -> int& { return c.vit.height; }, "Image height");
  bind(app, s, "--width", [](RunConfig& c) -> int& { return c.vit.width; }, "Image width");
  bind(app, s, "--channels", [](RunConfig& c) -> int& { return c.vit.channels; }, "Image channels");
  bind(app, s, "--patch", [](RunConfig& c) -> int& { return c.vit.patch; }, "Token patch side");
  bind(app, s, "--dim", [](RunConfig& c) -> int& { return c.vit.dim; }, "Embedding dimension");
  bind(app, s, "--heads", [](RunConfig& c) -> int& { return c.vit.heads; }, "Attention heads");
  bind(app, s, "--layers", [](RunConfig& c) -> int& { return c.vit.layers; }, "Encoder depth");
  bind(app, s, "--classes", [](RunConfig& c) -> int& { return c.vit.classes; }, "Class count");
}

void add_train(CLI::App* app, FlagSink& s) {
  bind(app, s, "--epochs", [](RunConfig& c) -> int& { return c.train.epochs; }, "Epoch budget");
  bind(app, s, "--batch-size", [](RunConfig& c) -> int& { return c.train.batch_size; }, "Batch size");
  bind(app, s, "--lr", [](RunConfig& c) -> float& { return c.train.lr; }, "Learning rate");
  bind(app, s, "--momentum", [](RunConfig& c) -> float& { return c.train.momentum; }, "SGD momentum");
  bind(app, s, "--weight-decay", [](RunConfig& c) -> float& { return c.train.weight_decay; }, "Weight decay");
  bind(app, s, "--b-train", [](RunConfig& c) -> int& { return c.train.b_train; }, "Training ablation size");
  bind(app, s, "--patience", [](RunConfig& c) -> int& { return c.train.patience; }, "Early-stopping patience");
  bind(app, s, "--ckpt", [](RunConfig& c) -> std::string& { return c.ckpt; }, "Checkpoint output path");
}

RunConfig resolve(const FlagSink& s, const std::string& command) {
  RunConfig cfg;
  if (!s.config_path.empty()) {
    require_file(s.config_path, "config");
    std::ifstream in(s.config_path);
    cfg = run_config_from_json(Json::parse(in));
  }
  for (const auto& o : s.overrides)
    if (o.option->count() > 0) o.apply(cfg);
  cfg.command = command;
  return cfg;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Certified patch robustness with smoothed vision transformers"};
  app.require_subcommand(1);
  std::map<std::string, FlagSink> sinks;

  auto* ablate = app.add_subcommand("ablate", "Dump the ablation set of one image as PPM/PGM files");
  auto* train_cmd = app.add_subcommand("train", "Train the base classifier on random ablations");
  auto* certify = app.add_subcommand("certify", "Standard and certified accuracy of the smoothed classifier");
  auto* delta = app.add_subcommand("delta", "Compare certification thresholds");
  auto* sweep = app.add_subcommand("sweep", "Certification over a grid of ablation sizes and strides");
  auto* bench = app.add_subcommand("bench", "Token-dropping cost model and wall-clock timings");

  auto& s_ablate = sinks["ablate"];
  add_shared(ablate, s_ablate);
  add_data(ablate, s_ablate);
  add_ablation(ablate, s_ablate);
  add_vit(ablate, s_ablate);
  bind(ablate, s_ablate, "--index", [](RunConfig& c) -> int& { return c.index; }, "Image index");

  auto& s_train = sinks["train"];
  add_shared(train_cmd, s_train);
  add_data(train_cmd, s_train);
  add_vit(train_cmd, s_train);
  add_train(train_cmd, s_train);

  auto& s_certify = sinks["certify"];
  add_shared(certify, s_certify);
  add_data(certify, s_certify);
  add_ablation(certify, s_certify);
  add_certify(certify, s_certify);

  auto& s_delta = sinks["delta"];
  add_shared(delta, s_delta);
  add_ablation(delta, s_delta);
  {
    auto* ps = delta->add_option("--patch-sizes", s_delta.values.patch_sizes, "Comma-separated patch sides")->delimiter(',');
    s_delta.overrides.push_back({ps, [&s_delta](RunConfig& c) { c.patch_sizes = s_delta.values.patch_sizes; }});
  }
  bind(delta, s_delta, "--height", [](RunConfig& c) -> int& { return c.height; }, "Image height");
  bind(delta, s_delta, "--width", [](RunConfig& c) -> int& { return c.width; }, "Image width");

  auto& s_sweep = sinks["sweep"];
  add_shared(sweep, s_sweep);
  add_data(sweep, s_sweep);
  add_ablation(sweep, s_sweep);
  add_certify(sweep, s_sweep);
  {
    auto* bv = sweep->add_option("--b-values", s_sweep.values.b_values, "Comma-separated ablation sizes")->delimiter(',');
    s_sweep.overrides.push_back({bv, [&s_sweep](RunConfig& c) { c.b_values = s_sweep.values.b_values; }});
    auto* sv = sweep->add_option("--strides", s_sweep.values.strides, "Comma-separated strides")->delimiter(',');
    s_sweep.overrides.push_back({sv, [&s_sweep](RunConfig& c) { c.strides = s_sweep.values.strides; }});
  }

  auto& s_bench = sinks["bench"];
  add_shared(bench, s_bench);
  add_data(bench, s_bench);
  add_ablation(bench, s_bench);
  add_vit(bench, s_bench);
  bind(bench, s_bench, "--ckpt", [](RunConfig& c) -> std::string& { return c.ckpt; }, "Checkpoint (random init if omitted)");
  bind(bench, s_bench, "--trials", [](RunConfig& c) -> int& { return c.trials; }, "Timing trials");
  {
    auto* bv = bench->add_option("--b-values", s_bench.values.b_values, "Comma-separated ablation sizes")->delimiter(',');
    s_bench.overrides.push_back({bv, [&s_bench](RunConfig& c) { c.b_values = s_bench.values.b_values; }});
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << (e.get_name() == "CallForHelp" ? app.help() : std::string());
      return kExitOk;
    }
    return report_error(err, kExitInvalidParams, "usage", e.what());
  }

  for (auto* sub : app.get_subcommands()) {
    const std::string name = sub->get_name();
    RunConfig cfg;
    const int rc = guarded(err, [&] {
      cfg = resolve(sinks.at(name), name);
      return kExitOk;
    });
    if (rc != kExitOk) return rc;
    log(err, LogLevel::debug, "config " + run_config_to_json(cfg).dump());
    if (name == "ablate") return run_ablate(cfg, out, err);
    if (name == "train") return run_train(cfg, out, err);
    if (name == "certify") return run_certify(cfg, out, err);
    if (name == "delta") return run_delta(cfg, out, err);
    if (name == "sweep") return run_sweep(cfg, out, err);
    if (name == "bench") return run_bench(cfg, out, err);
  }
  return report_error(err, kExitInvalidParams, "usage", "no command given");
}

}  // namespace patchcert
