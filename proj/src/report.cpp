#include "patchcert/report.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace patchcert {
namespace {

// Fixed-precision formatting keeps CSV output stable across platforms.
std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fmt_sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

}  // namespace

Json config_to_json(const ViTConfig& c) {
  return {{"height", c.height},   {"width", c.width}, {"channels", c.channels}, {"patch", c.patch},
          {"dim", c.dim},         {"heads", c.heads}, {"layers", c.layers},     {"classes", c.classes},
          {"use_class_token", c.use_class_token},    {"ln_eps", c.ln_eps}};
}

ViTConfig config_from_json(const Json& j) {
  ViTConfig c;
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  c.channels = j.at("channels").get<int>();
  c.patch = j.at("patch").get<int>();
  c.dim = j.at("dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.layers = j.at("layers").get<int>();
  c.classes = j.at("classes").get<int>();
  c.use_class_token = j.value("use_class_token", true);
  c.ln_eps = j.value("ln_eps", 1e-6f);
  c.validate();
  return c;
}

Json spec_to_json(const AblationSpec& s) {
  return {{"kind", to_string(s.kind)}, {"b", s.b}, {"stride", s.stride}, {"offset", s.offset}};
}

AblationSpec spec_from_json(const Json& j) {
  AblationSpec s;
  s.kind = ablation_kind_from_string(j.at("kind").get<std::string>());
  s.b = j.at("b").get<int>();
  s.stride = j.value("stride", 1);
  s.offset = j.value("offset", 0);
  return s;
}

Json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"lr_decay", c.lr_decay},
          {"lr_period", c.lr_period},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"b_train", c.b_train},
          {"kind", to_string(c.kind)},
          {"seed", c.seed},
          {"patience", c.patience},
          {"horizontal_flip", c.horizontal_flip}};
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.lr_period = j.value("lr_period", c.lr_period);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.b_train = j.value("b_train", c.b_train);
  c.kind = ablation_kind_from_string(j.value("kind", std::string("column")));
  c.seed = j.value("seed", c.seed);
  c.patience = j.value("patience", c.patience);
  c.horizontal_flip = j.value("horizontal_flip", c.horizontal_flip);
  return c;
}

Json certification_to_json(const CertificationReport& r) {
  Json certified = Json::array();
  for (const auto& row : r.certified) certified.push_back({{"m", row.m}, {"delta", row.delta}, {"accuracy", row.accuracy}});
  Json per_image = Json::array();
  for (const auto& img : r.per_image) {
    Json certs = Json::array();
    for (const auto& c : img.certificates) {
      certs.push_back({{"m", c.patch_m},
                       {"delta", c.delta},
                       {"predicted", c.predicted},
                       {"runner_up", c.runner_up},
                       {"margin", c.margin},
                       {"certified", c.certified}});
    }
    per_image.push_back({{"index", img.index},
                         {"label", img.label},
                         {"prediction", smoothed_predict(img.votes)},
                         {"counts", img.votes.counts},
                         {"certificates", certs}});
  }
  return {{"spec", spec_to_json(r.spec)},
          {"image", {{"height", r.height}, {"width", r.width}}},
          {"delta_mode", to_string(r.delta_mode)},
          {"standard_accuracy", r.standard_accuracy},
          {"certified", certified},
          {"per_image", per_image}};
}

std::string certification_csv(const CertificationReport& r) {
  std::ostringstream os;
  os << "m,delta,standard_accuracy,certified_accuracy\n";
  for (const auto& row : r.certified) {
    os << row.m << ',' << row.delta << ',' << fmt(r.standard_accuracy) << ',' << fmt(row.accuracy) << '\n';
  }
  return os.str();
}

std::string epoch_log_line(const EpochLog& log) {
  const Json j = {{"epoch", log.epoch}, {"train_loss", log.train_loss}, {"val_ablation_acc", log.val_ablation_acc}, {"lr", log.lr}};
  return j.dump();
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "b,stride,n_tokens_mean,macs_drop,macs_full,mac_ratio,time_drop_s,time_full_s,speedup\n";
  for (const auto& r : rows) {
    os << r.b << ',' << r.stride << ',' << fmt(r.n_tokens_mean, 4) << ',' << r.macs_drop << ',' << r.macs_full << ','
       << fmt(r.mac_ratio, 4) << ',' << fmt_sci(r.time_drop_s) << ',' << fmt_sci(r.time_full_s) << ','
       << fmt(r.speedup, 4) << '\n';
  }
  return os.str();
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "b,stride,m,delta,ablations,standard_accuracy,certified_accuracy\n";
  for (const auto& r : rows) {
    os << r.b << ',' << r.stride << ',' << r.m << ',' << r.delta << ',' << r.ablations << ',' << fmt(r.standard_accuracy)
       << ',' << fmt(r.certified_accuracy) << '\n';
  }
  return os.str();
}

std::string content_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::filesystem::path write_append_only(const std::filesystem::path& dir, const std::string& stem, const std::string& ext,
                                        const std::string& contents) {
  std::filesystem::create_directories(dir);
  for (int n = 0;; ++n) {
    const auto path = dir / (n == 0 ? stem + "." + ext : stem + "." + std::to_string(n) + "." + ext);
    if (std::filesystem::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      const std::string existing{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
      if (existing == contents) return path;
      continue;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << contents;
    return path;
  }
}

}  // namespace patchcert
