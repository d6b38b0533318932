#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "patchcert/cli.hpp"
#include "patchcert/io.hpp"

using namespace patchcert;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "patchcert");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("patchcert_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<fs::path> files_with_ext(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// A small trained checkpoint shared by several cases.
const fs::path& toy_checkpoint() {
  static const fs::path path = [] {
    const fs::path dir = scratch("model");
    const auto r = cli({"train", "--stripe-n", "96", "--epochs", "3", "--out", dir.string(), "--ckpt",
                        (dir / "toy.svit").string()});
    REQUIRE(r.code == 0);
    return dir / "toy.svit";
  }();
  return path;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("delta table flags the strided discrepancy") {
    const auto r = cli({"delta", "--height", "32", "--width", "224", "--b", "19", "--stride", "5", "--patch-sizes", "32"});
    CHECK(r.code == 0);
    CHECK(r.out.find("MISMATCH paper<oracle") != std::string::npos);
    std::istringstream lines(r.out);
    std::string line;
    std::getline(lines, line);
    std::getline(lines, line);
    std::getline(lines, line);
    std::istringstream row(line);
    int m, safe, nominal, paper, oracle;
    row >> m >> safe >> nominal >> paper >> oracle;
    CHECK(m == 32);
    CHECK(safe == 11);
    CHECK(nominal == 10);
    CHECK(paper == 8);
    CHECK(oracle == 11);
  }

  TEST_CASE("delta agrees everywhere at stride one") {
    const auto r = cli({"delta", "--height", "224", "--width", "224", "--b", "19", "--patch-sizes", "32"});
    CHECK(r.code == 0);
    CHECK(r.out.find("50        50        50        50        ok") != std::string::npos);
  }

  TEST_CASE("delta marks the oracle skipped beyond the budget") {
    const auto r = cli({"delta", "--height", "224", "--width", "224", "--ablation", "block", "--b", "75", "--patch-sizes", "32"});
    CHECK(r.code == 0);
    CHECK(r.out.find("skipped") != std::string::npos);
    CHECK(r.out.find("11236") != std::string::npos);
  }

  TEST_CASE("exit codes") {
    const auto missing = cli({"certify", "--ckpt", "/nonexistent/model.svit"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("checkpoint not found") != std::string::npos);
    CHECK(missing.err.find("\"exit_code\":2") != std::string::npos);

    const auto big_m = cli({"certify", "--ckpt", toy_checkpoint().string(), "--patch-sizes", "17", "--out",
                            scratch("bigm").string()});
    CHECK(big_m.code == 3);
    CHECK(cli({"delta", "--height", "8", "--width", "8", "--patch-sizes", "9"}).code == 3);
    CHECK(cli({"delta", "--delta-mode", "bogus"}).code == 3);
    CHECK(cli({"delta", "--no-such-flag"}).code == 3);
    CHECK(cli({}).code == 3);
    CHECK(cli({"certify", "--config", "/nonexistent/run.json"}).code == 2);
  }

  TEST_CASE("incompatible dataset is a parameter error") {
    const fs::path dir = scratch("mismatch");
    save_idx_tensor(dir / "x.idx", IdxTensor{IdxType::u8, {2, 8, 8}, std::vector<float>(128, 3.0f)});
    save_idx_tensor(dir / "y.idx", IdxTensor{IdxType::u8, {2}, {0, 1}});
    const auto r = cli({"certify", "--ckpt", toy_checkpoint().string(), "--data-format", "idx", "--data",
                        (dir / "x.idx").string(), "--labels", (dir / "y.idx").string(), "--out", dir.string()});
    CHECK(r.code == 3);
    CHECK(r.err.find("incompatible") != std::string::npos);
  }

  TEST_CASE("certify reports are deterministic and append-only") {
    const fs::path a = scratch("cert_a");
    const fs::path b = scratch("cert_b");
    const std::vector<std::string> base{"certify", "--ckpt", toy_checkpoint().string(), "--patch-sizes", "1,2"};
    auto args_a = base;
    args_a.insert(args_a.end(), {"--out", a.string()});
    auto args_b = base;
    args_b.insert(args_b.end(), {"--out", b.string(), "--workers", "2"});
    REQUIRE(cli(args_a).code == 0);
    REQUIRE(cli(args_b).code == 0);
    const auto ja = files_with_ext(a, ".json");
    const auto jb = files_with_ext(b, ".json");
    REQUIRE(ja.size() == 1);
    REQUIRE(jb.size() == 1);
    CHECK(ja[0].filename() == jb[0].filename());
    CHECK(slurp(ja[0]) == slurp(jb[0]));
    const Json report = Json::parse(slurp(ja[0]));
    CHECK(report.at("certified").size() == 2);
    CHECK(report.at("certified")[1].at("delta") == 4);
    REQUIRE(cli(args_a).code == 0);
    CHECK(files_with_ext(a, ".json").size() == 1);
  }

  TEST_CASE("append-only writer never overwrites") {
    const fs::path dir = scratch("append");
    const auto p1 = write_append_only(dir, "r", "txt", "one");
    const auto p2 = write_append_only(dir, "r", "txt", "two");
    const auto p3 = write_append_only(dir, "r", "txt", "one");
    CHECK(p1.filename() == "r.txt");
    CHECK(p2.filename() == "r.1.txt");
    CHECK(p3 == p1);
    CHECK(slurp(p1) == "one");
  }

  TEST_CASE("config file with flag overrides") {
    const fs::path dir = scratch("config");
    RunConfig cfg;
    cfg.height = 12;
    cfg.width = 12;
    cfg.spec.b = 4;
    cfg.patch_sizes = {2, 3};
    {
      std::ofstream(dir / "run.json") << run_config_to_json(cfg).dump();
    }
    const auto r = cli({"delta", "--config", (dir / "run.json").string(), "--b", "2"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("image 12x12, column b=2") != std::string::npos);
    CHECK(r.out.find("\n3     4 ") != std::string::npos);
    {
      std::ofstream(dir / "broken.json") << "{\"spec\": {\"kind\": \"column\"}}";
    }
    CHECK(cli({"delta", "--config", (dir / "broken.json").string()}).code == 3);
  }

  TEST_CASE("run config round trips through JSON") {
    RunConfig cfg;
    cfg.command = "sweep";
    cfg.spec = {AblationKind::block, 5, 2, 1};
    cfg.vit.dim = 64;
    cfg.train.lr = 0.125f;
    cfg.patch_sizes = {1, 4};
    cfg.delta_mode = DeltaMode::oracle;
    cfg.b_values = {2, 3};
    cfg.seed = 99;
    CHECK(run_config_from_json(run_config_to_json(cfg)) == cfg);
    RunConfig other = cfg;
    other.workers = 8;
    other.out = "/elsewhere";
    CHECK(run_config_hash(other) == run_config_hash(cfg));
    other.seed = 100;
    CHECK_FALSE(run_config_hash(other) == run_config_hash(cfg));
  }

  TEST_CASE("sweep deduplicates grid points") {
    const fs::path dir = scratch("sweep");
    const auto r = cli({"sweep", "--ckpt", toy_checkpoint().string(), "--b-values", "2,3,4,3", "--strides", "1",
                        "--patch-sizes", "1,2", "--out", dir.string()});
    REQUIRE(r.code == 0);
    CHECK(r.err.find("duplicate grid point b=3") != std::string::npos);
    const auto csv = files_with_ext(dir, ".csv");
    REQUIRE(csv.size() == 1);
    std::istringstream in(slurp(csv[0]));
    std::string line;
    int rows = -1;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 6);
  }

  TEST_CASE("ablate writes image and mask files") {
    const fs::path dir = scratch("ablate");
    const auto r = cli({"ablate", "--b", "4", "--stride", "4", "--out", dir.string(), "--stripe-n", "16"});
    REQUIRE(r.code == 0);
    CHECK(files_with_ext(dir, ".ppm").size() == 4);
    CHECK(files_with_ext(dir, ".pgm").size() == 4);
    const Mask m = decode_pgm(read_file_bytes(dir / "mask_1.pgm"));
    CHECK(m.count() == 4u * 16u);
    CHECK(m(0, 4));
    CHECK(cli({"ablate", "--index", "999", "--out", dir.string(), "--stripe-n", "16"}).code == 3);
  }

  TEST_CASE("train writes a loadable checkpoint and a JSONL log") {
    const fs::path dir = scratch("train");
    const auto r = cli({"train", "--stripe-n", "32", "--epochs", "1", "--out", dir.string()});
    REQUIRE(r.code == 0);
    const auto ckpts = files_with_ext(dir, ".svit");
    REQUIRE(ckpts.size() == 1);
    CHECK(ckpts[0].filename().string().rfind("model_", 0) == 0);
    CHECK_NOTHROW(load_checkpoint(ckpts[0]));
    const auto logs = files_with_ext(dir, ".jsonl");
    REQUIRE(logs.size() == 1);
    const Json first = Json::parse(slurp(logs[0]).substr(0, slurp(logs[0]).find('\n')));
    CHECK(first.contains("val_ablation_acc"));
  }

  TEST_CASE("bench emits one CSV row per ablation size") {
    const fs::path dir = scratch("bench");
    const auto r = cli({"bench", "--b-values", "4,16", "--trials", "3", "--out", dir.string(), "--stripe-n", "16"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("b,stride,n_tokens_mean,macs_drop,macs_full,mac_ratio,time_drop_s,time_full_s,speedup") !=
          std::string::npos);
    CHECK(r.out.find("\n4,1,") != std::string::npos);
    CHECK(r.out.find("\n16,1,") != std::string::npos);
  }
}
