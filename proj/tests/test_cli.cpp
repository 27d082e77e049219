#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "cnetdst/cli.hpp"
#include "cnetdst/dst_model.hpp"
#include "cnetdst/synthetic.hpp"

using namespace cnetdst;
using namespace cnetdst::cli;

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig desk_run() {
  RunConfig config;
  config.embed_dim = 8;
  config.dense_dim = 12;
  config.gru_dim = 8;
  config.combine_dim = 6;
  config.dropout = 0.0;
  config.batch_dialogs = 4;
  return config;
}

int run_quiet(RunConfig config, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  config.out = &out;
  config.err = &err;
  const int code = run(config);
  if (out_text) *out_text = out.str();
  return code;
}

}  // namespace

TEST_CASE("gen-synth writes the expected tree and is byte-deterministic") {
  TempDir a("cnetdst_cli_gen_a"), b("cnetdst_cli_gen_b");
  RunConfig config = desk_run();
  config.command = "gen-synth";
  config.gen_dialogs = 20;
  config.gen_turns = 4;
  config.synth_seed = 7;
  config.out_dir = a.path.string();
  std::string text;
  REQUIRE(run_quiet(config, &text) == kExitOk);
  CHECK(text.find("dialogs=20") != std::string::npos);
  CHECK(text.find("turns=80") != std::string::npos);

  std::size_t dirs = 0;
  for (const auto& entry : fs::directory_iterator(a.path / "train")) {
    dirs += entry.is_directory();
  }
  CHECK(dirs == 20);

  config.out_dir = b.path.string();
  REQUIRE(run_quiet(config) == kExitOk);
  for (const auto& entry : fs::recursive_directory_iterator(a.path)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a.path);
    CHECK(file_bytes(entry.path()) == file_bytes(b.path / rel));
  }
}

TEST_CASE("stats on a clean corpus gives identical 1-best and cnet coverage") {
  TempDir tmp("cnetdst_cli_stats");
  RunConfig gen = desk_run();
  gen.command = "gen-synth";
  gen.gen_dialogs = 6;
  gen.gen_turns = 3;
  gen.synth_seed = 3;
  gen.out_dir = tmp.path.string();
  REQUIRE(run_quiet(gen) == kExitOk);

  RunConfig stats = desk_run();
  stats.command = "stats";
  stats.corpus_root = tmp.path.string();
  std::string text;
  REQUIRE(run_quiet(stats, &text) == kExitOk);

  std::istringstream lines(text);
  std::string corpus_line, onebest, cnet_line, pruned;
  std::getline(lines, corpus_line);
  std::getline(lines, onebest);
  std::getline(lines, cnet_line);
  std::getline(lines, pruned);
  CHECK(corpus_line.find("corpus.v1") != std::string::npos);
  CHECK(onebest.find("view=onebest") != std::string::npos);
  CHECK(onebest.find("all_words_pct=100.000000") != std::string::npos);
  CHECK(cnet_line.find("all_words_pct=100.000000") != std::string::npos);
  CHECK(pruned.find("view=pruned") != std::string::npos);
}

TEST_CASE("stats on a swapped corpus shows the cnet coverage advantage") {
  RunConfig stats = desk_run();
  stats.command = "stats";
  stats.synthetic = "medium";  // p_swap 0.3
  stats.synth_seed = 5;
  std::string text;
  REQUIRE(run_quiet(stats, &text) == kExitOk);
  auto pct = [&](const std::string& view) {
    const std::string needle = "view=" + view + " ";
    const auto line_start = text.find(needle);
    REQUIRE(line_start != std::string::npos);
    const auto key = text.find("all_words_pct=", line_start);
    return std::stod(text.substr(key + 14));
  };
  CHECK(pct("cnet") > pct("onebest") + 10.0);
  CHECK(pct("cnet") == doctest::Approx(100.0));
}

TEST_CASE("gradcheck command passes and its corrupted control fails") {
  RunConfig config = desk_run();
  config.command = "gradcheck";
  std::string text;
  CHECK(run_quiet(config, &text) == kExitOk);
  CHECK(text.find("status=pass") != std::string::npos);

  std::string repeat;
  CHECK(run_quiet(config, &repeat) == kExitOk);
  CHECK(text == repeat);  // fixed seed, identical report

  config.corrupt_backward = true;
  std::string corrupted;
  CHECK(run_quiet(config, &corrupted) == kExitNumeric);
  CHECK(corrupted.find("status=fail") != std::string::npos);
}

TEST_CASE("train writes one checkpoint per head group and logs finite losses") {
  TempDir tmp("cnetdst_cli_train");
  RunConfig config = desk_run();
  config.command = "train";
  config.synthetic = "tiny";
  config.seeds = {1};
  config.epochs_override = 3;
  config.out_dir = tmp.path.string();
  std::string text;
  REQUIRE(run_quiet(config, &text) == kExitOk);

  for (const std::string group : {"area", "food", "pricerange", "requests"}) {
    CHECK(fs::exists(tmp.path / ("model_" + group + "_seed1.ckpt")));
  }
  // Loss log lines: epoch,group,seed,loss.
  std::istringstream lines(text);
  std::string line;
  std::size_t loss_lines = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("train.v1", 0) == 0 || line.rfind("corpus.v1", 0) == 0)
      continue;
    ++loss_lines;
    const auto last_comma = line.rfind(',');
    REQUIRE(last_comma != std::string::npos);
    const double loss = std::stod(line.substr(last_comma + 1));
    CHECK(std::isfinite(loss));
  }
  CHECK(loss_lines == 4 * 3);
  CHECK(fs::exists(tmp.path / "loss_log.csv"));
}

TEST_CASE("train with zero epochs reproduces the initialization") {
  TempDir tmp("cnetdst_cli_train0");
  RunConfig config = desk_run();
  config.command = "train";
  config.synthetic = "tiny";
  config.seeds = {9};
  config.epochs_override = 0;
  config.out_dir = tmp.path.string();
  REQUIRE(run_quiet(config) == kExitOk);

  const Ontology ontology = corpus::synthetic_ontology();
  model::DstModel loaded = model::load_checkpoint(
      (tmp.path / "model_food_seed9.ckpt").string(), ontology);
  model::ModelConfig mc;
  mc.embed_dim = config.embed_dim;
  mc.dense_dim = config.dense_dim;
  mc.gru_dim = config.gru_dim;
  mc.combine_dim = config.combine_dim;
  mc.dropout_rate = 0.0;
  mc.seed = 9;
  mc.head_group = "food";
  model::DstModel fresh = model::DstModel::init(mc, ontology, loaded.vocab);
  const auto a = fresh.named_params();
  auto b = loaded.named_params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tensor->data == b[i].tensor->data);
  }
}

TEST_CASE("pretrained embeddings replace matching rows before training") {
  TempDir tmp("cnetdst_cli_embed");
  const fs::path vectors = tmp.path / "vectors.txt";
  {
    std::ofstream out(vectors);
    out << "thai";
    for (int i = 0; i < 8; ++i) out << " " << 0.125 * (i + 1);
    out << "\n";
  }
  RunConfig config = desk_run();
  config.command = "train";
  config.synthetic = "tiny";
  config.seeds = {5};
  config.epochs_override = 0;  // keep the initialization visible
  config.embeddings_file = vectors.string();
  config.out_dir = tmp.path.string();
  REQUIRE(run_quiet(config) == kExitOk);

  model::DstModel m = model::load_checkpoint(
      (tmp.path / "model_area_seed5.ckpt").string(),
      corpus::synthetic_ontology());
  const std::size_t row = m.vocab.lookup("thai");
  REQUIRE(row >= 3);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(m.embeddings.at(row, i) == 0.125 * (i + 1));
  }
}

TEST_CASE("train twice with the same seed produces byte-identical artifacts") {
  TempDir a("cnetdst_cli_det_a"), b("cnetdst_cli_det_b");
  RunConfig config = desk_run();
  config.command = "train";
  config.synthetic = "tiny";
  config.seeds = {4};
  config.epochs_override = 2;

  config.out_dir = a.path.string();
  std::string out_a;
  REQUIRE(run_quiet(config, &out_a) == kExitOk);
  config.out_dir = b.path.string();
  std::string out_b;
  REQUIRE(run_quiet(config, &out_b) == kExitOk);

  for (const auto& entry : fs::directory_iterator(a.path)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = entry.path().filename();
    CHECK(file_bytes(entry.path()) == file_bytes(b.path / rel));
  }
  // The stdout records only differ in the output-directory summary line.
  out_a.erase(out_a.find("train.v1"));
  out_b.erase(out_b.find("train.v1"));
  CHECK(out_a == out_b);
}

TEST_CASE("eval reports per-seed and aggregate metrics") {
  TempDir tmp("cnetdst_cli_eval");
  RunConfig train = desk_run();
  train.command = "train";
  train.synthetic = "tiny";
  train.seeds = {1, 2};
  train.epochs_override = 4;
  train.out_dir = tmp.path.string();
  REQUIRE(run_quiet(train) == kExitOk);

  RunConfig eval = desk_run();
  eval.command = "eval";
  eval.synthetic = "tiny";
  eval.split = "train";
  eval.seeds = {1, 2};
  eval.checkpoint_dir = tmp.path.string();
  eval.ensemble = true;
  std::string text;
  REQUIRE(run_quiet(eval, &text) == kExitOk);
  CHECK(text.find("seed=1 joint_goals=") != std::string::npos);
  CHECK(text.find("seed=2 joint_goals=") != std::string::npos);
  CHECK(text.find("seeds=2 joint_goals_avg=") != std::string::npos);
  CHECK(text.find("ensemble=2 joint_goals=") != std::string::npos);

  SUBCASE("aggregate equals the hand-computed stats of the per-seed lines") {
    auto metric = [&](const std::string& anchor) {
      const auto pos = text.find(anchor);
      REQUIRE(pos != std::string::npos);
      return std::stod(text.substr(pos + anchor.size()));
    };
    const double s1 = metric("seed=1 joint_goals=");
    const double s2 = metric("seed=2 joint_goals=");
    CHECK(metric("joint_goals_avg=") ==
          doctest::Approx((s1 + s2) / 2).epsilon(1e-6));
    CHECK(metric("joint_goals_min=") ==
          doctest::Approx(std::min(s1, s2)).epsilon(1e-6));
    CHECK(metric("joint_goals_max=") ==
          doctest::Approx(std::max(s1, s2)).epsilon(1e-6));
  }

  SUBCASE("an ensemble over one seed equals the plain eval") {
    RunConfig single = eval;
    single.seeds = {1};
    std::string one;
    REQUIRE(run_quiet(single, &one) == kExitOk);
    auto metric = [](const std::string& hay, const std::string& anchor) {
      const auto pos = hay.find(anchor);
      REQUIRE(pos != std::string::npos);
      return std::stod(hay.substr(pos + anchor.size()));
    };
    CHECK(metric(one, "ensemble=1 joint_goals=") ==
          doctest::Approx(metric(one, "seed=1 joint_goals=")).epsilon(1e-9));
  }

  SUBCASE("missing checkpoints are a data error") {
    RunConfig missing = eval;
    missing.seeds = {99};
    CHECK(run_quiet(missing) == kExitData);
  }
}

TEST_CASE("command errors map onto the exit-code contract") {
  RunConfig config = desk_run();
  SUBCASE("unknown command") {
    config.command = "frobnicate";
    CHECK(run_quiet(config) == kExitConfig);
  }
  SUBCASE("missing data source") {
    config.command = "stats";
    CHECK(run_quiet(config) == kExitConfig);
  }
  SUBCASE("nonexistent corpus directory") {
    config.command = "stats";
    config.corpus_root = "/nonexistent/cnetdst";
    CHECK(run_quiet(config) == kExitData);
  }
  SUBCASE("bad synthetic preset name") {
    config.command = "stats";
    config.synthetic = "gigantic";
    CHECK(run_quiet(config) == kExitConfig);
  }
}

TEST_CASE("the installed binary honors the same contract end to end") {
  TempDir tmp("cnetdst_cli_binary");
  const std::string bin = CNET_DST_BIN;
  const std::string base = tmp.path.string();

  auto sh = [&](const std::string& cmd) { return std::system(cmd.c_str()); };

  CHECK(sh(bin + " gen-synth --out " + base + " --dialogs 4 --turns 3 --seed 2"
                 " > " + base + "/gen.txt") == 0);
  CHECK(sh(bin + " stats --corpus " + base + " > " + base + "/stats.txt") == 0);
  CHECK(sh(bin + " train --synthetic tiny --seeds 1 --epochs 1 --out " + base +
           "/ckpt > " + base + "/train.txt") == 0);
  CHECK(sh(bin + " eval --synthetic tiny --seeds 1 --checkpoints " + base +
           "/ckpt > " + base + "/eval.txt") == 0);
  // Usage error: unknown flag.
  CHECK(sh(bin + " train --no-such-flag > /dev/null 2>&1") != 0);
  // Data error: evaluating against an empty checkpoint directory.
  const int missing = sh(bin + " eval --synthetic tiny --seeds 1 "
                               "--checkpoints " + base + "/nowhere "
                               "> /dev/null 2>&1");
  CHECK(WEXITSTATUS(missing) == kExitData);

  const std::string eval_text = file_bytes(tmp.path / "eval.txt");
  CHECK(eval_text.find("metrics.v1") != std::string::npos);
}
