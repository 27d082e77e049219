#pragma once

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

namespace cnetdst::cli {

// Exit code contract, stable for scripting.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

struct RunConfig {
  std::string command;

  // Data source: either a corpus directory or a synthetic preset
  // (tiny|small|medium) generated in memory.
  std::string corpus_root;
  std::string split = "train";
  std::string synthetic;
  std::uint64_t synth_seed = 1;

  // Cnet preprocessing.
  double prune_threshold = 0.001;
  bool no_prune = false;
  std::string interjection_file;
  bool renormalize_scores = false;

  // Model dimensions; full-scale defaults, desk presets override in main.
  std::size_t embed_dim = 300;
  std::size_t dense_dim = 300;
  std::size_t gru_dim = 100;
  std::size_t combine_dim = 50;
  std::string pooling = "weighted";
  bool renormalize_pooling = false;
  double dropout = 0.5;

  // Optimization.
  double learning_rate = 0.001;
  double l2_lambda = 0.001;
  std::size_t batch_dialogs = 10;
  long epochs_override = -1;  // <0: per-group defaults
  std::string train_input = "cnet";  // cnet | onebest
  std::size_t min_count = 1;
  std::string embeddings_file;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  // Artifacts.
  std::string out_dir = ".";
  std::string checkpoint_dir;

  // Evaluation.
  std::string eval_view = "cnet";
  bool ensemble = false;

  // Synthetic generation.
  std::size_t gen_dialogs = 20;
  std::size_t gen_turns = 4;
  double p_swap = 0.0;
  double p_confuse = 0.0;
  double p_interj = 0.0;

  // Gradient checking.
  double fd_step = 1e-4;
  std::uint64_t gradcheck_seed = 7;
  bool corrupt_backward = false;  // negative-control hook

  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;
};

int cmd_stats(const RunConfig& config);
int cmd_train(const RunConfig& config);
int cmd_eval(const RunConfig& config);
int cmd_gradcheck(const RunConfig& config);
int cmd_gen_synth(const RunConfig& config);

// Dispatches on config.command and maps errors onto the exit-code contract.
int run(const RunConfig& config);

}  // namespace cnetdst::cli
