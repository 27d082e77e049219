// Command-line front end: stats, train, eval, gradcheck, gen-synth.

#include <string>

#include "CLI11.hpp"

#include "cnetdst/cli.hpp"

namespace {

void add_data_flags(CLI::App* cmd, cnetdst::cli::RunConfig& config) {
  cmd->add_option("--corpus", config.corpus_root, "Corpus root directory");
  cmd->add_option("--split", config.split, "Corpus split (train|dev|test)");
  cmd->add_option("--synthetic", config.synthetic,
                  "In-memory synthetic corpus preset (tiny|small|medium)");
  cmd->add_option("--synth-seed", config.synth_seed,
                  "Seed for synthetic corpus generation");
}

void add_prune_flags(CLI::App* cmd, cnetdst::cli::RunConfig& config) {
  cmd->add_option("--prune-threshold", config.prune_threshold,
                  "Posterior threshold for cnet pruning")
      ->check(CLI::Range(0.0, 0.999999));
  cmd->add_flag("--no-prune", config.no_prune,
                "Disable score pruning (interjections are still removed from "
                "the pruned stats view)");
  cmd->add_option("--interjections", config.interjection_file,
                  "Interjection list file, one token per line");
  cmd->add_flag("--renormalize-scores", config.renormalize_scores,
                "Renormalize surviving posteriors after pruning");
}

void add_model_flags(CLI::App* cmd, cnetdst::cli::RunConfig& config,
                     bool* dims_set) {
  cmd->add_option("--embed-dim", config.embed_dim, "Embedding size")
      ->each([dims_set](const std::string&) { *dims_set = true; });
  cmd->add_option("--dense-units", config.dense_dim, "Dense ReLU layer size")
      ->each([dims_set](const std::string&) { *dims_set = true; });
  cmd->add_option("--gru-units", config.gru_dim, "GRU hidden size")
      ->each([dims_set](const std::string&) { *dims_set = true; });
  cmd->add_option("--combine-dim", config.combine_dim,
                  "System/user combination size")
      ->each([dims_set](const std::string&) { *dims_set = true; });
  cmd->add_option("--pool", config.pooling, "Pooling mode (average|weighted)")
      ->check(CLI::IsMember({"average", "weighted"}));
  cmd->add_flag("--renormalize-pooling", config.renormalize_pooling,
                "Divide weighted-pooling scores by their sum");
  cmd->add_option("--dropout", config.dropout, "Dropout rate on the dense output")
      ->check(CLI::Range(0.0, 0.999999));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confusion-network dialog state tracker"};
  app.require_subcommand(1);

  cnetdst::cli::RunConfig config;
  bool dims_set = false;

  CLI::App* stats = app.add_subcommand("stats", "Corpus coverage statistics "
                                                "for 1-best, cnet and pruned views");
  add_data_flags(stats, config);
  add_prune_flags(stats, config);

  CLI::App* train = app.add_subcommand(
      "train", "Train one model per head group per seed");
  add_data_flags(train, config);
  add_prune_flags(train, config);
  add_model_flags(train, config, &dims_set);
  train->add_option("--lr", config.learning_rate, "Adam learning rate");
  train->add_option("--l2", config.l2_lambda, "L2 regularization weight");
  train->add_option("--batch-dialogs", config.batch_dialogs,
                    "Dialogs per mini-batch")
      ->check(CLI::PositiveNumber);
  train->add_option("--epochs", config.epochs_override,
                    "Override the per-group epoch defaults (requests 20, "
                    "food 100, others 50)");
  train->add_option("--seeds", config.seeds, "Random seeds, one model set each")
      ->delimiter(',');
  train->add_option("--input", config.train_input,
                    "Noisy training view: cnet or onebest (baseline)")
      ->check(CLI::IsMember({"cnet", "onebest"}));
  train->add_option("--min-count", config.min_count,
                    "Minimum token count for the vocabulary");
  train->add_option("--embeddings", config.embeddings_file,
                    "Pretrained embedding text file (word v1 ... vE)");
  train->add_option("--out", config.out_dir, "Checkpoint output directory");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate joint goals/requests");
  add_data_flags(eval, config);
  add_prune_flags(eval, config);
  eval->add_option("--checkpoints", config.checkpoint_dir,
                   "Directory with model_<group>_seed<k>.ckpt files")
      ->required();
  eval->add_option("--seeds", config.seeds, "Seeds to evaluate")->delimiter(',');
  eval->add_option("--view", config.eval_view,
                   "Evaluation input: cnet, onebest or transcript")
      ->check(CLI::IsMember({"cnet", "onebest", "transcript"}));
  eval->add_flag("--ensemble", config.ensemble,
                 "Also report the prediction-averaging ensemble over seeds");

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference check of all parameter gradients");
  gradcheck->add_option("--fd-step", config.fd_step, "Finite-difference step");
  gradcheck->add_option("--seed", config.gradcheck_seed, "Model/dialog seed");
  gradcheck->add_option("--pool", config.pooling,
                        "Pooling mode (average|weighted)")
      ->check(CLI::IsMember({"average", "weighted"}));
  gradcheck
      ->add_flag("--corrupt-backward", config.corrupt_backward,
                 "Negative control: break one backward rule on purpose")
      ->group("");  // hidden

  CLI::App* gen = app.add_subcommand("gen-synth",
                                     "Write a synthetic corpus to disk");
  gen->add_option("--out", config.out_dir, "Corpus root directory")->required();
  gen->add_option("--split", config.split, "Split name to write");
  gen->add_option("--dialogs", config.gen_dialogs, "Number of dialogs");
  gen->add_option("--turns", config.gen_turns, "Turns per dialog");
  gen->add_option("--p-swap", config.p_swap,
                  "Probability the top hypothesis is a distractor");
  gen->add_option("--p-confuse", config.p_confuse,
                  "Probability a timestep gains distractors");
  gen->add_option("--p-interj", config.p_interj,
                  "Probability of an inserted interjection timestep");
  gen->add_option("--seed", config.synth_seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cnetdst::cli::kExitConfig;
  }

  // Desk-scale dimensions when running on a synthetic preset without
  // explicit sizes; full-scale defaults otherwise.
  if (!config.synthetic.empty() && !dims_set) {
    config.embed_dim = 32;
    config.dense_dim = 64;
    config.gru_dim = 32;
    config.combine_dim = 16;
  }

  if (stats->parsed()) config.command = "stats";
  if (train->parsed()) config.command = "train";
  if (eval->parsed()) config.command = "eval";
  if (gradcheck->parsed()) config.command = "gradcheck";
  if (gen->parsed()) config.command = "gen-synth";

  return cnetdst::cli::run(config);
}
