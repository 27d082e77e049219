#include "cnetdst/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "cnetdst/cnet.hpp"
#include "cnetdst/corpus.hpp"
#include "cnetdst/dst_model.hpp"
#include "cnetdst/gradcheck.hpp"
#include "cnetdst/synthetic.hpp"

namespace cnetdst::cli {

namespace fs = std::filesystem;
using corpus::Dialog;
using model::DstModel;
using model::PreparedDialog;
using model::TurnPrediction;
using model::UtteranceView;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_loss(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::size_t thread_cap(std::size_t jobs) {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CNET_DST_THREADS")) {
    try {
      const unsigned long v = std::stoul(env);
      if (v >= 1) cap = v;
    } catch (const std::exception&) {
      throw ConfigError("CNET_DST_THREADS must be a positive integer");
    }
  }
  return std::min(cap, std::max<std::size_t>(1, jobs));
}

// Fans the jobs out over worker threads; each job owns its outputs, so
// results are identical regardless of the thread count.
void run_jobs(std::size_t n_jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = thread_cap(n_jobs);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n_jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n_jobs) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

corpus::SyntheticConfig synthetic_preset(const std::string& name,
                                         const std::string& split,
                                         std::uint64_t seed) {
  corpus::SyntheticConfig cfg;
  if (name == "tiny") {
    cfg.n_dialogs = 6;
    cfg.turns_per_dialog = 3;
    cfg.p_confuse = 0.3;
    cfg.p_swap = 0.15;
    cfg.p_interj = 0.1;
  } else if (name == "small") {
    cfg.n_dialogs = 20;
    cfg.turns_per_dialog = 4;
    cfg.p_confuse = 0.3;
    cfg.p_swap = 0.1;
    cfg.p_interj = 0.1;
  } else if (name == "medium") {
    cfg.n_dialogs = 48;
    cfg.turns_per_dialog = 5;
    cfg.p_confuse = 0.3;
    cfg.p_swap = 0.3;
    cfg.p_interj = 0.15;
  } else {
    throw ConfigError("unknown synthetic preset: " + name +
                      " (expected tiny|small|medium)");
  }
  // Distinct but reproducible draws per split.
  cfg.seed = seed ^ fnv1a(split);
  return cfg;
}

struct LoadedData {
  Ontology ontology;
  std::vector<Dialog> dialogs;
};

LoadedData load_data(const RunConfig& config, const std::string& split) {
  LoadedData data;
  if (!config.synthetic.empty()) {
    data.ontology = corpus::synthetic_ontology();
    data.dialogs = corpus::generate_synthetic(
        synthetic_preset(config.synthetic, split, config.synth_seed));
  } else if (config.corpus_root.empty()) {
    throw ConfigError("either --corpus or --synthetic is required");
  } else {
    data.ontology = Ontology::load(
        (fs::path(config.corpus_root) / "ontology.json").string());
    data.dialogs =
        corpus::load_corpus(config.corpus_root, split, data.ontology);
  }
  std::size_t turns = 0;
  for (const Dialog& d : data.dialogs) turns += d.turns.size();
  *config.out << "corpus.v1 split=" << split << " dialogs=" << data.dialogs.size()
              << " turns=" << turns << "\n";
  return data;
}

std::set<std::string> interjections_for(const RunConfig& config) {
  if (config.interjection_file.empty()) return cnet::default_interjections();
  return cnet::load_interjections(config.interjection_file);
}

model::PrepareOptions prepare_options(const RunConfig& config,
                                      UtteranceView view) {
  model::PrepareOptions opts;
  opts.view = view;
  opts.prune_threshold = config.no_prune ? -1.0 : config.prune_threshold;
  opts.interjections = interjections_for(config);
  opts.renormalize_scores = config.renormalize_scores;
  return opts;
}

model::ModelConfig model_config(const RunConfig& config, std::uint64_t seed,
                                const std::string& group) {
  model::ModelConfig mc;
  mc.embed_dim = config.embed_dim;
  mc.dense_dim = config.dense_dim;
  mc.gru_dim = config.gru_dim;
  mc.combine_dim = config.combine_dim;
  mc.pooling.mode = encoder::parse_pooling_mode(config.pooling);
  mc.pooling.renormalize = config.renormalize_pooling;
  mc.dropout_rate = config.dropout;
  mc.seed = seed;
  mc.head_group = group;
  return mc;
}

std::string checkpoint_path(const std::string& dir, const std::string& group,
                            std::uint64_t seed) {
  return (fs::path(dir) /
          ("model_" + group + "_seed" + std::to_string(seed) + ".ckpt"))
      .string();
}

void print_coverage(std::ostream& out, const std::string& view,
                    const cnet::CoverageReport& report) {
  out << "stats.v1 view=" << view << " utterances=" << report.utterance_count
      << " all_words_pct=" << fmt(report.all_words_pct)
      << " slot_value_words_pct="
      << (report.slot_value_words_pct ? fmt(*report.slot_value_words_pct)
                                      : std::string("absent"))
      << " avg_timesteps=" << fmt(report.avg_timesteps)
      << " avg_k=" << fmt(report.avg_hypotheses_per_timestep) << "\n";
}

}  // namespace

int cmd_stats(const RunConfig& config) {
  const LoadedData data = load_data(config, config.split);
  const std::set<std::string> slot_words = data.ontology.slot_value_words();
  const std::set<std::string> interjections = interjections_for(config);

  std::vector<std::pair<std::vector<std::string>, cnet::ConfusionNetwork>>
      onebest_pairs, cnet_pairs, pruned_pairs;
  for (const Dialog& dialog : data.dialogs) {
    for (const corpus::DialogTurn& turn : dialog.turns) {
      if (turn.user_transcript.empty()) continue;
      const std::vector<std::string> best =
          cnet::one_best_tokens(turn.user_cnet);
      cnet::ConfusionNetwork best_net;
      if (!best.empty()) best_net = cnet::degenerate_cnet(best);
      onebest_pairs.emplace_back(turn.user_transcript, std::move(best_net));
      cnet_pairs.emplace_back(turn.user_transcript, turn.user_cnet);
      // With --no-prune the pruned view still drops interjections, just no
      // score threshold.
      pruned_pairs.emplace_back(
          turn.user_transcript,
          cnet::prune_cnet(turn.user_cnet, interjections,
                           config.no_prune ? 0.0 : config.prune_threshold,
                           config.renormalize_scores));
    }
  }
  print_coverage(*config.out, "onebest",
                 cnet::coverage_stats(onebest_pairs, slot_words));
  print_coverage(*config.out, "cnet",
                 cnet::coverage_stats(cnet_pairs, slot_words));
  print_coverage(*config.out, "pruned",
                 cnet::coverage_stats(pruned_pairs, slot_words));
  return kExitOk;
}

int cmd_train(const RunConfig& config) {
  if (config.seeds.empty()) throw ConfigError("train: --seeds must be non-empty");
  const LoadedData data = load_data(config, config.split);
  const corpus::ActWordMap act_map = corpus::ActWordMap::defaults();
  const Vocabulary vocab =
      corpus::build_vocab(data.dialogs, act_map, config.min_count);

  const std::vector<std::string> groups = model::head_groups(data.ontology);
  struct Job {
    std::uint64_t seed;
    std::string group;
    std::vector<std::string> loss_lines;
  };
  std::vector<Job> jobs;
  for (const std::uint64_t seed : config.seeds) {
    for (const std::string& group : groups) {
      jobs.push_back({seed, group, {}});
    }
  }

  const std::string out_dir =
      config.out_dir.empty() ? std::string(".") : config.out_dir;
  fs::create_directories(out_dir);

  run_jobs(jobs.size(), [&](std::size_t j) {
    Job& job = jobs[j];
    model::TrainConfig tc;
    tc.model = model_config(config, job.seed, job.group);
    tc.adam.learning_rate = config.learning_rate;
    tc.l2_lambda = config.l2_lambda;
    tc.batch_dialogs = config.batch_dialogs;
    tc.epochs = config.epochs_override >= 0
                    ? static_cast<std::size_t>(config.epochs_override)
                    : model::default_epochs_for_group(job.group);
    tc.noisy_view = config.train_input == "onebest" ? UtteranceView::kOneBest
                                                    : UtteranceView::kCnet;
    tc.prepare = prepare_options(config, tc.noisy_view);

    tc.embeddings_file = config.embeddings_file;

    model::TrainResult result =
        model::train_model(data.dialogs, data.ontology, vocab, act_map, tc);
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
      job.loss_lines.push_back(std::to_string(e + 1) + "," + job.group + "," +
                               std::to_string(job.seed) + "," +
                               fmt_loss(result.epoch_losses[e]));
    }
    model::save_checkpoint(result.model,
                           checkpoint_path(out_dir, job.group, job.seed));
  });

  std::string loss_log;
  for (const Job& job : jobs) {
    for (const std::string& line : job.loss_lines) {
      *config.out << line << "\n";
      loss_log += line + "\n";
    }
  }
  std::ofstream log_file(fs::path(out_dir) / "loss_log.csv");
  log_file << loss_log;
  *config.out << "train.v1 checkpoints=" << jobs.size() << " out=" << out_dir
              << "\n";
  return kExitOk;
}

namespace {

struct SeedSystem {
  std::uint64_t seed;
  std::vector<DstModel> models;  // one per head group
};

std::vector<TurnPrediction> system_predict(const SeedSystem& system,
                                           const PreparedDialog& dialog) {
  std::vector<const DstModel*> ptrs;
  ptrs.reserve(system.models.size());
  for (const DstModel& m : system.models) ptrs.push_back(&m);
  return model::predict_with_models(ptrs, dialog);
}

}  // namespace

int cmd_eval(const RunConfig& config) {
  if (config.seeds.empty()) throw ConfigError("eval: --seeds must be non-empty");
  const LoadedData data = load_data(config, config.split);
  const corpus::ActWordMap act_map = corpus::ActWordMap::defaults();
  const UtteranceView view = model::parse_view(config.eval_view);
  const std::vector<PreparedDialog> prepared =
      model::prepare_corpus(data.dialogs, act_map, prepare_options(config, view));

  const std::string ckpt_dir =
      config.checkpoint_dir.empty() ? config.out_dir : config.checkpoint_dir;
  const std::vector<std::string> groups = model::head_groups(data.ontology);

  std::vector<SeedSystem> systems;
  for (const std::uint64_t seed : config.seeds) {
    SeedSystem system;
    system.seed = seed;
    for (const std::string& group : groups) {
      const std::string path = checkpoint_path(ckpt_dir, group, seed);
      if (!fs::exists(path)) {
        throw DataError("missing checkpoint: " + path);
      }
      system.models.push_back(model::load_checkpoint(path, data.ontology));
    }
    systems.push_back(std::move(system));
  }

  std::vector<DialogState> gold;
  for (const PreparedDialog& dialog : prepared) {
    for (const model::PreparedTurn& turn : dialog.turns) gold.push_back(turn.gold);
  }

  std::vector<std::pair<double, double>> per_seed(systems.size());
  run_jobs(systems.size(), [&](std::size_t s) {
    std::vector<TurnPrediction> preds;
    for (const PreparedDialog& dialog : prepared) {
      std::vector<TurnPrediction> d = system_predict(systems[s], dialog);
      preds.insert(preds.end(), d.begin(), d.end());
    }
    per_seed[s] = model::joint_accuracy(preds, gold, data.ontology);
  });

  for (std::size_t s = 0; s < systems.size(); ++s) {
    *config.out << "metrics.v1 command=eval split=" << config.split
                << " view=" << config.eval_view << " seed=" << systems[s].seed
                << " joint_goals=" << fmt(per_seed[s].first)
                << " joint_requests=" << fmt(per_seed[s].second) << "\n";
  }

  auto agg = [&](auto select) {
    double sum = 0, lo = 1e300, hi = -1e300;
    for (const auto& p : per_seed) {
      const double v = select(p);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double avg = sum / static_cast<double>(per_seed.size());
    return std::array<double, 3>{avg, lo, hi};
  };
  const auto goals = agg([](const auto& p) { return p.first; });
  const auto requests = agg([](const auto& p) { return p.second; });
  *config.out << "metrics.v1 command=eval split=" << config.split
              << " view=" << config.eval_view
              << " seeds=" << per_seed.size()
              << " joint_goals_avg=" << fmt(goals[0])
              << " joint_goals_min=" << fmt(goals[1])
              << " joint_goals_max=" << fmt(goals[2])
              << " joint_requests_avg=" << fmt(requests[0])
              << " joint_requests_min=" << fmt(requests[1])
              << " joint_requests_max=" << fmt(requests[2]) << "\n";

  if (config.ensemble) {
    std::vector<TurnPrediction> preds;
    for (const PreparedDialog& dialog : prepared) {
      std::vector<std::vector<TurnPrediction>> group_preds;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        std::vector<const DstModel*> members;
        for (const SeedSystem& system : systems) {
          members.push_back(&system.models[g]);
        }
        group_preds.push_back(model::ensemble_predict(members, dialog));
      }
      for (std::size_t t = 0; t < dialog.turns.size(); ++t) {
        std::vector<const TurnPrediction*> parts;
        for (const auto& gp : group_preds) parts.push_back(&gp[t]);
        preds.push_back(model::merge_predictions(parts, data.ontology));
      }
    }
    const auto [jg, jr] = model::joint_accuracy(preds, gold, data.ontology);
    *config.out << "metrics.v1 command=eval split=" << config.split
                << " view=" << config.eval_view
                << " ensemble=" << per_seed.size()
                << " joint_goals=" << fmt(jg) << " joint_requests=" << fmt(jr)
                << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& config) {
  test_hooks::corrupt_tanh_backward = config.corrupt_backward;

  // Self-contained tiny model and a 2-turn dialog with k <= 3 hypotheses.
  const Ontology ontology = corpus::synthetic_ontology();
  corpus::SyntheticConfig synth;
  synth.n_dialogs = 2;
  synth.turns_per_dialog = 2;
  synth.seed = config.gradcheck_seed;
  const std::vector<Dialog> dialogs = corpus::generate_synthetic(synth);
  const corpus::ActWordMap act_map = corpus::ActWordMap::defaults();
  const Vocabulary vocab = corpus::build_vocab(dialogs, act_map, 1);

  model::ModelConfig mc;
  mc.embed_dim = 6;
  mc.dense_dim = 8;
  mc.gru_dim = 7;
  mc.combine_dim = 5;
  mc.pooling.mode = encoder::parse_pooling_mode(config.pooling);
  mc.pooling.renormalize = config.renormalize_pooling;
  mc.dropout_rate = 0.0;
  mc.seed = config.gradcheck_seed;
  mc.head_group = "all";

  // Random cnets with k <= 3 over vocabulary tokens.
  Rng rng(config.gradcheck_seed * 7919 + 11);
  PreparedDialog dialog;
  dialog.id = "gradcheck";
  for (int t = 0; t < 2; ++t) {
    model::PreparedTurn turn;
    turn.system_tokens = {"request", t == 0 ? "food" : "area"};
    cnet::ConfusionNetwork net;
    const std::size_t steps = 2 + rng.below(2);
    for (std::size_t s = 0; s < steps; ++s) {
      cnet::Timestep step;
      step.start = static_cast<double>(s);
      step.end = static_cast<double>(s + 1);
      const std::size_t k = 1 + rng.below(3);
      std::set<std::string> used;
      for (std::size_t i = 0; i < k; ++i) {
        std::string token = vocab.token(3 + rng.below(vocab.size() - 3));
        if (!used.insert(token).second) continue;
        step.hypotheses.push_back({token, -rng.uniform(0.0, 3.0)});
      }
      net.timesteps.push_back(std::move(step));
    }
    turn.user_input = std::move(net);
    turn.gold.goals = {{"area", t == 0 ? "none" : "north"},
                       {"food", "thai"},
                       {"pricerange", "none"}};
    if (t == 1) turn.gold.requests = {"phone"};
    dialog.turns.push_back(std::move(turn));
  }

  // Central differences are only a valid oracle away from the ReLU kink;
  // re-draw the parameters until every dense pre-activation clears the step.
  DstModel dst = DstModel::init(mc, ontology, vocab);
  for (std::uint64_t attempt = 1;
       model::min_relu_preactivation_gap(dst, dialog) < 4 * config.fd_step &&
       attempt <= 64;
       ++attempt) {
    mc.seed = config.gradcheck_seed + attempt;
    dst = DstModel::init(mc, ontology, vocab);
  }

  std::vector<NamedParam> params = dst.named_params();
  LossFn loss_fn = [&](std::vector<Tensor>* grads_out) {
    return model::corpus_loss({&dialog}, dst, 0.001, 1.0, false, nullptr,
                              grads_out);
  };
  const GradCheckReport report = grad_check(loss_fn, params, config.fd_step);

  for (const GradCheckGroup& group : report.groups) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3e", group.max_rel_error);
    *config.out << "gradcheck.v1 group=" << group.name
                << " max_rel_error=" << buf << "\n";
  }
  const bool pass = report.max_rel_error < 1e-4;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3e", report.max_rel_error);
  *config.out << "gradcheck.v1 overall max_rel_error=" << buf
              << " worst=" << report.worst_param
              << " threshold=1.000e-04 status=" << (pass ? "pass" : "fail")
              << "\n";
  test_hooks::corrupt_tanh_backward = false;
  if (!pass) {
    *config.err << "gradient check failed for parameter group "
                << report.worst_param << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_gen_synth(const RunConfig& config) {
  corpus::SyntheticConfig cfg;
  cfg.n_dialogs = config.gen_dialogs;
  cfg.turns_per_dialog = config.gen_turns;
  cfg.p_swap = config.p_swap;
  cfg.p_confuse = config.p_confuse;
  cfg.p_interj = config.p_interj;
  cfg.seed = config.synth_seed;
  const std::vector<Dialog> dialogs = corpus::generate_synthetic(cfg);
  const Ontology ontology = corpus::synthetic_ontology();
  if (config.out_dir.empty()) throw ConfigError("gen-synth: --out is required");
  corpus::write_corpus(config.out_dir, config.split, dialogs, ontology);
  std::size_t turns = 0;
  for (const Dialog& d : dialogs) turns += d.turns.size();
  *config.out << "gen.v1 split=" << config.split
              << " dialogs=" << dialogs.size() << " turns=" << turns
              << " out=" << config.out_dir << "\n";
  return kExitOk;
}

int run(const RunConfig& config) {
  try {
    if (config.command == "stats") return cmd_stats(config);
    if (config.command == "train") return cmd_train(config);
    if (config.command == "eval") return cmd_eval(config);
    if (config.command == "gradcheck") return cmd_gradcheck(config);
    if (config.command == "gen-synth") return cmd_gen_synth(config);
    throw ConfigError("unknown command: " + config.command);
  } catch (const ConfigError& e) {
    *config.err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    *config.err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    *config.err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const TrainError& e) {
    *config.err << "training error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace cnetdst::cli
