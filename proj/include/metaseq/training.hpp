#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "metaseq/episodes.hpp"
#include "metaseq/graph.hpp"
#include "metaseq/model.hpp"

// Meta-training loop, standard seq2seq baseline training, exact-match
// evaluation, and the multi-seed experiment runner.
namespace metaseq::training {

struct TrainConfig {
  int episodes = 10000;
  double lr = 1e-3;
  double lr_low = 1e-4;  // takes over at the halfway episode
  double clip_norm = 50.0;
  bool support_loss = true;
  std::uint64_t seed = 1;
  int log_every = 100;
};

// 1-based schedule: lr before the halfway episode, lr_low at and after it.
double lr_for_episode(int episode, const TrainConfig& config);

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::uint64_t seed, int episode)
      : std::runtime_error("loss diverged (seed " + std::to_string(seed) +
                           ", episode " + std::to_string(episode) + ")"),
        seed(seed), episode(episode) {}
  std::uint64_t seed;
  int episode;
};

struct LossCurve {
  std::vector<std::pair<int, double>> points;  // (episode, loss)
};

// One gradient step per episode: forward teacher-forced, backward, clip,
// Adam update, with the learning rate dropping at the halfway episode.
template <class S>
LossCurve meta_train(model::ModelT<S>& model, episodes::EpisodeSource& source,
                     const TrainConfig& config, num::AdamT<S>& optimizer);

// Batch stream for the standard seq2seq baseline: "episodes" with an empty
// support set and batch_size query pairs. For the add-jump settings the bare
// jump demonstration is included in every batch.
std::unique_ptr<episodes::EpisodeSource> make_baseline_source(
    const std::string& experiment, std::uint64_t seed, int batch_size = 40);

struct EvalResult {
  double accuracy = 0;
  int correct = 0;
  int total = 0;
  int overflow_count = 0;
  std::vector<std::string> error_log;
};

// Greedy-decodes the episode queries and scores exact sequence matches.
// 0 < max_queries < n evaluates a uniformly sampled query subset.
template <class S>
EvalResult evaluate(model::ModelT<S>& model, const episodes::Episode& episode,
                    int max_queries = -1, std::uint64_t subsample_seed = 0);

// Accuracy aggregated over freshly drawn test episodes (me/length).
template <class S>
EvalResult evaluate_episodes(model::ModelT<S>& model,
                             episodes::EpisodeSource& source, int n_episodes);

enum class Scale { Desk, Paper };
Scale scale_from_name(const std::string& name);
const std::string& scale_name(Scale s);

struct RunConfig {
  std::string experiment;
  model::Variant variant = model::Variant::Full;
  Scale scale = Scale::Desk;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int hidden = 0;         // 0: scale default
  int episodes = 0;       // 0: scale default
  int eval_queries = 0;   // cap on test queries; 0: scale default (<=0: all)
  int eval_episodes = 0;  // for episodic tests; 0: scale default
  bool fp64 = false;
  int jobs = 1;
  std::string out_dir;  // empty: keep results in memory only
};

// The per-experiment hyperparameters behind --scale. The paper scale is the
// published configuration; the desk scale is a reduced configuration that
// runs on a CPU in minutes.
struct ResolvedConfig {
  model::ModelConfig model;
  TrainConfig train;
  int eval_queries = 0;
  int eval_episodes = 0;
};
ResolvedConfig resolve_config(const RunConfig& run);

struct SeedResult {
  std::uint64_t seed = 0;
  double accuracy = 0;
  double train_accuracy = -1;  // baseline runs only
  bool diverged = false;
  double seconds = 0;
  LossCurve curve;
};

struct ExperimentReport {
  RunConfig run;
  std::vector<SeedResult> seeds;
  double mean_accuracy = 0;
  double sd_accuracy = 0;
  bool any_diverged = false;
};

// Trains and evaluates every seed (optionally in parallel workers), writes
// artifacts when out_dir is set, and aggregates mean/SD.
ExperimentReport run_experiment(const RunConfig& run);

// Renders the summary rows for the published result tables (2: add-jump,
// 3: around-right/length). Cited comparison numbers are reproduced as
// static rows.
std::string render_table(int table, const std::vector<ExperimentReport>& reports);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace metaseq::training
