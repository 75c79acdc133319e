#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "metaseq/scan.hpp"

// Episode generators for the five experiments. Each meta-training episode is
// a self-contained seq2seq problem: support pairs that get loaded into the
// model's external memory plus query pairs the model must answer.
namespace metaseq::episodes {

struct Episode {
  std::vector<scan::Pair> support;
  std::vector<scan::Pair> query;
  std::vector<std::string> input_vocab;
  std::vector<std::string> output_vocab;
  std::string experiment;
  std::string assignment;  // printable word->meaning map used by this episode
};

struct Vocabulary {
  std::vector<std::string> input;
  std::vector<std::string> output;
};

// Experiment names: me, add-jump-perm, add-jump-aug, around-right, length.
Vocabulary experiment_vocab(const std::string& experiment);
const std::vector<std::string>& experiment_names();

// 19 permutations for meta-training, 5 held out for test, out of the 24
// mappings from the four pseudowords to the four colors.
struct PermutationPool {
  std::vector<std::array<int, 4>> train;
  std::vector<std::array<int, 4>> test;
};
PermutationPool split_me_permutations(std::uint64_t seed);

// Experiment-level pool seed, shared by train and test sources so they agree
// on which five permutations are held out.
inline constexpr std::uint64_t kMePoolSeed = 20910;

const std::array<std::string, 4>& me_pseudowords();
const std::array<std::string, 4>& me_colors();

// Support shows three of the four mappings; 20 queries of length 2..6 use
// all pseudowords including the withheld one.
Episode gen_me_episode(const std::array<int, 4>& perm, std::mt19937_64& rng);

class EpisodeSource {
 public:
  virtual ~EpisodeSource() = default;
  virtual Episode next() = 0;
};

// Meta-training stream for an experiment, deterministic per seed.
std::unique_ptr<EpisodeSource> make_train_source(const std::string& experiment,
                                                 std::uint64_t seed);

// Test-time episode stream. For add-jump and around-right this repeatedly
// yields the fixed-support episode holding the whole test split; for me and
// length it samples fresh held-out episodes.
std::unique_ptr<EpisodeSource> make_test_source(const std::string& experiment,
                                                std::uint64_t seed);

// Single draws used by the sources; exposed for direct testing.
Episode gen_perm_episode(const scan::Corpus& corpus, std::mt19937_64& rng);
Episode gen_aug_episode(const scan::Corpus& corpus, std::mt19937_64& rng);
Episode gen_dir_episode(const scan::Corpus& corpus, std::mt19937_64& rng);
Episode gen_length_episode(const scan::Corpus& corpus, std::mt19937_64& rng);

// Fixed-support test episodes (add-jump variants and around-right).
Episode test_episode(const std::string& experiment);

// k distinct values from [0, n), order randomized; deterministic per rng
// state on every platform.
std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t k,
                                         std::mt19937_64& rng);

// Episode dump: SUPPORT/QUERY sections in the IN:/OUT: pair format.
std::string format_episode(const Episode& episode);
Episode parse_episode(const std::string& text);

}  // namespace metaseq::episodes
