#include "metaseq/episodes.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace metaseq::episodes {

namespace {

const std::array<std::string, 4> kPseudowords = {"dax", "wif", "lug", "zup"};
const std::array<std::string, 4> kColors = {"red", "yellow", "green", "blue"};

const std::vector<std::string> kExperiments = {
    "me", "add-jump-perm", "add-jump-aug", "around-right", "length"};

constexpr int kSupportCount = 20;
constexpr int kQueryCount = 20;
constexpr int kMeQueryCount = 20;
constexpr int kLengthSupportCount = 100;
constexpr int kLengthSupportMax = 11;   // support pool: fewer than 12 actions
constexpr int kLengthQueryMin = 12;     // query pool: 12..22 actions
constexpr int kLengthQueryMax = 22;

std::vector<std::array<int, 4>> all_permutations_of_4() {
  std::array<int, 4> p = {0, 1, 2, 3};
  std::vector<std::array<int, 4>> out;
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

bool is_identity(const std::array<int, 4>& p) {
  for (int i = 0; i < 4; ++i)
    if (p[i] != i) return false;
  return true;
}

std::size_t uniform_index(std::size_t n, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Token-level substitution. Valid because SCAN semantics are symbol-local:
// swapping a primitive word and its meaning consistently yields exactly the
// corpus of the substituted grammar (cross-checked against scan::remap in
// the test suite).
struct TokenMap {
  std::unordered_map<std::string, std::string> input;
  std::unordered_map<std::string, std::string> output;

  scan::Pair apply(const scan::Pair& p) const {
    scan::Pair out = p;
    for (auto& t : out.input) {
      auto it = input.find(t);
      if (it != input.end()) t = it->second;
    }
    for (auto& t : out.output) {
      auto it = output.find(t);
      if (it != output.end()) t = it->second;
    }
    return out;
  }
};

std::string describe(const std::vector<std::pair<std::string, std::string>>& m) {
  std::string out;
  for (const auto& [k, v] : m) {
    if (!out.empty()) out += ' ';
    out += k + "->" + v;
  }
  return out;
}

const scan::Corpus& canonical_corpus() {
  static const scan::Corpus corpus = scan::enumerate_corpus(scan::Grammar::canonical());
  return corpus;
}

std::vector<scan::Pair> collect(const scan::Corpus& corpus,
                                const std::vector<std::size_t>& idx,
                                std::size_t begin, std::size_t end,
                                const TokenMap& map) {
  std::vector<scan::Pair> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(map.apply(corpus[idx[i]]));
  return out;
}

class MeTrainSource : public EpisodeSource {
 public:
  MeTrainSource(std::uint64_t seed)
      : perms_(split_me_permutations(kMePoolSeed).train), rng_(seed) {}
  Episode next() override {
    const auto& perm = perms_[uniform_index(perms_.size(), rng_)];
    return gen_me_episode(perm, rng_);
  }

 private:
  std::vector<std::array<int, 4>> perms_;
  std::mt19937_64 rng_;
};

class MeTestSource : public EpisodeSource {
 public:
  MeTestSource(std::uint64_t seed)
      : perms_(split_me_permutations(kMePoolSeed).test), rng_(seed) {}
  Episode next() override {
    const auto& perm = perms_[uniform_index(perms_.size(), rng_)];
    return gen_me_episode(perm, rng_);
  }

 private:
  std::vector<std::array<int, 4>> perms_;
  std::mt19937_64 rng_;
};

class CorpusEpisodeSource : public EpisodeSource {
 public:
  CorpusEpisodeSource(std::uint64_t seed, Episode (*gen)(const scan::Corpus&, std::mt19937_64&))
      : rng_(seed), gen_(gen) {}
  Episode next() override { return gen_(canonical_corpus(), rng_); }

 private:
  std::mt19937_64 rng_;
  Episode (*gen_)(const scan::Corpus&, std::mt19937_64&);
};

class FixedEpisodeSource : public EpisodeSource {
 public:
  explicit FixedEpisodeSource(Episode e) : episode_(std::move(e)) {}
  Episode next() override { return episode_; }

 private:
  Episode episode_;
};

class LengthTestSource : public EpisodeSource {
 public:
  explicit LengthTestSource(std::uint64_t seed) : rng_(seed) {
    auto split = scan::make_split(canonical_corpus(), scan::SplitSpec::from_name("length"));
    train_ = std::move(split.train);
    test_ = std::move(split.test);
  }
  Episode next() override {
    Episode e;
    e.experiment = "length";
    e.assignment = "canonical";
    auto vocab = experiment_vocab("length");
    e.input_vocab = vocab.input;
    e.output_vocab = vocab.output;
    for (auto i : sample_distinct(train_.size(), kLengthSupportCount, rng_))
      e.support.push_back(train_[i]);
    for (auto i : sample_distinct(test_.size(), kQueryCount, rng_))
      e.query.push_back(test_[i]);
    return e;
  }

 private:
  scan::Corpus train_, test_;
  std::mt19937_64 rng_;
};

}  // namespace

const std::array<std::string, 4>& me_pseudowords() { return kPseudowords; }
const std::array<std::string, 4>& me_colors() { return kColors; }
const std::vector<std::string>& experiment_names() { return kExperiments; }

Vocabulary experiment_vocab(const std::string& experiment) {
  if (experiment == "me")
    return {{kPseudowords.begin(), kPseudowords.end()},
            {kColors.begin(), kColors.end()}};

  Vocabulary v;
  v.input = {"jump", "run",  "walk",     "look",  "turn",   "left", "right",
             "around", "opposite", "twice", "thrice", "and",  "after"};
  v.output = {"JUMP", "RUN", "WALK", "LOOK", "LTURN", "RTURN"};
  if (experiment == "add-jump-perm") return v;
  if (experiment == "add-jump-aug" || experiment == "length") {
    for (int i = 1; i <= 20; ++i) {
      v.input.push_back("Primitive" + std::to_string(i));
      v.output.push_back("Action" + std::to_string(i));
    }
    return v;
  }
  if (experiment == "around-right") {
    v.input.insert(v.input.end(), {"forward", "backward"});
    v.output.insert(v.output.end(), {"FORWARD", "BACKWARD"});
    return v;
  }
  throw std::invalid_argument("unknown experiment: " + experiment);
}

PermutationPool split_me_permutations(std::uint64_t seed) {
  auto perms = all_permutations_of_4();
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(perms.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[uniform_index(i, rng)]);
  PermutationPool pool;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < 19 ? pool.train : pool.test).push_back(perms[order[i]]);
  return pool;
}

std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t k,
                                         std::mt19937_64& rng) {
  if (k > n) throw std::invalid_argument("sample_distinct: k > n");
  // Floyd's sampling, then an explicit Fisher-Yates shuffle so the result is
  // identical across standard libraries.
  std::vector<std::size_t> picked;
  picked.reserve(k);
  for (std::size_t j = n - k; j < n; ++j) {
    std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    if (std::find(picked.begin(), picked.end(), t) != picked.end())
      picked.push_back(j);
    else
      picked.push_back(t);
  }
  for (std::size_t i = picked.size(); i > 1; --i)
    std::swap(picked[i - 1], picked[uniform_index(i, rng)]);
  return picked;
}

Episode gen_me_episode(const std::array<int, 4>& perm, std::mt19937_64& rng) {
  Episode e;
  e.experiment = "me";
  e.input_vocab = {kPseudowords.begin(), kPseudowords.end()};
  e.output_vocab = {kColors.begin(), kColors.end()};
  {
    std::vector<std::pair<std::string, std::string>> desc;
    for (int i = 0; i < 4; ++i) desc.emplace_back(kPseudowords[i], kColors[perm[i]]);
    e.assignment = describe(desc);
  }

  const int withheld = static_cast<int>(uniform_index(4, rng));
  for (int i = 0; i < 4; ++i) {
    if (i == withheld) continue;
    e.support.push_back({{kPseudowords[i]}, {kColors[perm[i]]}});
  }

  std::uniform_int_distribution<int> len_dist(2, 6);
  while (true) {
    e.query.clear();
    bool saw_withheld = false;
    for (int q = 0; q < kMeQueryCount; ++q) {
      scan::Pair p;
      const int len = len_dist(rng);
      for (int t = 0; t < len; ++t) {
        const int sym = static_cast<int>(uniform_index(4, rng));
        if (sym == withheld) saw_withheld = true;
        p.input.push_back(kPseudowords[sym]);
        p.output.push_back(kColors[perm[sym]]);
      }
      e.query.push_back(std::move(p));
    }
    if (saw_withheld) break;  // the withheld mapping must be probed
  }
  return e;
}

Episode gen_perm_episode(const scan::Corpus& corpus, std::mt19937_64& rng) {
  static const auto non_identity = [] {
    auto perms = all_permutations_of_4();
    std::erase_if(perms, is_identity);
    return perms;
  }();
  const auto& perm = non_identity[uniform_index(non_identity.size(), rng)];

  const scan::Grammar g = scan::Grammar::canonical();
  TokenMap map;
  std::vector<std::pair<std::string, std::string>> desc;
  for (int i = 0; i < 4; ++i) {
    map.output[g.primitive_meanings[i]] = g.primitive_meanings[perm[i]];
    desc.emplace_back(g.primitives[i], g.primitive_meanings[perm[i]]);
  }

  Episode e;
  e.experiment = "add-jump-perm";
  e.assignment = describe(desc);
  auto vocab = experiment_vocab(e.experiment);
  e.input_vocab = vocab.input;
  e.output_vocab = vocab.output;
  auto idx = sample_distinct(corpus.size(), kSupportCount + kQueryCount, rng);
  e.support = collect(corpus, idx, 0, kSupportCount, map);
  e.query = collect(corpus, idx, kSupportCount, idx.size(), map);
  return e;
}

namespace {

// Shared by the augmentation and length experiments: a fresh mapping from 4
// sampled input primitives (of 24) to 4 sampled actions (of 24), never
// assigning "jump" to "JUMP".
TokenMap sample_primitive_augmentation(std::mt19937_64& rng, std::string* desc_out) {
  const scan::Grammar aug = scan::Grammar::augmented_primitives();
  const scan::Grammar g = scan::Grammar::canonical();
  while (true) {
    auto prim_idx = sample_distinct(aug.primitives.size(), 4, rng);
    auto act_idx = sample_distinct(aug.primitive_meanings.size(), 4, rng);
    bool forbidden = false;
    for (int i = 0; i < 4; ++i)
      if (aug.primitives[prim_idx[i]] == "jump" &&
          aug.primitive_meanings[act_idx[i]] == "JUMP")
        forbidden = true;
    if (forbidden) continue;

    TokenMap map;
    std::vector<std::pair<std::string, std::string>> desc;
    for (int i = 0; i < 4; ++i) {
      map.input[g.primitives[i]] = aug.primitives[prim_idx[i]];
      map.output[g.primitive_meanings[i]] = aug.primitive_meanings[act_idx[i]];
      desc.emplace_back(aug.primitives[prim_idx[i]], aug.primitive_meanings[act_idx[i]]);
    }
    if (desc_out) *desc_out = describe(desc);
    return map;
  }
}

}  // namespace

Episode gen_aug_episode(const scan::Corpus& corpus, std::mt19937_64& rng) {
  Episode e;
  e.experiment = "add-jump-aug";
  TokenMap map = sample_primitive_augmentation(rng, &e.assignment);
  auto vocab = experiment_vocab(e.experiment);
  e.input_vocab = vocab.input;
  e.output_vocab = vocab.output;
  auto idx = sample_distinct(corpus.size(), kSupportCount + kQueryCount, rng);
  e.support = collect(corpus, idx, 0, kSupportCount, map);
  e.query = collect(corpus, idx, kSupportCount, idx.size(), map);
  return e;
}

Episode gen_dir_episode(const scan::Corpus& corpus, std::mt19937_64& rng) {
  const scan::Grammar dirs = scan::Grammar::augmented_directions();
  const scan::Grammar g = scan::Grammar::canonical();

  TokenMap map;
  std::string assignment;
  while (true) {
    auto word_idx = sample_distinct(dirs.directions.size(), 2, rng);
    auto turn_idx = sample_distinct(dirs.direction_meanings.size(), 2, rng);
    bool forbidden = false;
    for (int i = 0; i < 2; ++i)
      if (dirs.directions[word_idx[i]] == "right" &&
          dirs.direction_meanings[turn_idx[i]] == "RTURN")
        forbidden = true;
    if (forbidden) continue;

    std::vector<std::pair<std::string, std::string>> desc;
    for (int i = 0; i < 2; ++i) {
      map.input[g.directions[i]] = dirs.directions[word_idx[i]];
      map.output[g.direction_meanings[i]] = dirs.direction_meanings[turn_idx[i]];
      desc.emplace_back(dirs.directions[word_idx[i]], dirs.direction_meanings[turn_idx[i]]);
    }
    assignment = describe(desc);
    break;
  }

  Episode e;
  e.experiment = "around-right";
  e.assignment = std::move(assignment);
  auto vocab = experiment_vocab(e.experiment);
  e.input_vocab = vocab.input;
  e.output_vocab = vocab.output;
  auto idx = sample_distinct(corpus.size(), kSupportCount + kQueryCount, rng);
  e.support = collect(corpus, idx, 0, kSupportCount, map);
  e.query = collect(corpus, idx, kSupportCount, idx.size(), map);
  return e;
}

Episode gen_length_episode(const scan::Corpus& corpus, std::mt19937_64& rng) {
  static const auto pools = [] {
    std::pair<scan::Corpus, scan::Corpus> p;
    for (const auto& pair : canonical_corpus()) {
      const int len = static_cast<int>(pair.output.size());
      if (len <= kLengthSupportMax)
        p.first.push_back(pair);
      else if (len >= kLengthQueryMin && len <= kLengthQueryMax)
        p.second.push_back(pair);
    }
    return p;
  }();
  (void)corpus;

  Episode e;
  e.experiment = "length";
  TokenMap map = sample_primitive_augmentation(rng, &e.assignment);
  auto vocab = experiment_vocab(e.experiment);
  e.input_vocab = vocab.input;
  e.output_vocab = vocab.output;
  for (auto i : sample_distinct(pools.first.size(), kLengthSupportCount, rng))
    e.support.push_back(map.apply(pools.first[i]));
  for (auto i : sample_distinct(pools.second.size(), kQueryCount, rng))
    e.query.push_back(map.apply(pools.second[i]));
  return e;
}

Episode test_episode(const std::string& experiment) {
  const scan::Grammar g = scan::Grammar::canonical();
  Episode e;
  e.experiment = experiment;
  e.assignment = "canonical";
  auto vocab = experiment_vocab(experiment);
  e.input_vocab = vocab.input;
  e.output_vocab = vocab.output;
  if (experiment == "add-jump-perm" || experiment == "add-jump-aug") {
    for (std::size_t i = 0; i < g.primitives.size(); ++i)
      e.support.push_back({{g.primitives[i]}, {g.primitive_meanings[i]}});
    e.query = scan::make_split(canonical_corpus(),
                               scan::SplitSpec::from_name("add-jump")).test;
    return e;
  }
  if (experiment == "around-right") {
    e.support.push_back({{"turn", "left"}, {"LTURN"}});
    e.support.push_back({{"turn", "right"}, {"RTURN"}});
    e.query = scan::make_split(canonical_corpus(),
                               scan::SplitSpec::from_name("around-right")).test;
    return e;
  }
  throw std::invalid_argument("no fixed test episode for: " + experiment);
}

std::unique_ptr<EpisodeSource> make_train_source(const std::string& experiment,
                                                 std::uint64_t seed) {
  if (experiment == "me") return std::make_unique<MeTrainSource>(seed);
  if (experiment == "add-jump-perm")
    return std::make_unique<CorpusEpisodeSource>(seed, gen_perm_episode);
  if (experiment == "add-jump-aug")
    return std::make_unique<CorpusEpisodeSource>(seed, gen_aug_episode);
  if (experiment == "around-right")
    return std::make_unique<CorpusEpisodeSource>(seed, gen_dir_episode);
  if (experiment == "length")
    return std::make_unique<CorpusEpisodeSource>(seed, gen_length_episode);
  throw std::invalid_argument("unknown experiment: " + experiment);
}

std::unique_ptr<EpisodeSource> make_test_source(const std::string& experiment,
                                                std::uint64_t seed) {
  if (experiment == "me") return std::make_unique<MeTestSource>(seed);
  if (experiment == "length") return std::make_unique<LengthTestSource>(seed);
  return std::make_unique<FixedEpisodeSource>(test_episode(experiment));
}

std::string format_episode(const Episode& episode) {
  std::ostringstream out;
  out << "# experiment=" << episode.experiment << '\n';
  out << "# assignment=" << episode.assignment << '\n';
  out << "SUPPORT\n";
  for (const auto& p : episode.support) out << scan::format_pair(p) << '\n';
  out << "QUERY\n";
  for (const auto& p : episode.query) out << scan::format_pair(p) << '\n';
  return out.str();
}

Episode parse_episode(const std::string& text) {
  Episode e;
  std::istringstream in(text);
  std::string line;
  std::vector<scan::Pair>* section = nullptr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# experiment=", 0) == 0) {
      e.experiment = line.substr(13);
      continue;
    }
    if (line.rfind("# assignment=", 0) == 0) {
      e.assignment = line.substr(13);
      continue;
    }
    if (line == "SUPPORT") {
      section = &e.support;
      continue;
    }
    if (line == "QUERY") {
      section = &e.query;
      continue;
    }
    auto pair = scan::parse_pair_line(line);
    if (!pair || !section) throw std::runtime_error("bad episode line: " + line);
    section->push_back(std::move(*pair));
  }
  // Vocabularies travel with the experiment, not the file.
  if (!e.experiment.empty()) {
    auto vocab = experiment_vocab(e.experiment);
    e.input_vocab = vocab.input;
    e.output_vocab = vocab.output;
  }
  return e;
}

}  // namespace metaseq::episodes
