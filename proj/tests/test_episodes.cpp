#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "metaseq/episodes.hpp"

using namespace metaseq;
using episodes::Episode;

namespace {

const scan::Corpus& corpus() {
  static const scan::Corpus c = scan::enumerate_corpus(scan::Grammar::canonical());
  return c;
}

std::map<std::string, std::string> parse_assignment(const std::string& desc) {
  std::map<std::string, std::string> out;
  for (const auto& part : scan::split_words(desc)) {
    auto arrow = part.find("->");
    REQUIRE(arrow != std::string::npos);
    out[part.substr(0, arrow)] = part.substr(arrow + 2);
  }
  return out;
}

void check_vocab_coverage(const Episode& e) {
  std::set<std::string> in(e.input_vocab.begin(), e.input_vocab.end());
  std::set<std::string> out(e.output_vocab.begin(), e.output_vocab.end());
  for (const auto* pairs : {&e.support, &e.query}) {
    for (const auto& p : *pairs) {
      for (const auto& t : p.input) CHECK(in.count(t) == 1);
      for (const auto& t : p.output) CHECK(out.count(t) == 1);
    }
  }
}

}  // namespace

TEST_CASE("me permutation pool is a deterministic 19/5 partition") {
  auto pool = episodes::split_me_permutations(99);
  CHECK(pool.train.size() == 19);
  CHECK(pool.test.size() == 5);

  std::set<std::array<int, 4>> all(pool.train.begin(), pool.train.end());
  for (const auto& p : pool.test) CHECK(all.insert(p).second);
  CHECK(all.size() == 24);

  auto again = episodes::split_me_permutations(99);
  CHECK(again.train == pool.train);
  CHECK(again.test == pool.test);

  const std::array<int, 4> identity = {0, 1, 2, 3};
  const bool in_train = std::count(pool.train.begin(), pool.train.end(), identity) > 0;
  const bool in_test = std::count(pool.test.begin(), pool.test.end(), identity) > 0;
  CHECK(in_train != in_test);
}

TEST_CASE("me episodes withhold one mapping and translate symbol-wise") {
  std::mt19937_64 rng(3);
  const std::array<int, 4> perm = {3, 2, 0, 1};  // dax->blue wif->green lug->red zup->yellow
  for (int trial = 0; trial < 50; ++trial) {
    Episode e = episodes::gen_me_episode(perm, rng);
    CHECK(e.support.size() == 3);
    CHECK(e.query.size() == 20);
    check_vocab_coverage(e);

    std::set<std::string> supported;
    for (const auto& s : e.support) {
      REQUIRE(s.input.size() == 1);
      REQUIRE(s.output.size() == 1);
      supported.insert(s.input[0]);
    }
    CHECK(supported.size() == 3);

    std::string withheld;
    for (const auto& w : episodes::me_pseudowords())
      if (!supported.count(w)) withheld = w;
    REQUIRE(!withheld.empty());

    bool saw_withheld = false;
    for (const auto& q : e.query) {
      REQUIRE(q.input.size() == q.output.size());
      CHECK(q.input.size() >= 2);
      CHECK(q.input.size() <= 6);
      for (std::size_t i = 0; i < q.input.size(); ++i) {
        if (q.input[i] == withheld) saw_withheld = true;
        int sym = -1;
        for (int s = 0; s < 4; ++s)
          if (episodes::me_pseudowords()[s] == q.input[i]) sym = s;
        REQUIRE(sym >= 0);
        CHECK(q.output[i] == episodes::me_colors()[perm[sym]]);
      }
    }
    CHECK(saw_withheld);
  }
}

TEST_CASE("me query lengths are uniform over 2..6") {
  std::mt19937_64 rng(17);
  const std::array<int, 4> perm = {1, 0, 3, 2};
  std::map<std::size_t, int> counts;
  int total = 0;
  while (total < 10000) {
    Episode e = episodes::gen_me_episode(perm, rng);
    for (const auto& q : e.query) {
      ++counts[q.input.size()];
      ++total;
    }
  }
  for (std::size_t len = 2; len <= 6; ++len) {
    const double frac = static_cast<double>(counts[len]) / total;
    CHECK(frac > 0.18);
    CHECK(frac < 0.22);
  }
}

TEST_CASE("permutation episodes never use the original assignment") {
  std::mt19937_64 rng(5);
  std::map<std::string, int> perm_counts;
  for (int i = 0; i < 100000; ++i) {
    Episode e = episodes::gen_perm_episode(corpus(), rng);
    auto a = parse_assignment(e.assignment);
    bool identity = a["jump"] == "JUMP" && a["run"] == "RUN" &&
                    a["walk"] == "WALK" && a["look"] == "LOOK";
    if (identity) FAIL("identity permutation generated: ", e.assignment);
    if (i < 23000) ++perm_counts[e.assignment];
  }
  // Uniform over the 23 admissible permutations: 23,000 draws put each count
  // near 1,000 (binomial sd ~31).
  CHECK(perm_counts.size() == 23);
  for (const auto& [desc, n] : perm_counts) {
    CHECK(n > 850);
    CHECK(n < 1150);
  }
}

TEST_CASE("permutation episode structure") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; ++i) {
    Episode e = episodes::gen_perm_episode(corpus(), rng);
    CHECK(e.support.size() == 20);
    CHECK(e.query.size() == 20);
    check_vocab_coverage(e);

    std::set<scan::Tokens> inputs;
    for (const auto* pairs : {&e.support, &e.query})
      for (const auto& p : *pairs) CHECK(inputs.insert(p.input).second);

    // Remapped outputs match re-interpretation under the assignment.
    auto a = parse_assignment(e.assignment);
    scan::Assignment assign;
    for (const auto& [k, v] : a) assign.primitive_map[k] = v;
    for (const auto& p : e.query)
      CHECK(scan::remap({p.input, {}}, assign, scan::Grammar::canonical()).output ==
            p.output);
  }
}

TEST_CASE("augmentation episodes never assign jump to JUMP") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100000; ++i) {
    Episode e = episodes::gen_aug_episode(corpus(), rng);
    auto a = parse_assignment(e.assignment);
    CHECK(a.size() == 4);
    auto it = a.find("jump");
    if (it != a.end()) CHECK(it->second != "JUMP");
  }
}

TEST_CASE("augmentation episode structure and remap cross-check") {
  std::mt19937_64 rng(29);
  const scan::Grammar aug = scan::Grammar::augmented_primitives();
  for (int i = 0; i < 20; ++i) {
    Episode e = episodes::gen_aug_episode(corpus(), rng);
    CHECK(e.support.size() == 20);
    CHECK(e.query.size() == 20);
    check_vocab_coverage(e);
    for (const auto* pairs : {&e.support, &e.query})
      for (const auto& p : *pairs)
        if (p.input == scan::Tokens{"jump"}) CHECK(p.output != scan::Tokens{"JUMP"});

    scan::Assignment assign;
    for (const auto& [k, v] : parse_assignment(e.assignment)) assign.primitive_map[k] = v;
    for (const auto& p : e.support)
      CHECK(scan::remap({p.input, {}}, assign, aug).output == p.output);
  }
}

TEST_CASE("augmentation rejection rate matches the analytic value") {
  // A proposal is rejected when jump is among the 4 sampled primitives
  // (4/24), JUMP among the 4 sampled actions (4/24), and the uniform
  // bijection pairs them (1/4): p = 1/6 * 1/6 * 1/4 = 1/144.
  std::mt19937_64 rng(31);
  const int proposals = 200000;
  int forbidden = 0;
  for (int i = 0; i < proposals; ++i) {
    auto prim_idx = episodes::sample_distinct(24, 4, rng);
    auto act_idx = episodes::sample_distinct(24, 4, rng);
    for (int j = 0; j < 4; ++j)
      if (prim_idx[j] == 0 && act_idx[j] == 0) ++forbidden;  // index 0 = jump/JUMP
  }
  const double rate = static_cast<double>(forbidden) / proposals;
  CHECK(rate > 0.8 / 144.0);
  CHECK(rate < 1.2 / 144.0);
}

TEST_CASE("direction episodes never assign right to RTURN") {
  std::mt19937_64 rng(37);
  for (int i = 0; i < 100000; ++i) {
    Episode e = episodes::gen_dir_episode(corpus(), rng);
    auto a = parse_assignment(e.assignment);
    CHECK(a.size() == 2);
    auto it = a.find("right");
    if (it != a.end()) CHECK(it->second != "RTURN");
  }
}

TEST_CASE("direction episode structure and remap cross-check") {
  std::mt19937_64 rng(41);
  const scan::Grammar dirs = scan::Grammar::augmented_directions();
  for (int i = 0; i < 20; ++i) {
    Episode e = episodes::gen_dir_episode(corpus(), rng);
    CHECK(e.support.size() == 20);
    CHECK(e.query.size() == 20);
    check_vocab_coverage(e);
    for (const auto* pairs : {&e.support, &e.query})
      for (const auto& p : *pairs)
        if (p.input == scan::Tokens{"turn", "right"})
          CHECK(p.output != scan::Tokens{"RTURN"});

    scan::Assignment assign;
    for (const auto& [k, v] : parse_assignment(e.assignment)) assign.direction_map[k] = v;
    for (std::size_t j = 0; j < dirs.primitives.size(); ++j)
      assign.primitive_map[dirs.primitives[j]] = dirs.primitive_meanings[j];
    for (const auto& p : e.query)
      CHECK(scan::remap({p.input, {}}, assign, dirs).output == p.output);
  }
}

TEST_CASE("length episodes draw support and queries from disjoint bands") {
  std::mt19937_64 rng(43);
  for (int i = 0; i < 10; ++i) {
    Episode e = episodes::gen_length_episode(corpus(), rng);
    CHECK(e.support.size() == 100);
    CHECK(e.query.size() == 20);
    check_vocab_coverage(e);
    for (const auto& p : e.support) CHECK(p.output.size() <= 11);
    for (const auto& p : e.query) {
      CHECK(p.output.size() >= 12);
      CHECK(p.output.size() <= 22);
    }
  }

  auto test_source = episodes::make_test_source("length", 1);
  for (int i = 0; i < 5; ++i) {
    Episode e = test_source->next();
    CHECK(e.support.size() == 100);
    CHECK(e.query.size() == 20);
    for (const auto& p : e.support) CHECK(p.output.size() <= 22);
    for (const auto& p : e.query) {
      CHECK(p.output.size() >= 24);
      CHECK(p.output.size() <= 28);
    }
  }
}

TEST_CASE("fixed test episodes match the experiment definitions") {
  Episode jump = episodes::test_episode("add-jump-perm");
  CHECK(jump.support.size() == 4);
  CHECK(jump.query.size() == 7706);
  for (const auto& s : jump.support) {
    CHECK(s.input.size() == 1);
    CHECK(scan::execute(s.input, scan::Grammar::canonical()) == s.output);
  }

  Episode around = episodes::test_episode("around-right");
  REQUIRE(around.support.size() == 2);
  CHECK(around.support[0].input == scan::Tokens{"turn", "left"});
  CHECK(around.support[0].output == scan::Tokens{"LTURN"});
  CHECK(around.support[1].input == scan::Tokens{"turn", "right"});
  CHECK(around.support[1].output == scan::Tokens{"RTURN"});
  CHECK(around.query.size() == 5685);

  CHECK_THROWS(episodes::test_episode("me"));
}

TEST_CASE("me test episodes use only held-out permutations") {
  auto pool = episodes::split_me_permutations(episodes::kMePoolSeed);
  std::set<std::string> test_assignments;
  for (const auto& perm : pool.test) {
    std::string desc;
    for (int i = 0; i < 4; ++i) {
      if (i) desc += ' ';
      desc += std::string(episodes::me_pseudowords()[i]) + "->" +
              episodes::me_colors()[perm[i]];
    }
    test_assignments.insert(desc);
  }
  auto source = episodes::make_test_source("me", 77);
  for (int i = 0; i < 100; ++i)
    CHECK(test_assignments.count(source->next().assignment) == 1);
}

TEST_CASE("sources are deterministic per seed") {
  for (const auto& name : episodes::experiment_names()) {
    auto a = episodes::make_train_source(name, 123);
    auto b = episodes::make_train_source(name, 123);
    auto c = episodes::make_train_source(name, 124);
    bool any_difference = false;
    for (int i = 0; i < 3; ++i) {
      Episode ea = a->next();
      Episode eb = b->next();
      Episode ec = c->next();
      CHECK(ea.support == eb.support);
      CHECK(ea.query == eb.query);
      CHECK(ea.assignment == eb.assignment);
      if (ea.query != ec.query) any_difference = true;
    }
    CHECK(any_difference);
  }
}

TEST_CASE("episode dump format round-trips") {
  auto source = episodes::make_train_source("add-jump-perm", 9);
  Episode e = source->next();
  std::string text = episodes::format_episode(e);
  Episode back = episodes::parse_episode(text);
  CHECK(back.support == e.support);
  CHECK(back.query == e.query);
  CHECK(back.experiment == e.experiment);
  CHECK(back.assignment == e.assignment);
  CHECK(back.input_vocab == e.input_vocab);
}
