#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "metaseq/scan.hpp"

using namespace metaseq;
using scan::Tokens;

namespace {

Tokens toks(const std::string& s) { return scan::split_words(s); }

std::string run(const std::string& instruction) {
  return scan::join(scan::execute(toks(instruction), scan::Grammar::canonical()));
}

// The seven instruction/action rows everything else is pinned against.
const std::vector<std::pair<std::string, std::string>> kOracleRows = {
    {"jump", "JUMP"},
    {"jump left", "LTURN JUMP"},
    {"jump around right", "RTURN JUMP RTURN JUMP RTURN JUMP RTURN JUMP"},
    {"turn left twice", "LTURN LTURN"},
    {"jump thrice", "JUMP JUMP JUMP"},
    {"jump opposite left and walk thrice", "LTURN LTURN JUMP WALK WALK WALK"},
    {"jump opposite left after walk around left",
     "LTURN WALK LTURN WALK LTURN WALK LTURN WALK LTURN LTURN JUMP"},
};

// Closed-form corpus size: with p primitives and 2 directions there are
// 7p + 6 phrases, three repetition variants each, and conjunction pairs.
long expected_corpus_size(long p) {
  long clauses = 3 * (7 * p + 6);
  return clauses + 2 * clauses * clauses;
}

}  // namespace

TEST_CASE("interpreter reproduces the oracle rows") {
  for (const auto& [in, out] : kOracleRows) CHECK(run(in) == out);
}

TEST_CASE("single-token and simple derivations") {
  CHECK(run("walk") == "WALK");
  CHECK(run("turn right") == "RTURN");
  CHECK(run("turn around left") == "LTURN LTURN LTURN LTURN");
  CHECK(run("turn opposite right twice") == "RTURN RTURN RTURN RTURN");
  auto tree = scan::parse(toks("jump"), scan::Grammar::canonical());
  CHECK(tree.conj == scan::Conj::None);
  CHECK(tree.left.phrase.form == scan::Phrase::Form::Primitive);
  CHECK(tree.left.repeats == 1);
}

TEST_CASE("conjunction parse structure") {
  auto tree = scan::parse(toks("jump opposite left and walk thrice"),
                          scan::Grammar::canonical());
  CHECK(tree.conj == scan::Conj::And);
  CHECK(tree.left.phrase.form == scan::Phrase::Form::PrimOpposite);
  CHECK(tree.right.repeats == 3);
}

TEST_CASE("parse errors carry the offending position") {
  const scan::Grammar g = scan::Grammar::canonical();
  const auto pos_of = [&](const std::string& s) -> std::size_t {
    try {
      scan::parse(toks(s), g);
    } catch (const scan::ParseError& e) {
      return e.position;
    }
    return static_cast<std::size_t>(-1);
  };
  CHECK(pos_of("jump and") == 2);       // dangling conjunction
  CHECK(pos_of("jump jump") == 1);      // two phrases need a conjunction
  CHECK(pos_of("around left") == 0);    // modifier without a head
  CHECK(pos_of("jump opposite") == 2);  // missing direction
  CHECK(pos_of("walk twice thrice") == 2);
  CHECK(pos_of("turn forward") == 1);   // not a canonical direction
  CHECK_THROWS_AS(scan::parse({}, g), scan::ParseError);
}

TEST_CASE("augmented grammars parse the new vocabulary") {
  const scan::Grammar aug = scan::Grammar::augmented_primitives();
  CHECK(scan::join(scan::execute(toks("Primitive7 around left twice"), aug)) ==
        "LTURN Action7 LTURN Action7 LTURN Action7 LTURN Action7 "
        "LTURN Action7 LTURN Action7 LTURN Action7 LTURN Action7");
  const scan::Grammar dirs = scan::Grammar::augmented_directions();
  CHECK(scan::join(scan::execute(toks("walk opposite backward"), dirs)) ==
        "BACKWARD BACKWARD WALK");
}

TEST_CASE("corpus enumeration matches the frozen regression constants") {
  const auto corpus = scan::enumerate_corpus(scan::Grammar::canonical());
  CHECK(corpus.size() == 20910);
  CHECK(static_cast<long>(corpus.size()) == expected_corpus_size(4));

  std::set<Tokens> seen;
  std::size_t max_out = 0;
  for (const auto& p : corpus) {
    seen.insert(p.input);
    max_out = std::max(max_out, p.output.size());
  }
  CHECK(seen.size() == corpus.size());  // duplicate-free
  CHECK(max_out == 48);
  CHECK(std::is_sorted(corpus.begin(), corpus.end(),
                       [](const auto& a, const auto& b) { return a.input < b.input; }));
}

TEST_CASE("one-primitive grammar stays inside its vocabulary") {
  scan::Grammar g = scan::Grammar::canonical();
  g.primitives = {"walk"};
  g.primitive_meanings = {"WALK"};
  const auto corpus = scan::enumerate_corpus(g);
  CHECK(corpus.size() == expected_corpus_size(1));
  for (const auto& p : corpus)
    for (const auto& t : p.input)
      CHECK((t == "walk" || t == "turn" || t == "left" || t == "right" ||
             t == "around" || t == "opposite" || t == "twice" || t == "thrice" ||
             t == "and" || t == "after"));
}

TEST_CASE("splits partition the corpus with the frozen sizes") {
  const auto corpus = scan::enumerate_corpus(scan::Grammar::canonical());

  SUBCASE("add-jump") {
    auto s = scan::make_split(corpus, scan::SplitSpec::from_name("add-jump"));
    CHECK(s.train.size() == 13204);
    CHECK(s.test.size() == 7706);
    bool bare_jump_in_train = false;
    for (const auto& p : s.train) {
      if (p.input == Tokens{"jump"}) bare_jump_in_train = true;
      CHECK((p.input.size() == 1 ||
             std::find(p.input.begin(), p.input.end(), "jump") == p.input.end()));
    }
    CHECK(bare_jump_in_train);
    for (const auto& p : s.test) {
      CHECK(p.input.size() > 1);
      CHECK(std::find(p.input.begin(), p.input.end(), "jump") != p.input.end());
    }
  }

  SUBCASE("around-right") {
    auto s = scan::make_split(corpus, scan::SplitSpec::from_name("around-right"));
    CHECK(s.train.size() == 15225);
    CHECK(s.test.size() == 5685);
    const auto has_around_right = [](const scan::Pair& p) {
      for (std::size_t i = 0; i + 1 < p.input.size(); ++i)
        if (p.input[i] == "around" && p.input[i + 1] == "right") return true;
      return false;
    };
    const auto walk_around = [&](const char* dir) {
      return Tokens{"walk", "around", dir};
    };
    CHECK(std::any_of(s.test.begin(), s.test.end(),
                      [&](const auto& p) { return p.input == walk_around("right"); }));
    CHECK(std::any_of(s.train.begin(), s.train.end(),
                      [&](const auto& p) { return p.input == walk_around("left"); }));
    for (const auto& p : s.test) CHECK(has_around_right(p));
    for (const auto& p : s.train) CHECK(!has_around_right(p));
  }

  SUBCASE("length") {
    auto s = scan::make_split(corpus, scan::SplitSpec::from_name("length"));
    CHECK(s.train.size() == 16990);
    CHECK(s.test.size() == 3920);
    for (const auto& p : s.train) CHECK(p.output.size() <= 22);
    for (const auto& p : s.test) {
      CHECK(p.output.size() >= 24);
      CHECK(p.output.size() <= 28);
    }
  }

  SUBCASE("all splits partition exactly") {
    for (const char* name : {"add-jump", "around-right", "length"}) {
      auto s = scan::make_split(corpus, scan::SplitSpec::from_name(name));
      CHECK(s.train.size() + s.test.size() == corpus.size());
    }
  }

  CHECK_THROWS_AS(scan::SplitSpec::from_name("leftout"), scan::UnknownSplit);
}

TEST_CASE("conjunction and repetition properties hold across random pairs") {
  const scan::Grammar g = scan::Grammar::canonical();
  const auto corpus = scan::enumerate_corpus(g);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);

  for (int trial = 0; trial < 200; ++trial) {
    const auto& a = corpus[pick(rng)];
    const auto& b = corpus[pick(rng)];
    if (a.input.size() + b.input.size() > 9) continue;  // stay inside the grammar
    const bool a_simple = std::find(a.input.begin(), a.input.end(), "and") == a.input.end() &&
                          std::find(a.input.begin(), a.input.end(), "after") == a.input.end();
    const bool b_simple = std::find(b.input.begin(), b.input.end(), "and") == b.input.end() &&
                          std::find(b.input.begin(), b.input.end(), "after") == b.input.end();
    if (!a_simple || !b_simple) continue;

    Tokens and_in = a.input;
    and_in.push_back("and");
    and_in.insert(and_in.end(), b.input.begin(), b.input.end());
    Tokens and_out = a.output;
    and_out.insert(and_out.end(), b.output.begin(), b.output.end());
    CHECK(scan::execute(and_in, g) == and_out);

    Tokens after_in = a.input;
    after_in.push_back("after");
    after_in.insert(after_in.end(), b.input.begin(), b.input.end());
    Tokens after_out = b.output;
    after_out.insert(after_out.end(), a.output.begin(), a.output.end());
    CHECK(scan::execute(after_in, g) == after_out);

    if (a.input.size() <= 3) {  // phrase-level repetition
      Tokens twice = a.input;
      twice.push_back("twice");
      Tokens thrice = a.input;
      thrice.push_back("thrice");
      CHECK(scan::execute(twice, g).size() == 2 * a.output.size());
      CHECK(scan::execute(thrice, g).size() == 3 * a.output.size());
    }
  }
}

TEST_CASE("remap recomputes outputs under an assignment") {
  const scan::Grammar g = scan::Grammar::canonical();
  scan::Assignment to_jump;
  to_jump.primitive_map = {{"run", "JUMP"}};
  auto remapped = scan::remap({toks("run twice"), toks("RUN RUN")}, to_jump, g);
  CHECK(remapped.input == toks("run twice"));
  CHECK(remapped.output == toks("JUMP JUMP"));

  scan::Assignment identity;
  for (std::size_t i = 0; i < g.primitives.size(); ++i)
    identity.primitive_map[g.primitives[i]] = g.primitive_meanings[i];
  CHECK(scan::remap({toks("walk"), toks("WALK")}, identity, g) ==
        scan::Pair{toks("walk"), toks("WALK")});

  scan::Assignment dir_map;
  dir_map.primitive_map = {{"look", "Action3"}};
  dir_map.direction_map = {{"right", "BACKWARD"}};
  auto around = scan::remap({toks("look around right"), {}}, dir_map, g);
  CHECK(scan::join(around.output) ==
        "BACKWARD Action3 BACKWARD Action3 BACKWARD Action3 BACKWARD Action3");

  scan::Assignment partial;
  partial.primitive_map = {{"walk", "WALK"}};
  CHECK_THROWS_AS(scan::remap({toks("jump and walk"), {}}, partial, g),
                  scan::UnmappedSymbol);
}

TEST_CASE("remap commutes with interpretation under a permuted grammar") {
  const scan::Grammar g = scan::Grammar::canonical();
  const auto corpus = scan::enumerate_corpus(g);
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);

  std::vector<std::string> meanings = g.primitive_meanings;
  for (int trial = 0; trial < 50; ++trial) {
    std::shuffle(meanings.begin(), meanings.end(), rng);
    scan::Assignment a;
    scan::Grammar permuted = g;
    permuted.primitive_meanings = meanings;
    for (std::size_t i = 0; i < g.primitives.size(); ++i)
      a.primitive_map[g.primitives[i]] = meanings[i];
    const auto& pair = corpus[pick(rng)];
    CHECK(scan::remap(pair, a, g).output == scan::execute(pair.input, permuted));
  }
}

TEST_CASE("pair line format round-trips") {
  scan::Pair p{toks("jump around right"), toks("RTURN JUMP RTURN JUMP RTURN JUMP RTURN JUMP")};
  CHECK(scan::format_pair(p) ==
        "IN: jump around right OUT: RTURN JUMP RTURN JUMP RTURN JUMP RTURN JUMP");
  auto back = scan::parse_pair_line(scan::format_pair(p));
  REQUIRE(back.has_value());
  CHECK(*back == p);
  CHECK(!scan::parse_pair_line("OUT: nothing").has_value());
  CHECK(!scan::parse_pair_line("IN: jump OUT:").has_value());
}
