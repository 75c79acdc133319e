#include "metaseq/scan.hpp"

#include <algorithm>
#include <sstream>

namespace metaseq::scan {

namespace {

const std::string kTurn = "turn";
const std::string kOpposite = "opposite";
const std::string kAround = "around";
const std::string kTwice = "twice";
const std::string kThrice = "thrice";
const std::string kAnd = "and";
const std::string kAfter = "after";

}  // namespace

Grammar Grammar::canonical() {
  Grammar g;
  g.primitives = {"jump", "run", "walk", "look"};
  g.primitive_meanings = {"JUMP", "RUN", "WALK", "LOOK"};
  g.directions = {"left", "right"};
  g.direction_meanings = {"LTURN", "RTURN"};
  return g;
}

Grammar Grammar::augmented_primitives() {
  Grammar g = canonical();
  for (int i = 1; i <= 20; ++i) {
    g.primitives.push_back("Primitive" + std::to_string(i));
    g.primitive_meanings.push_back("Action" + std::to_string(i));
  }
  return g;
}

Grammar Grammar::augmented_directions() {
  Grammar g = canonical();
  g.directions = {"left", "right", "forward", "backward"};
  g.direction_meanings = {"LTURN", "RTURN", "FORWARD", "BACKWARD"};
  return g;
}

int Grammar::primitive_index(const std::string& word) const {
  for (std::size_t i = 0; i < primitives.size(); ++i)
    if (primitives[i] == word) return static_cast<int>(i);
  return -1;
}

int Grammar::direction_index(const std::string& word) const {
  for (std::size_t i = 0; i < directions.size(); ++i)
    if (directions[i] == word) return static_cast<int>(i);
  return -1;
}

namespace {

// Recursive-descent parser. The grammar is LL(2): every decision is made
// from the current token plus at most one lookahead.
class Parser {
 public:
  Parser(const Tokens& tokens, const Grammar& grammar)
      : toks_(tokens), g_(grammar) {}

  ParseTree run() {
    if (toks_.empty()) throw ParseError(0, "empty instruction");
    ParseTree tree;
    tree.left = clause();
    if (!done()) {
      const std::string& c = peek();
      if (c == kAnd) {
        tree.conj = Conj::And;
      } else if (c == kAfter) {
        tree.conj = Conj::After;
      } else {
        throw ParseError(pos_, "expected 'and', 'after' or end of instruction");
      }
      ++pos_;
      tree.right = clause();
      if (!done()) throw ParseError(pos_, "trailing tokens after second clause");
    }
    return tree;
  }

 private:
  bool done() const { return pos_ >= toks_.size(); }
  const std::string& peek(std::size_t ahead = 0) const {
    static const std::string kEnd;
    return pos_ + ahead < toks_.size() ? toks_[pos_ + ahead] : kEnd;
  }

  Clause clause() {
    Clause c;
    c.phrase = phrase();
    if (!done() && peek() == kTwice) {
      c.repeats = 2;
      ++pos_;
    } else if (!done() && peek() == kThrice) {
      c.repeats = 3;
      ++pos_;
    }
    return c;
  }

  int direction() {
    if (done()) throw ParseError(pos_, "expected a direction word");
    int d = g_.direction_index(peek());
    if (d < 0) throw ParseError(pos_, "expected a direction word");
    ++pos_;
    return d;
  }

  Phrase phrase() {
    Phrase p;
    if (done()) throw ParseError(pos_, "expected a phrase");
    if (peek() == kTurn) {
      ++pos_;
      if (peek() == kOpposite) {
        ++pos_;
        p.form = Phrase::Form::TurnOpposite;
        p.dir = direction();
      } else if (peek() == kAround) {
        ++pos_;
        p.form = Phrase::Form::TurnAround;
        p.dir = direction();
      } else {
        p.form = Phrase::Form::TurnDir;
        p.dir = direction();
      }
      return p;
    }
    int u = g_.primitive_index(peek());
    if (u < 0) throw ParseError(pos_, "expected a primitive or 'turn'");
    ++pos_;
    p.prim = u;
    if (!done() && peek() == kOpposite) {
      ++pos_;
      p.form = Phrase::Form::PrimOpposite;
      p.dir = direction();
    } else if (!done() && peek() == kAround) {
      ++pos_;
      p.form = Phrase::Form::PrimAround;
      p.dir = direction();
    } else if (!done() && g_.direction_index(peek()) >= 0) {
      p.form = Phrase::Form::PrimDir;
      p.dir = g_.direction_index(peek());
      ++pos_;
    } else {
      p.form = Phrase::Form::Primitive;
    }
    return p;
  }

  const Tokens& toks_;
  const Grammar& g_;
  std::size_t pos_ = 0;
};

void append_n(Tokens& out, const Tokens& part, int n) {
  for (int i = 0; i < n; ++i) out.insert(out.end(), part.begin(), part.end());
}

Tokens eval_phrase(const Phrase& p, const Grammar& g) {
  Tokens out;
  const auto turn = [&](int dir) { return g.direction_meanings.at(dir); };
  const auto act = [&](int prim) { return g.primitive_meanings.at(prim); };
  switch (p.form) {
    case Phrase::Form::Primitive:
      out = {act(p.prim)};
      break;
    case Phrase::Form::TurnDir:
      out = {turn(p.dir)};
      break;
    case Phrase::Form::PrimDir:
      out = {turn(p.dir), act(p.prim)};
      break;
    case Phrase::Form::TurnOpposite:
      out = {turn(p.dir), turn(p.dir)};
      break;
    case Phrase::Form::PrimOpposite:
      out = {turn(p.dir), turn(p.dir), act(p.prim)};
      break;
    case Phrase::Form::TurnAround:
      out = {turn(p.dir), turn(p.dir), turn(p.dir), turn(p.dir)};
      break;
    case Phrase::Form::PrimAround:
      append_n(out, {turn(p.dir), act(p.prim)}, 4);
      break;
  }
  return out;
}

Tokens eval_clause(const Clause& c, const Grammar& g) {
  Tokens part = eval_phrase(c.phrase, g);
  Tokens out;
  append_n(out, part, c.repeats);
  return out;
}

}  // namespace

ParseTree parse(const Tokens& tokens, const Grammar& grammar) {
  return Parser(tokens, grammar).run();
}

Tokens interpret(const ParseTree& tree, const Grammar& grammar) {
  Tokens left = eval_clause(tree.left, grammar);
  if (tree.conj == Conj::None) return left;
  Tokens right = eval_clause(tree.right, grammar);
  Tokens out;
  if (tree.conj == Conj::And) {
    out = std::move(left);
    out.insert(out.end(), right.begin(), right.end());
  } else {  // "x after y" performs y first
    out = std::move(right);
    out.insert(out.end(), left.begin(), left.end());
  }
  return out;
}

Tokens execute(const Tokens& tokens, const Grammar& grammar) {
  return interpret(parse(tokens, grammar), grammar);
}

namespace {

void render_clause(Tokens& out, const Clause& c, const Grammar& g) {
  const Phrase& p = c.phrase;
  switch (p.form) {
    case Phrase::Form::Primitive:
      out.push_back(g.primitives.at(p.prim));
      break;
    case Phrase::Form::PrimDir:
      out.insert(out.end(), {g.primitives.at(p.prim), g.directions.at(p.dir)});
      break;
    case Phrase::Form::TurnDir:
      out.insert(out.end(), {kTurn, g.directions.at(p.dir)});
      break;
    case Phrase::Form::PrimOpposite:
      out.insert(out.end(), {g.primitives.at(p.prim), kOpposite, g.directions.at(p.dir)});
      break;
    case Phrase::Form::TurnOpposite:
      out.insert(out.end(), {kTurn, kOpposite, g.directions.at(p.dir)});
      break;
    case Phrase::Form::PrimAround:
      out.insert(out.end(), {g.primitives.at(p.prim), kAround, g.directions.at(p.dir)});
      break;
    case Phrase::Form::TurnAround:
      out.insert(out.end(), {kTurn, kAround, g.directions.at(p.dir)});
      break;
  }
  if (c.repeats == 2) out.push_back(kTwice);
  if (c.repeats == 3) out.push_back(kThrice);
}

}  // namespace

Tokens render(const ParseTree& tree, const Grammar& grammar) {
  Tokens out;
  render_clause(out, tree.left, grammar);
  if (tree.conj != Conj::None) {
    out.push_back(tree.conj == Conj::And ? kAnd : kAfter);
    render_clause(out, tree.right, grammar);
  }
  return out;
}

namespace {

std::vector<Tokens> all_phrases(const Grammar& g) {
  std::vector<Tokens> vs;
  for (const auto& u : g.primitives) vs.push_back({u});
  for (const auto& u : g.primitives)
    for (const auto& d : g.directions) vs.push_back({u, d});
  for (const auto& d : g.directions) vs.push_back({kTurn, d});
  for (const auto& u : g.primitives)
    for (const auto& d : g.directions) vs.push_back({u, kOpposite, d});
  for (const auto& d : g.directions) vs.push_back({kTurn, kOpposite, d});
  for (const auto& u : g.primitives)
    for (const auto& d : g.directions) vs.push_back({u, kAround, d});
  for (const auto& d : g.directions) vs.push_back({kTurn, kAround, d});
  return vs;
}

}  // namespace

Corpus enumerate_corpus(const Grammar& grammar) {
  if (grammar.primitives.empty() || grammar.directions.size() != 2)
    throw std::invalid_argument(
        "enumeration expects >=1 primitive and exactly 2 directions");
  std::vector<Tokens> clauses;
  for (const auto& v : all_phrases(grammar)) {
    clauses.push_back(v);
    for (const auto& rep : {kTwice, kThrice}) {
      Tokens t = v;
      t.push_back(rep);
      clauses.push_back(t);
    }
  }
  std::vector<Tokens> instructions;
  instructions.reserve(clauses.size() * (1 + 2 * clauses.size()));
  for (const auto& s : clauses) instructions.push_back(s);
  for (const auto& conj : {kAnd, kAfter}) {
    for (const auto& a : clauses) {
      for (const auto& b : clauses) {
        Tokens t = a;
        t.push_back(conj);
        t.insert(t.end(), b.begin(), b.end());
        instructions.push_back(t);
      }
    }
  }
  std::sort(instructions.begin(), instructions.end());
  Corpus corpus;
  corpus.reserve(instructions.size());
  for (auto& t : instructions) {
    Tokens out = execute(t, grammar);
    corpus.push_back({std::move(t), std::move(out)});
  }
  return corpus;
}

SplitSpec SplitSpec::from_name(const std::string& name) {
  if (name == "add-jump") return {Kind::AddJump};
  if (name == "around-right") return {Kind::AroundRight};
  if (name == "length") return {Kind::Length};
  throw UnknownSplit(name);
}

std::string SplitSpec::name() const {
  switch (kind) {
    case Kind::AddJump: return "add-jump";
    case Kind::AroundRight: return "around-right";
    case Kind::Length: return "length";
  }
  return {};
}

namespace {

bool contains_token(const Tokens& toks, const std::string& word) {
  return std::find(toks.begin(), toks.end(), word) != toks.end();
}

bool contains_bigram(const Tokens& toks, const std::string& a, const std::string& b) {
  for (std::size_t i = 0; i + 1 < toks.size(); ++i)
    if (toks[i] == a && toks[i + 1] == b) return true;
  return false;
}

}  // namespace

Split make_split(const Corpus& corpus, const SplitSpec& spec) {
  Split split;
  for (const auto& pair : corpus) {
    bool test = false;
    switch (spec.kind) {
      case SplitSpec::Kind::AddJump:
        // Composed jump instructions are held out; bare "jump" is the one
        // demonstration left in training.
        test = contains_token(pair.input, "jump") && pair.input.size() > 1;
        break;
      case SplitSpec::Kind::AroundRight:
        test = contains_bigram(pair.input, kAround, "right");
        break;
      case SplitSpec::Kind::Length:
        test = static_cast<int>(pair.output.size()) >= spec.length_test_min;
        break;
    }
    if (spec.kind == SplitSpec::Kind::Length && !test &&
        static_cast<int>(pair.output.size()) > spec.length_train_max)
      continue;  // lengths strictly between the bands (none exist canonically)
    (test ? split.test : split.train).push_back(pair);
  }
  return split;
}

Pair remap(const Pair& pair, const Assignment& assignment, const Grammar& grammar) {
  ParseTree tree = parse(pair.input, grammar);
  Grammar local = grammar;
  const auto subst_prim = [&](int idx) {
    if (idx < 0) return;
    const std::string& word = grammar.primitives.at(idx);
    auto it = assignment.primitive_map.find(word);
    if (it == assignment.primitive_map.end()) throw UnmappedSymbol(word);
    local.primitive_meanings[idx] = it->second;
  };
  const auto subst_dir = [&](int idx) {
    if (idx < 0 || assignment.direction_map.empty()) return;
    const std::string& word = grammar.directions.at(idx);
    auto it = assignment.direction_map.find(word);
    if (it == assignment.direction_map.end()) throw UnmappedSymbol(word);
    local.direction_meanings[idx] = it->second;
  };
  subst_prim(tree.left.phrase.prim);
  subst_dir(tree.left.phrase.dir);
  if (tree.conj != Conj::None) {
    subst_prim(tree.right.phrase.prim);
    subst_dir(tree.right.phrase.dir);
  }
  return {pair.input, interpret(tree, local)};
}

std::string join(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Tokens split_words(const std::string& line) {
  Tokens out;
  std::istringstream in(line);
  std::string w;
  while (in >> w) out.push_back(std::move(w));
  return out;
}

std::string format_pair(const Pair& pair) {
  return "IN: " + join(pair.input) + " OUT: " + join(pair.output);
}

std::optional<Pair> parse_pair_line(const std::string& line) {
  auto in_pos = line.find("IN:");
  auto out_pos = line.find(" OUT:");
  if (in_pos != 0 || out_pos == std::string::npos) return std::nullopt;
  Pair p;
  p.input = split_words(line.substr(3, out_pos - 3));
  p.output = split_words(line.substr(out_pos + 5));
  if (p.input.empty() || p.output.empty()) return std::nullopt;
  return p;
}

}  // namespace metaseq::scan
