#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

// The SCAN instruction language: a small command grammar mapping phrases
// like "jump around right twice" to action-symbol sequences. Grammars are
// parameterized over the primitive and direction vocabulary so the same
// machinery serves the canonical language and its augmented variants.
namespace metaseq::scan {

using Tokens = std::vector<std::string>;

struct Pair {
  Tokens input;
  Tokens output;
  bool operator==(const Pair&) const = default;
};

using Corpus = std::vector<Pair>;

// Raised when a token sequence falls outside the grammar. `position` is the
// 0-based index of the offending token (== tokens.size() when the input
// ended where more tokens were required).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t position, const std::string& what)
      : std::runtime_error(what), position(position) {}
  std::size_t position;
};

class UnknownSplit : public std::runtime_error {
 public:
  explicit UnknownSplit(const std::string& name)
      : std::runtime_error("unknown split: " + name) {}
};

class UnmappedSymbol : public std::runtime_error {
 public:
  explicit UnmappedSymbol(const std::string& sym)
      : std::runtime_error("symbol not covered by assignment: " + sym) {}
};

// Word lists plus their meanings. `primitives[i]` executes as
// `primitive_meanings[i]`; `directions[i]` turns via `direction_meanings[i]`.
struct Grammar {
  std::vector<std::string> primitives;
  std::vector<std::string> directions;
  std::vector<std::string> primitive_meanings;
  std::vector<std::string> direction_meanings;

  // jump/run/walk/look over left/right, upper-case action symbols.
  static Grammar canonical();
  // Canonical plus Primitive1..Primitive20 -> Action1..Action20.
  static Grammar augmented_primitives();
  // Canonical plus forward/backward -> FORWARD/BACKWARD.
  static Grammar augmented_directions();

  int primitive_index(const std::string& word) const;
  int direction_index(const std::string& word) const;
};

// Phrase-level parse result (the V family of the grammar).
struct Phrase {
  enum class Form {
    Primitive,      // u
    PrimDir,        // u dir
    TurnDir,        // turn dir
    PrimOpposite,   // u opposite dir
    TurnOpposite,   // turn opposite dir
    PrimAround,     // u around dir
    TurnAround,     // turn around dir
  };
  Form form;
  int prim = -1;  // index into grammar.primitives, -1 for turn forms
  int dir = -1;   // index into grammar.directions, -1 for bare primitives
};

struct Clause {
  Phrase phrase;
  int repeats = 1;  // 1, 2 (twice) or 3 (thrice)
};

enum class Conj { None, And, After };

struct ParseTree {
  Clause left;
  Conj conj = Conj::None;
  Clause right;  // meaningful only when conj != None
};

// Unique derivation of `tokens` under `grammar`; throws ParseError otherwise.
ParseTree parse(const Tokens& tokens, const Grammar& grammar);

// Compositional semantics of a parsed instruction. Total on parse output.
Tokens interpret(const ParseTree& tree, const Grammar& grammar);

// Surface form of a parse tree; inverse of parse.
Tokens render(const ParseTree& tree, const Grammar& grammar);

// parse + interpret in one go.
Tokens execute(const Tokens& tokens, const Grammar& grammar);

// Every instruction derivable from the grammar with its interpretation,
// duplicate-free, ordered lexicographically by input tokens. Requires
// exactly two directions (the per-instruction-family budget).
Corpus enumerate_corpus(const Grammar& grammar);

struct SplitSpec {
  enum class Kind { AddJump, AroundRight, Length };
  Kind kind;
  int length_train_max = 22;  // length split: train has output length <= this
  int length_test_min = 24;   // and test has output length >= this

  static SplitSpec from_name(const std::string& name);  // throws UnknownSplit
  std::string name() const;
};

struct Split {
  Corpus train;
  Corpus test;
};

Split make_split(const Corpus& corpus, const SplitSpec& spec);

// Word -> meaning substitution. Primitive words used by an instruction must
// all be covered; directions fall back to the grammar's own meanings when
// absent from `direction_map`.
struct Assignment {
  std::unordered_map<std::string, std::string> primitive_map;
  std::unordered_map<std::string, std::string> direction_map;
};

// Instruction tokens unchanged; output recomputed under the assignment.
Pair remap(const Pair& pair, const Assignment& assignment, const Grammar& grammar);

std::string join(const Tokens& tokens);
Tokens split_words(const std::string& line);

// One pair per line: "IN: <instruction> OUT: <actions>".
std::string format_pair(const Pair& pair);
std::optional<Pair> parse_pair_line(const std::string& line);

}  // namespace metaseq::scan
