#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "metaseq/episodes.hpp"
#include "metaseq/nn.hpp"

// The meta sequence-to-sequence learner: a seq2seq backbone whose encoder
// messages are infused with context retrieved from a key-value memory over
// the episode's support pairs, plus the comparison variants with one
// mechanism removed.
namespace metaseq::model {

enum class Variant { Full, NoSupportLoss, NoDecoderAttention, StandardSeq2Seq };

Variant variant_from_name(const std::string& name);
const std::string& variant_name(Variant v);
const std::vector<std::string>& variant_names();

class VocabMismatch : public std::runtime_error {
 public:
  explicit VocabMismatch(const std::string& sym)
      : std::runtime_error("symbol outside the model vocabulary: " + sym) {}
};

class EmptySupport : public std::runtime_error {
 public:
  EmptySupport() : std::runtime_error("episode has no support items") {}
};

class DecodeOverflow : public std::runtime_error {
 public:
  DecodeOverflow() : std::runtime_error("decode reached max length without EOS") {}
};

struct ModelConfig {
  int hidden = 200;
  int layers = 2;
  double dropout = 0.5;
  Variant variant = Variant::Full;
  int max_decode_len = 60;  // above the longest canonical program (48)
  episodes::Vocabulary vocab;
  std::string experiment;
};

struct SymbolTable {
  std::vector<std::string> symbols;
  std::unordered_map<std::string, int> index;

  static SymbolTable build(const std::vector<std::string>& base,
                           const std::vector<std::string>& specials);
  int id(const std::string& symbol) const;  // throws VocabMismatch
  int size() const { return static_cast<int>(symbols.size()); }
};

// Attention record for one decoded query: rows of the key-value memory
// attention (one per encoder step) and the decoder attention row emitted at
// each output step.
struct QueryTrace {
  std::vector<std::string> query_tokens;               // with <EOS>
  std::vector<std::vector<double>> memory_attention;   // T x n_s
  std::vector<std::vector<double>> decoder_attention;  // steps x T
  std::vector<std::string> predicted;
};

template <class S>
class ModelT {
 public:
  ModelT(const ModelConfig& config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  num::ParamStoreT<S>& params() { return store_; }
  const num::ParamStoreT<S>& params() const { return store_; }

  const SymbolTable& input_table() const { return in_table_; }
  const SymbolTable& output_table() const { return out_table_; }
  int sos_id() const { return sos_id_; }
  int eos_id() const { return eos_id_; }

  // Teacher-forced mean NLL per output symbol over the episode's queries,
  // with the support pairs folded in as extra queries when requested.
  struct LossResult {
    num::Var loss = -1;
    long symbols = 0;
  };
  LossResult episode_loss(num::GraphT<S>& g, const episodes::Episode& episode,
                          bool include_support_loss, std::mt19937_64& dropout_rng);

  // Greedy decode of the episode queries in eval mode (no dropout). Queries
  // are processed in chunks against the same support memory.
  struct Decoded {
    std::vector<std::vector<std::string>> outputs;
    std::vector<bool> overflow;
    std::vector<QueryTrace> traces;  // filled when want_trace
  };
  Decoded decode(const episodes::Episode& episode, bool want_trace = false,
                 int chunk_size = 256);

 private:
  struct QueryContexts {
    std::vector<num::Var> contexts;        // per query-role sequence
    std::vector<num::Var> memory_weights;  // per query-role sequence
  };
  // Encodes support + queries and applies the memory to produce each query's
  // stepwise context matrix.
  QueryContexts build_contexts(num::GraphT<S>& g,
                               const std::vector<std::vector<int>>& support_in,
                               const std::vector<std::vector<int>>& support_out,
                               const std::vector<std::vector<int>>& queries,
                               const nn::DropoutOpt<S>& dropout);

  std::vector<int> input_ids(const scan::Tokens& tokens) const;   // appends EOS
  std::vector<int> output_ids(const scan::Tokens& tokens) const;  // no EOS
  std::vector<int> output_ids_with_eos(const scan::Tokens& tokens) const;

  ModelConfig config_;
  SymbolTable in_table_, out_table_;
  int sos_id_ = -1, eos_id_ = -1, in_eos_id_ = -1;
  num::ParamStoreT<S> store_;
  num::ParamEntry<S>* in_embed_ = nullptr;
  num::ParamEntry<S>* out_embed_ = nullptr;  // shared: value encoder + decoder
  nn::BiLstmEncoderT<S> input_encoder_;
  nn::BiLstmEncoderT<S> output_encoder_;  // absent for StandardSeq2Seq
  num::ParamEntry<S>* ctx_w_ = nullptr;
  num::ParamEntry<S>* ctx_b_ = nullptr;
  nn::AttnDecoderT<S> decoder_;
};

using ModelF = ModelT<float>;
using ModelD = ModelT<double>;

}  // namespace metaseq::model
