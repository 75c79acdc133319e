#pragma once

#include <random>
#include <string>
#include <vector>

#include "metaseq/graph.hpp"

// Recurrent encoder/decoder machinery on top of the autodiff graph. Batched
// passes pack variable-length sequences by sorting them longest-first and
// shrinking the active row prefix as shorter sequences end, so no step ever
// touches a padded position.
namespace metaseq::nn {

using num::Var;

template <class S>
struct DropoutOpt {
  double p = 0.0;  // 0 disables (eval mode)
  std::mt19937_64* rng = nullptr;

  Var apply(num::GraphT<S>& g, Var v) const {
    return p > 0 ? g.dropout(v, p, *rng) : v;
  }
};

template <class S>
struct LstmWeights {
  num::ParamEntry<S>* w_in = nullptr;   // (input_dim x 4H)
  num::ParamEntry<S>* w_rec = nullptr;  // (H x 4H)
  num::ParamEntry<S>* bias = nullptr;   // (1 x 4H)
  int hidden = 0;
};

template <class S>
LstmWeights<S> make_lstm(num::ParamStoreT<S>& store, const std::string& prefix,
                         int input_dim, int hidden, std::mt19937_64& rng);

// One step of the standard LSTM cell on a row batch; gate order i, f, g, o.
template <class S>
std::pair<Var, Var> lstm_cell(num::GraphT<S>& g, Var x, Var h_prev, Var c_prev,
                              const LstmWeights<S>& w);

// Scaled dot-product attention over a key/value memory: one row of `mixed`
// per query row, `attention` holds the softmax weights.
template <class S>
struct MemoryReadout {
  Var mixed;
  Var attention;
};

template <class S>
MemoryReadout<S> attend(num::GraphT<S>& g, Var queries, Var keys, Var values,
                        int scale_dim);

// Stepwise context rows: tanh of an affine map over [h_row; m_row].
template <class S>
Var context_rows(num::GraphT<S>& g, Var h, Var m, num::ParamEntry<S>& w,
                 num::ParamEntry<S>& b);

// Multi-layer bidirectional LSTM encoder over token-id sequences. Direction
// states are concatenated (2H) and projected to H by one learned affine map,
// shared between the stepwise rows and the sequence-final embedding (forward
// last state with backward first-position state).
template <class S>
class BiLstmEncoderT {
 public:
  BiLstmEncoderT() = default;
  BiLstmEncoderT(num::ParamStoreT<S>& store, const std::string& prefix,
                 num::ParamEntry<S>* embedding, int hidden, int layers,
                 std::mt19937_64& rng);

  struct Encoded {
    Var finals = -1;            // (n x H), original sequence order
    std::vector<Var> stepwise;  // per sequence (len x H); filled on request
  };

  Encoded encode(num::GraphT<S>& g, const std::vector<std::vector<int>>& seqs,
                 bool need_stepwise, const DropoutOpt<S>& dropout) const;

  // Same pass over an already-embedded single sequence (rows = steps).
  Encoded encode_embedded(num::GraphT<S>& g, Var embedded,
                          const DropoutOpt<S>& dropout) const;

  num::ParamEntry<S>* embedding() const { return embed_; }
  int hidden() const { return hidden_; }

 private:
  struct Pass;  // packed batch bookkeeping

  Encoded run(num::GraphT<S>& g, Var embedded_flat,
              const std::vector<int>& lengths_sorted,
              const std::vector<int>& order, bool need_stepwise,
              const DropoutOpt<S>& dropout) const;

  int hidden_ = 0;
  int layers_ = 0;
  num::ParamEntry<S>* embed_ = nullptr;
  std::vector<LstmWeights<S>> fwd_, bwd_;
  num::ParamEntry<S>* proj_w_ = nullptr;
  num::ParamEntry<S>* proj_b_ = nullptr;
};

// Two-layer LSTM decoder with optional Luong-style attention over each
// sequence's context matrix. Both layers start from the final context row;
// cell states start at zero.
template <class S>
class AttnDecoderT {
 public:
  AttnDecoderT() = default;
  AttnDecoderT(num::ParamStoreT<S>& store, const std::string& prefix,
               num::ParamEntry<S>* out_embedding, int out_vocab, int hidden,
               int layers, bool use_attention, std::mt19937_64& rng);

  // Teacher-forced sum of -log p over all target symbols (EOS included);
  // `contexts` holds one (T_i x H) matrix per sequence. Returns the 1x1 sum
  // node and reports the symbol count for averaging.
  Var teacher_loss_sum(num::GraphT<S>& g, const std::vector<Var>& contexts,
                       const std::vector<std::vector<int>>& targets, int sos_id,
                       int eos_id, const DropoutOpt<S>& dropout,
                       long* symbol_count) const;

  struct Greedy {
    std::vector<std::vector<int>> outputs;  // without the terminating EOS
    std::vector<bool> overflow;             // hit max_len without EOS
    // per sequence, per emitted step: attention weights over context rows
    std::vector<std::vector<std::vector<double>>> attention;
  };

  Greedy greedy(num::GraphT<S>& g, const std::vector<Var>& contexts, int sos_id,
                int eos_id, int max_len, bool want_attention) const;

  bool uses_attention() const { return attention_; }

 private:
  struct Bound;  // per-graph parameter bindings

  int hidden_ = 0;
  int layers_ = 0;
  bool attention_ = true;
  num::ParamEntry<S>* out_embed_ = nullptr;
  std::vector<LstmWeights<S>> lstm_;
  num::ParamEntry<S>* comb_w_ = nullptr;  // attention combine (2H x H)
  num::ParamEntry<S>* comb_b_ = nullptr;
  num::ParamEntry<S>* out_w_ = nullptr;  // (H x V)
  num::ParamEntry<S>* out_b_ = nullptr;
};

}  // namespace metaseq::nn
