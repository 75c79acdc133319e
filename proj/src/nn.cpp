#include "metaseq/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace metaseq::nn {

using num::GraphT;
using num::ParamEntry;
using num::ParamStoreT;

template <class S>
LstmWeights<S> make_lstm(ParamStoreT<S>& store, const std::string& prefix,
                         int input_dim, int hidden, std::mt19937_64& rng) {
  using Init = typename ParamStoreT<S>::Init;
  LstmWeights<S> w;
  w.w_in = &store.add(prefix + ".w_in", input_dim, 4 * hidden, Init::Uniform, rng);
  w.w_rec = &store.add(prefix + ".w_rec", hidden, 4 * hidden, Init::Uniform, rng);
  w.bias = &store.add(prefix + ".bias", 1, 4 * hidden, Init::Zero, rng);
  w.hidden = hidden;
  return w;
}

namespace {

template <class S>
struct LstmVars {
  Var w_in, w_rec, bias;
  int hidden;
};

template <class S>
LstmVars<S> bind(GraphT<S>& g, const LstmWeights<S>& w) {
  return {g.param(*w.w_in), g.param(*w.w_rec), g.param(*w.bias), w.hidden};
}

template <class S>
std::pair<Var, Var> lstm_step(GraphT<S>& g, Var x, Var h_prev, Var c_prev,
                              const LstmVars<S>& w) {
  const int H = w.hidden;
  Var pre = g.add_rowvec(g.add(g.matmul(x, w.w_in), g.matmul(h_prev, w.w_rec)), w.bias);
  Var in_gate = g.sigmoid_(g.slice_cols(pre, 0, H));
  Var forget_gate = g.sigmoid_(g.slice_cols(pre, H, H));
  Var candidate = g.tanh_(g.slice_cols(pre, 2 * H, H));
  Var out_gate = g.sigmoid_(g.slice_cols(pre, 3 * H, H));
  Var cell = g.add(g.hadamard(forget_gate, c_prev), g.hadamard(in_gate, candidate));
  Var hidden = g.hadamard(out_gate, g.tanh_(cell));
  return {hidden, cell};
}

}  // namespace

template <class S>
std::pair<Var, Var> lstm_cell(GraphT<S>& g, Var x, Var h_prev, Var c_prev,
                              const LstmWeights<S>& w) {
  return lstm_step(g, x, h_prev, c_prev, bind(g, w));
}

template <class S>
MemoryReadout<S> attend(GraphT<S>& g, Var queries, Var keys, Var values,
                        int scale_dim) {
  Var scores = g.scale(g.matmul(queries, keys, false, true),
                       static_cast<S>(1.0 / std::sqrt(static_cast<double>(scale_dim))));
  Var weights = g.softmax_rows(scores);
  return {g.matmul(weights, values), weights};
}

template <class S>
Var context_rows(GraphT<S>& g, Var h, Var m, ParamEntry<S>& w, ParamEntry<S>& b) {
  return g.tanh_(g.add_rowvec(g.matmul(g.concat_cols(h, m), g.param(w)), g.param(b)));
}

// ---------------------------------------------------------------------------
// BiLSTM encoder

template <class S>
BiLstmEncoderT<S>::BiLstmEncoderT(ParamStoreT<S>& store, const std::string& prefix,
                                  ParamEntry<S>* embedding, int hidden, int layers,
                                  std::mt19937_64& rng)
    : hidden_(hidden), layers_(layers), embed_(embedding) {
  using Init = typename ParamStoreT<S>::Init;
  for (int l = 0; l < layers; ++l) {
    const int in_dim = l == 0 ? hidden : 2 * hidden;
    fwd_.push_back(make_lstm(store, prefix + ".fwd" + std::to_string(l), in_dim, hidden, rng));
    bwd_.push_back(make_lstm(store, prefix + ".bwd" + std::to_string(l), in_dim, hidden, rng));
  }
  proj_w_ = &store.add(prefix + ".proj_w", 2 * hidden, hidden, Init::Uniform, rng);
  proj_b_ = &store.add(prefix + ".proj_b", 1, hidden, Init::Zero, rng);
}

template <class S>
typename BiLstmEncoderT<S>::Encoded BiLstmEncoderT<S>::encode(
    GraphT<S>& g, const std::vector<std::vector<int>>& seqs, bool need_stepwise,
    const DropoutOpt<S>& dropout) const {
  const int n = static_cast<int>(seqs.size());
  if (n == 0) throw std::invalid_argument("encode: empty batch");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return seqs[a].size() > seqs[b].size();
  });
  std::vector<int> lengths(n);
  std::vector<int> flat;
  for (int si = 0; si < n; ++si) {
    const auto& s = seqs[order[si]];
    if (s.empty()) throw std::invalid_argument("encode: empty sequence");
    lengths[si] = static_cast<int>(s.size());
    flat.insert(flat.end(), s.begin(), s.end());
  }
  Var embedded = dropout.apply(g, num::embed(g, g.param(*embed_), flat));
  return run(g, embedded, lengths, order, need_stepwise, dropout);
}

template <class S>
typename BiLstmEncoderT<S>::Encoded BiLstmEncoderT<S>::encode_embedded(
    GraphT<S>& g, Var embedded, const DropoutOpt<S>& dropout) const {
  const int len = static_cast<int>(g.value(embedded).rows());
  return run(g, embedded, {len}, {0}, true, dropout);
}

template <class S>
typename BiLstmEncoderT<S>::Encoded BiLstmEncoderT<S>::run(
    GraphT<S>& g, Var embedded_flat, const std::vector<int>& lengths,
    const std::vector<int>& order, bool need_stepwise,
    const DropoutOpt<S>& dropout) const {
  const int n = static_cast<int>(lengths.size());
  const int max_len = lengths[0];
  std::vector<int> offsets(n, 0);
  for (int si = 1; si < n; ++si) offsets[si] = offsets[si - 1] + lengths[si - 1];
  std::vector<int> active(max_len, 0);
  for (int t = 0; t < max_len; ++t)
    active[t] = static_cast<int>(
        std::count_if(lengths.begin(), lengths.end(), [&](int l) { return l > t; }));

  std::vector<LstmVars<S>> fw, bw;
  for (int l = 0; l < layers_; ++l) {
    fw.push_back(bind(g, fwd_[l]));
    bw.push_back(bind(g, bwd_[l]));
  }

  // cur_f[t] / cur_b[s]: this layer's (dropped) outputs at forward step t and
  // backward step s; row si belongs to the si-th longest sequence. Backward
  // step s of a sequence of length L sits at position L-1-s.
  std::vector<Var> cur_f, cur_b;
  for (int layer = 0; layer < layers_; ++layer) {
    std::vector<Var> next_f(max_len), next_b(max_len);
    for (int dir = 0; dir < 2; ++dir) {
      const bool fwd = dir == 0;
      Var h = -1, c = -1;
      for (int t = 0; t < max_len; ++t) {
        const int batch = active[t];
        Var x;
        if (layer == 0) {
          std::vector<int> rows(batch);
          for (int si = 0; si < batch; ++si)
            rows[si] = offsets[si] + (fwd ? t : lengths[si] - 1 - t);
          x = g.gather_rows(embedded_flat, rows);
        } else {
          std::vector<std::pair<Var, int>> other(batch);
          for (int si = 0; si < batch; ++si) {
            const int pos = lengths[si] - 1 - t;
            other[si] = {fwd ? cur_b[pos] : cur_f[pos], si};
          }
          Var gathered = g.stack_rows(other);
          Var aligned = fwd ? cur_f[t] : cur_b[t];
          x = fwd ? g.concat_cols(aligned, gathered) : g.concat_cols(gathered, aligned);
        }
        if (t == 0) {
          h = g.zeros(batch, hidden_);
          c = g.zeros(batch, hidden_);
        } else if (batch < active[t - 1]) {
          h = g.slice_rows(h, 0, batch);
          c = g.slice_rows(c, 0, batch);
        }
        std::tie(h, c) = lstm_step(g, x, h, c, fwd ? fw[layer] : bw[layer]);
        (fwd ? next_f : next_b)[t] = dropout.apply(g, h);
      }
    }
    cur_f = std::move(next_f);
    cur_b = std::move(next_b);
  }

  Var proj_w = g.param(*proj_w_);
  Var proj_b = g.param(*proj_b_);
  const auto project = [&](Var rows2h) {
    return g.add_rowvec(g.matmul(rows2h, proj_w), proj_b);
  };

  std::vector<int> sorted_pos(n);
  for (int si = 0; si < n; ++si) sorted_pos[order[si]] = si;

  Encoded enc;
  {
    // Forward last state with the backward state at position 0 (its final
    // step), in original sequence order.
    std::vector<std::pair<Var, int>> pf(n), pb(n);
    for (int i = 0; i < n; ++i) {
      const int si = sorted_pos[i];
      pf[i] = {cur_f[lengths[si] - 1], si};
      pb[i] = {cur_b[lengths[si] - 1], si};
    }
    enc.finals = project(g.concat_cols(g.stack_rows(pf), g.stack_rows(pb)));
  }
  if (need_stepwise) {
    enc.stepwise.resize(n);
    for (int i = 0; i < n; ++i) {
      const int si = sorted_pos[i];
      const int len = lengths[si];
      std::vector<std::pair<Var, int>> pf(len), pb(len);
      for (int t = 0; t < len; ++t) {
        pf[t] = {cur_f[t], si};
        pb[t] = {cur_b[len - 1 - t], si};
      }
      enc.stepwise[i] = project(g.concat_cols(g.stack_rows(pf), g.stack_rows(pb)));
    }
  }
  return enc;
}

// ---------------------------------------------------------------------------
// Decoder

template <class S>
struct AttnDecoderT<S>::Bound {
  Var embed = -1;
  std::vector<LstmVars<S>> lstm;
  Var comb_w = -1, comb_b = -1;
  Var out_w = -1, out_b = -1;
};

template <class S>
AttnDecoderT<S>::AttnDecoderT(ParamStoreT<S>& store, const std::string& prefix,
                              ParamEntry<S>* out_embedding, int out_vocab,
                              int hidden, int layers, bool use_attention,
                              std::mt19937_64& rng)
    : hidden_(hidden), layers_(layers), attention_(use_attention),
      out_embed_(out_embedding) {
  using Init = typename ParamStoreT<S>::Init;
  for (int l = 0; l < layers; ++l)
    lstm_.push_back(make_lstm(store, prefix + ".lstm" + std::to_string(l), hidden, hidden, rng));
  if (use_attention) {
    comb_w_ = &store.add(prefix + ".comb_w", 2 * hidden, hidden, Init::Uniform, rng);
    comb_b_ = &store.add(prefix + ".comb_b", 1, hidden, Init::Zero, rng);
  }
  out_w_ = &store.add(prefix + ".out_w", hidden, out_vocab, Init::Uniform, rng);
  out_b_ = &store.add(prefix + ".out_b", 1, out_vocab, Init::Zero, rng);
}

namespace {

// Initial decoder state: the last context row of every sequence.
template <class S>
Var initial_state(GraphT<S>& g, const std::vector<Var>& contexts,
                  const std::vector<int>& which) {
  std::vector<std::pair<Var, int>> picks;
  picks.reserve(which.size());
  for (int i : which)
    picks.emplace_back(contexts[i], static_cast<int>(g.value(contexts[i]).rows()) - 1);
  return g.stack_rows(picks);
}

}  // namespace

template <class S>
Var AttnDecoderT<S>::teacher_loss_sum(GraphT<S>& g, const std::vector<Var>& contexts,
                                      const std::vector<std::vector<int>>& targets,
                                      int sos_id, int eos_id,
                                      const DropoutOpt<S>& dropout,
                                      long* symbol_count) const {
  const int n = static_cast<int>(targets.size());
  if (n == 0 || contexts.size() != targets.size())
    throw std::invalid_argument("teacher_loss_sum: context/target mismatch");

  Bound bd;
  bd.embed = g.param(*out_embed_);
  for (const auto& w : lstm_) bd.lstm.push_back(bind(g, w));
  if (attention_) {
    bd.comb_w = g.param(*comb_w_);
    bd.comb_b = g.param(*comb_b_);
  }
  bd.out_w = g.param(*out_w_);
  bd.out_b = g.param(*out_b_);

  // Decoder input i is [SOS, y_0..y_{k-1}]; the target at step j is y_j, with
  // EOS as the final target. Packed longest-first like the encoder.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return targets[a].size() > targets[b].size();
  });
  std::vector<int> lengths(n);  // number of decode steps = |targets| + 1
  std::vector<int> offsets(n, 0);
  std::vector<int> flat;
  for (int si = 0; si < n; ++si) {
    const auto& t = targets[order[si]];
    lengths[si] = static_cast<int>(t.size()) + 1;
    if (si) offsets[si] = offsets[si - 1] + lengths[si - 1];
    flat.push_back(sos_id);
    flat.insert(flat.end(), t.begin(), t.end());
  }
  const int max_len = lengths[0];
  Var embedded = dropout.apply(g, num::embed(g, bd.embed, flat));

  Var h0 = initial_state(g, contexts, order);
  std::vector<Var> h(layers_, h0), c(layers_, g.zeros(n, hidden_));

  Var total = -1;
  long symbols = 0;
  for (int j = 0; j < max_len; ++j) {
    const int batch = static_cast<int>(
        std::count_if(lengths.begin(), lengths.end(), [&](int l) { return l > j; }));
    if (j > 0 && batch < static_cast<int>(g.value(h[0]).rows()))
      for (int l = 0; l < layers_; ++l) {
        h[l] = g.slice_rows(h[l], 0, batch);
        c[l] = g.slice_rows(c[l], 0, batch);
      }
    std::vector<int> rows(batch);
    for (int si = 0; si < batch; ++si) rows[si] = offsets[si] + j;
    Var x = g.gather_rows(embedded, rows);
    for (int l = 0; l < layers_; ++l) {
      std::tie(h[l], c[l]) = lstm_step(g, x, h[l], c[l], bd.lstm[l]);
      x = dropout.apply(g, h[l]);
    }
    Var state = x;
    Var pre_logit = state;
    if (attention_) {
      std::vector<std::pair<Var, int>> upicks(batch);
      for (int si = 0; si < batch; ++si) {
        Var ctx = contexts[order[si]];
        auto read = attend(g, g.slice_rows(state, si, 1), ctx, ctx, hidden_);
        upicks[si] = {read.mixed, 0};
      }
      Var mixed = g.stack_rows(upicks);
      pre_logit = g.tanh_(g.add_rowvec(
          g.matmul(g.concat_cols(state, mixed), bd.comb_w), bd.comb_b));
    }
    Var logits = g.add_rowvec(g.matmul(pre_logit, bd.out_w), bd.out_b);
    std::vector<int> step_targets(batch);
    for (int si = 0; si < batch; ++si) {
      const auto& t = targets[order[si]];
      step_targets[si] = j < static_cast<int>(t.size()) ? t[j] : eos_id;
    }
    Var step_loss = g.nll_sum(logits, std::move(step_targets));
    total = total < 0 ? step_loss : g.add(total, step_loss);
    symbols += batch;
  }
  if (symbol_count) *symbol_count = symbols;
  return total;
}

template <class S>
typename AttnDecoderT<S>::Greedy AttnDecoderT<S>::greedy(
    GraphT<S>& g, const std::vector<Var>& contexts, int sos_id, int eos_id,
    int max_len, bool want_attention) const {
  const int n = static_cast<int>(contexts.size());
  if (n == 0) throw std::invalid_argument("greedy: no contexts");

  Bound bd;
  bd.embed = g.param(*out_embed_);
  for (const auto& w : lstm_) bd.lstm.push_back(bind(g, w));
  if (attention_) {
    bd.comb_w = g.param(*comb_w_);
    bd.comb_b = g.param(*comb_b_);
  }
  bd.out_w = g.param(*out_w_);
  bd.out_b = g.param(*out_b_);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Var h0 = initial_state(g, contexts, order);
  std::vector<Var> h(layers_, h0), c(layers_, g.zeros(n, hidden_));

  Greedy result;
  result.outputs.resize(n);
  result.overflow.assign(n, false);
  if (want_attention) result.attention.resize(n);
  std::vector<bool> done(n, false);
  std::vector<int> current(n, sos_id);
  const DropoutOpt<S> no_dropout;

  for (int j = 0; j < max_len; ++j) {
    Var x = num::embed(g, bd.embed, current);
    for (int l = 0; l < layers_; ++l) {
      std::tie(h[l], c[l]) = lstm_step(g, x, h[l], c[l], bd.lstm[l]);
      x = h[l];
    }
    Var state = x;
    Var pre_logit = state;
    std::vector<Var> attn_rows;
    if (attention_) {
      std::vector<std::pair<Var, int>> upicks(n);
      for (int i = 0; i < n; ++i) {
        auto read = attend(g, g.slice_rows(state, i, 1), contexts[i], contexts[i], hidden_);
        upicks[i] = {read.mixed, 0};
        if (want_attention) attn_rows.push_back(read.attention);
      }
      Var mixed = g.stack_rows(upicks);
      pre_logit = g.tanh_(g.add_rowvec(
          g.matmul(g.concat_cols(state, mixed), bd.comb_w), bd.comb_b));
    }
    Var logits = g.add_rowvec(g.matmul(pre_logit, bd.out_w), bd.out_b);
    const auto& L = g.value(logits);

    for (int i = 0; i < n; ++i) {
      if (done[i]) {
        current[i] = eos_id;
        continue;
      }
      int best = -1;
      for (int v = 0; v < L.cols(); ++v) {
        if (j == 0 && v == eos_id) continue;  // first symbol precedes the EOS check
        if (best < 0 || L(i, v) > L(i, best)) best = v;  // ties: lowest index
      }
      if (want_attention && attention_) {
        const auto& A = g.value(attn_rows[i]);
        result.attention[i].emplace_back(A.data(), A.data() + A.size());
      }
      if (best == eos_id)
        done[i] = true;
      else
        result.outputs[i].push_back(best);
      current[i] = best;
    }
    if (std::all_of(done.begin(), done.end(), [](bool d) { return d; }))
      return result;
  }
  for (int i = 0; i < n; ++i) result.overflow[i] = !done[i];
  return result;
}

template struct LstmWeights<float>;
template struct LstmWeights<double>;
template LstmWeights<float> make_lstm(ParamStoreT<float>&, const std::string&, int, int, std::mt19937_64&);
template LstmWeights<double> make_lstm(ParamStoreT<double>&, const std::string&, int, int, std::mt19937_64&);
template std::pair<Var, Var> lstm_cell(GraphT<float>&, Var, Var, Var, const LstmWeights<float>&);
template std::pair<Var, Var> lstm_cell(GraphT<double>&, Var, Var, Var, const LstmWeights<double>&);
template MemoryReadout<float> attend(GraphT<float>&, Var, Var, Var, int);
template MemoryReadout<double> attend(GraphT<double>&, Var, Var, Var, int);
template Var context_rows(GraphT<float>&, Var, Var, ParamEntry<float>&, ParamEntry<float>&);
template Var context_rows(GraphT<double>&, Var, Var, ParamEntry<double>&, ParamEntry<double>&);
template class BiLstmEncoderT<float>;
template class BiLstmEncoderT<double>;
template class AttnDecoderT<float>;
template class AttnDecoderT<double>;

}  // namespace metaseq::nn
