#include "metaseq/model.hpp"

#include <algorithm>

namespace metaseq::model {

namespace {
const std::vector<std::string> kVariantNames = {
    "full", "no-support-loss", "no-decoder-attention", "standard-seq2seq"};
}

Variant variant_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kVariantNames.size(); ++i)
    if (kVariantNames[i] == name) return static_cast<Variant>(i);
  throw std::invalid_argument("unknown variant: " + name);
}

const std::string& variant_name(Variant v) {
  return kVariantNames.at(static_cast<std::size_t>(v));
}

const std::vector<std::string>& variant_names() { return kVariantNames; }

SymbolTable SymbolTable::build(const std::vector<std::string>& base,
                               const std::vector<std::string>& specials) {
  SymbolTable t;
  t.symbols = base;
  t.symbols.insert(t.symbols.end(), specials.begin(), specials.end());
  for (std::size_t i = 0; i < t.symbols.size(); ++i)
    t.index[t.symbols[i]] = static_cast<int>(i);
  if (t.index.size() != t.symbols.size())
    throw std::invalid_argument("vocabulary contains duplicate symbols");
  return t;
}

int SymbolTable::id(const std::string& symbol) const {
  auto it = index.find(symbol);
  if (it == index.end()) throw VocabMismatch(symbol);
  return it->second;
}

template <class S>
ModelT<S>::ModelT(const ModelConfig& config, std::uint64_t init_seed)
    : config_(config),
      in_table_(SymbolTable::build(config.vocab.input, {"<EOS>"})),
      out_table_(SymbolTable::build(config.vocab.output, {"<SOS>", "<EOS>"})) {
  in_eos_id_ = in_table_.id("<EOS>");
  sos_id_ = out_table_.id("<SOS>");
  eos_id_ = out_table_.id("<EOS>");

  using Init = typename num::ParamStoreT<S>::Init;
  std::mt19937_64 rng(init_seed);
  const int m = config.hidden;
  in_embed_ = &store_.add("input_embedding", in_table_.size(), m, Init::Uniform, rng);
  input_encoder_ = nn::BiLstmEncoderT<S>(store_, "input_encoder", in_embed_,
                                         m, config.layers, rng);
  out_embed_ = &store_.add("output_embedding", out_table_.size(), m, Init::Uniform, rng);
  if (config.variant != Variant::StandardSeq2Seq)
    output_encoder_ = nn::BiLstmEncoderT<S>(store_, "output_encoder", out_embed_,
                                            m, config.layers, rng);
  ctx_w_ = &store_.add("context.w", 2 * m, m, Init::Uniform, rng);
  ctx_b_ = &store_.add("context.b", 1, m, Init::Zero, rng);
  decoder_ = nn::AttnDecoderT<S>(store_, "decoder", out_embed_, out_table_.size(),
                                 m, config.layers,
                                 config.variant != Variant::NoDecoderAttention, rng);
}

template <class S>
std::vector<int> ModelT<S>::input_ids(const scan::Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  for (const auto& t : tokens) ids.push_back(in_table_.id(t));
  ids.push_back(in_eos_id_);
  return ids;
}

template <class S>
std::vector<int> ModelT<S>::output_ids(const scan::Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(out_table_.id(t));
  return ids;
}

template <class S>
std::vector<int> ModelT<S>::output_ids_with_eos(const scan::Tokens& tokens) const {
  std::vector<int> ids = output_ids(tokens);
  ids.push_back(eos_id_);
  return ids;
}

template <class S>
typename ModelT<S>::QueryContexts ModelT<S>::build_contexts(
    num::GraphT<S>& g, const std::vector<std::vector<int>>& support_in,
    const std::vector<std::vector<int>>& support_out,
    const std::vector<std::vector<int>>& queries,
    const nn::DropoutOpt<S>& dropout) {
  const int m = config_.hidden;
  const int n_support = static_cast<int>(support_in.size());
  const bool use_memory = config_.variant != Variant::StandardSeq2Seq;
  if (use_memory && n_support == 0) throw EmptySupport();

  // Support inputs and queries share the input encoder; one packed pass.
  std::vector<std::vector<int>> batch;
  if (use_memory) batch = support_in;
  batch.insert(batch.end(), queries.begin(), queries.end());
  auto encoded = input_encoder_.encode(g, batch, /*need_stepwise=*/true, dropout);

  num::Var keys = -1, values = -1;
  if (use_memory) {
    keys = g.slice_rows(encoded.finals, 0, n_support);
    values = output_encoder_.encode(g, support_out, /*need_stepwise=*/false,
                                    dropout).finals;
  }

  num::Var ctx_w = g.param(*ctx_w_);
  num::Var ctx_b = g.param(*ctx_b_);
  const auto to_context = [&](num::Var h, num::Var mixed) {
    return g.tanh_(g.add_rowvec(g.matmul(g.concat_cols(h, mixed), ctx_w), ctx_b));
  };

  QueryContexts out;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    num::Var stepwise = encoded.stepwise[(use_memory ? n_support : 0) + q];
    const int steps = static_cast<int>(g.value(stepwise).rows());
    if (config_.variant == Variant::NoDecoderAttention) {
      // Only the final context row is produced; earlier steps never enter
      // the graph.
      num::Var last = g.slice_rows(stepwise, steps - 1, 1);
      auto read = nn::attend(g, last, keys, values, m);
      out.memory_weights.push_back(read.attention);
      out.contexts.push_back(to_context(last, read.mixed));
    } else if (use_memory) {
      auto read = nn::attend(g, stepwise, keys, values, m);
      out.memory_weights.push_back(read.attention);
      out.contexts.push_back(to_context(stepwise, read.mixed));
    } else {
      out.memory_weights.push_back(-1);
      out.contexts.push_back(to_context(stepwise, g.zeros(steps, m)));
    }
  }
  return out;
}

template <class S>
typename ModelT<S>::LossResult ModelT<S>::episode_loss(
    num::GraphT<S>& g, const episodes::Episode& episode,
    bool include_support_loss, std::mt19937_64& dropout_rng) {
  nn::DropoutOpt<S> dropout{config_.dropout, &dropout_rng};

  std::vector<std::vector<int>> support_in, support_out;
  for (const auto& p : episode.support) {
    support_in.push_back(input_ids(p.input));
    support_out.push_back(output_ids_with_eos(p.output));
  }
  std::vector<std::vector<int>> query_in;
  std::vector<std::vector<int>> targets;
  for (const auto& p : episode.query) {
    query_in.push_back(input_ids(p.input));
    targets.push_back(output_ids(p.output));
  }
  if (include_support_loss) {
    // Support pairs run through the network as additional query items.
    for (const auto& p : episode.support) {
      query_in.push_back(input_ids(p.input));
      targets.push_back(output_ids(p.output));
    }
  }

  auto ctx = build_contexts(g, support_in, support_out, query_in, dropout);
  LossResult result;
  num::Var total = decoder_.teacher_loss_sum(g, ctx.contexts, targets, sos_id_,
                                             eos_id_, dropout, &result.symbols);
  result.loss = g.scale(total, static_cast<S>(1.0 / result.symbols));
  return result;
}

template <class S>
typename ModelT<S>::Decoded ModelT<S>::decode(const episodes::Episode& episode,
                                              bool want_trace, int chunk_size) {
  Decoded out;
  const int n = static_cast<int>(episode.query.size());
  out.outputs.resize(n);
  out.overflow.assign(n, false);
  if (want_trace) out.traces.resize(n);

  std::vector<std::vector<int>> support_in, support_out;
  for (const auto& p : episode.support) {
    support_in.push_back(input_ids(p.input));
    support_out.push_back(output_ids_with_eos(p.output));
  }

  const nn::DropoutOpt<S> no_dropout;
  for (int begin = 0; begin < n; begin += chunk_size) {
    const int end = std::min(n, begin + chunk_size);
    num::GraphT<S> g;
    std::vector<std::vector<int>> query_in;
    for (int i = begin; i < end; ++i)
      query_in.push_back(input_ids(episode.query[i].input));
    auto ctx = build_contexts(g, support_in, support_out, query_in, no_dropout);
    auto greedy = decoder_.greedy(g, ctx.contexts, sos_id_, eos_id_,
                                  config_.max_decode_len, want_trace);
    for (int i = begin; i < end; ++i) {
      const int k = i - begin;
      out.overflow[i] = greedy.overflow[k];
      for (int id : greedy.outputs[k])
        out.outputs[i].push_back(out_table_.symbols.at(id));
      if (!want_trace) continue;
      QueryTrace& trace = out.traces[i];
      for (const auto& t : episode.query[i].input) trace.query_tokens.push_back(t);
      trace.query_tokens.push_back("<EOS>");
      if (ctx.memory_weights[k] >= 0) {
        const auto& A = g.value(ctx.memory_weights[k]);
        for (int r = 0; r < A.rows(); ++r) {
          std::vector<double> row(A.cols());
          for (int c = 0; c < A.cols(); ++c) row[c] = static_cast<double>(A(r, c));
          trace.memory_attention.push_back(std::move(row));
        }
      }
      if (decoder_.uses_attention()) trace.decoder_attention = greedy.attention[k];
      trace.predicted = out.outputs[i];
      trace.predicted.push_back("<EOS>");
    }
  }
  return out;
}

template class ModelT<float>;
template class ModelT<double>;

}  // namespace metaseq::model
