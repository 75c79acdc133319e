#pragma once

#include <cstdint>
#include <string>

#include "metaseq/graph.hpp"
#include "metaseq/model.hpp"

// Self-describing checkpoint container: a JSON header (config, parameter
// names/shapes, optimizer scalars, RNG state, episode counter) followed by
// raw little-endian float64 blocks for parameters and Adam moments.
namespace metaseq::ckpt {

struct TrainState {
  std::int64_t episodes_done = 0;
  std::uint64_t train_seed = 0;
  std::string dropout_rng;  // serialized mt19937_64, empty if not training
};

struct Header {
  model::ModelConfig config;
  TrainState state;
  bool has_optimizer = false;
};

template <class S>
void save(const std::string& path, const model::ModelT<S>& model,
          const num::AdamT<S>* optimizer, const TrainState& state);

// Reads only the header; use it to construct a matching model, then restore.
Header peek(const std::string& path);

template <class S>
void restore(const std::string& path, model::ModelT<S>& model,
             num::AdamT<S>* optimizer, TrainState* state);

}  // namespace metaseq::ckpt
