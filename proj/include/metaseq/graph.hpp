#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

// Reverse-mode autodiff over matrix values: a flat tape rebuilt per episode,
// with exactly the operation set the model needs. Instantiated for float
// (training speed) and double (gradient-check precision).
namespace metaseq::num {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using Var = std::int32_t;

class IndexOutOfVocab : public std::out_of_range {
 public:
  explicit IndexOutOfVocab(int id, int vocab)
      : std::out_of_range("symbol id " + std::to_string(id) +
                          " outside vocabulary of size " + std::to_string(vocab)) {}
};

class AllMasked : public std::runtime_error {
 public:
  AllMasked() : std::runtime_error("loss mask excludes every position") {}
};

template <class S>
struct ParamEntry {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;
};

// Named parameters with gradient accumulators. Registration order is the
// canonical order for the optimizer and for checkpoints.
template <class S>
class ParamStoreT {
 public:
  enum class Init { Uniform, Zero };

  ParamEntry<S>& add(const std::string& name, int rows, int cols, Init init,
                     std::mt19937_64& rng);
  ParamEntry<S>& get(const std::string& name);
  const ParamEntry<S>& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t parameter_count() const;
  void zero_grads();
  double grad_norm() const;

  std::deque<ParamEntry<S>>& entries() { return entries_; }
  const std::deque<ParamEntry<S>>& entries() const { return entries_; }

  // Weight range used everywhere: uniform(-0.08, 0.08), biases zero.
  static constexpr double kInitRange = 0.08;

 private:
  std::deque<ParamEntry<S>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Scales all gradients by max_norm/norm when the global l2 norm exceeds
// max_norm; returns the factor applied (1 otherwise).
template <class S>
double clip_grad_norm(ParamStoreT<S>& store, double max_norm);

template <class S>
class AdamT {
 public:
  explicit AdamT(ParamStoreT<S>& store, double beta1 = 0.9, double beta2 = 0.999,
                 double epsilon = 1e-8);
  void step(double lr);
  std::int64_t steps() const { return steps_; }

  // Exposed for checkpointing.
  std::vector<Matrix<S>>& first_moments() { return m_; }
  std::vector<Matrix<S>>& second_moments() { return v_; }
  void set_steps(std::int64_t n) { steps_ = n; }

 private:
  ParamStoreT<S>& store_;
  double beta1_, beta2_, epsilon_;
  std::int64_t steps_ = 0;
  std::vector<Matrix<S>> m_, v_;
};

template <class S>
class GraphT {
 public:
  using Mat = Matrix<S>;

  // Leaves.
  Var input(Mat value);
  Var zeros(int rows, int cols);
  Var param(ParamEntry<S>& entry);

  // Linear algebra.
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  Var add(Var a, Var b);
  Var add_rowvec(Var a, Var row);  // row is 1 x cols, broadcast over rows
  Var hadamard(Var a, Var b);
  Var scale(Var a, S factor);

  // Elementwise nonlinearities.
  Var tanh_(Var a);
  Var sigmoid_(Var a);

  // Shape ops.
  Var slice_rows(Var a, int row0, int count);
  Var slice_cols(Var a, int col0, int count);
  Var concat_cols(Var a, Var b);
  Var gather_rows(Var a, std::vector<int> rows);
  // One output row per (source node, source row) pick.
  Var stack_rows(const std::vector<std::pair<Var, int>>& picks);

  // Row-normalized softmax, shift-invariant.
  Var softmax_rows(Var a);

  // Inverted dropout: zero with probability p, scale survivors by 1/(1-p).
  Var dropout(Var a, double p, std::mt19937_64& rng);

  // 1x1 sum over rows of -log softmax(row)[target].
  Var nll_sum(Var logits, std::vector<int> targets);

  const Mat& value(Var v) const;
  S scalar(Var v) const;
  // Gradient of the loss w.r.t. `v`; only valid after backward() and only
  // for nodes whose buffers were kept (keep_grad).
  const Mat& grad(Var v) const;
  void keep_grad(Var v);

  // Reverse sweep from a 1x1 loss node. Frees node buffers as it goes;
  // parameter gradients accumulate into their store entries.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  void clear();

  // When true, every op asserts its result is finite (debug builds default
  // to on).
  static bool check_finite;

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;  // set for params; value lives in the store
    Mat grad;
    bool has_grad = false;
    bool needs_grad = false;
    bool keep = false;
    std::function<void(GraphT&)> back;
  };

  const Mat& val(const Node& n) const { return n.external ? *n.external : n.value; }
  Mat& grad_buf(Var v);
  Var emplace(Mat value, bool needs_grad, std::function<void(GraphT&)> back);
  void finite_check(Var v) const;

  std::vector<Node> nodes_;
};

using GraphF = GraphT<float>;
using GraphD = GraphT<double>;

// Row lookup into an embedding table parameter; gradients scatter into the
// looked-up rows. Throws IndexOutOfVocab for ids outside the table.
template <class S>
Var embed(GraphT<S>& g, Var table, const std::vector<int>& ids);

// Mean negative log-likelihood over unmasked rows. Throws AllMasked when the
// mask excludes everything.
template <class S>
Var masked_nll(GraphT<S>& g, Var logits, const std::vector<int>& targets,
               const std::vector<bool>& mask);

}  // namespace metaseq::num
