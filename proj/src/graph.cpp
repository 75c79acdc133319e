#include "metaseq/graph.hpp"

#include <cmath>

namespace metaseq::num {

template <class S>
bool GraphT<S>::check_finite =
#ifdef NDEBUG
    false;
#else
    true;
#endif

// ---------------------------------------------------------------------------
// Parameter store

template <class S>
ParamEntry<S>& ParamStoreT<S>::add(const std::string& name, int rows, int cols,
                                   Init init, std::mt19937_64& rng) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  ParamEntry<S> e;
  e.name = name;
  e.value.resize(rows, cols);
  if (init == Init::Zero) {
    e.value.setZero();
  } else {
    std::uniform_real_distribution<double> dist(-kInitRange, kInitRange);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) e.value(r, c) = static_cast<S>(dist(rng));
  }
  e.grad = Matrix<S>::Zero(rows, cols);
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
  return entries_.back();
}

template <class S>
ParamEntry<S>& ParamStoreT<S>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return entries_[it->second];
}

template <class S>
const ParamEntry<S>& ParamStoreT<S>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return entries_[it->second];
}

template <class S>
std::size_t ParamStoreT<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

template <class S>
void ParamStoreT<S>::zero_grads() {
  for (auto& e : entries_) e.grad.setZero();
}

template <class S>
double ParamStoreT<S>::grad_norm() const {
  double sq = 0;
  for (const auto& e : entries_) sq += e.grad.template cast<double>().squaredNorm();
  return std::sqrt(sq);
}

template <class S>
double clip_grad_norm(ParamStoreT<S>& store, double max_norm) {
  const double norm = store.grad_norm();
  if (norm <= max_norm || norm == 0.0) return 1.0;
  const double scale = max_norm / norm;
  for (auto& e : store.entries()) e.grad *= static_cast<S>(scale);
  return scale;
}

// ---------------------------------------------------------------------------
// Adam

template <class S>
AdamT<S>::AdamT(ParamStoreT<S>& store, double beta1, double beta2, double epsilon)
    : store_(store), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (const auto& e : store.entries()) {
    m_.push_back(Matrix<S>::Zero(e.value.rows(), e.value.cols()));
    v_.push_back(Matrix<S>::Zero(e.value.rows(), e.value.cols()));
  }
}

template <class S>
void AdamT<S>::step(double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  std::size_t i = 0;
  for (auto& e : store_.entries()) {
    auto& m = m_[i];
    auto& v = v_[i];
    m = static_cast<S>(beta1_) * m + static_cast<S>(1 - beta1_) * e.grad;
    v = static_cast<S>(beta2_) * v + static_cast<S>(1 - beta2_) * e.grad.cwiseProduct(e.grad);
    e.value.array() -= static_cast<S>(lr) * (m.array() / static_cast<S>(bc1)) /
                       ((v.array() / static_cast<S>(bc2)).sqrt() + static_cast<S>(epsilon_));
    ++i;
  }
}

// ---------------------------------------------------------------------------
// Graph

template <class S>
void GraphT<S>::finite_check(Var v) const {
  if (!check_finite) return;
  if (!val(nodes_[v]).allFinite())
    throw std::runtime_error("non-finite values produced at node " + std::to_string(v));
}

template <class S>
Var GraphT<S>::emplace(Mat value, bool needs_grad, std::function<void(GraphT&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  const Var v = static_cast<Var>(nodes_.size() - 1);
  finite_check(v);
  return v;
}

template <class S>
typename GraphT<S>::Mat& GraphT<S>::grad_buf(Var v) {
  Node& n = nodes_[v];
  if (!n.has_grad) {
    n.grad = Mat::Zero(val(n).rows(), val(n).cols());
    n.has_grad = true;
  }
  return n.grad;
}

template <class S>
const typename GraphT<S>::Mat& GraphT<S>::value(Var v) const {
  return val(nodes_.at(v));
}

template <class S>
S GraphT<S>::scalar(Var v) const {
  const Mat& m = value(v);
  if (m.size() != 1) throw std::invalid_argument("scalar() on non-1x1 node");
  return m(0, 0);
}

template <class S>
const typename GraphT<S>::Mat& GraphT<S>::grad(Var v) const {
  const Node& n = nodes_.at(v);
  if (!n.has_grad) throw std::logic_error("no gradient recorded for node");
  return n.grad;
}

template <class S>
void GraphT<S>::keep_grad(Var v) {
  nodes_.at(v).keep = true;
}

template <class S>
void GraphT<S>::clear() {
  nodes_.clear();
}

template <class S>
Var GraphT<S>::input(Mat value) {
  return emplace(std::move(value), false, nullptr);
}

template <class S>
Var GraphT<S>::zeros(int rows, int cols) {
  return input(Mat::Zero(rows, cols));
}

template <class S>
Var GraphT<S>::param(ParamEntry<S>& entry) {
  Node n;
  n.external = &entry.value;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  const Var v = static_cast<Var>(nodes_.size() - 1);
  nodes_[v].back = [v, &entry](GraphT& g) { entry.grad += g.nodes_[v].grad; };
  return v;
}

template <class S>
Var GraphT<S>::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  if (trans_a && trans_b) throw std::invalid_argument("matmul: double transpose unsupported");
  const Mat& A = value(a);
  const Mat& B = value(b);
  const auto inner_a = trans_a ? A.rows() : A.cols();
  const auto inner_b = trans_b ? B.cols() : B.rows();
  if (inner_a != inner_b) throw std::invalid_argument("matmul: inner dimension mismatch");
  Mat out;
  if (!trans_a && !trans_b)
    out.noalias() = A * B;
  else if (trans_b)
    out.noalias() = A * B.transpose();
  else
    out.noalias() = A.transpose() * B;
  const bool needs = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, a, b, trans_a, trans_b](GraphT& g) {
      const Mat& dC = g.nodes_[v].grad;
      const Mat& A = g.value(a);
      const Mat& B = g.value(b);
      if (!trans_a && !trans_b) {
        if (g.nodes_[a].needs_grad) g.grad_buf(a).noalias() += dC * B.transpose();
        if (g.nodes_[b].needs_grad) g.grad_buf(b).noalias() += A.transpose() * dC;
      } else if (trans_b) {  // C = A * B^T
        if (g.nodes_[a].needs_grad) g.grad_buf(a).noalias() += dC * B;
        if (g.nodes_[b].needs_grad) g.grad_buf(b).noalias() += dC.transpose() * A;
      } else {  // C = A^T * B
        if (g.nodes_[a].needs_grad) g.grad_buf(a).noalias() += B * dC.transpose();
        if (g.nodes_[b].needs_grad) g.grad_buf(b).noalias() += A * dC;
      }
    };
  return v;
}

template <class S>
Var GraphT<S>::add(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("add: shape mismatch");
  const bool needs = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Mat out = A + B;
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, a, b](GraphT& g) {
      const Mat& dC = g.nodes_[v].grad;
      if (g.nodes_[a].needs_grad) g.grad_buf(a) += dC;
      if (g.nodes_[b].needs_grad) g.grad_buf(b) += dC;
    };
  return v;
}

template <class S>
Var GraphT<S>::add_rowvec(Var a, Var row) {
  const Mat& A = value(a);
  const Mat& R = value(row);
  if (R.rows() != 1 || R.cols() != A.cols())
    throw std::invalid_argument("add_rowvec: bias must be 1 x cols");
  const bool needs = nodes_[a].needs_grad || nodes_[row].needs_grad;
  Mat out = A.rowwise() + R.row(0);
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, a, row](GraphT& g) {
      const Mat& dC = g.nodes_[v].grad;
      if (g.nodes_[a].needs_grad) g.grad_buf(a) += dC;
      if (g.nodes_[row].needs_grad) g.grad_buf(row).row(0) += dC.colwise().sum();
    };
  return v;
}

template <class S>
Var GraphT<S>::hadamard(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("hadamard: shape mismatch");
  const bool needs = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Mat out = A.cwiseProduct(B);
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, a, b](GraphT& g) {
      const Mat& dC = g.nodes_[v].grad;
      if (g.nodes_[a].needs_grad) g.grad_buf(a) += dC.cwiseProduct(g.value(b));
      if (g.nodes_[b].needs_grad) g.grad_buf(b) += dC.cwiseProduct(g.value(a));
    };
  return v;
}

template <class S>
Var GraphT<S>::scale(Var a, S factor) {
  const bool needs = nodes_[a].needs_grad;
  Mat out = value(a) * factor;
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, a, factor](GraphT& g) {
      g.grad_buf(a) += factor * g.nodes_[v].grad;
    };
  return v;
}

template <class S>
Var GraphT<S>::tanh_(Var a) {
  const bool needs = nodes_[a].needs_grad;
  Mat out = value(a).array().tanh();
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, a](GraphT& g) {
      const Mat& T = g.value(v);
      g.grad_buf(a).array() += g.nodes_[v].grad.array() * (S(1) - T.array().square());
    };
  return v;
}

template <class S>
Var GraphT<S>::sigmoid_(Var a) {
  const bool needs = nodes_[a].needs_grad;
  Mat out = (S(1) / (S(1) + (-value(a).array()).exp())).matrix();
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, a](GraphT& g) {
      const Mat& Y = g.value(v);
      g.grad_buf(a).array() += g.nodes_[v].grad.array() * Y.array() * (S(1) - Y.array());
    };
  return v;
}

template <class S>
Var GraphT<S>::slice_rows(Var a, int row0, int count) {
  const Mat& A = value(a);
  if (row0 < 0 || row0 + count > A.rows())
    throw std::invalid_argument("slice_rows out of range");
  const bool needs = nodes_[a].needs_grad;
  Mat out = A.middleRows(row0, count);
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, a, row0, count](GraphT& g) {
      g.grad_buf(a).middleRows(row0, count) += g.nodes_[v].grad;
    };
  return v;
}

template <class S>
Var GraphT<S>::slice_cols(Var a, int col0, int count) {
  const Mat& A = value(a);
  if (col0 < 0 || col0 + count > A.cols())
    throw std::invalid_argument("slice_cols out of range");
  const bool needs = nodes_[a].needs_grad;
  Mat out = A.middleCols(col0, count);
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, a, col0, count](GraphT& g) {
      g.grad_buf(a).middleCols(col0, count) += g.nodes_[v].grad;
    };
  return v;
}

template <class S>
Var GraphT<S>::concat_cols(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.rows() != B.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  const bool needs = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Mat out(A.rows(), A.cols() + B.cols());
  out << A, B;
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs) {
    const int ca = static_cast<int>(A.cols());
    const int cb = static_cast<int>(B.cols());
    nodes_[v].back = [v, a, b, ca, cb](GraphT& g) {
      const Mat& dC = g.nodes_[v].grad;
      if (g.nodes_[a].needs_grad) g.grad_buf(a) += dC.leftCols(ca);
      if (g.nodes_[b].needs_grad) g.grad_buf(b) += dC.rightCols(cb);
    };
  }
  return v;
}

template <class S>
Var GraphT<S>::gather_rows(Var a, std::vector<int> rows) {
  const Mat& A = value(a);
  for (int r : rows)
    if (r < 0 || r >= A.rows()) throw IndexOutOfVocab(r, static_cast<int>(A.rows()));
  const bool needs = nodes_[a].needs_grad;
  Mat out(static_cast<int>(rows.size()), A.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = A.row(rows[i]);
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, a, rows = std::move(rows)](GraphT& g) {
      const Mat& dC = g.nodes_[v].grad;
      Mat& dA = g.grad_buf(a);
      for (std::size_t i = 0; i < rows.size(); ++i)
        dA.row(rows[i]) += dC.row(static_cast<int>(i));
    };
  return v;
}

template <class S>
Var GraphT<S>::stack_rows(const std::vector<std::pair<Var, int>>& picks) {
  if (picks.empty()) throw std::invalid_argument("stack_rows: empty pick list");
  const int cols = static_cast<int>(value(picks[0].first).cols());
  bool needs = false;
  Mat out(static_cast<int>(picks.size()), cols);
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const Mat& src = value(picks[i].first);
    if (src.cols() != cols) throw std::invalid_argument("stack_rows: column mismatch");
    if (picks[i].second < 0 || picks[i].second >= src.rows())
      throw std::invalid_argument("stack_rows: row out of range");
    out.row(i) = src.row(picks[i].second);
    needs = needs || nodes_[picks[i].first].needs_grad;
  }
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, picks](GraphT& g) {
      const Mat& dC = g.nodes_[v].grad;
      for (std::size_t i = 0; i < picks.size(); ++i)
        if (g.nodes_[picks[i].first].needs_grad)
          g.grad_buf(picks[i].first).row(picks[i].second) +=
              dC.row(static_cast<int>(i));
    };
  return v;
}

template <class S>
Var GraphT<S>::softmax_rows(Var a) {
  const Mat& A = value(a);
  Mat out(A.rows(), A.cols());
  for (int r = 0; r < A.rows(); ++r) {
    const S shift = A.row(r).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (A.row(r).array() - shift).exp();
    out.row(r) = e / e.sum();
  }
  const bool needs = nodes_[a].needs_grad;
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, a](GraphT& g) {
      const Mat& P = g.value(v);
      const Mat& dC = g.nodes_[v].grad;
      Mat& dA = g.grad_buf(a);
      for (int r = 0; r < P.rows(); ++r) {
        const S dot = dC.row(r).dot(P.row(r));
        dA.row(r).array() += P.row(r).array() * (dC.row(r).array() - dot);
      }
    };
  return v;
}

template <class S>
Var GraphT<S>::dropout(Var a, double p, std::mt19937_64& rng) {
  if (p < 0 || p >= 1) throw std::invalid_argument("dropout: need 0 <= p < 1");
  if (p == 0) return a;
  const Mat& A = value(a);
  Mat mask(A.rows(), A.cols());
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  for (int c = 0; c < A.cols(); ++c)
    for (int r = 0; r < A.rows(); ++r)
      mask(r, c) = dist(rng) < p ? S(0) : keep_scale;
  const bool needs = nodes_[a].needs_grad;
  Mat out = A.cwiseProduct(mask);
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, a, mask = std::move(mask)](GraphT& g) {
      g.grad_buf(a) += g.nodes_[v].grad.cwiseProduct(mask);
    };
  return v;
}

template <class S>
Var GraphT<S>::nll_sum(Var logits, std::vector<int> targets) {
  const Mat& L = value(logits);
  if (static_cast<int>(targets.size()) != L.rows())
    throw std::invalid_argument("nll_sum: one target per row required");
  Mat probs(L.rows(), L.cols());
  double total = 0;
  for (int r = 0; r < L.rows(); ++r) {
    if (targets[r] < 0 || targets[r] >= L.cols())
      throw IndexOutOfVocab(targets[r], static_cast<int>(L.cols()));
    const S shift = L.row(r).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (L.row(r).array() - shift).exp();
    const S sum = e.sum();
    probs.row(r) = e / sum;
    total -= static_cast<double>(L(r, targets[r]) - shift - std::log(sum));
  }
  Mat out(1, 1);
  out(0, 0) = static_cast<S>(total);
  const bool needs = nodes_[logits].needs_grad;
  Var v = emplace(std::move(out), needs, nullptr);
  if (needs)
    nodes_[v].back = [v, logits, probs = std::move(probs),
                      targets = std::move(targets)](GraphT& g) {
      const S up = g.nodes_[v].grad(0, 0);
      Mat& dL = g.grad_buf(logits);
      dL += up * probs;
      for (int r = 0; r < dL.rows(); ++r) dL(r, targets[r]) -= up;
    };
  return v;
}

template <class S>
void GraphT<S>::backward(Var loss) {
  if (value(loss).size() != 1) throw std::invalid_argument("backward: loss must be 1x1");
  grad_buf(loss)(0, 0) = S(1);
  for (Var i = loss; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.has_grad && n.needs_grad && n.back) n.back(*this);
    if (i != loss && !n.keep) {
      // Consumers sit later on the tape, so nothing reads this node again.
      n.value.resize(0, 0);
      n.grad.resize(0, 0);
      n.has_grad = false;
    }
  }
}

// ---------------------------------------------------------------------------
// Free helpers

template <class S>
Var embed(GraphT<S>& g, Var table, const std::vector<int>& ids) {
  return g.gather_rows(table, ids);
}

template <class S>
Var masked_nll(GraphT<S>& g, Var logits, const std::vector<int>& targets,
               const std::vector<bool>& mask) {
  if (mask.size() != targets.size())
    throw std::invalid_argument("masked_nll: mask/target size mismatch");
  std::vector<int> rows, kept;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    rows.push_back(static_cast<int>(i));
    kept.push_back(targets[i]);
  }
  if (rows.empty()) throw AllMasked();
  Var selected = g.gather_rows(logits, rows);
  Var total = g.nll_sum(selected, kept);
  return g.scale(total, static_cast<S>(1.0 / rows.size()));
}

template class ParamStoreT<float>;
template class ParamStoreT<double>;
template class AdamT<float>;
template class AdamT<double>;
template class GraphT<float>;
template class GraphT<double>;
template double clip_grad_norm<float>(ParamStoreT<float>&, double);
template double clip_grad_norm<double>(ParamStoreT<double>&, double);
template Var embed<float>(GraphT<float>&, Var, const std::vector<int>&);
template Var embed<double>(GraphT<double>&, Var, const std::vector<int>&);
template Var masked_nll<float>(GraphT<float>&, Var, const std::vector<int>&,
                               const std::vector<bool>&);
template Var masked_nll<double>(GraphT<double>&, Var, const std::vector<int>&,
                                const std::vector<bool>&);

}  // namespace metaseq::num
