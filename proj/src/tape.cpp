#include "icodiff/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "icodiff/errors.hpp"
#include "icodiff/icosphere.hpp"

namespace icodiff::nn {

Mat Tape::grad(Var v) const {
  const auto& n = nodes_.at(v.id);
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Mat& g) {
  auto& n = nodes_[v.id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

Var Tape::push(Mat value, bool needs_grad, Backward back) {
  nodes_.push_back(Node{std::move(value), Mat(), needs_grad && record_, record_ ? std::move(back) : Backward{}});
  return Var{nodes_.size() - 1};
}

void Tape::backward(Var out) {
  if (!record_) throw std::logic_error("backward() on a tape that was not recording");
  auto& root = nodes_.at(out.id);
  if (root.value.size() != 1) throw ShapeError("backward() needs a scalar output");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  root.grad = Mat::Ones(1, 1);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.back || n.grad.size() == 0) continue;
    // The closure may touch other nodes; keep this gradient alive separately.
    const Mat g = n.grad;
    n.back(*this, g);
  }
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

bool any_grad(const Tape& t, std::initializer_list<Var> vs) {
  for (auto v : vs)
    if (t.needs_grad(v)) return true;
  return false;
}

}  // namespace

Var ring_conv(Tape& t, Var x, Var w, Var b, std::span<const std::uint32_t> table) {
  const Mat& xv = t.value(x);
  const Mat& wv = t.value(w);
  const Eigen::Index in = xv.rows();
  const Eigen::Index nv = xv.cols();
  require(table.size() == static_cast<std::size_t>(nv) * kRingSize, "ring_conv: neighbor table does not match map");
  require(wv.cols() == in * 7, "ring_conv: weight expects " + std::to_string(wv.cols() / 7) +
                                   " input channels, map has " + std::to_string(in));
  require(t.value(b).rows() == wv.rows() && t.value(b).cols() == 1, "ring_conv: bias shape");

  Mat col(in * 7, nv);
  for (Eigen::Index i = 0; i < in; ++i) {
    const double* src = xv.row(i).data();
    for (int k = 0; k < 7; ++k) {
      double* dst = col.row(i * 7 + k).data();
      if (k == 0) {
        for (Eigen::Index v = 0; v < nv; ++v) dst[v] = src[v];
      } else {
        for (Eigen::Index v = 0; v < nv; ++v) dst[v] = src[table[static_cast<std::size_t>(v) * kRingSize + k - 1]];
      }
    }
  }
  Mat out = wv * col;
  out.colwise() += t.value(b).col(0);

  const bool needs = any_grad(t, {x, w, b});
  Tape::Backward back;
  if (needs && t.recording()) {
    back = [x, w, b, table, col = std::move(col)](Tape& tp, const Mat& g) {
      if (tp.needs_grad(w)) tp.accumulate(w, g * col.transpose());
      if (tp.needs_grad(b)) tp.accumulate(b, g.rowwise().sum());
      if (tp.needs_grad(x)) {
        const Mat dcol = tp.value(w).transpose() * g;
        const Eigen::Index in_ch = dcol.rows() / 7;
        const Eigen::Index n = dcol.cols();
        Mat dx = Mat::Zero(in_ch, n);
        for (Eigen::Index i = 0; i < in_ch; ++i) {
          double* dst = dx.row(i).data();
          for (int k = 0; k < 7; ++k) {
            const double* src = dcol.row(i * 7 + k).data();
            if (k == 0) {
              for (Eigen::Index v = 0; v < n; ++v) dst[v] += src[v];
            } else {
              for (Eigen::Index v = 0; v < n; ++v) dst[table[static_cast<std::size_t>(v) * kRingSize + k - 1]] += src[v];
            }
          }
        }
        tp.accumulate(x, dx);
      }
    };
  }
  return t.push(std::move(out), needs, std::move(back));
}

Var channel_linear(Tape& t, Var x, Var w, Var b) {
  require(t.value(b).rows() == t.value(w).rows() && t.value(b).cols() == 1, "channel_linear: bias shape");
  return add_bias(t, channel_linear(t, x, w), b);
}

Var channel_linear(Tape& t, Var x, Var w) {
  require(t.value(w).cols() == t.value(x).rows(), "channel_linear: weight/input channel mismatch");
  Mat out = t.value(w) * t.value(x);
  const bool needs = any_grad(t, {x, w});
  return t.push(std::move(out), needs, [x, w](Tape& tp, const Mat& g) {
    if (tp.needs_grad(w)) tp.accumulate(w, g * tp.value(x).transpose());
    if (tp.needs_grad(x)) tp.accumulate(x, tp.value(w).transpose() * g);
  });
}

Var add(Tape& t, Var a, Var b) {
  require(t.value(a).rows() == t.value(b).rows() && t.value(a).cols() == t.value(b).cols(), "add: shape mismatch");
  Mat out = t.value(a) + t.value(b);
  return t.push(std::move(out), any_grad(t, {a, b}), [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var add_bias(Tape& t, Var x, Var b) {
  require(t.value(b).rows() == t.value(x).rows() && t.value(b).cols() == 1, "add_bias: bias shape");
  Mat out = t.value(x);
  out.colwise() += t.value(b).col(0);
  return t.push(std::move(out), any_grad(t, {x, b}), [x, b](Tape& tp, const Mat& g) {
    tp.accumulate(x, g);
    if (tp.needs_grad(b)) tp.accumulate(b, g.rowwise().sum());
  });
}

Var scale(Tape& t, Var x, double s) {
  Mat out = t.value(x) * s;
  return t.push(std::move(out), t.needs_grad(x), [x, s](Tape& tp, const Mat& g) { tp.accumulate(x, g * s); });
}

Var silu(Tape& t, Var x) {
  const Mat& xv = t.value(x);
  const Mat sig = (1.0 + (-xv.array()).exp()).inverse().matrix();
  Mat out = (xv.array() * sig.array()).matrix();
  Tape::Backward back;
  if (t.needs_grad(x) && t.recording()) {
    back = [x, sig](Tape& tp, const Mat& g) {
      const auto& xv2 = tp.value(x).array();
      tp.accumulate(x, (g.array() * sig.array() * (1.0 + xv2 * (1.0 - sig.array()))).matrix());
    };
  }
  return t.push(std::move(out), t.needs_grad(x), std::move(back));
}

Var group_norm(Tape& t, Var x, Var gamma, Var beta, int groups, double eps) {
  const Mat& xv = t.value(x);
  const Eigen::Index c = xv.rows();
  const Eigen::Index n = xv.cols();
  require(groups > 0 && c % groups == 0, "group_norm: channels not divisible by groups");
  require(t.value(gamma).rows() == c && t.value(beta).rows() == c, "group_norm: affine shape");
  const Eigen::Index per = c / groups;
  const double count = static_cast<double>(per * n);

  Mat xhat(c, n);
  Eigen::VectorXd inv_std(groups);
  for (int gi = 0; gi < groups; ++gi) {
    auto block = xv.middleRows(gi * per, per);
    const double mean = block.sum() / count;
    const double var = (block.array() - mean).square().sum() / count;
    inv_std[gi] = 1.0 / std::sqrt(var + eps);
    xhat.middleRows(gi * per, per) = ((block.array() - mean) * inv_std[gi]).matrix();
  }
  Mat out = (xhat.array().colwise() * t.value(gamma).col(0).array()).matrix();
  out.colwise() += t.value(beta).col(0);

  const bool needs = any_grad(t, {x, gamma, beta});
  Tape::Backward back;
  if (needs && t.recording()) {
    back = [x, gamma, beta, groups, per, count, xhat, inv_std](Tape& tp, const Mat& g) {
      if (tp.needs_grad(beta)) tp.accumulate(beta, g.rowwise().sum());
      if (tp.needs_grad(gamma)) tp.accumulate(gamma, (g.array() * xhat.array()).rowwise().sum().matrix());
      if (tp.needs_grad(x)) {
        const Mat dxhat = (g.array().colwise() * tp.value(gamma).col(0).array()).matrix();
        Mat dx(dxhat.rows(), dxhat.cols());
        for (int gi = 0; gi < groups; ++gi) {
          auto dh = dxhat.middleRows(gi * per, per).array();
          auto xh = xhat.middleRows(gi * per, per).array();
          const double m1 = dh.sum() / count;
          const double m2 = (dh * xh).sum() / count;
          dx.middleRows(gi * per, per) = ((dh - m1 - xh * m2) * inv_std[gi]).matrix();
        }
        tp.accumulate(x, dx);
      }
    };
  }
  return t.push(std::move(out), needs, std::move(back));
}

Var concat_rows(Tape& t, Var a, Var b) {
  const Mat& av = t.value(a);
  const Mat& bv = t.value(b);
  require(av.cols() == bv.cols(), "concat_rows: column mismatch");
  Mat out(av.rows() + bv.rows(), av.cols());
  out.topRows(av.rows()) = av;
  out.bottomRows(bv.rows()) = bv;
  const Eigen::Index ra = av.rows();
  const Eigen::Index rb = bv.rows();
  return t.push(std::move(out), any_grad(t, {a, b}), [a, b, ra, rb](Tape& tp, const Mat& g) {
    if (tp.needs_grad(a)) tp.accumulate(a, g.topRows(ra));
    if (tp.needs_grad(b)) tp.accumulate(b, g.bottomRows(rb));
  });
}

Var slice_columns(Tape& t, Var x, std::size_t keep) {
  const Mat& xv = t.value(x);
  require(static_cast<Eigen::Index>(keep) <= xv.cols(), "slice_columns: keep exceeds width");
  Mat out = xv.leftCols(static_cast<Eigen::Index>(keep));
  const Eigen::Index full = xv.cols();
  return t.push(std::move(out), t.needs_grad(x), [x, full](Tape& tp, const Mat& g) {
    Mat dx = Mat::Zero(g.rows(), full);
    dx.leftCols(g.cols()) = g;
    tp.accumulate(x, dx);
  });
}

Var pad_columns(Tape& t, Var x, std::size_t total) {
  const Mat& xv = t.value(x);
  require(static_cast<Eigen::Index>(total) >= xv.cols(), "pad_columns: total smaller than width");
  Mat out = Mat::Zero(xv.rows(), static_cast<Eigen::Index>(total));
  out.leftCols(xv.cols()) = xv;
  const Eigen::Index kept = xv.cols();
  return t.push(std::move(out), t.needs_grad(x),
                [x, kept](Tape& tp, const Mat& g) { tp.accumulate(x, g.leftCols(kept)); });
}

Var select_column(Tape& t, Var x, std::size_t col) {
  const Mat& xv = t.value(x);
  require(static_cast<Eigen::Index>(col) < xv.cols(), "select_column: index out of range");
  Mat out = xv.col(static_cast<Eigen::Index>(col));
  const Eigen::Index cols = xv.cols();
  return t.push(std::move(out), t.needs_grad(x), [x, col, cols](Tape& tp, const Mat& g) {
    Mat dx = Mat::Zero(g.rows(), cols);
    dx.col(static_cast<Eigen::Index>(col)) = g.col(0);
    tp.accumulate(x, dx);
  });
}

Var attention(Tape& t, Var q, Var k, Var v) {
  const Mat& qv = t.value(q);
  const Mat& kv = t.value(k);
  const Mat& vv = t.value(v);
  require(qv.rows() == kv.rows() && qv.cols() == kv.cols() && vv.cols() == qv.cols(), "attention: shape mismatch");
  const double s = 1.0 / std::sqrt(static_cast<double>(qv.rows()));
  Mat p = (qv.transpose() * kv) * s;  // rows: queries, cols: keys
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    auto row = p.row(i);
    row = (row.array() - row.maxCoeff()).exp().matrix();
    row /= row.sum();
  }
  Mat out = vv * p.transpose();
  const bool needs = any_grad(t, {q, k, v});
  Tape::Backward back;
  if (needs && t.recording()) {
    back = [q, k, v, s, p](Tape& tp, const Mat& g) {
      if (tp.needs_grad(v)) tp.accumulate(v, g * p);
      if (tp.needs_grad(q) || tp.needs_grad(k)) {
        const Mat dp = g.transpose() * tp.value(v);
        const Eigen::VectorXd inner = (dp.array() * p.array()).rowwise().sum();
        const Mat ds = (p.array() * (dp.array().colwise() - inner.array())).matrix();
        if (tp.needs_grad(q)) tp.accumulate(q, s * (tp.value(k) * ds.transpose()));
        if (tp.needs_grad(k)) tp.accumulate(k, s * (tp.value(q) * ds));
      }
    };
  }
  return t.push(std::move(out), needs, std::move(back));
}

Var mse(Tape& t, Var pred, const Mat& target) {
  const Mat& pv = t.value(pred);
  require(pv.rows() == target.rows() && pv.cols() == target.cols(), "mse: shape mismatch");
  const double n = static_cast<double>(pv.size());
  Mat diff = pv - target;
  Mat out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  Tape::Backward back;
  if (t.needs_grad(pred) && t.recording()) {
    back = [pred, n, diff = std::move(diff)](Tape& tp, const Mat& g) { tp.accumulate(pred, diff * (2.0 * g(0, 0) / n)); };
  }
  return t.push(std::move(out), t.needs_grad(pred), std::move(back));
}

}  // namespace icodiff::nn
