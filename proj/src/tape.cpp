#include "mate/tape.hpp"

#include <cmath>
#include <memory>

namespace mate::net {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

bool any_grad(const Tape& t, std::initializer_list<Var> vars) {
  for (const Var v : vars) {
    if (t.requires_grad(v)) return true;
  }
  return false;
}

}  // namespace

void Tape::backward(Var loss) {
  const int id = check(loss);
  require(nodes_[id].value.rows() == 1 && nodes_[id].value.cols() == 1,
          "backward() seed must be scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[id].grad = Mat::Ones(1, 1);
  for (int i = id; i >= 0; --i) {
    auto& n = nodes_[i];
    if (n.grad.size() != 0 && n.backward) n.backward(*this);
  }
}

Var matmul(Tape& t, Var a, Var b) {
  require(t.value(a).cols() == t.value(b).rows(), "matmul: inner dimensions differ");
  const bool rg = any_grad(t, {a, b});
  Var out = t.push(t.value(a) * t.value(b), rg);
  if (rg) {
    t.set_backward(out, [out, a, b](Tape& tp) {
      const Mat& g = tp.raw_grad(out);
      if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
      if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
    });
  }
  return out;
}

Var add(Tape& t, Var a, Var b) {
  require(t.value(a).rows() == t.value(b).rows() &&
              t.value(a).cols() == t.value(b).cols(),
          "add: shape mismatch");
  const bool rg = any_grad(t, {a, b});
  Var out = t.push(t.value(a) + t.value(b), rg);
  if (rg) {
    t.set_backward(out, [out, a, b](Tape& tp) {
      const Mat& g = tp.raw_grad(out);
      tp.accumulate(a, g);
      tp.accumulate(b, g);
    });
  }
  return out;
}

Var subtract(Tape& t, Var a, Var b) {
  require(t.value(a).rows() == t.value(b).rows() &&
              t.value(a).cols() == t.value(b).cols(),
          "subtract: shape mismatch");
  const bool rg = any_grad(t, {a, b});
  Var out = t.push(t.value(a) - t.value(b), rg);
  if (rg) {
    t.set_backward(out, [out, a, b](Tape& tp) {
      const Mat& g = tp.raw_grad(out);
      tp.accumulate(a, g);
      tp.accumulate(b, -g);
    });
  }
  return out;
}

Var scale(Tape& t, Var a, double s) {
  const bool rg = t.requires_grad(a);
  Var out = t.push(t.value(a) * s, rg);
  if (rg) {
    t.set_backward(out, [out, a, s](Tape& tp) {
      tp.accumulate(a, tp.raw_grad(out) * s);
    });
  }
  return out;
}

Var add_scaled(Tape& t, Var a, Var b, double s) {
  require(t.value(a).rows() == t.value(b).rows() &&
              t.value(a).cols() == t.value(b).cols(),
          "add_scaled: shape mismatch");
  const bool rg = any_grad(t, {a, b});
  Var out = t.push(t.value(a) + s * t.value(b), rg);
  if (rg) {
    t.set_backward(out, [out, a, b, s](Tape& tp) {
      const Mat& g = tp.raw_grad(out);
      tp.accumulate(a, g);
      tp.accumulate(b, s * g);
    });
  }
  return out;
}

Var add_row_broadcast(Tape& t, Var x, Var row) {
  const Mat& vx = t.value(x);
  const Mat& vr = t.value(row);
  require(vr.rows() == 1 && vr.cols() == vx.cols(),
          "add_row_broadcast: row must be 1 x cols(x)");
  Mat out = vx;
  out.rowwise() += vr.row(0);
  const bool rg = any_grad(t, {x, row});
  Var v = t.push(std::move(out), rg);
  if (rg) {
    t.set_backward(v, [v, x, row](Tape& tp) {
      const Mat& g = tp.raw_grad(v);
      tp.accumulate(x, g);
      if (tp.requires_grad(row)) tp.accumulate(row, g.colwise().sum());
    });
  }
  return v;
}

Var relu(Tape& t, Var x) {
  const bool rg = t.requires_grad(x);
  Var out = t.push(t.value(x).cwiseMax(0.0), rg);
  if (rg) {
    t.set_backward(out, [out, x](Tape& tp) {
      const Mat mask = (tp.value(x).array() > 0.0).cast<double>();
      tp.accumulate(x, tp.raw_grad(out).cwiseProduct(mask));
    });
  }
  return out;
}

Var gelu(Tape& t, Var x) {
  // exact erf form; smooth everywhere, which keeps finite differences honest
  const Mat& vx = t.value(x);
  Mat out = vx.unaryExpr(
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); });
  const bool rg = t.requires_grad(x);
  Var v = t.push(std::move(out), rg);
  if (rg) {
    t.set_backward(v, [v, x](Tape& tp) {
      const Mat deriv = tp.value(x).unaryExpr([](double u) {
        const double cdf = 0.5 * (1.0 + std::erf(u * M_SQRT1_2));
        const double pdf = std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI);
        return cdf + u * pdf;
      });
      tp.accumulate(x, tp.raw_grad(v).cwiseProduct(deriv));
    });
  }
  return v;
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Mat& vx = t.value(x);
  const int d = static_cast<int>(vx.cols());
  require(t.value(gain).rows() == 1 && t.value(gain).cols() == d,
          "layer_norm: gain must be 1 x D");
  require(t.value(bias).rows() == 1 && t.value(bias).cols() == d,
          "layer_norm: bias must be 1 x D");

  auto xhat = std::make_shared<Mat>(vx.rows(), d);
  auto inv_std = std::make_shared<Eigen::VectorXd>(vx.rows());
  for (int r = 0; r < vx.rows(); ++r) {
    const double mu = vx.row(r).mean();
    const double var = (vx.row(r).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(r) = is;
    xhat->row(r) = (vx.row(r).array() - mu) * is;
  }
  Mat out = (xhat->array().rowwise() * t.value(gain).row(0).array()).rowwise() +
            t.value(bias).row(0).array();

  const bool rg = any_grad(t, {x, gain, bias});
  Var v = t.push(std::move(out), rg);
  if (rg) {
    t.set_backward(v, [v, x, gain, bias, xhat, inv_std, d](Tape& tp) {
      const Mat& g = tp.raw_grad(v);
      if (tp.requires_grad(gain)) {
        tp.accumulate(gain, g.cwiseProduct(*xhat).colwise().sum());
      }
      if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
      if (tp.requires_grad(x)) {
        Mat dx(g.rows(), d);
        const auto& gr = tp.value(gain).row(0);
        for (int r = 0; r < g.rows(); ++r) {
          const Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(gr);
          const double m1 = dxhat.mean();
          const double m2 = dxhat.cwiseProduct(xhat->row(r)).mean();
          dx.row(r) =
              ((dxhat.array() - m1) - xhat->row(r).array() * m2) * (*inv_std)(r);
        }
        tp.accumulate(x, dx);
      }
    });
  }
  return v;
}

Var batch_norm(Tape& t, Var x, Var gain, Var bias, Mat* running_mean,
               Mat* running_var, bool train, double momentum, double eps) {
  const Mat& vx = t.value(x);
  const int rows = static_cast<int>(vx.rows());
  const int d = static_cast<int>(vx.cols());
  require(t.value(gain).cols() == d && t.value(bias).cols() == d,
          "batch_norm: gain/bias must be 1 x D");
  require(running_mean && running_var && running_mean->cols() == d &&
              running_var->cols() == d,
          "batch_norm: running buffers must be 1 x D");

  auto xhat = std::make_shared<Mat>(rows, d);
  auto inv_std = std::make_shared<Eigen::RowVectorXd>(d);

  if (train) {
    const Eigen::RowVectorXd mu = vx.colwise().mean();
    Eigen::RowVectorXd var(d);
    for (int c = 0; c < d; ++c) {
      var(c) = (vx.col(c).array() - mu(c)).square().mean();
    }
    for (int c = 0; c < d; ++c) (*inv_std)(c) = 1.0 / std::sqrt(var(c) + eps);
    *xhat = (vx.rowwise() - mu).array().rowwise() * inv_std->array();

    const double unbias = rows > 1 ? static_cast<double>(rows) / (rows - 1) : 1.0;
    running_mean->row(0) = (1.0 - momentum) * running_mean->row(0) + momentum * mu;
    running_var->row(0) =
        (1.0 - momentum) * running_var->row(0) + momentum * (var * unbias);
  } else {
    for (int c = 0; c < d; ++c) {
      (*inv_std)(c) = 1.0 / std::sqrt((*running_var)(0, c) + eps);
    }
    *xhat = (vx.rowwise() - running_mean->row(0)).array().rowwise() * inv_std->array();
  }

  Mat out = (xhat->array().rowwise() * t.value(gain).row(0).array()).rowwise() +
            t.value(bias).row(0).array();
  const bool rg = any_grad(t, {x, gain, bias});
  Var v = t.push(std::move(out), rg);
  if (rg) {
    t.set_backward(v, [v, x, gain, bias, xhat, inv_std, train, rows](Tape& tp) {
      const Mat& g = tp.raw_grad(v);
      if (tp.requires_grad(gain)) {
        tp.accumulate(gain, g.cwiseProduct(*xhat).colwise().sum());
      }
      if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
      if (!tp.requires_grad(x)) return;

      const auto& gr = tp.value(gain).row(0);
      if (!train) {
        Mat dx = g.array().rowwise() * (gr.array() * inv_std->array());
        tp.accumulate(x, dx);
        return;
      }
      // train mode: batch statistics participate in the gradient
      Mat dxhat = g.array().rowwise() * gr.array();
      const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum_dxhat_xhat =
          dxhat.cwiseProduct(*xhat).colwise().sum();
      Mat dx(g.rows(), g.cols());
      const double n = static_cast<double>(rows);
      for (int r = 0; r < g.rows(); ++r) {
        dx.row(r) = (dxhat.row(r).array() * n - sum_dxhat.array() -
                     xhat->row(r).array() * sum_dxhat_xhat.array()) *
                    inv_std->array() / n;
      }
      tp.accumulate(x, dx);
    });
  }
  return v;
}

Var dropout(Tape& t, Var x, double rate, bool train, Rng* rng) {
  if (!train || rate <= 0.0) {
    // identity passthrough node keeps graph structure uniform
    const bool rg = t.requires_grad(x);
    Var out = t.push(t.value(x), rg);
    if (rg) {
      t.set_backward(out, [out, x](Tape& tp) { tp.accumulate(x, tp.raw_grad(out)); });
    }
    return out;
  }
  require(rate < 1.0, "dropout: rate must be < 1");
  require(rng != nullptr, "dropout: rng required in train mode");
  const Mat& vx = t.value(x);
  auto mask = std::make_shared<Mat>(vx.rows(), vx.cols());
  const double keep = 1.0 - rate;
  for (int r = 0; r < vx.rows(); ++r) {
    for (int c = 0; c < vx.cols(); ++c) {
      (*mask)(r, c) = rng->uniform01() < rate ? 0.0 : 1.0 / keep;
    }
  }
  const bool rg = t.requires_grad(x);
  Var out = t.push(vx.cwiseProduct(*mask), rg);
  if (rg) {
    t.set_backward(out, [out, x, mask](Tape& tp) {
      tp.accumulate(x, tp.raw_grad(out).cwiseProduct(*mask));
    });
  }
  return out;
}

Var gather_rows(Tape& t, Var x, std::vector<int> rows) {
  const Mat& vx = t.value(x);
  Mat out(static_cast<int>(rows.size()), vx.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < vx.rows(), "gather_rows: index out of range");
    out.row(static_cast<int>(i)) = vx.row(rows[i]);
  }
  const bool rg = t.requires_grad(x);
  Var v = t.push(std::move(out), rg);
  if (rg) {
    auto idx = std::make_shared<std::vector<int>>(std::move(rows));
    t.set_backward(v, [v, x, idx](Tape& tp) {
      const Mat& g = tp.raw_grad(v);
      Mat dx = Mat::Zero(tp.value(x).rows(), tp.value(x).cols());
      for (std::size_t i = 0; i < idx->size(); ++i) {
        dx.row((*idx)[i]) += g.row(static_cast<int>(i));
      }
      tp.accumulate(x, dx);
    });
  }
  return v;
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Mat& va = t.value(a);
  const Mat& vb = t.value(b);
  require(va.rows() == vb.rows(), "concat_cols: row count differs");
  const int ca = static_cast<int>(va.cols());
  const int cb = static_cast<int>(vb.cols());
  Mat out(va.rows(), ca + cb);
  out.leftCols(ca) = va;
  out.rightCols(cb) = vb;
  const bool rg = any_grad(t, {a, b});
  Var v = t.push(std::move(out), rg);
  if (rg) {
    t.set_backward(v, [v, a, b, ca, cb](Tape& tp) {
      const Mat& g = tp.raw_grad(v);
      tp.accumulate(a, g.leftCols(ca));
      tp.accumulate(b, g.rightCols(cb));
    });
  }
  return v;
}

Var concat_rows(Tape& t, Var a, Var b) {
  const Mat& va = t.value(a);
  const Mat& vb = t.value(b);
  require(va.cols() == vb.cols(), "concat_rows: column count differs");
  const int ra = static_cast<int>(va.rows());
  const int rb = static_cast<int>(vb.rows());
  Mat out(ra + rb, va.cols());
  out.topRows(ra) = va;
  out.bottomRows(rb) = vb;
  const bool rg = any_grad(t, {a, b});
  Var v = t.push(std::move(out), rg);
  if (rg) {
    t.set_backward(v, [v, a, b, ra, rb](Tape& tp) {
      const Mat& g = tp.raw_grad(v);
      tp.accumulate(a, g.topRows(ra));
      tp.accumulate(b, g.bottomRows(rb));
    });
  }
  return v;
}

Var group_max_pool(Tape& t, Var x, int group_size) {
  const Mat& vx = t.value(x);
  require(group_size >= 1 && vx.rows() % group_size == 0,
          "group_max_pool: rows not divisible by group size");
  const int groups = static_cast<int>(vx.rows()) / group_size;
  Mat out(groups, vx.cols());
  auto argmax = std::make_shared<Eigen::MatrixXi>(groups, vx.cols());
  for (int g = 0; g < groups; ++g) {
    for (int c = 0; c < vx.cols(); ++c) {
      int best = g * group_size;
      for (int r = g * group_size + 1; r < (g + 1) * group_size; ++r) {
        if (vx(r, c) > vx(best, c)) best = r;  // ties keep the lowest row
      }
      (*argmax)(g, c) = best;
      out(g, c) = vx(best, c);
    }
  }
  const bool rg = t.requires_grad(x);
  Var v = t.push(std::move(out), rg);
  if (rg) {
    t.set_backward(v, [v, x, argmax](Tape& tp) {
      const Mat& g = tp.raw_grad(v);
      Mat dx = Mat::Zero(tp.value(x).rows(), tp.value(x).cols());
      for (int gi = 0; gi < g.rows(); ++gi) {
        for (int c = 0; c < g.cols(); ++c) {
          dx((*argmax)(gi, c), c) += g(gi, c);
        }
      }
      tp.accumulate(x, dx);
    });
  }
  return v;
}

Var group_mean_pool(Tape& t, Var x, int group_size) {
  const Mat& vx = t.value(x);
  require(group_size >= 1 && vx.rows() % group_size == 0,
          "group_mean_pool: rows not divisible by group size");
  const int groups = static_cast<int>(vx.rows()) / group_size;
  Mat out(groups, vx.cols());
  for (int g = 0; g < groups; ++g) {
    out.row(g) = vx.middleRows(g * group_size, group_size).colwise().mean();
  }
  const bool rg = t.requires_grad(x);
  Var v = t.push(std::move(out), rg);
  if (rg) {
    t.set_backward(v, [v, x, group_size](Tape& tp) {
      const Mat& g = tp.raw_grad(v);
      Mat dx(tp.value(x).rows(), tp.value(x).cols());
      const double inv = 1.0 / group_size;
      for (int gi = 0; gi < g.rows(); ++gi) {
        for (int r = 0; r < group_size; ++r) {
          dx.row(gi * group_size + r) = g.row(gi) * inv;
        }
      }
      tp.accumulate(x, dx);
    });
  }
  return v;
}

Var block_self_attention(Tape& t, Var q, Var k, Var v, int block_size, int num_heads) {
  const Mat& vq = t.value(q);
  const Mat& vk = t.value(k);
  const Mat& vv = t.value(v);
  const int rows = static_cast<int>(vq.rows());
  const int dim = static_cast<int>(vq.cols());
  require(vk.rows() == rows && vv.rows() == rows && vk.cols() == dim &&
              vv.cols() == dim,
          "attention: q/k/v shapes differ");
  require(block_size >= 1 && rows % block_size == 0,
          "attention: rows not divisible by block size");
  require(num_heads >= 1 && dim % num_heads == 0,
          "attention: dim not divisible by heads");

  const int blocks = rows / block_size;
  const int head_dim = dim / num_heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  // cache the softmax matrices for backward: blocks x heads, each S x S
  auto attn = std::make_shared<std::vector<Mat>>();
  attn->reserve(static_cast<std::size_t>(blocks) * num_heads);

  Mat out(rows, dim);
  for (int b = 0; b < blocks; ++b) {
    const int r0 = b * block_size;
    for (int h = 0; h < num_heads; ++h) {
      const int c0 = h * head_dim;
      const auto qb = vq.block(r0, c0, block_size, head_dim);
      const auto kb = vk.block(r0, c0, block_size, head_dim);
      const auto vb = vv.block(r0, c0, block_size, head_dim);
      Mat scores = att_scale * (qb * kb.transpose());
      for (int r = 0; r < block_size; ++r) {
        const double m = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - m).exp();
        scores.row(r) /= scores.row(r).sum();
      }
      out.block(r0, c0, block_size, head_dim) = scores * vb;
      attn->push_back(std::move(scores));
    }
  }

  const bool rg = any_grad(t, {q, k, v});
  Var result = t.push(std::move(out), rg);
  if (rg) {
    t.set_backward(result, [result, q, k, v, attn, blocks, block_size, num_heads,
                            head_dim, att_scale](Tape& tp) {
      const Mat& g = tp.raw_grad(result);
      const Mat& vq = tp.value(q);
      const Mat& vk = tp.value(k);
      const Mat& vv = tp.value(v);
      Mat dq = Mat::Zero(vq.rows(), vq.cols());
      Mat dk = Mat::Zero(vk.rows(), vk.cols());
      Mat dv = Mat::Zero(vv.rows(), vv.cols());
      for (int b = 0; b < blocks; ++b) {
        const int r0 = b * block_size;
        for (int h = 0; h < num_heads; ++h) {
          const int c0 = h * head_dim;
          const Mat& a = (*attn)[static_cast<std::size_t>(b) * num_heads + h];
          const auto gb = g.block(r0, c0, block_size, head_dim);
          const auto qb = vq.block(r0, c0, block_size, head_dim);
          const auto kb = vk.block(r0, c0, block_size, head_dim);
          const auto vb = vv.block(r0, c0, block_size, head_dim);

          dv.block(r0, c0, block_size, head_dim) += a.transpose() * gb;
          Mat da = gb * vb.transpose();
          // softmax Jacobian row-wise: ds = a .* (da - rowdot(da, a))
          Mat ds(block_size, block_size);
          for (int r = 0; r < block_size; ++r) {
            const double dot = da.row(r).dot(a.row(r));
            ds.row(r) = a.row(r).array() * (da.row(r).array() - dot);
          }
          dq.block(r0, c0, block_size, head_dim) += att_scale * (ds * kb);
          dk.block(r0, c0, block_size, head_dim) += att_scale * (ds.transpose() * qb);
        }
      }
      tp.accumulate(q, dq);
      tp.accumulate(k, dk);
      tp.accumulate(v, dv);
    });
  }
  return result;
}

Var rows_to_points(Tape& t, Var x, int points_per_row) {
  const Mat& vx = t.value(x);
  require(vx.cols() == 3 * points_per_row, "rows_to_points: cols must be 3k");
  const int rows = static_cast<int>(vx.rows());
  Mat out(rows * points_per_row, 3);
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < points_per_row; ++j) {
      for (int d = 0; d < 3; ++d) out(r * points_per_row + j, d) = vx(r, 3 * j + d);
    }
  }
  const bool rg = t.requires_grad(x);
  Var v = t.push(std::move(out), rg);
  if (rg) {
    t.set_backward(v, [v, x, points_per_row](Tape& tp) {
      const Mat& g = tp.raw_grad(v);
      const int rows = static_cast<int>(tp.value(x).rows());
      Mat dx(rows, 3 * points_per_row);
      for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < points_per_row; ++j) {
          for (int d = 0; d < 3; ++d) dx(r, 3 * j + d) = g(r * points_per_row + j, d);
        }
      }
      tp.accumulate(x, dx);
    });
  }
  return v;
}

Var weighted_sum(Tape& t, Var x, Mat weights) {
  const Mat& vx = t.value(x);
  require(vx.rows() == weights.rows() && vx.cols() == weights.cols(),
          "weighted_sum: shape mismatch");
  Mat out(1, 1);
  out(0, 0) = vx.cwiseProduct(weights).sum();
  const bool rg = t.requires_grad(x);
  Var v = t.push(std::move(out), rg);
  if (rg) {
    auto w = std::make_shared<Mat>(std::move(weights));
    t.set_backward(v, [v, x, w](Tape& tp) {
      tp.accumulate(x, *w * tp.raw_grad(v)(0, 0));
    });
  }
  return v;
}

Var cross_entropy_mean(Tape& t, Var logits, const std::vector<int>& labels) {
  const Mat& vx = t.value(logits);
  const int rows = static_cast<int>(vx.rows());
  const int classes = static_cast<int>(vx.cols());
  require(static_cast<int>(labels.size()) == rows,
          "cross_entropy: one label per logits row");

  auto probs = std::make_shared<Mat>(rows, classes);
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    require(labels[r] >= 0 && labels[r] < classes, "cross_entropy: label out of range");
    const double m = vx.row(r).maxCoeff();
    const Eigen::RowVectorXd z = (vx.row(r).array() - m).exp();
    const double sum = z.sum();
    probs->row(r) = z / sum;
    total += std::log(sum) + m - vx(r, labels[r]);
  }
  Mat out(1, 1);
  out(0, 0) = total / rows;

  const bool rg = t.requires_grad(logits);
  auto lab = std::make_shared<std::vector<int>>(labels);
  Var v = t.push(std::move(out), rg);
  if (rg) {
    t.set_backward(v, [v, logits, probs, lab, rows](Tape& tp) {
      const double g = tp.raw_grad(v)(0, 0) / rows;
      Mat dx = *probs;
      for (int r = 0; r < rows; ++r) dx(r, (*lab)[r]) -= 1.0;
      tp.accumulate(logits, dx * g);
    });
  }
  return v;
}

Var chamfer_token_loss(Tape& t, Var pred_points,
                       const std::vector<std::vector<geom::Vec3>>& target_patches) {
  const Mat& vx = t.value(pred_points);
  const int tokens = static_cast<int>(target_patches.size());
  require(tokens >= 1, "chamfer_token_loss: no target tokens");
  const int k = static_cast<int>(vx.rows()) / tokens;
  require(vx.cols() == 3 && vx.rows() == tokens * k,
          "chamfer_token_loss: prediction rows must be tokens * k x 3");

  double total = 0.0;
  auto grads = std::make_shared<Mat>(Mat::Zero(vx.rows(), 3));
  std::vector<geom::Vec3> pred(k);
  std::vector<geom::Vec3> grad_pred;
  for (int tok = 0; tok < tokens; ++tok) {
    for (int j = 0; j < k; ++j) pred[j] = vx.row(tok * k + j).transpose();
    total += geom::chamfer_l2_grad(pred, target_patches[tok], &grad_pred, nullptr);
    for (int j = 0; j < k; ++j) {
      grads->row(tok * k + j) = grad_pred[j].transpose();
    }
  }
  Mat out(1, 1);
  out(0, 0) = total / tokens;

  const bool rg = t.requires_grad(pred_points);
  Var v = t.push(std::move(out), rg);
  if (rg) {
    t.set_backward(v, [v, pred_points, grads, tokens](Tape& tp) {
      const double g = tp.raw_grad(v)(0, 0) / tokens;
      tp.accumulate(pred_points, *grads * g);
    });
  }
  return v;
}

}  // namespace mate::net
