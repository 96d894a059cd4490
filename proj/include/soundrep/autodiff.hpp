#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "soundrep/errors.hpp"
#include "soundrep/tensor.hpp"

namespace soundrep {

/// Running batch-norm statistics; owned by the model, updated as a side
/// effect of train-mode forward passes.
template <typename T>
struct BnStats {
  Tensor<T> mean;
  Tensor<T> var;

  static BnStats identity(int channels) {
    BnStats s;
    s.mean = Tensor<T>::zeros({channels});
    s.var = Tensor<T>::full({channels}, T(1));
    return s;
  }
};

/// Eager-forward reverse-mode tape.
///
/// Values are computed at op-construction time; backward() walks the recorded
/// graph in reverse. Each op caches the minimal state its backward needs
/// (masks, argmax indices, normalized activations), so large intermediate
/// values can be dropped early via release_value() -- the builder is
/// responsible for releasing only values no backward pass reads.
template <typename T>
class Tape {
 public:
  using NodeId = int;

  template <typename U>
  using MatMap = Eigen::Map<Eigen::Matrix<U, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  template <typename U>
  using ConstMatMap =
      Eigen::Map<const Eigen::Matrix<U, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  NodeId leaf(Tensor<T> value, bool requires_grad) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = requires_grad;
    node.is_leaf = true;
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  const Tensor<T>& value(NodeId id) const {
    const Node& n = node(id);
    if (n.value.released()) throw NnError("tape: value was released before use");
    return n.value;
  }

  /// Gradient of the loss w.r.t. node `id`. Zero tensor when the loss did not
  /// depend on it; error if the id does not belong to this tape.
  const Tensor<T>& grad(NodeId id) {
    Node& n = node(id);
    if (!ran_backward_) throw NnError("tape: backward() has not run");
    if (n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
    return n.grad;
  }

  /// Drops a node's forward value to reclaim memory.
  void release_value(NodeId id) { node(id).value.release(); }

  void backward(NodeId loss_id) {
    Node& loss = node(loss_id);
    if (loss.value.numel() != 1) throw NnError("backward: loss must be a scalar");
    loss.grad = Tensor<T>::full({1}, T(1));
    for (NodeId id = loss_id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.grad.data.empty() || !n.backward_fn) continue;
      if (n.needs_grad) n.backward_fn(*this);
      n.backward_fn = nullptr;
      if (!n.is_leaf) {
        n.grad.release();
        n.value.release();
      }
    }
    ran_backward_ = true;
  }

  // ---------------------------------------------------------------- conv2d
  /// 3x3 convolution, stride 1, zero padding 1 (same-size output).
  /// x: [B,C,H,W], w: [O,C,3,3], b: [O] -> [B,O,H,W].
  NodeId conv2d(NodeId x_id, NodeId w_id, NodeId b_id) {
    const Tensor<T>& x = value(x_id);
    const Tensor<T>& w = value(w_id);
    const Tensor<T>& b = value(b_id);
    if (x.ndim() != 4 || w.ndim() != 4 || w.dim(2) != 3 || w.dim(3) != 3) {
      throw NnError("conv2d: expected x[B,C,H,W], w[O,C,3,3]");
    }
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0);
    if (w.dim(1) != C) throw NnError("conv2d: channel mismatch");
    if (b.numel() != O) throw NnError("conv2d: bias size mismatch");

    Tensor<T> out = Tensor<T>::uninit({B, O, H, W});
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    const int ck = C * 9;
    std::vector<T, detail::uninit_allocator<T>> cols(static_cast<std::size_t>(hw) * ck);
    ConstMatMap<T> wm(w.ptr(), O, ck);
    for (int bi = 0; bi < B; ++bi) {
      im2col(x.ptr() + static_cast<std::int64_t>(bi) * C * hw, C, H, W, cols.data());
      ConstMatMap<T> cm(cols.data(), ck, hw);
      MatMap<T> om(out.ptr() + static_cast<std::int64_t>(bi) * O * hw, O, hw);
      for (int o = 0; o < O; ++o) om.row(o).array() = b[o];  // bias seed, GEMM accumulates
      om.noalias() += wm * cm;
    }

    return make_node(std::move(out), {x_id, w_id, b_id}, [x_id, w_id, b_id, B, C, H, W, O](
                                                             Tape& t, Node& self) {
      const Tensor<T>& x = t.value(x_id);
      const Tensor<T>& w = t.value(w_id);
      const std::int64_t hw = static_cast<std::int64_t>(H) * W;
      const int ck = C * 9;
      Tensor<T>* dx = t.grad_target(x_id);
      Tensor<T>* dw = t.grad_target(w_id);
      Tensor<T>* db = t.grad_target(b_id);
      std::vector<T, detail::uninit_allocator<T>> cols(static_cast<std::size_t>(hw) * ck);
      std::vector<T, detail::uninit_allocator<T>> dcols(static_cast<std::size_t>(hw) * ck);
      ConstMatMap<T> wm(w.ptr(), O, ck);
      for (int bi = 0; bi < B; ++bi) {
        ConstMatMap<T> dom(self.grad.ptr() + static_cast<std::int64_t>(bi) * O * hw, O, hw);
        im2col(x.ptr() + static_cast<std::int64_t>(bi) * C * hw, C, H, W, cols.data());
        ConstMatMap<T> cm(cols.data(), ck, hw);
        if (dw) {
          MatMap<T> dwm(dw->ptr(), O, ck);
          dwm.noalias() += dom * cm.transpose();
        }
        if (db) {
          for (int o = 0; o < O; ++o) (*db)[o] += dom.row(o).sum();
        }
        if (dx) {
          MatMap<T> dcm(dcols.data(), ck, hw);
          dcm.noalias() = wm.transpose() * dom;
          col2im_add(dcols.data(), C, H, W,
                     dx->ptr() + static_cast<std::int64_t>(bi) * C * hw);
        }
      }
    });
  }

  // ----------------------------------------------------------------- relu
  NodeId relu(NodeId x_id) {
    const Tensor<T>& x = value(x_id);
    Tensor<T> out = Tensor<T>::uninit(x.shape);
    auto mask = std::make_shared<std::vector<std::uint8_t, detail::uninit_allocator<std::uint8_t>>>(
        out.data.size());
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      const bool pos = x.data[i] > T(0);
      (*mask)[i] = pos;
      out.data[i] = pos ? x.data[i] : T(0);
    }
    return make_node(std::move(out), {x_id}, [x_id, mask](Tape& t, Node& self) {
      Tensor<T>* dx = t.grad_target(x_id);
      if (!dx) return;
      for (std::size_t i = 0; i < dx->data.size(); ++i) {
        if ((*mask)[i]) dx->data[i] += self.grad.data[i];
      }
    });
  }

  // ------------------------------------------------------------- max pools
  NodeId maxpool2x2(NodeId x_id) {
    const Tensor<T>& x = value(x_id);
    if (x.ndim() != 4) throw NnError("maxpool2x2: expected [B,C,H,W]");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = H / 2, Wo = W / 2;
    if (Ho == 0 || Wo == 0) throw NnError("maxpool2x2: input too small");
    Tensor<T> out = Tensor<T>::uninit({B, C, Ho, Wo});
    // Per-plane argmax offsets (int32 is plenty for one plane).
    auto argmax =
        std::make_shared<std::vector<std::int32_t, detail::uninit_allocator<std::int32_t>>>(
            out.data.size());
    std::int64_t oi = 0;
    for (int bc = 0; bc < B * C; ++bc) {
      const T* plane = x.ptr() + static_cast<std::int64_t>(bc) * H * W;
      for (int i = 0; i < Ho; ++i) {
        for (int j = 0; j < Wo; ++j, ++oi) {
          std::int32_t best = static_cast<std::int32_t>(2 * i) * W + 2 * j;
          T best_v = plane[best];
          const std::int32_t cand[3] = {best + 1, best + W, best + W + 1};
          for (std::int32_t c : cand) {
            if (plane[c] > best_v) {
              best_v = plane[c];
              best = c;
            }
          }
          out.data[static_cast<std::size_t>(oi)] = best_v;
          (*argmax)[static_cast<std::size_t>(oi)] = best;
        }
      }
    }
    const std::int64_t plane_sz = static_cast<std::int64_t>(H) * W;
    const std::int64_t out_plane = static_cast<std::int64_t>(Ho) * Wo;
    return make_node(std::move(out), {x_id}, [x_id, argmax, plane_sz, out_plane](Tape& t,
                                                                                 Node& self) {
      Tensor<T>* dx = t.grad_target(x_id);
      if (!dx) return;
      for (std::size_t i = 0; i < argmax->size(); ++i) {
        const std::int64_t plane = static_cast<std::int64_t>(i) / out_plane;
        dx->data[static_cast<std::size_t>(plane * plane_sz + (*argmax)[i])] += self.grad.data[i];
      }
    });
  }

  /// [B,C,H,W] -> [B,C], max over the spatial extent.
  NodeId global_maxpool(NodeId x_id) {
    const Tensor<T>& x = value(x_id);
    if (x.ndim() != 4) throw NnError("global_maxpool: expected [B,C,H,W]");
    const int B = x.dim(0), C = x.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
    Tensor<T> out({B, C});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.data.size());
    for (int bc = 0; bc < B * C; ++bc) {
      const T* plane = x.ptr() + bc * hw;
      std::int64_t best = 0;
      for (std::int64_t i = 1; i < hw; ++i) {
        if (plane[i] > plane[best]) best = i;
      }
      out.data[static_cast<std::size_t>(bc)] = plane[best];
      (*argmax)[static_cast<std::size_t>(bc)] = bc * hw + best;
    }
    return make_node(std::move(out), {x_id}, [x_id, argmax](Tape& t, Node& self) {
      Tensor<T>* dx = t.grad_target(x_id);
      if (!dx) return;
      for (std::size_t i = 0; i < argmax->size(); ++i) {
        dx->data[static_cast<std::size_t>((*argmax)[i])] += self.grad.data[i];
      }
    });
  }

  /// Mean over the spatial extent (alternative pooling, config-exposed).
  NodeId global_avgpool(NodeId x_id) {
    const Tensor<T>& x = value(x_id);
    if (x.ndim() != 4) throw NnError("global_avgpool: expected [B,C,H,W]");
    const int B = x.dim(0), C = x.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
    Tensor<T> out({B, C});
    for (int bc = 0; bc < B * C; ++bc) {
      const T* plane = x.ptr() + bc * hw;
      T acc = T(0);
      for (std::int64_t i = 0; i < hw; ++i) acc += plane[i];
      out.data[static_cast<std::size_t>(bc)] = acc / static_cast<T>(hw);
    }
    return make_node(std::move(out), {x_id}, [x_id, hw](Tape& t, Node& self) {
      Tensor<T>* dx = t.grad_target(x_id);
      if (!dx) return;
      const T inv = T(1) / static_cast<T>(hw);
      for (std::size_t bc = 0; bc < self.grad.data.size(); ++bc) {
        const T g = self.grad.data[bc] * inv;
        T* plane = dx->ptr() + static_cast<std::int64_t>(bc) * hw;
        for (std::int64_t i = 0; i < hw; ++i) plane[i] += g;
      }
    });
  }

  // ---------------------------------------------------------------- dense
  /// x: [B,I], w: [O,I], b: [O] -> [B,O].
  NodeId dense(NodeId x_id, NodeId w_id, NodeId b_id) {
    const Tensor<T>& x = value(x_id);
    const Tensor<T>& w = value(w_id);
    const Tensor<T>& b = value(b_id);
    if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1)) {
      throw NnError("dense: shape mismatch " + shape_str(x.shape) + " vs " + shape_str(w.shape));
    }
    const int B = x.dim(0), I = x.dim(1), O = w.dim(0);
    if (b.numel() != O) throw NnError("dense: bias size mismatch");
    Tensor<T> out({B, O});
    ConstMatMap<T> xm(x.ptr(), B, I);
    ConstMatMap<T> wm(w.ptr(), O, I);
    MatMap<T> om(out.ptr(), B, O);
    om.noalias() = xm * wm.transpose();
    for (int o = 0; o < O; ++o) om.col(o).array() += b[o];

    return make_node(std::move(out), {x_id, w_id, b_id},
                     [x_id, w_id, b_id, B, I, O](Tape& t, Node& self) {
                       ConstMatMap<T> dym(self.grad.ptr(), B, O);
                       if (Tensor<T>* dx = t.grad_target(x_id)) {
                         ConstMatMap<T> wm(t.value(w_id).ptr(), O, I);
                         MatMap<T> dxm(dx->ptr(), B, I);
                         dxm.noalias() += dym * wm;
                       }
                       if (Tensor<T>* dw = t.grad_target(w_id)) {
                         ConstMatMap<T> xm(t.value(x_id).ptr(), B, I);
                         MatMap<T> dwm(dw->ptr(), O, I);
                         dwm.noalias() += dym.transpose() * xm;
                       }
                       if (Tensor<T>* db = t.grad_target(b_id)) {
                         for (int o = 0; o < O; ++o) (*db)[o] += dym.col(o).sum();
                       }
                     });
  }

  // ------------------------------------------------------------ batch norm
  /// Batch norm over [B,C,H,W] (stats per channel across B*H*W) or [B,C]
  /// (stats per feature across B). Train mode uses batch statistics and
  /// updates `running`; eval mode normalizes with the running statistics.
  NodeId batchnorm(NodeId x_id, NodeId gamma_id, NodeId beta_id, BnStats<T>* running, bool train,
                   T momentum = T(0.1), T eps = T(1e-5)) {
    return bn_impl(x_id, gamma_id, beta_id, running, train, momentum, eps, /*fuse_relu=*/false);
  }

  /// batchnorm followed by relu in one pass (one fewer full-size read/write
  /// than composing the two ops; the encoder blocks use this).
  NodeId batchnorm_relu(NodeId x_id, NodeId gamma_id, NodeId beta_id, BnStats<T>* running,
                        bool train, T momentum = T(0.1), T eps = T(1e-5)) {
    return bn_impl(x_id, gamma_id, beta_id, running, train, momentum, eps, /*fuse_relu=*/true);
  }

 private:
  NodeId bn_impl(NodeId x_id, NodeId gamma_id, NodeId beta_id, BnStats<T>* running, bool train,
                 T momentum, T eps, bool fuse_relu) {
    const Tensor<T>& x = value(x_id);
    if (x.ndim() != 4 && x.ndim() != 2) throw NnError("batchnorm: expected rank 2 or 4");
    const int B = x.dim(0);
    const int C = x.dim(1);
    const std::int64_t hw = x.ndim() == 4 ? static_cast<std::int64_t>(x.dim(2)) * x.dim(3) : 1;
    const std::int64_t n_stat = static_cast<std::int64_t>(B) * hw;
    if (train && B < 2) throw NnError("batchnorm: train mode requires batch size >= 2");
    const Tensor<T>& gamma = value(gamma_id);
    const Tensor<T>& beta = value(beta_id);
    if (gamma.numel() != C || beta.numel() != C) throw NnError("batchnorm: affine size mismatch");
    if (running == nullptr) throw NnError("batchnorm: running stats required");

    Tensor<T> out = Tensor<T>::uninit(x.shape);
    auto xhat = std::make_shared<Tensor<T>>(Tensor<T>::uninit(x.shape));
    auto invstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(C));
    auto mask = fuse_relu
                    ? std::make_shared<std::vector<std::uint8_t, detail::uninit_allocator<std::uint8_t>>>(
                          x.data.size())
                    : nullptr;

    for (int c = 0; c < C; ++c) {
      T mean, var;
      if (train) {
        // Eight-lane blocked accumulation: vectorizable, and the summation
        // order is fixed so runs stay bitwise reproducible.
        T lanes[8] = {};
        for (int b = 0; b < B; ++b) {
          const T* p = x.ptr() + (static_cast<std::int64_t>(b) * C + c) * hw;
          std::int64_t i = 0;
          for (; i + 8 <= hw; i += 8) {
            for (int l = 0; l < 8; ++l) lanes[l] += p[i + l];
          }
          for (; i < hw; ++i) lanes[0] += p[i];
        }
        mean = (((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
                ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))) /
               static_cast<T>(n_stat);
        T lanes2[8] = {};
        for (int b = 0; b < B; ++b) {
          const T* p = x.ptr() + (static_cast<std::int64_t>(b) * C + c) * hw;
          std::int64_t i = 0;
          for (; i + 8 <= hw; i += 8) {
            for (int l = 0; l < 8; ++l) lanes2[l] += (p[i + l] - mean) * (p[i + l] - mean);
          }
          for (; i < hw; ++i) lanes2[0] += (p[i] - mean) * (p[i] - mean);
        }
        var = (((lanes2[0] + lanes2[1]) + (lanes2[2] + lanes2[3])) +
               ((lanes2[4] + lanes2[5]) + (lanes2[6] + lanes2[7]))) /
              static_cast<T>(n_stat);
        running->mean[c] = (T(1) - momentum) * running->mean[c] + momentum * mean;
        running->var[c] = (T(1) - momentum) * running->var[c] + momentum * var;
      } else {
        mean = running->mean[c];
        var = running->var[c];
      }
      const T is = T(1) / std::sqrt(var + eps);
      (*invstd)[static_cast<std::size_t>(c)] = is;
      const T g = gamma[c], be = beta[c];
      for (int b = 0; b < B; ++b) {
        const std::int64_t off = (static_cast<std::int64_t>(b) * C + c) * hw;
        const T* p = x.ptr() + off;
        T* xh = xhat->ptr() + off;
        T* o = out.ptr() + off;
        if (fuse_relu) {
          std::uint8_t* m = mask->data() + off;
          for (std::int64_t i = 0; i < hw; ++i) {
            xh[i] = (p[i] - mean) * is;
            const T v = g * xh[i] + be;
            m[i] = v > T(0);
            o[i] = v > T(0) ? v : T(0);
          }
        } else {
          for (std::int64_t i = 0; i < hw; ++i) {
            xh[i] = (p[i] - mean) * is;
            o[i] = g * xh[i] + be;
          }
        }
      }
    }

    return make_node(
        std::move(out), {x_id, gamma_id, beta_id},
        [x_id, gamma_id, beta_id, xhat, invstd, mask, train, B, C, hw, n_stat](Tape& t,
                                                                               Node& self) {
          const Tensor<T>& gamma = t.value(gamma_id);
          Tensor<T>* dx = t.grad_target(x_id);
          Tensor<T>* dgamma = t.grad_target(gamma_id);
          Tensor<T>* dbeta = t.grad_target(beta_id);
          const std::uint8_t* mask_ptr = mask ? mask->data() : nullptr;
          for (int c = 0; c < C; ++c) {
            T dy_lanes[8] = {}, dyx_lanes[8] = {};
            for (int b = 0; b < B; ++b) {
              const std::int64_t off = (static_cast<std::int64_t>(b) * C + c) * hw;
              const T* dy = self.grad.ptr() + off;
              const T* xh = xhat->ptr() + off;
              if (mask_ptr) {
                const std::uint8_t* m = mask_ptr + off;
                std::int64_t i = 0;
                for (; i + 8 <= hw; i += 8) {
                  for (int l = 0; l < 8; ++l) {
                    const T v = dy[i + l] * static_cast<T>(m[i + l]);
                    dy_lanes[l] += v;
                    dyx_lanes[l] += v * xh[i + l];
                  }
                }
                for (; i < hw; ++i) {
                  const T v = dy[i] * static_cast<T>(m[i]);
                  dy_lanes[0] += v;
                  dyx_lanes[0] += v * xh[i];
                }
              } else {
                std::int64_t i = 0;
                for (; i + 8 <= hw; i += 8) {
                  for (int l = 0; l < 8; ++l) {
                    dy_lanes[l] += dy[i + l];
                    dyx_lanes[l] += dy[i + l] * xh[i + l];
                  }
                }
                for (; i < hw; ++i) {
                  dy_lanes[0] += dy[i];
                  dyx_lanes[0] += dy[i] * xh[i];
                }
              }
            }
            const T sum_dy = ((dy_lanes[0] + dy_lanes[1]) + (dy_lanes[2] + dy_lanes[3])) +
                             ((dy_lanes[4] + dy_lanes[5]) + (dy_lanes[6] + dy_lanes[7]));
            const T sum_dy_xhat =
                ((dyx_lanes[0] + dyx_lanes[1]) + (dyx_lanes[2] + dyx_lanes[3])) +
                ((dyx_lanes[4] + dyx_lanes[5]) + (dyx_lanes[6] + dyx_lanes[7]));
            if (dgamma) (*dgamma)[c] += sum_dy_xhat;
            if (dbeta) (*dbeta)[c] += sum_dy;
            if (dx) {
              const T g = gamma[c];
              const T is = (*invstd)[static_cast<std::size_t>(c)];
              const T mean_dy = train ? sum_dy / static_cast<T>(n_stat) : T(0);
              const T mean_dy_xhat = train ? sum_dy_xhat / static_cast<T>(n_stat) : T(0);
              for (int b = 0; b < B; ++b) {
                const std::int64_t off = (static_cast<std::int64_t>(b) * C + c) * hw;
                const T* dy = self.grad.ptr() + off;
                const T* xh = xhat->ptr() + off;
                T* d = dx->ptr() + off;
                if (mask_ptr) {
                  const std::uint8_t* m = mask_ptr + off;
                  for (std::int64_t i = 0; i < hw; ++i) {
                    const T v = dy[i] * static_cast<T>(m[i]);
                    d[i] += g * is * (v - mean_dy - xh[i] * mean_dy_xhat);
                  }
                } else {
                  for (std::int64_t i = 0; i < hw; ++i) {
                    d[i] += g * is * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
                  }
                }
              }
            }
          }
        });
  }

 public:
  // --------------------------------------------------------- l2 row norm
  /// Normalizes every row of [B,D] to unit L2 norm, guarding zero rows with
  /// `eps` (a clamped row is scaled by 1/eps instead).
  NodeId l2_normalize_rows(NodeId x_id, T eps = T(1e-12)) {
    const Tensor<T>& x = value(x_id);
    if (x.ndim() != 2) throw NnError("l2_normalize_rows: expected [B,D]");
    const int B = x.dim(0), D = x.dim(1);
    Tensor<T> out({B, D});
    auto denom = std::make_shared<std::vector<T>>(static_cast<std::size_t>(B));
    auto clamped = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(B));
    auto y_cache = std::make_shared<Tensor<T>>(Tensor<T>({B, D}));
    for (int b = 0; b < B; ++b) {
      const T* row = x.ptr() + static_cast<std::int64_t>(b) * D;
      T norm2 = T(0);
      for (int d = 0; d < D; ++d) norm2 += row[d] * row[d];
      const T norm = std::sqrt(norm2);
      const T den = std::max(norm, eps);
      (*denom)[static_cast<std::size_t>(b)] = den;
      (*clamped)[static_cast<std::size_t>(b)] = norm < eps;
      T* o = out.ptr() + static_cast<std::int64_t>(b) * D;
      T* yc = y_cache->ptr() + static_cast<std::int64_t>(b) * D;
      for (int d = 0; d < D; ++d) {
        o[d] = row[d] / den;
        yc[d] = o[d];
      }
    }
    return make_node(std::move(out), {x_id},
                     [x_id, denom, clamped, y_cache, B, D](Tape& t, Node& self) {
                       Tensor<T>* dx = t.grad_target(x_id);
                       if (!dx) return;
                       for (int b = 0; b < B; ++b) {
                         const T* dy = self.grad.ptr() + static_cast<std::int64_t>(b) * D;
                         const T* y = y_cache->ptr() + static_cast<std::int64_t>(b) * D;
                         T* d = dx->ptr() + static_cast<std::int64_t>(b) * D;
                         const T den = (*denom)[static_cast<std::size_t>(b)];
                         if ((*clamped)[static_cast<std::size_t>(b)]) {
                           for (int k = 0; k < D; ++k) d[k] += dy[k] / den;
                           continue;
                         }
                         T dot = T(0);
                         for (int k = 0; k < D; ++k) dot += y[k] * dy[k];
                         for (int k = 0; k < D; ++k) d[k] += (dy[k] - y[k] * dot) / den;
                       }
                     });
  }

  // ------------------------------------------------------------- NT-Xent
  /// Normalized temperature-scaled cross entropy over 2N unit rows.
  /// `partner[i]` is i's positive; the denominator for row i runs over all
  /// rows except i itself. Returns the mean loss over all 2N ordered pairs.
  /// Row maxima are subtracted inside the softmax for f32-safe small
  /// temperatures.
  NodeId nt_xent(NodeId z_id, std::vector<int> partner, T tau) {
    if (tau <= T(0)) throw ConfigError("nt_xent.tau: must be > 0");
    const Tensor<T>& z = value(z_id);
    if (z.ndim() != 2) throw NnError("nt_xent: expected [2N,D]");
    const int R = z.dim(0), D = z.dim(1);
    if (static_cast<int>(partner.size()) != R) throw NnError("nt_xent: pairing size mismatch");
    for (int i = 0; i < R; ++i) {
      const int j = partner[static_cast<std::size_t>(i)];
      if (j < 0 || j >= R || j == i || partner[static_cast<std::size_t>(j)] != i) {
        throw NnError("nt_xent: pairing is not a perfect matching");
      }
    }
    for (int i = 0; i < R; ++i) {
      const T* row = z.ptr() + static_cast<std::int64_t>(i) * D;
      T norm2 = T(0);
      for (int d = 0; d < D; ++d) norm2 += row[d] * row[d];
      if (std::abs(std::sqrt(norm2) - T(1)) > T(1e-4)) {
        throw NnError("nt_xent: rows must be unit-norm within 1e-4");
      }
    }

    auto sims = std::make_shared<Tensor<T>>(Tensor<T>({R, R}));
    ConstMatMap<T> zm(z.ptr(), R, D);
    MatMap<T> sm(sims->ptr(), R, R);
    sm.noalias() = zm * zm.transpose();

    T total = T(0);
    for (int i = 0; i < R; ++i) {
      const T* srow = sims->ptr() + static_cast<std::int64_t>(i) * R;
      T row_max = -std::numeric_limits<T>::infinity();
      for (int v = 0; v < R; ++v) {
        if (v != i) row_max = std::max(row_max, srow[v] / tau);
      }
      T denom = T(0);
      for (int v = 0; v < R; ++v) {
        if (v != i) denom += std::exp(srow[v] / tau - row_max);
      }
      const int j = partner[static_cast<std::size_t>(i)];
      total += -(srow[j] / tau - row_max) + std::log(denom);
    }
    Tensor<T> out({1});
    out[0] = total / static_cast<T>(R);

    auto pairing = std::make_shared<std::vector<int>>(std::move(partner));
    return make_node(std::move(out), {z_id}, [z_id, sims, pairing, tau, R, D](Tape& t, Node& self) {
      Tensor<T>* dz = t.grad_target(z_id);
      if (!dz) return;
      const T upstream = self.grad[0];
      // dL/dS, with S = Z Z^T; G[i][v] = (P_iv - [v == partner(i)]) / (R*tau).
      Tensor<T> g({R, R});
      for (int i = 0; i < R; ++i) {
        const T* srow = sims->ptr() + static_cast<std::int64_t>(i) * R;
        T row_max = -std::numeric_limits<T>::infinity();
        for (int v = 0; v < R; ++v) {
          if (v != i) row_max = std::max(row_max, srow[v] / tau);
        }
        T denom = T(0);
        for (int v = 0; v < R; ++v) {
          if (v != i) denom += std::exp(srow[v] / tau - row_max);
        }
        T* grow = g.ptr() + static_cast<std::int64_t>(i) * R;
        for (int v = 0; v < R; ++v) {
          if (v == i) {
            grow[v] = T(0);
            continue;
          }
          const T p = std::exp(srow[v] / tau - row_max) / denom;
          grow[v] = p;
        }
        grow[(*pairing)[static_cast<std::size_t>(i)]] -= T(1);
      }
      const T scale = upstream / (static_cast<T>(R) * tau);
      // dZ = (G + G^T) Z.
      ConstMatMap<T> zm(t.value(z_id).ptr(), R, D);
      ConstMatMap<T> gm(g.ptr(), R, R);
      MatMap<T> dzm(dz->ptr(), R, D);
      dzm.noalias() += scale * ((gm + gm.transpose()) * zm);
    });
  }

  // ------------------------------------------------- softmax cross entropy
  /// Mean softmax cross entropy of [B,C] logits against integer labels.
  NodeId softmax_cross_entropy(NodeId logits_id, std::vector<int> labels) {
    const Tensor<T>& logits = value(logits_id);
    if (logits.ndim() != 2) throw NnError("softmax_ce: expected [B,C]");
    const int B = logits.dim(0), C = logits.dim(1);
    if (static_cast<int>(labels.size()) != B) throw NnError("softmax_ce: label count mismatch");

    auto probs = std::make_shared<Tensor<T>>(Tensor<T>({B, C}));
    T total = T(0);
    for (int b = 0; b < B; ++b) {
      const int y = labels[static_cast<std::size_t>(b)];
      if (y < 0 || y >= C) throw NnError("softmax_ce: label out of range");
      const T* row = logits.ptr() + static_cast<std::int64_t>(b) * C;
      T m = row[0];
      for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
      T denom = T(0);
      for (int c = 0; c < C; ++c) denom += std::exp(row[c] - m);
      T* prow = probs->ptr() + static_cast<std::int64_t>(b) * C;
      for (int c = 0; c < C; ++c) prow[c] = std::exp(row[c] - m) / denom;
      total += -(row[y] - m - std::log(denom));
    }
    Tensor<T> out({1});
    out[0] = total / static_cast<T>(B);

    auto labels_cache = std::make_shared<std::vector<int>>(std::move(labels));
    return make_node(std::move(out), {logits_id},
                     [logits_id, probs, labels_cache, B, C](Tape& t, Node& self) {
                       Tensor<T>* dl = t.grad_target(logits_id);
                       if (!dl) return;
                       const T scale = self.grad[0] / static_cast<T>(B);
                       for (int b = 0; b < B; ++b) {
                         const T* prow = probs->ptr() + static_cast<std::int64_t>(b) * C;
                         T* drow = dl->ptr() + static_cast<std::int64_t>(b) * C;
                         for (int c = 0; c < C; ++c) drow[c] += scale * prow[c];
                         drow[(*labels_cache)[static_cast<std::size_t>(b)]] -= scale;
                       }
                     });
  }

  // ------------------------------------------------------------- reducers
  NodeId sum(NodeId x_id) {
    const Tensor<T>& x = value(x_id);
    Tensor<T> out({1});
    T acc = T(0);
    for (const T& v : x.data) acc += v;
    out[0] = acc;
    return make_node(std::move(out), {x_id}, [x_id](Tape& t, Node& self) {
      Tensor<T>* dx = t.grad_target(x_id);
      if (!dx) return;
      for (T& v : dx->data) v += self.grad[0];
    });
  }

  /// Scalar projection sum(w .* x); used by gradient tests to build losses.
  NodeId weighted_sum(NodeId x_id, Tensor<T> weights) {
    const Tensor<T>& x = value(x_id);
    if (weights.data.size() != x.data.size()) throw NnError("weighted_sum: size mismatch");
    Tensor<T> out({1});
    T acc = T(0);
    for (std::size_t i = 0; i < x.data.size(); ++i) acc += weights.data[i] * x.data[i];
    out[0] = acc;
    auto w = std::make_shared<Tensor<T>>(std::move(weights));
    return make_node(std::move(out), {x_id}, [x_id, w](Tape& t, Node& self) {
      Tensor<T>* dx = t.grad_target(x_id);
      if (!dx) return;
      for (std::size_t i = 0; i < dx->data.size(); ++i) {
        dx->data[i] += self.grad[0] * w->data[i];
      }
    });
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad = false;
    bool is_leaf = false;
    std::function<void(Tape&)> backward_fn;
  };

  Node& node(NodeId id) {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
      throw NnError("tape: node id " + std::to_string(id) + " is not on this tape");
    }
    return nodes_[static_cast<std::size_t>(id)];
  }
  const Node& node(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
      throw NnError("tape: node id " + std::to_string(id) + " is not on this tape");
    }
    return nodes_[static_cast<std::size_t>(id)];
  }

  /// Gradient buffer of a parent, or nullptr when the parent does not need a
  /// gradient (allocated lazily, zero-filled).
  Tensor<T>* grad_target(NodeId id) {
    Node& n = node(id);
    if (!n.needs_grad) return nullptr;
    if (n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.value.shape.empty() ? std::vector<int>{} : n.value.shape);
    return &n.grad;
  }

  template <typename Fn>
  NodeId make_node(Tensor<T> value, std::vector<NodeId> parents, Fn&& backward) {
    Node n;
    n.value = std::move(value);
    for (NodeId p : parents) {
      if (node(p).needs_grad) n.needs_grad = true;
    }
    nodes_.push_back(std::move(n));
    const NodeId id = static_cast<NodeId>(nodes_.size()) - 1;
    Node& stored = nodes_.back();
    if (stored.needs_grad) {
      auto fn = std::forward<Fn>(backward);
      stored.backward_fn = [id, fn](Tape& t) { fn(t, t.node(id)); };
    }
    return id;
  }

  // im2col for a 3x3/pad-1 kernel, laid out [C*9, H*W] so every kernel offset
  // is one shifted copy of the input plane (contiguous spans, vectorizable).
  static void im2col(const T* x, int C, int H, int W, T* cols) {
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int c = 0; c < C; ++c) {
      const T* plane = x + static_cast<std::int64_t>(c) * hw;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          T* row = cols + (static_cast<std::int64_t>(c) * 9 + ky * 3 + kx) * hw;
          // Dest column range for which sx = w + kx - 1 stays in bounds.
          const int w0 = std::max(0, 1 - kx);
          const int len = W - std::max(0, 1 - kx) - std::max(0, kx - 1);
          const int src_off = kx - 1 + w0;
          for (int h = 0; h < H; ++h) {
            T* dst = row + static_cast<std::int64_t>(h) * W;
            const int sy = h + ky - 1;
            if (sy < 0 || sy >= H) {
              std::fill(dst, dst + W, T(0));
              continue;
            }
            if (w0 > 0) dst[0] = T(0);
            if (w0 + len < W) dst[W - 1] = T(0);
            const T* src = plane + static_cast<std::int64_t>(sy) * W + src_off;
            std::copy(src, src + len, dst + w0);
          }
        }
      }
    }
  }

  static void col2im_add(const T* cols, int C, int H, int W, T* dx) {
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int c = 0; c < C; ++c) {
      T* plane = dx + static_cast<std::int64_t>(c) * hw;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const T* row = cols + (static_cast<std::int64_t>(c) * 9 + ky * 3 + kx) * hw;
          const int w0 = std::max(0, 1 - kx);
          const int len = W - std::max(0, 1 - kx) - std::max(0, kx - 1);
          const int src_off = kx - 1 + w0;
          for (int h = 0; h < H; ++h) {
            const int sy = h + ky - 1;
            if (sy < 0 || sy >= H) continue;
            const T* src = row + static_cast<std::int64_t>(h) * W + w0;
            T* dst = plane + static_cast<std::int64_t>(sy) * W + src_off;
            for (int i = 0; i < len; ++i) dst[i] += src[i];
          }
        }
      }
    }
  }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace soundrep
