#pragma once

#include <vector>

#include "facade/math.hpp"

namespace facade {

// Small fully connected network with softplus hidden activations and a linear
// output layer. Parameters live in one flat vector so optimizers and
// checkpoints can treat the network as a single group. Output squashing
// (sigmoid, exp, ...) is applied by the owning field, not here.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> dims, Rng& rng) : dims_(std::move(dims)) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l)
      n += static_cast<std::size_t>(dims_[l + 1]) * dims_[l] + dims_[l + 1];
    theta_ = VecX::Zero(static_cast<Eigen::Index>(n));
    std::normal_distribution<real> gauss(0.0, 1.0);
    Eigen::Index off = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const int in = dims_[l], out = dims_[l + 1];
      const real scale = std::sqrt(2.0 / static_cast<real>(in + out));
      for (int i = 0; i < out * in; ++i) theta_[off + i] = scale * gauss(rng);
      off += static_cast<Eigen::Index>(out) * in + out;  // biases stay zero
    }
  }

  struct Workspace {
    std::vector<VecX> act;  // act[0] = input, act[l+1] = post-activation of layer l
    std::vector<VecX> pre;  // pre-activation of each layer
  };

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t num_layers() const { return dims_.size() - 1; }

  VecX& theta() { return theta_; }
  const VecX& theta() const { return theta_; }

  VecX forward(const VecX& in, Workspace& ws) const {
    ws.act.assign(1, in);
    ws.pre.clear();
    Eigen::Index off = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const int ni = dims_[l], no = dims_[l + 1];
      Eigen::Map<const MatX> W(theta_.data() + off, no, ni);
      Eigen::Map<const VecX> b(theta_.data() + off + no * ni, no);
      VecX z = W * ws.act.back() + b;
      ws.pre.push_back(z);
      if (l + 2 < dims_.size()) {
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = softplus(z[i]);
      }
      ws.act.push_back(std::move(z));
      off += static_cast<Eigen::Index>(no) * ni + no;
    }
    return ws.act.back();
  }

  // Accumulates parameter gradients into gtheta (if non-null) and writes the
  // gradient w.r.t. the input into din (if non-null). ws must hold the caches
  // of the matching forward call.
  void backward(const Workspace& ws, const VecX& dout, VecX* din, VecX* gtheta) const {
    VecX delta = dout;
    // Walk layers back to front; recompute each layer's theta offset.
    std::vector<Eigen::Index> offs(num_layers());
    Eigen::Index off = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      offs[l] = off;
      off += static_cast<Eigen::Index>(dims_[l + 1]) * dims_[l] + dims_[l + 1];
    }
    for (std::size_t li = num_layers(); li-- > 0;) {
      const int ni = dims_[li], no = dims_[li + 1];
      Eigen::Map<const MatX> W(theta_.data() + offs[li], no, ni);
      if (li + 1 < num_layers()) {
        // delta currently holds dL/d(post-activation); fold in softplus'.
        for (int i = 0; i < no; ++i) delta[i] *= softplus_deriv(ws.pre[li][i]);
      }
      if (gtheta) {
        Eigen::Map<MatX> gW(gtheta->data() + offs[li], no, ni);
        Eigen::Map<VecX> gb(gtheta->data() + offs[li] + no * ni, no);
        gW.noalias() += delta * ws.act[li].transpose();
        gb += delta;
      }
      if (li > 0 || din) {
        VecX dprev = W.transpose() * delta;
        if (li == 0) {
          if (din) *din = std::move(dprev);
        } else {
          delta = std::move(dprev);
        }
      }
    }
  }

 private:
  std::vector<int> dims_;
  VecX theta_;
};

}  // namespace facade
