#pragma once

#include <Eigen/Dense>
#include <vector>

#include "recoverlab/errors.hpp"
#include "recoverlab/rng.hpp"

namespace recoverlab {

/// Small dense MLP, tanh hidden activations, linear output head. Forward and
/// reverse passes are written out by hand; batches are plain Eigen matrices
/// (one row per sample).
template <typename T>
struct DenseNet {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  std::vector<Mat> W;  // layer l maps (in_l) -> (out_l), stored (in_l x out_l)
  std::vector<Vec> b;

  int num_layers() const { return static_cast<int>(W.size()); }
  int input_dim() const { return W.empty() ? 0 : static_cast<int>(W.front().rows()); }
  int output_dim() const { return W.empty() ? 0 : static_cast<int>(W.back().cols()); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (int l = 0; l < num_layers(); ++l) n += W[l].size() + b[l].size();
    return n;
  }

  /// Activations kept for the reverse pass; h[0] is the input batch.
  struct Workspace {
    std::vector<Mat> h;
  };

  const Mat& forward(const Mat& X, Workspace& ws) const {
    if (X.cols() != input_dim()) throw ShapeMismatch("DenseNet::forward: input dim");
    ws.h.resize(num_layers() + 1);
    ws.h[0] = X;
    for (int l = 0; l < num_layers(); ++l) {
      ws.h[l + 1].noalias() = ws.h[l] * W[l];
      ws.h[l + 1].rowwise() += b[l].transpose();
      if (l + 1 < num_layers()) ws.h[l + 1] = ws.h[l + 1].array().tanh();
    }
    return ws.h.back();
  }

  Vec forward_one(const Vec& x) const {
    if (x.size() != input_dim()) throw ShapeMismatch("DenseNet::forward_one: input dim");
    Vec h = x;
    for (int l = 0; l < num_layers(); ++l) {
      Vec z = W[l].transpose() * h + b[l];
      h = (l + 1 < num_layers()) ? Vec(z.array().tanh()) : z;
    }
    return h;
  }

  struct Grads {
    std::vector<Mat> dW;
    std::vector<Vec> db;

    void init_like(const DenseNet& net) {
      dW.resize(net.num_layers());
      db.resize(net.num_layers());
      for (int l = 0; l < net.num_layers(); ++l) {
        dW[l] = Mat::Zero(net.W[l].rows(), net.W[l].cols());
        db[l] = Vec::Zero(net.b[l].size());
      }
    }
    void zero() {
      for (auto& g : dW) g.setZero();
      for (auto& g : db) g.setZero();
    }
    double squared_norm() const {
      double n = 0;
      for (const auto& g : dW) n += static_cast<double>(g.squaredNorm());
      for (const auto& g : db) n += static_cast<double>(g.squaredNorm());
      return n;
    }
    void scale(T s) {
      for (auto& g : dW) g *= s;
      for (auto& g : db) g *= s;
    }
  };

  /// Accumulates parameter gradients for upstream dY; exact reverse pass of
  /// forward(). ws must come from the matching forward call.
  void backward(const Workspace& ws, const Mat& dY, Grads& grads, Mat* dX = nullptr) const {
    if (dY.cols() != output_dim() || dY.rows() != ws.h[0].rows())
      throw ShapeMismatch("DenseNet::backward: upstream gradient shape");
    Mat dZ = dY;
    for (int l = num_layers() - 1; l >= 0; --l) {
      grads.dW[l].noalias() += ws.h[l].transpose() * dZ;
      grads.db[l] += dZ.colwise().sum().transpose();
      if (l > 0 || dX) {
        Mat dH = dZ * W[l].transpose();
        if (l > 0) {
          // through tanh: dz = dh * (1 - h^2)
          dZ = dH.array() * (T(1) - ws.h[l].array().square());
        } else if (dX) {
          *dX = dH;
        }
      }
    }
  }
};

/// Orthogonal initialization (QR of a Gaussian draw), hidden gain sqrt(2),
/// explicit gain for the output head. Deterministic in the rng stream.
template <typename T>
DenseNet<T> make_dense_net(const std::vector<int>& widths, Rng& rng, double head_gain) {
  if (widths.size() < 2) throw ShapeMismatch("make_dense_net: need at least two widths");
  DenseNet<T> net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l], out = widths[l + 1];
    Eigen::MatrixXd G(in, out);
    for (int i = 0; i < in; ++i)
      for (int j = 0; j < out; ++j) G(i, j) = rng.normal();
    // Orthonormal columns (or rows when out > in) from the thin QR factor.
    const bool tall = in >= out;
    Eigen::MatrixXd A = tall ? G : Eigen::MatrixXd(G.transpose());
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), A.cols());
    Eigen::MatrixXd R = qr.matrixQR().topRows(A.cols()).template triangularView<Eigen::Upper>();
    for (int c = 0; c < Q.cols(); ++c) {
      if (R(c, c) < 0) Q.col(c) = -Q.col(c);
    }
    Eigen::MatrixXd Wd = tall ? Q : Eigen::MatrixXd(Q.transpose());
    const double gain = (l + 2 == widths.size()) ? head_gain : std::sqrt(2.0);
    net.W.push_back((gain * Wd).template cast<T>());
    net.b.push_back(DenseNet<T>::Vec::Zero(out));
  }
  return net;
}

/// One bias-corrected Adam update of a parameter array. The kernel behind
/// AdamState; exposed for direct testing.
template <typename Derived1, typename Derived2, typename Derived3, typename Derived4>
void adam_update(Eigen::MatrixBase<Derived1>& param, const Eigen::MatrixBase<Derived2>& grad,
                 Eigen::MatrixBase<Derived3>& m, Eigen::MatrixBase<Derived4>& v, long step,
                 double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  using T = typename Derived1::Scalar;
  if (param.rows() != grad.rows() || param.cols() != grad.cols())
    throw ShapeMismatch("adam_update: parameter/gradient shape");
  m = T(beta1) * m + T(1 - beta1) * grad;
  v = T(beta2) * v.derived() + T(1 - beta2) * grad.derived().array().square().matrix();
  const T bc1 = T(1.0 - std::pow(beta1, static_cast<double>(step)));
  const T bc2 = T(1.0 - std::pow(beta2, static_cast<double>(step)));
  param.derived().array() -=
      T(lr) * (m.derived().array() / bc1) / ((v.derived().array() / bc2).sqrt() + T(eps));
}

/// First/second-moment accumulators for every tensor of a DenseNet.
template <typename T>
struct AdamState {
  using Mat = typename DenseNet<T>::Mat;
  using Vec = typename DenseNet<T>::Vec;
  std::vector<Mat> mW, vW;
  std::vector<Vec> mb, vb;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void init_like(const DenseNet<T>& net) {
    mW.clear(); vW.clear(); mb.clear(); vb.clear();
    for (int l = 0; l < net.num_layers(); ++l) {
      mW.push_back(Mat::Zero(net.W[l].rows(), net.W[l].cols()));
      vW.push_back(Mat::Zero(net.W[l].rows(), net.W[l].cols()));
      mb.push_back(Vec::Zero(net.b[l].size()));
      vb.push_back(Vec::Zero(net.b[l].size()));
    }
    step = 0;
  }

  void update(DenseNet<T>& net, const typename DenseNet<T>::Grads& grads, double lr) {
    if (static_cast<int>(mW.size()) != net.num_layers())
      throw ShapeMismatch("AdamState::update: state/net layer count");
    ++step;
    for (int l = 0; l < net.num_layers(); ++l) {
      adam_update(net.W[l], grads.dW[l], mW[l], vW[l], step, lr, beta1, beta2, eps);
      adam_update(net.b[l], grads.db[l], mb[l], vb[l], step, lr, beta1, beta2, eps);
    }
  }
};

}  // namespace recoverlab
