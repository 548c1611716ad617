#include "ctnn/nn.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "ctnn/errors.hpp"

namespace ctnn {

std::uint64_t Rng::below(std::uint64_t n) {
  require(n >= 1, ErrorCode::bad_argument, "Rng::below needs a positive bound");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r = next_u64();
  while (r >= limit) {
    r = next_u64();
  }
  return r % n;
}

Matrix glorot_uniform(std::int64_t rows, std::int64_t cols, Rng& rng) {
  require(rows >= 1 && cols >= 1, ErrorCode::bad_argument,
          "glorot_uniform needs positive dimensions");
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix out(rows, cols);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      out(r, c) = rng.uniform(-limit, limit);
    }
  }
  return out;
}

SparseMatrix normalized_laplacian(const SparseMatrix& adjacency) {
  const std::int64_t n = adjacency.rows();
  require(adjacency.cols() == n, ErrorCode::dimension_mismatch,
          "adjacency matrix must be square");
  SparseMatrix transposed = adjacency.transpose();
  require((adjacency - transposed).norm() == 0.0, ErrorCode::inconsistent_input,
          "normalized Laplacian needs a symmetric adjacency");

  Vector degree = Vector::Zero(n);
  for (int k = 0; k < adjacency.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(adjacency, k); it; ++it) {
      require(it.value() >= 0.0, ErrorCode::bad_argument,
              "adjacency weights must be non-negative");
      degree(it.row()) += it.value();
    }
  }
  Vector inv_sqrt(n);
  for (std::int64_t i = 0; i < n; ++i) {
    inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;
  }

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(adjacency.nonZeros()) + n);
  for (std::int64_t i = 0; i < n; ++i) {
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
  }
  for (int k = 0; k < adjacency.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(adjacency, k); it; ++it) {
      triplets.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                            -it.value() * inv_sqrt(it.row()) * inv_sqrt(it.col()));
    }
  }
  SparseMatrix laplacian(n, n);
  laplacian.setFromTriplets(triplets.begin(), triplets.end());
  laplacian.makeCompressed();
  return laplacian;
}

LambdaMaxMode lambda_max_mode_from_string(const std::string& name) {
  if (name == "exact") {
    return LambdaMaxMode::exact;
  }
  if (name == "power") {
    return LambdaMaxMode::power;
  }
  if (name == "bipartite") {
    return LambdaMaxMode::bipartite;
  }
  fail(ErrorCode::bad_argument, "unknown lambda_max mode \"" + name + "\"");
}

std::string to_string(LambdaMaxMode mode) {
  switch (mode) {
  case LambdaMaxMode::exact:
    return "exact";
  case LambdaMaxMode::power:
    return "power";
  case LambdaMaxMode::bipartite:
    return "bipartite";
  }
  return "unknown";
}

namespace {

double dense_lambda_max(const SparseMatrix& laplacian) {
  const Matrix dense(laplacian);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(dense, Eigen::EigenvaluesOnly);
  require(solver.info() == Eigen::Success, ErrorCode::numeric_failure,
          "eigensolver failed on the normalized Laplacian");
  return solver.eigenvalues().maxCoeff();
}

double power_lambda_max(const SparseMatrix& laplacian) {
  const std::int64_t n = laplacian.rows();
  Rng rng(0x9e3779b97f4a7c15ULL);
  Vector v(n);
  for (std::int64_t i = 0; i < n; ++i) {
    v(i) = rng.uniform(-1.0, 1.0);
  }
  v.normalize();

  double lambda = 0.0;
  double previous = 0.0;
  for (int iter = 0; iter < 50; ++iter) {
    const Vector w = laplacian * v;
    lambda = v.dot(w);
    const double norm = w.norm();
    if (norm < 1e-300) {
      break;
    }
    v = w / norm;
    if (iter > 0 && std::abs(lambda - previous) <= 1e-8 * std::max(1.0, std::abs(lambda))) {
      break;
    }
    previous = lambda;
  }
  return lambda;
}

} // namespace

double estimate_lambda_max(const SparseMatrix& laplacian, LambdaMaxMode mode) {
  require(laplacian.rows() >= 1 && laplacian.rows() == laplacian.cols(),
          ErrorCode::dimension_mismatch, "Laplacian must be square and non-empty");
  switch (mode) {
  case LambdaMaxMode::bipartite:
    return 2.0;
  case LambdaMaxMode::exact:
    return dense_lambda_max(laplacian);
  case LambdaMaxMode::power:
    break;
  }
  if (laplacian.rows() <= 256) {
    return dense_lambda_max(laplacian);
  }
  // Power iteration converges from below and can sit a fraction of a percent
  // short on path-like graphs; a small inflation keeps the scaled spectrum
  // inside [-1, 1]. Normalized Laplacian eigenvalues never exceed 2.
  return std::min(2.0, power_lambda_max(laplacian) * 1.01);
}

SparseMatrix scaled_laplacian(const SparseMatrix& adjacency, LambdaMaxMode mode) {
  SparseMatrix laplacian = normalized_laplacian(adjacency);
  const double lambda = estimate_lambda_max(laplacian, mode);
  require(lambda > 1e-12, ErrorCode::numeric_failure,
          "lambda_max estimate is not positive");
  const std::int64_t n = laplacian.rows();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(laplacian.nonZeros()) + n);
  const double scale = 2.0 / lambda;
  for (int k = 0; k < laplacian.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(laplacian, k); it; ++it) {
      triplets.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                            scale * it.value());
    }
  }
  for (std::int64_t i = 0; i < n; ++i) {
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), -1.0);
  }
  SparseMatrix out(n, n);
  out.setFromTriplets(triplets.begin(), triplets.end());
  out.prune(0.0);
  out.makeCompressed();
  return out;
}

ChebyConv ChebyConv::create(int hops, std::int64_t in_channels, std::int64_t out_channels,
                            Rng& rng) {
  require(hops >= 1, ErrorCode::bad_argument, "cheby hops must be at least 1");
  ChebyConv conv;
  conv.hops = hops;
  for (int k = 0; k < hops; ++k) {
    conv.weights.push_back(glorot_uniform(in_channels, out_channels, rng));
    conv.weight_grads.push_back(Matrix::Zero(in_channels, out_channels));
  }
  conv.bias = Vector::Zero(out_channels);
  conv.bias_grad = Vector::Zero(out_channels);
  return conv;
}

void ChebyConv::collect(std::vector<ParamView>& out, const std::string& prefix) {
  for (int k = 0; k < hops; ++k) {
    out.push_back({prefix + ".w" + std::to_string(k), weights[k].data(),
                   weight_grads[k].data(), weights[k].rows(), weights[k].cols(), true});
  }
  out.push_back({prefix + ".bias", bias.data(), bias_grad.data(), bias.size(), 1, false});
}

void ChebyConv::zero_grads() {
  for (Matrix& g : weight_grads) {
    g.setZero();
  }
  bias_grad.setZero();
}

Matrix cheby_forward(const SparseMatrix& lhat, const Matrix& x, const ChebyConv& conv,
                     ChebyCache* cache) {
  require(conv.hops >= 1 && std::ssize(conv.weights) == conv.hops, ErrorCode::internal,
          "cheby layer has a wrong weight count");
  require(lhat.rows() == x.rows() && lhat.cols() == x.rows(), ErrorCode::dimension_mismatch,
          "scaled Laplacian does not match the feature matrix");
  require(x.cols() == conv.weights[0].rows(), ErrorCode::dimension_mismatch,
          "feature width does not match cheby weights");

  Matrix out = x * conv.weights[0];
  if (cache != nullptr) {
    cache->basis.clear();
    cache->basis.push_back(x);
  }
  Matrix z_prev2 = x;
  Matrix z_prev;
  for (int k = 1; k < conv.hops; ++k) {
    Matrix z = (k == 1) ? Matrix(lhat * x) : Matrix(2.0 * (lhat * z_prev) - z_prev2);
    out += z * conv.weights[k];
    if (cache != nullptr) {
      cache->basis.push_back(z);
    }
    if (k > 1) {
      z_prev2 = std::move(z_prev);
    }
    z_prev = std::move(z);
  }
  out.rowwise() += conv.bias.transpose();
  return out;
}

Matrix cheby_backward(const SparseMatrix& lhat, ChebyConv& conv, const ChebyCache& cache,
                      const Matrix& grad_out) {
  const int hops = conv.hops;
  require(std::ssize(cache.basis) == hops, ErrorCode::internal,
          "cheby cache does not match layer order");
  conv.bias_grad += grad_out.colwise().sum();
  for (int k = 0; k < hops; ++k) {
    conv.weight_grads[k] += cache.basis[k].transpose() * grad_out;
  }
  // Reverse the T_k recurrence. Lhat is symmetric, so no transpose is needed
  // when pushing gradients back through the sparse products.
  std::vector<Matrix> d(hops);
  for (int k = 0; k < hops; ++k) {
    d[k] = grad_out * conv.weights[k].transpose();
  }
  for (int k = hops - 1; k >= 2; --k) {
    d[k - 1] += 2.0 * (lhat * d[k]);
    d[k - 2] -= d[k];
  }
  if (hops >= 2) {
    d[0] += lhat * d[1];
  }
  return d[0];
}

DiffusionOps diffusion_ops(const SparseMatrix& directed_adjacency) {
  const std::int64_t n = directed_adjacency.rows();
  require(directed_adjacency.cols() == n, ErrorCode::dimension_mismatch,
          "adjacency matrix must be square");
  Vector out_degree = Vector::Zero(n);
  Vector in_degree = Vector::Zero(n);
  for (int k = 0; k < directed_adjacency.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(directed_adjacency, k); it; ++it) {
      require(it.value() >= 0.0, ErrorCode::bad_argument,
              "adjacency weights must be non-negative");
      out_degree(it.row()) += it.value();
      in_degree(it.col()) += it.value();
    }
  }

  std::vector<Eigen::Triplet<double>> forward_triplets;
  std::vector<Eigen::Triplet<double>> reverse_triplets;
  forward_triplets.reserve(directed_adjacency.nonZeros());
  reverse_triplets.reserve(directed_adjacency.nonZeros());
  for (int k = 0; k < directed_adjacency.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(directed_adjacency, k); it; ++it) {
      if (out_degree(it.row()) > 0.0) {
        forward_triplets.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                      it.value() / out_degree(it.row()));
      }
      if (in_degree(it.col()) > 0.0) {
        reverse_triplets.emplace_back(static_cast<int>(it.col()), static_cast<int>(it.row()),
                                      it.value() / in_degree(it.col()));
      }
    }
  }
  DiffusionOps ops;
  ops.forward.resize(n, n);
  ops.forward.setFromTriplets(forward_triplets.begin(), forward_triplets.end());
  ops.reverse.resize(n, n);
  ops.reverse.setFromTriplets(reverse_triplets.begin(), reverse_triplets.end());
  ops.forward_t = ops.forward.transpose();
  ops.reverse_t = ops.reverse.transpose();
  ops.forward.makeCompressed();
  ops.reverse.makeCompressed();
  ops.forward_t.makeCompressed();
  ops.reverse_t.makeCompressed();
  return ops;
}

DiffusionConv DiffusionConv::create(int hops, std::int64_t in_channels,
                                    std::int64_t out_channels, Rng& rng) {
  require(hops >= 1, ErrorCode::bad_argument, "diffusion hops must be at least 1");
  DiffusionConv conv;
  conv.hops = hops;
  for (int k = 0; k < hops; ++k) {
    conv.weights_fwd.push_back(glorot_uniform(in_channels, out_channels, rng));
    conv.weights_rev.push_back(glorot_uniform(in_channels, out_channels, rng));
    conv.weight_fwd_grads.push_back(Matrix::Zero(in_channels, out_channels));
    conv.weight_rev_grads.push_back(Matrix::Zero(in_channels, out_channels));
  }
  conv.bias = Vector::Zero(out_channels);
  conv.bias_grad = Vector::Zero(out_channels);
  return conv;
}

void DiffusionConv::collect(std::vector<ParamView>& out, const std::string& prefix) {
  for (int k = 0; k < hops; ++k) {
    out.push_back({prefix + ".wf" + std::to_string(k), weights_fwd[k].data(),
                   weight_fwd_grads[k].data(), weights_fwd[k].rows(), weights_fwd[k].cols(),
                   true});
    out.push_back({prefix + ".wr" + std::to_string(k), weights_rev[k].data(),
                   weight_rev_grads[k].data(), weights_rev[k].rows(), weights_rev[k].cols(),
                   true});
  }
  out.push_back({prefix + ".bias", bias.data(), bias_grad.data(), bias.size(), 1, false});
}

void DiffusionConv::zero_grads() {
  for (Matrix& g : weight_fwd_grads) {
    g.setZero();
  }
  for (Matrix& g : weight_rev_grads) {
    g.setZero();
  }
  bias_grad.setZero();
}

Matrix diffusion_forward(const DiffusionOps& ops, const Matrix& x,
                         const DiffusionConv& conv, DiffusionCache* cache) {
  require(conv.hops >= 1 && std::ssize(conv.weights_fwd) == conv.hops &&
              std::ssize(conv.weights_rev) == conv.hops,
          ErrorCode::internal, "diffusion layer has a wrong weight count");
  require(ops.forward.rows() == x.rows(), ErrorCode::dimension_mismatch,
          "diffusion operators do not match the feature matrix");
  require(x.cols() == conv.weights_fwd[0].rows(), ErrorCode::dimension_mismatch,
          "feature width does not match diffusion weights");

  if (cache != nullptr) {
    cache->basis_fwd.clear();
    cache->basis_rev.clear();
  }
  Matrix out = Matrix::Zero(x.rows(), conv.weights_fwd[0].cols());
  Matrix basis_fwd = x;
  Matrix basis_rev = x;
  for (int k = 0; k < conv.hops; ++k) {
    if (k > 0) {
      basis_fwd = ops.forward * basis_fwd;
      basis_rev = ops.reverse * basis_rev;
    }
    out += basis_fwd * conv.weights_fwd[k];
    out += basis_rev * conv.weights_rev[k];
    if (cache != nullptr) {
      cache->basis_fwd.push_back(basis_fwd);
      cache->basis_rev.push_back(basis_rev);
    }
  }
  out.rowwise() += conv.bias.transpose();
  return out;
}

Matrix diffusion_backward(const DiffusionOps& ops, DiffusionConv& conv,
                          const DiffusionCache& cache, const Matrix& grad_out) {
  const int hops = conv.hops;
  require(std::ssize(cache.basis_fwd) == hops && std::ssize(cache.basis_rev) == hops,
          ErrorCode::internal, "diffusion cache does not match layer order");
  conv.bias_grad += grad_out.colwise().sum();
  for (int k = 0; k < hops; ++k) {
    conv.weight_fwd_grads[k] += cache.basis_fwd[k].transpose() * grad_out;
    conv.weight_rev_grads[k] += cache.basis_rev[k].transpose() * grad_out;
  }
  // Horner-style reverse accumulation of sum_k (S^T)^k G W_k^T per side.
  Matrix acc_fwd = grad_out * conv.weights_fwd[hops - 1].transpose();
  Matrix acc_rev = grad_out * conv.weights_rev[hops - 1].transpose();
  for (int k = hops - 2; k >= 0; --k) {
    acc_fwd = ops.forward_t * acc_fwd;
    acc_rev = ops.reverse_t * acc_rev;
    acc_fwd += grad_out * conv.weights_fwd[k].transpose();
    acc_rev += grad_out * conv.weights_rev[k].transpose();
  }
  return acc_fwd + acc_rev;
}

DenseLayer DenseLayer::create(std::int64_t in_channels, std::int64_t out_channels,
                              Rng& rng) {
  DenseLayer layer;
  layer.weight = glorot_uniform(in_channels, out_channels, rng);
  layer.weight_grad = Matrix::Zero(in_channels, out_channels);
  layer.bias = Vector::Zero(out_channels);
  layer.bias_grad = Vector::Zero(out_channels);
  return layer;
}

void DenseLayer::collect(std::vector<ParamView>& out, const std::string& prefix) {
  out.push_back({prefix + ".w", weight.data(), weight_grad.data(), weight.rows(),
                 weight.cols(), true});
  out.push_back({prefix + ".bias", bias.data(), bias_grad.data(), bias.size(), 1, false});
}

void DenseLayer::zero_grads() {
  weight_grad.setZero();
  bias_grad.setZero();
}

Matrix dense_forward(const Matrix& x, const DenseLayer& layer) {
  require(x.cols() == layer.weight.rows(), ErrorCode::dimension_mismatch,
          "feature width does not match dense weights");
  Matrix out = x * layer.weight;
  out.rowwise() += layer.bias.transpose();
  return out;
}

Matrix dense_backward(DenseLayer& layer, const Matrix& x, const Matrix& grad_out) {
  layer.weight_grad += x.transpose() * grad_out;
  layer.bias_grad += grad_out.colwise().sum();
  return grad_out * layer.weight.transpose();
}

NodeNorm NodeNorm::create(std::int64_t channels) {
  require(channels >= 1, ErrorCode::bad_argument, "node norm needs at least one channel");
  NodeNorm norm;
  norm.gamma = Vector::Ones(channels);
  norm.beta = Vector::Zero(channels);
  norm.gamma_grad = Vector::Zero(channels);
  norm.beta_grad = Vector::Zero(channels);
  norm.running_mean = Vector::Zero(channels);
  norm.running_var = Vector::Ones(channels);
  return norm;
}

void NodeNorm::collect(std::vector<ParamView>& out, const std::string& prefix) {
  out.push_back({prefix + ".gamma", gamma.data(), gamma_grad.data(), gamma.size(), 1, false});
  out.push_back({prefix + ".beta", beta.data(), beta_grad.data(), beta.size(), 1, false});
}

void NodeNorm::collect_state(std::vector<ParamView>& out, const std::string& prefix) {
  out.push_back({prefix + ".running_mean", running_mean.data(), nullptr,
                 running_mean.size(), 1, false});
  out.push_back({prefix + ".running_var", running_var.data(), nullptr, running_var.size(),
                 1, false});
}

void NodeNorm::zero_grads() {
  gamma_grad.setZero();
  beta_grad.setZero();
}

Matrix node_norm_forward(NodeNorm& norm, const Matrix& x, bool training,
                         NodeNormCache* cache) {
  const std::int64_t n = x.rows();
  const std::int64_t channels = x.cols();
  require(norm.gamma.size() == channels, ErrorCode::dimension_mismatch,
          "node norm width does not match the feature matrix");
  require(n >= 1, ErrorCode::dimension_mismatch, "node norm needs at least one node");

  Vector mean(channels);
  Vector var(channels);
  if (training) {
    mean = x.colwise().mean();
    var = (x.rowwise() - mean.transpose()).array().square().colwise().sum() /
          static_cast<double>(n);
    norm.running_mean = norm.momentum * norm.running_mean + (1.0 - norm.momentum) * mean;
    norm.running_var = norm.momentum * norm.running_var + (1.0 - norm.momentum) * var;
  } else {
    mean = norm.running_mean;
    var = norm.running_var;
  }
  Vector inv_std = (var.array() + norm.eps).rsqrt();
  Matrix x_hat = (x.rowwise() - mean.transpose()) * inv_std.asDiagonal();
  Matrix out = x_hat * norm.gamma.asDiagonal();
  out.rowwise() += norm.beta.transpose();
  if (cache != nullptr) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
    cache->training = training;
  }
  return out;
}

Matrix node_norm_backward(NodeNorm& norm, const NodeNormCache& cache,
                          const Matrix& grad_out) {
  const std::int64_t n = grad_out.rows();
  require(cache.x_hat.rows() == n && cache.x_hat.cols() == grad_out.cols(),
          ErrorCode::internal, "node norm cache does not match the gradient");
  norm.gamma_grad += (grad_out.array() * cache.x_hat.array()).colwise().sum().matrix();
  norm.beta_grad += grad_out.colwise().sum();

  Matrix dx_hat = grad_out * norm.gamma.asDiagonal();
  if (!cache.training) {
    return dx_hat * cache.inv_std.asDiagonal();
  }
  // Batch statistics depend on every row; fold their gradients back in.
  const Vector sum_dx_hat = dx_hat.colwise().sum();
  const Vector sum_dx_hat_x = (dx_hat.array() * cache.x_hat.array()).colwise().sum();
  Matrix dx = static_cast<double>(n) * dx_hat;
  dx.rowwise() -= sum_dx_hat.transpose();
  dx -= cache.x_hat * sum_dx_hat_x.asDiagonal();
  dx *= 1.0 / static_cast<double>(n);
  return dx * cache.inv_std.asDiagonal();
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& grad_out, const Matrix& pre_activation) {
  require(grad_out.rows() == pre_activation.rows() &&
              grad_out.cols() == pre_activation.cols(),
          ErrorCode::internal, "relu gradient shape mismatch");
  return (pre_activation.array() > 0.0).select(grad_out, Matrix::Zero(grad_out.rows(),
                                                                      grad_out.cols()));
}

SoftmaxXentResult softmax_xent(const Matrix& logits, const Eigen::VectorXi& labels,
                               const Vector* weights) {
  const std::int64_t n = logits.rows();
  const std::int64_t classes = logits.cols();
  require(labels.size() == n, ErrorCode::dimension_mismatch,
          "label vector length does not match logits");
  require(classes >= 2, ErrorCode::bad_argument, "softmax needs at least two classes");
  if (weights != nullptr) {
    require(weights->size() == n, ErrorCode::dimension_mismatch,
            "weight vector length does not match logits");
  }

  SoftmaxXentResult result;
  result.probabilities.resize(n, classes);
  result.grad.resize(n, classes);

  double total_weight = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double w = weights != nullptr ? (*weights)(i) : 1.0;
    require(w >= 0.0, ErrorCode::bad_argument, "loss weights must be non-negative");
    total_weight += w;
  }
  require(total_weight > 0.0, ErrorCode::bad_argument, "loss weights sum to zero");

  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const int y = labels(i);
    require(y >= 0 && y < classes, ErrorCode::class_range,
            "label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    const double w = (weights != nullptr ? (*weights)(i) : 1.0) / total_weight;
    const double max_logit = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted = logits.row(i).array() - max_logit;
    const Eigen::RowVectorXd exps = shifted.array().exp();
    const double sum_exp = exps.sum();
    result.probabilities.row(i) = exps / sum_exp;
    loss += w * (std::log(sum_exp) - shifted(y));
    result.grad.row(i) = w * result.probabilities.row(i);
    result.grad(i, y) -= w;
  }
  result.loss = loss;
  return result;
}

Eigen::VectorXi argmax_rows(const Matrix& scores) {
  Eigen::VectorXi out(scores.rows());
  for (std::int64_t i = 0; i < scores.rows(); ++i) {
    int best = 0;
    for (std::int64_t c = 1; c < scores.cols(); ++c) {
      if (scores(i, c) > scores(i, best)) {
        best = static_cast<int>(c);
      }
    }
    out(i) = best;
  }
  return out;
}

void MomentumOptimizer::init(const std::vector<ParamView>& params) {
  velocity.clear();
  velocity.reserve(params.size());
  for (const ParamView& p : params) {
    velocity.push_back(Vector::Zero(p.size()));
  }
}

void MomentumOptimizer::step(const std::vector<ParamView>& params, int epoch) {
  require(velocity.size() == params.size(), ErrorCode::internal,
          "optimizer state does not match parameter list");
  require(epoch >= 0, ErrorCode::bad_argument, "epoch must be non-negative");
  const double lr = learning_rate * std::pow(decay, epoch);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamView& p = params[i];
    require(p.grad != nullptr, ErrorCode::internal, "parameter without gradient buffer");
    Eigen::Map<Vector> value(p.value, p.size());
    Eigen::Map<const Vector> grad(p.grad, p.size());
    Vector effective = grad;
    if (p.weight_decay && l2 != 0.0) {
      effective += l2 * value;
    }
    velocity[i] = momentum * velocity[i] + effective;
    value -= lr * velocity[i];
  }
}

double MomentumOptimizer::penalty(const std::vector<ParamView>& params) const {
  double total = 0.0;
  for (const ParamView& p : params) {
    if (p.weight_decay) {
      Eigen::Map<const Vector> value(p.value, p.size());
      total += value.squaredNorm();
    }
  }
  return 0.5 * l2 * total;
}

} // namespace ctnn
