#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace ctnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

// Deterministic random source for weight initialization and shuffling.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), using the top 53 bits for portable doubles.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double low, double high) { return low + (high - low) * uniform(); }

  // Uniform integer in [0, n), n >= 1, via rejection sampling.
  std::uint64_t below(std::uint64_t n);

private:
  std::mt19937_64 engine_;
};

Matrix glorot_uniform(std::int64_t rows, std::int64_t cols, Rng& rng);

// Symmetric normalized Laplacian L = I - D^{-1/2} W D^{-1/2}. Rows and
// columns of isolated nodes contribute nothing, leaving identity rows.
SparseMatrix normalized_laplacian(const SparseMatrix& adjacency);

enum class LambdaMaxMode {
  exact,     // dense eigensolve regardless of size
  power,     // dense below 257 nodes, else power iteration with a safety margin
  bipartite, // assume lambda_max = 2 (exact for trees and all bipartite graphs)
};

LambdaMaxMode lambda_max_mode_from_string(const std::string& name);
std::string to_string(LambdaMaxMode mode);

double estimate_lambda_max(const SparseMatrix& laplacian, LambdaMaxMode mode);

// Chebyshev-scaled Laplacian 2 L / lambda_max - I with spectrum in [-1, 1].
SparseMatrix scaled_laplacian(const SparseMatrix& adjacency, LambdaMaxMode mode);

// View into one parameter tensor and its gradient buffer; layers expose
// their parameters through these so the optimizer and checkpointing stay
// agnostic of layer types.
struct ParamView {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  bool weight_decay = false;

  std::int64_t size() const { return rows * cols; }
};

// Chebyshev graph convolution of order `hops`:
//   out = sum_k T_k(Lhat) X W_k + b,  T_0 = I, T_1 = Lhat,
//   T_k = 2 Lhat T_{k-1} - T_{k-2}.
struct ChebyConv {
  int hops = 1;
  std::vector<Matrix> weights;
  std::vector<Matrix> weight_grads;
  Vector bias;
  Vector bias_grad;

  static ChebyConv create(int hops, std::int64_t in_channels, std::int64_t out_channels,
                          Rng& rng);
  void collect(std::vector<ParamView>& out, const std::string& prefix);
  void zero_grads();
};

struct ChebyCache {
  std::vector<Matrix> basis; // T_k(Lhat) X for k = 0..hops-1
};

Matrix cheby_forward(const SparseMatrix& lhat, const Matrix& x, const ChebyConv& conv,
                     ChebyCache* cache);

// Accumulates parameter gradients into the layer and returns dX.
Matrix cheby_backward(const SparseMatrix& lhat, ChebyConv& conv, const ChebyCache& cache,
                      const Matrix& grad_out);

// Random-walk operators for diffusion convolution on a directed graph.
struct DiffusionOps {
  SparseMatrix forward;    // D_out^{-1} W        (downhill propagation)
  SparseMatrix reverse;    // D_in^{-1} W^T       (uphill propagation)
  SparseMatrix forward_t;
  SparseMatrix reverse_t;
};

DiffusionOps diffusion_ops(const SparseMatrix& directed_adjacency);

// Diffusion graph convolution of order `hops`:
//   out = sum_k (F^k X) Wf_k + (R^k X) Wr_k + b,  k = 0..hops-1.
struct DiffusionConv {
  int hops = 1;
  std::vector<Matrix> weights_fwd;
  std::vector<Matrix> weights_rev;
  std::vector<Matrix> weight_fwd_grads;
  std::vector<Matrix> weight_rev_grads;
  Vector bias;
  Vector bias_grad;

  static DiffusionConv create(int hops, std::int64_t in_channels,
                              std::int64_t out_channels, Rng& rng);
  void collect(std::vector<ParamView>& out, const std::string& prefix);
  void zero_grads();
};

struct DiffusionCache {
  std::vector<Matrix> basis_fwd;
  std::vector<Matrix> basis_rev;
};

Matrix diffusion_forward(const DiffusionOps& ops, const Matrix& x,
                         const DiffusionConv& conv, DiffusionCache* cache);
Matrix diffusion_backward(const DiffusionOps& ops, DiffusionConv& conv,
                          const DiffusionCache& cache, const Matrix& grad_out);

// Plain per-node linear layer, used for conv_type "none" and the class head.
struct DenseLayer {
  Matrix weight;
  Matrix weight_grad;
  Vector bias;
  Vector bias_grad;

  static DenseLayer create(std::int64_t in_channels, std::int64_t out_channels, Rng& rng);
  void collect(std::vector<ParamView>& out, const std::string& prefix);
  void zero_grads();
};

Matrix dense_forward(const Matrix& x, const DenseLayer& layer);
Matrix dense_backward(DenseLayer& layer, const Matrix& x, const Matrix& grad_out);

// Normalization over the node axis, one mean/variance per channel, with
// running statistics for inference. Variance is biased (divides by n).
struct NodeNorm {
  Vector gamma;
  Vector beta;
  Vector gamma_grad;
  Vector beta_grad;
  Vector running_mean;
  Vector running_var;
  double eps = 1e-5;
  double momentum = 0.9; // running = momentum * running + (1 - momentum) * batch

  static NodeNorm create(std::int64_t channels);
  void collect(std::vector<ParamView>& out, const std::string& prefix);
  void collect_state(std::vector<ParamView>& out, const std::string& prefix);
  void zero_grads();
};

struct NodeNormCache {
  Matrix x_hat;
  Vector inv_std;
  bool training = true;
};

// Training mode normalizes with batch statistics and updates the running
// ones; inference mode uses the running statistics only.
Matrix node_norm_forward(NodeNorm& norm, const Matrix& x, bool training,
                         NodeNormCache* cache);
Matrix node_norm_backward(NodeNorm& norm, const NodeNormCache& cache,
                          const Matrix& grad_out);

Matrix relu(const Matrix& x);
Matrix relu_backward(const Matrix& grad_out, const Matrix& pre_activation);

struct SoftmaxXentResult {
  double loss = 0.0;
  Matrix grad;          // d loss / d logits
  Matrix probabilities; // row-wise softmax
};

// Mean weighted cross entropy over rows. Null weights means uniform; any
// weights are normalized by their sum.
SoftmaxXentResult softmax_xent(const Matrix& logits, const Eigen::VectorXi& labels,
                               const Vector* weights = nullptr);

// Row-wise argmax; ties resolve to the smaller column index.
Eigen::VectorXi argmax_rows(const Matrix& scores);

// Momentum SGD with per-epoch exponential learning-rate decay and L2 decay
// on parameters flagged weight_decay:
//   g' = g + l2 * w,  v = momentum * v + g',  w -= lr * decay^epoch * v.
struct MomentumOptimizer {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double decay = 0.99;
  double l2 = 0.0;
  std::vector<Vector> velocity;

  void init(const std::vector<ParamView>& params);
  void step(const std::vector<ParamView>& params, int epoch);

  // Total L2 penalty 0.5 * l2 * sum ||w||^2 over decayed parameters.
  double penalty(const std::vector<ParamView>& params) const;
};

} // namespace ctnn
