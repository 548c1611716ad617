#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include <doctest.h>
#include <Eigen/Eigenvalues>

#include "ctnn/nn.hpp"
#include "test_util.hpp"

using namespace ctnn;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central-difference check of an analytic gradient against a loss closure.
template <typename F>
void check_fd(double* value, const double* analytic, std::int64_t size, F&& loss,
              double tol = 1e-5) {
  const double h = 1e-6;
  for (std::int64_t i = 0; i < size; ++i) {
    const double saved = value[i];
    value[i] = saved + h;
    const double up = loss();
    value[i] = saved - h;
    const double down = loss();
    value[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    CHECK_MESSAGE(rel_err(analytic[i], fd) <= tol,
                  "entry " << i << ": analytic " << analytic[i] << " vs fd " << fd);
  }
}

SparseMatrix sparse_from(std::int64_t n, const std::vector<Eigen::Triplet<double>>& t) {
  SparseMatrix m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

// Random tree on n nodes: node i >= 1 attaches to a random earlier node.
std::vector<std::pair<std::int64_t, std::int64_t>> random_tree_edges(Rng& rng,
                                                                     std::int64_t n) {
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  for (std::int64_t i = 1; i < n; ++i) {
    edges.emplace_back(i, static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(i))));
  }
  return edges;
}

SparseMatrix symmetric_adjacency(std::int64_t n,
                                 const std::vector<std::pair<std::int64_t, std::int64_t>>& edges) {
  std::vector<Eigen::Triplet<double>> t;
  for (const auto& [u, v] : edges) {
    t.emplace_back(u, v, 1.0);
    t.emplace_back(v, u, 1.0);
  }
  return sparse_from(n, t);
}

SparseMatrix directed_adjacency(std::int64_t n,
                                const std::vector<std::pair<std::int64_t, std::int64_t>>& edges) {
  std::vector<Eigen::Triplet<double>> t;
  for (const auto& [u, v] : edges) {
    t.emplace_back(u, v, 1.0);
  }
  return sparse_from(n, t);
}

Matrix random_matrix(Rng& rng, std::int64_t rows, std::int64_t cols) {
  Matrix m(rows, cols);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      m(r, c) = rng.uniform(-2.0, 2.0);
    }
  }
  return m;
}

} // namespace

TEST_SUITE("nn") {

TEST_CASE("Rng is deterministic and below() respects its bound") {
  Rng a(99);
  Rng b(99);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng c(7);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t v = c.below(7);
    CHECK(v < 7);
    seen.insert(v);
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK(seen.size() == 7);
  CHECK_ERROR(c.below(0), ErrorCode::bad_argument);
}

TEST_CASE("glorot_uniform stays within its limit") {
  Rng rng(3);
  const Matrix w = glorot_uniform(4, 6, rng);
  const double limit = std::sqrt(6.0 / (4 + 6));
  CHECK(w.cwiseAbs().maxCoeff() <= limit);
  CHECK(w.cwiseAbs().maxCoeff() > 0.25 * limit);
  Rng again(3);
  CHECK((glorot_uniform(4, 6, again).array() == w.array()).all());
  CHECK_ERROR(glorot_uniform(0, 3, rng), ErrorCode::bad_argument);
}

TEST_CASE("normalized_laplacian on a single edge and an isolated node") {
  const SparseMatrix adjacency =
      sparse_from(3, {{0, 1, 1.0}, {1, 0, 1.0}});
  const SparseMatrix laplacian = normalized_laplacian(adjacency);
  CHECK(laplacian.coeff(0, 0) == doctest::Approx(1.0));
  CHECK(laplacian.coeff(1, 1) == doctest::Approx(1.0));
  CHECK(laplacian.coeff(0, 1) == doctest::Approx(-1.0));
  CHECK(laplacian.coeff(1, 0) == doctest::Approx(-1.0));
  CHECK(laplacian.coeff(2, 2) == doctest::Approx(1.0));
  CHECK(laplacian.coeff(2, 0) == 0.0);

  const SparseMatrix asymmetric = sparse_from(2, {{0, 1, 1.0}});
  CHECK_ERROR(normalized_laplacian(asymmetric), ErrorCode::inconsistent_input);
  const SparseMatrix negative = sparse_from(2, {{0, 1, -1.0}, {1, 0, -1.0}});
  CHECK_ERROR(normalized_laplacian(negative), ErrorCode::bad_argument);
}

TEST_CASE("lambda_max estimation modes") {
  CHECK(lambda_max_mode_from_string("exact") == LambdaMaxMode::exact);
  CHECK(lambda_max_mode_from_string("power") == LambdaMaxMode::power);
  CHECK(lambda_max_mode_from_string("bipartite") == LambdaMaxMode::bipartite);
  CHECK(to_string(LambdaMaxMode::power) == "power");
  CHECK_ERROR(lambda_max_mode_from_string("fastest"), ErrorCode::bad_argument);

  const SparseMatrix path = symmetric_adjacency(2, {{1, 0}});
  const SparseMatrix laplacian = normalized_laplacian(path);
  CHECK(estimate_lambda_max(laplacian, LambdaMaxMode::bipartite) == 2.0);
  CHECK(estimate_lambda_max(laplacian, LambdaMaxMode::exact) == doctest::Approx(2.0));

  Rng rng(17);
  const SparseMatrix tree = symmetric_adjacency(9, random_tree_edges(rng, 9));
  const SparseMatrix tree_laplacian = normalized_laplacian(tree);
  const double exact = estimate_lambda_max(tree_laplacian, LambdaMaxMode::exact);
  CHECK(estimate_lambda_max(tree_laplacian, LambdaMaxMode::power) ==
        doctest::Approx(exact));

  const SparseMatrix edgeless = sparse_from(3, {});
  CHECK(estimate_lambda_max(normalized_laplacian(edgeless), LambdaMaxMode::exact) ==
        doctest::Approx(1.0));
}

TEST_CASE("scaled_laplacian has spectrum inside [-1, 1]") {
  const SparseMatrix path = symmetric_adjacency(2, {{1, 0}});
  const SparseMatrix lhat = scaled_laplacian(path, LambdaMaxMode::bipartite);
  CHECK(lhat.coeff(0, 0) == doctest::Approx(0.0));
  CHECK(lhat.coeff(0, 1) == doctest::Approx(-1.0));
  CHECK(lhat.coeff(1, 0) == doctest::Approx(-1.0));
  CHECK(lhat.coeff(1, 1) == doctest::Approx(0.0));

  const SparseMatrix edgeless = sparse_from(3, {});
  const SparseMatrix identity_lhat = scaled_laplacian(edgeless, LambdaMaxMode::exact);
  for (int i = 0; i < 3; ++i) {
    CHECK(identity_lhat.coeff(i, i) == doctest::Approx(1.0));
  }

  Rng rng(21);
  for (const LambdaMaxMode mode :
       {LambdaMaxMode::exact, LambdaMaxMode::power, LambdaMaxMode::bipartite}) {
    const SparseMatrix tree = symmetric_adjacency(12, random_tree_edges(rng, 12));
    const Matrix dense = Matrix(scaled_laplacian(tree, mode));
    Eigen::SelfAdjointEigenSolver<Matrix> solver(dense);
    REQUIRE(solver.info() == Eigen::Success);
    CHECK(solver.eigenvalues().minCoeff() >= -1.0 - 1e-9);
    CHECK(solver.eigenvalues().maxCoeff() <= 1.0 + 1e-9);
  }
}

TEST_CASE("cheby convolution worked examples") {
  Rng rng(4);
  const SparseMatrix path = symmetric_adjacency(2, {{1, 0}});
  const SparseMatrix lhat = scaled_laplacian(path, LambdaMaxMode::bipartite);

  SUBCASE("order one with identity weights is the identity") {
    ChebyConv conv = ChebyConv::create(1, 3, 3, rng);
    conv.weights[0] = Matrix::Identity(3, 3);
    conv.bias.setZero();
    const Matrix x = random_matrix(rng, 2, 3);
    const Matrix out = cheby_forward(lhat, x, conv, nullptr);
    CHECK((out.array() == x.array()).all());
  }

  SUBCASE("order two picks up the scaled Laplacian term") {
    ChebyConv conv = ChebyConv::create(2, 1, 1, rng);
    conv.weights[0].setZero();
    conv.weights[1](0, 0) = 1.0;
    conv.bias.setZero();
    Matrix x(2, 1);
    x << 1, 0;
    const Matrix out = cheby_forward(lhat, x, conv, nullptr);
    CHECK(out(0, 0) == doctest::Approx(0.0));
    CHECK(out(1, 0) == doctest::Approx(-1.0));
  }

  SUBCASE("create validates hops") {
    CHECK_ERROR(ChebyConv::create(0, 1, 1, rng), ErrorCode::bad_argument);
  }
}

TEST_CASE("cheby backward matches finite differences") {
  Rng rng(5);
  for (int trial = 0; trial < 2; ++trial) {
    const std::int64_t n = 4 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t cin = 1 + static_cast<std::int64_t>(rng.below(3));
    const std::int64_t cout = 1 + static_cast<std::int64_t>(rng.below(3));
    const int hops = 1 + static_cast<int>(rng.below(3));
    const SparseMatrix lhat =
        scaled_laplacian(symmetric_adjacency(n, random_tree_edges(rng, n)),
                         LambdaMaxMode::bipartite);
    Matrix x = random_matrix(rng, n, cin);
    const Matrix g = random_matrix(rng, n, cout);
    ChebyConv conv = ChebyConv::create(hops, cin, cout, rng);

    conv.zero_grads();
    ChebyCache cache;
    cheby_forward(lhat, x, conv, &cache);
    const Matrix dx = cheby_backward(lhat, conv, cache, g);

    const auto loss = [&] {
      return (cheby_forward(lhat, x, conv, nullptr).array() * g.array()).sum();
    };
    for (int k = 0; k < hops; ++k) {
      check_fd(conv.weights[k].data(), conv.weight_grads[k].data(),
               conv.weights[k].size(), loss);
    }
    check_fd(conv.bias.data(), conv.bias_grad.data(), conv.bias.size(), loss);
    Matrix dx_copy = dx;
    check_fd(x.data(), dx_copy.data(), x.size(), loss);
  }
}

TEST_CASE("diffusion operators row-normalize the directed adjacency") {
  const SparseMatrix directed = sparse_from(2, {{0, 1, 1.0}});
  const DiffusionOps ops = diffusion_ops(directed);
  CHECK(ops.forward.coeff(0, 1) == doctest::Approx(1.0));
  CHECK(ops.forward.coeff(1, 0) == 0.0);
  CHECK(ops.forward.coeff(1, 1) == 0.0); // no outgoing edge: zero row
  CHECK(ops.reverse.coeff(1, 0) == doctest::Approx(1.0));
  CHECK(ops.reverse.coeff(0, 1) == 0.0); // no incoming edge: zero row

  const SparseMatrix negative = sparse_from(2, {{0, 1, -2.0}});
  CHECK_ERROR(diffusion_ops(negative), ErrorCode::bad_argument);
}

TEST_CASE("diffusion convolution worked example") {
  Rng rng(6);
  const SparseMatrix directed = sparse_from(2, {{0, 1, 1.0}});
  const DiffusionOps ops = diffusion_ops(directed);
  DiffusionConv conv = DiffusionConv::create(2, 1, 1, rng);
  for (auto& w : conv.weights_fwd) {
    w.setZero();
  }
  for (auto& w : conv.weights_rev) {
    w.setZero();
  }
  conv.bias.setZero();
  conv.weights_fwd[1](0, 0) = 1.0;
  Matrix x(2, 1);
  x << 0, 1;
  const Matrix out = diffusion_forward(ops, x, conv, nullptr);
  CHECK(out(0, 0) == doctest::Approx(1.0));
  CHECK(out(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("diffusion backward matches finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 2; ++trial) {
    const std::int64_t n = 4 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t cin = 1 + static_cast<std::int64_t>(rng.below(2));
    const std::int64_t cout = 1 + static_cast<std::int64_t>(rng.below(2));
    const int hops = 1 + static_cast<int>(rng.below(3));
    const DiffusionOps ops =
        diffusion_ops(directed_adjacency(n, random_tree_edges(rng, n)));
    Matrix x = random_matrix(rng, n, cin);
    const Matrix g = random_matrix(rng, n, cout);
    DiffusionConv conv = DiffusionConv::create(hops, cin, cout, rng);

    conv.zero_grads();
    DiffusionCache cache;
    diffusion_forward(ops, x, conv, &cache);
    const Matrix dx = diffusion_backward(ops, conv, cache, g);

    const auto loss = [&] {
      return (diffusion_forward(ops, x, conv, nullptr).array() * g.array()).sum();
    };
    for (int k = 0; k < hops; ++k) {
      check_fd(conv.weights_fwd[k].data(), conv.weight_fwd_grads[k].data(),
               conv.weights_fwd[k].size(), loss);
      check_fd(conv.weights_rev[k].data(), conv.weight_rev_grads[k].data(),
               conv.weights_rev[k].size(), loss);
    }
    check_fd(conv.bias.data(), conv.bias_grad.data(), conv.bias.size(), loss);
    Matrix dx_copy = dx;
    check_fd(x.data(), dx_copy.data(), x.size(), loss);
  }
}

TEST_CASE("dense layer forward and backward") {
  Rng rng(8);
  DenseLayer layer = DenseLayer::create(2, 3, rng);
  Matrix x = random_matrix(rng, 4, 2);
  const Matrix out = dense_forward(x, layer);
  CHECK(out.rows() == 4);
  CHECK(out.cols() == 3);
  const Matrix expected = (x * layer.weight).rowwise() + layer.bias.transpose();
  CHECK((out - expected).cwiseAbs().maxCoeff() == 0.0);

  const Matrix g = random_matrix(rng, 4, 3);
  layer.zero_grads();
  const Matrix dx = dense_backward(layer, x, g);
  const auto loss = [&] { return (dense_forward(x, layer).array() * g.array()).sum(); };
  check_fd(layer.weight.data(), layer.weight_grad.data(), layer.weight.size(), loss);
  check_fd(layer.bias.data(), layer.bias_grad.data(), layer.bias.size(), loss);
  Matrix dx_copy = dx;
  check_fd(x.data(), dx_copy.data(), x.size(), loss);

  std::vector<ParamView> params;
  layer.collect(params, "head");
  REQUIRE(params.size() == 2);
  CHECK(params[0].name == "head.w");
  CHECK(params[1].name == "head.bias");
}

TEST_CASE("node norm standardizes channels and tracks running statistics") {
  NodeNorm norm = NodeNorm::create(1);
  CHECK(norm.gamma(0) == 1.0);
  CHECK(norm.beta(0) == 0.0);
  CHECK(norm.running_mean(0) == 0.0);
  CHECK(norm.running_var(0) == 1.0);

  Matrix x(2, 1);
  x << 1, 3;
  const Matrix out = node_norm_forward(norm, x, /*training=*/true, nullptr);
  CHECK(out(0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(out(1, 0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(norm.running_mean(0) == doctest::Approx(0.2));
  CHECK(norm.running_var(0) == doctest::Approx(1.0));

  NodeNorm fresh = NodeNorm::create(1);
  Matrix single(1, 1);
  single << 41.5;
  fresh.beta(0) = 7.0;
  const Matrix degenerate = node_norm_forward(fresh, single, true, nullptr);
  CHECK(degenerate(0, 0) == doctest::Approx(7.0));

  NodeNorm eval_norm = NodeNorm::create(1);
  Matrix probe(2, 1);
  probe << 1, -2;
  const Matrix eval_out = node_norm_forward(eval_norm, probe, /*training=*/false, nullptr);
  CHECK(eval_out(0, 0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(eval_out(1, 0) == doctest::Approx(-2.0).epsilon(1e-4));
}

TEST_CASE("node norm backward matches finite differences") {
  Rng rng(9);
  for (int trial = 0; trial < 2; ++trial) {
    const std::int64_t n = 4 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t channels = 1 + static_cast<std::int64_t>(rng.below(3));
    Matrix x = random_matrix(rng, n, channels);
    const Matrix g = random_matrix(rng, n, channels);
    NodeNorm norm = NodeNorm::create(channels);
    for (std::int64_t c = 0; c < channels; ++c) {
      norm.gamma(c) = rng.uniform(0.5, 1.5);
      norm.beta(c) = rng.uniform(-0.5, 0.5);
    }

    norm.zero_grads();
    NodeNormCache cache;
    node_norm_forward(norm, x, true, &cache);
    const Matrix dx = node_norm_backward(norm, cache, g);

    const auto loss = [&] {
      return (node_norm_forward(norm, x, true, nullptr).array() * g.array()).sum();
    };
    check_fd(norm.gamma.data(), norm.gamma_grad.data(), norm.gamma.size(), loss);
    check_fd(norm.beta.data(), norm.beta_grad.data(), norm.beta.size(), loss);
    Matrix dx_copy = dx;
    check_fd(x.data(), dx_copy.data(), x.size(), loss);
  }
}

TEST_CASE("relu and its backward mask") {
  Matrix x(2, 2);
  x << -1.5, 2.0, 0.0, -0.25;
  const Matrix y = relu(x);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == 2.0);
  CHECK(y(1, 0) == 0.0);
  CHECK(y(1, 1) == 0.0);

  Matrix g(2, 2);
  g << 1, 2, 3, 4;
  const Matrix dx = relu_backward(g, x);
  CHECK(dx(0, 0) == 0.0);
  CHECK(dx(0, 1) == 2.0);
  CHECK(dx(1, 1) == 0.0);
}

TEST_CASE("softmax cross entropy values, gradients and weighting") {
  Matrix logits(1, 2);
  logits << 0, 0;
  Eigen::VectorXi labels(1);
  labels << 0;
  const SoftmaxXentResult even = softmax_xent(logits, labels);
  CHECK(even.loss == doctest::Approx(std::log(2.0)));
  CHECK(even.grad(0, 0) == doctest::Approx(-0.5));
  CHECK(even.grad(0, 1) == doctest::Approx(0.5));
  CHECK(even.probabilities(0, 0) == doctest::Approx(0.5));

  Matrix extreme(1, 2);
  extreme << 1000, 0;
  const SoftmaxXentResult stable = softmax_xent(extreme, labels);
  CHECK(std::isfinite(stable.loss));
  CHECK(stable.loss == doctest::Approx(0.0));

  Rng rng(10);
  Matrix random_logits = random_matrix(rng, 5, 3);
  Eigen::VectorXi random_labels(5);
  for (int i = 0; i < 5; ++i) {
    random_labels(i) = static_cast<int>(rng.below(3));
  }
  SoftmaxXentResult result = softmax_xent(random_logits, random_labels);
  for (int i = 0; i < 5; ++i) {
    CHECK(result.grad.row(i).sum() == doctest::Approx(0.0));
    CHECK(result.probabilities.row(i).sum() == doctest::Approx(1.0));
  }
  Matrix analytic = result.grad;
  const auto loss = [&] { return softmax_xent(random_logits, random_labels).loss; };
  check_fd(random_logits.data(), analytic.data(), random_logits.size(), loss, 1e-6);

  Matrix two(2, 2);
  two << 0, 1, 2, 0;
  Eigen::VectorXi two_labels(2);
  two_labels << 1, 0;
  Vector weights(2);
  weights << 1, 3;
  const double l0 = softmax_xent(two.topRows(1), two_labels.head(1)).loss;
  const double l1 = softmax_xent(two.bottomRows(1), two_labels.tail(1)).loss;
  const SoftmaxXentResult weighted = softmax_xent(two, two_labels, &weights);
  CHECK(weighted.loss == doctest::Approx((1 * l0 + 3 * l1) / 4.0));

  Vector negative(2);
  negative << 1, -1;
  CHECK_ERROR(softmax_xent(two, two_labels, &negative), ErrorCode::bad_argument);
  Vector zeros = Vector::Zero(2);
  CHECK_ERROR(softmax_xent(two, two_labels, &zeros), ErrorCode::bad_argument);
  Vector wrong_size = Vector::Ones(3);
  CHECK_ERROR(softmax_xent(two, two_labels, &wrong_size), ErrorCode::dimension_mismatch);

  Eigen::VectorXi bad_labels(2);
  bad_labels << 0, 2;
  CHECK_ERROR(softmax_xent(two, bad_labels), ErrorCode::class_range);
}

TEST_CASE("argmax_rows breaks ties toward the smaller index") {
  Matrix scores(3, 3);
  scores << 1, 1, 0, 0, 2, 2, -1, -3, -2;
  const Eigen::VectorXi picks = argmax_rows(scores);
  CHECK(picks(0) == 0);
  CHECK(picks(1) == 1);
  CHECK(picks(2) == 0);
}

TEST_CASE("momentum optimizer follows the update rule") {
  double w = 1.0;
  double g = 1.0;
  std::vector<ParamView> params = {{"w", &w, &g, 1, 1, false}};
  MomentumOptimizer opt;
  opt.learning_rate = 0.1;
  opt.momentum = 0.9;
  opt.decay = 0.99;
  opt.l2 = 0.0;
  opt.init(params);

  opt.step(params, 0);
  CHECK(w == doctest::Approx(0.9));
  opt.step(params, 0);
  CHECK(w == doctest::Approx(0.71));
  opt.step(params, 1);
  CHECK(w == doctest::Approx(0.71 - 0.1 * 0.99 * (0.9 * 1.9 + 1.0)));
  CHECK_ERROR(opt.step(params, -1), ErrorCode::bad_argument);
}

TEST_CASE("l2 decay touches only flagged parameters") {
  double decayed = 2.0;
  double decayed_grad = 0.0;
  double plain = 2.0;
  double plain_grad = 0.0;
  std::vector<ParamView> params = {{"w", &decayed, &decayed_grad, 1, 1, true},
                                   {"b", &plain, &plain_grad, 1, 1, false}};
  MomentumOptimizer opt;
  opt.learning_rate = 0.1;
  opt.momentum = 0.0;
  opt.decay = 1.0;
  opt.l2 = 0.5;
  opt.init(params);
  CHECK(opt.penalty(params) == doctest::Approx(0.5 * 0.5 * 4.0));

  opt.step(params, 0);
  CHECK(decayed == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
  CHECK(plain == 2.0);
}

} // TEST_SUITE("nn")
