#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "qcaa/grad_check.hpp"
#include "qcaa/quantum.hpp"
#include "test_util.hpp"

using namespace qcaa;
using std::numbers::pi;

namespace {

StateVector random_state(int n, Rng& rng) {
  std::vector<std::complex<double>> amps(std::size_t{1} << n);
  double norm = 0.0;
  for (auto& a : amps) {
    a = {rng.normal(), rng.normal()};
    norm += std::norm(a);
  }
  for (auto& a : amps) a /= std::sqrt(norm);
  return StateVector::from_amplitudes(amps);
}

CircuitParams random_params(int n, Rng& rng) {
  CircuitParams p;
  for (int i = 0; i < n; ++i) p.theta.push_back(rng.uniform(-pi, pi));
  p.angle_encoding_scale = rng.uniform(0.1, 3.0);
  return p;
}

}  // namespace

TEST(StateVector, InitialState) {
  const auto one = init_state(1);
  EXPECT_EQ(one.amplitudes().size(), 2u);
  EXPECT_EQ(one.amplitudes()[0], std::complex<double>(1.0));
  EXPECT_EQ(one.amplitudes()[1], std::complex<double>(0.0));
  const auto two = init_state(2);
  EXPECT_EQ(two.amplitudes().size(), 4u);
  EXPECT_EQ(two.amplitudes()[0], std::complex<double>(1.0));
  EXPECT_DOUBLE_EQ(init_state(4).norm_squared(), 1.0);
  EXPECT_THROW(init_state(0), ParameterError);
  EXPECT_THROW(init_state(13), ParameterError);
}

TEST(StateVector, RotationY) {
  auto s = init_state(1);
  s.apply_ry(0, pi);
  EXPECT_NEAR(std::abs(s.amplitudes()[0]), 0.0, 1e-15);
  EXPECT_NEAR(s.amplitudes()[1].real(), 1.0, 1e-15);

  auto id = init_state(1);
  id.apply_ry(0, 0.0);
  EXPECT_EQ(id.amplitudes()[0], std::complex<double>(1.0));

  auto half = init_state(1);
  half.apply_ry(0, pi / 2);
  EXPECT_NEAR(half.amplitudes()[0].real(), std::cos(pi / 4), 1e-15);
  EXPECT_NEAR(half.amplitudes()[1].real(), std::sin(pi / 4), 1e-15);
  EXPECT_THROW(half.apply_ry(1, 0.1), IndexError);
}

TEST(StateVector, Cnot) {
  // |10> in qubit order (q0 = 1, q1 = 0) is basis index 1.
  auto s = StateVector::basis(2, 0b01);
  s.apply_cnot(0, 1);
  EXPECT_EQ(s.amplitudes()[0b11], std::complex<double>(1.0));
  auto z = init_state(2);
  z.apply_cnot(0, 1);
  EXPECT_EQ(z.amplitudes()[0], std::complex<double>(1.0));
  EXPECT_THROW(z.apply_cnot(1, 1), ParameterError);
  EXPECT_THROW(z.apply_cnot(0, 2), IndexError);

  Rng rng(4);
  auto r = random_state(3, rng);
  const std::vector<std::complex<double>> before(r.amplitudes().begin(), r.amplitudes().end());
  r.apply_cnot(0, 2).apply_cnot(0, 2);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_LE(std::abs(before[i] - r.amplitudes()[i]), 1e-14);
}

TEST(StateVector, ExpectZ) {
  EXPECT_EQ(init_state(1).expect_z(0), 1.0);
  EXPECT_EQ(StateVector::basis(1, 1).expect_z(0), -1.0);
  auto eq = init_state(1);
  eq.apply_ry(0, pi / 2);
  EXPECT_NEAR(eq.expect_z(0), 0.0, 1e-14);
}

TEST(StateVector, NormPreservedByGateSequences) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(6));
    auto s = random_state(n, rng);
    for (int k = 0; k < 20; ++k) {
      const int q = static_cast<int>(rng.index(n));
      if (n > 1 && rng.uniform() < 0.5) {
        const int t = (q + 1 + static_cast<int>(rng.index(n - 1))) % n;
        s.apply_cnot(q, t);
      } else {
        s.apply_ry(q, rng.uniform(-pi, pi));
      }
      EXPECT_NEAR(s.norm_squared(), 1.0, 1e-12);
    }
  }
}

TEST(Circuit, TrivialExpectations) {
  EXPECT_NEAR(qcsa_expectation({{0.0, 0.0, 0.0}, 1.0}, 0.0), 1.0, 1e-15);
  EXPECT_NEAR(qcsa_expectation({{pi, 0.0, 0.0}, 1.0}, 0.0), -1.0, 1e-15);
  EXPECT_NEAR(qcsa_expectation_fast({{0.0, 0.3}, 1.0}, 0.0), 1.0, 1e-15);
  EXPECT_NEAR(qcsa_expectation_fast({{pi / 2, 0.3}, 1.0}, 0.0), 0.0, 1e-15);
  EXPECT_THROW(qcsa_expectation({{}, 1.0}, 0.0), ParameterError);
  EXPECT_THROW(qcsa_expectation({{std::nan("")}, 1.0}, 0.0), ParameterError);
}

TEST(Circuit, StatevectorMatchesAnalyticForm) {
  Rng rng(21);
  for (int n : {1, 2, 4, 6}) {
    for (int trial = 0; trial < 200; ++trial) {
      const auto p = random_params(n, rng);
      const double score = rng.uniform(-4.0, 4.0);
      const double sim = qcsa_expectation(p, score);
      EXPECT_NEAR(sim, std::cos(p.theta[0] + std::tanh(score) * p.angle_encoding_scale), 1e-12);
      EXPECT_NEAR(sim, qcsa_expectation_fast(p, score), 1e-12);
      EXPECT_LE(std::abs(sim), 1.0 + 1e-12);
    }
  }
}

TEST(Circuit, ParameterShiftTrivialCases) {
  auto g0 = qcsa_expectation_grad({{0.0, 0.0}, 1.0}, 0.0);
  EXPECT_NEAR(g0.d_theta[0], 0.0, 1e-15);
  auto g1 = qcsa_expectation_grad({{pi / 2, 0.0}, 1.0}, 0.0);
  EXPECT_NEAR(g1.d_theta[0], -1.0, 1e-12);
}

TEST(Circuit, ParameterShiftMatchesFiniteDifferences) {
  Rng rng(33);
  const double h = 1e-6;
  for (int n : {1, 2, 3, 4}) {
    for (int trial = 0; trial < 25; ++trial) {
      auto p = random_params(n, rng);
      const double score = rng.uniform(-2.0, 2.0);
      const auto grad = qcsa_expectation_grad(p, score);
      const auto fast = qcsa_expectation_fast_grad(p, score);
      for (int i = 0; i < n; ++i) {
        auto up = p, down = p;
        up.theta[i] += h;
        down.theta[i] -= h;
        const double fd = (qcsa_expectation(up, score) - qcsa_expectation(down, score)) / (2 * h);
        EXPECT_NEAR(grad.d_theta[i], fd, 1e-6);
        EXPECT_NEAR(fast.d_theta[i], fd, 1e-6);
      }
      const double fd_score = (qcsa_expectation(p, score + h) - qcsa_expectation(p, score - h)) / (2 * h);
      EXPECT_NEAR(grad.d_score, fd_score, 1e-6);
      EXPECT_NEAR(fast.d_score, fd_score, 1e-6);
    }
  }
}

TEST(Circuit, TensorOpGradientsOnBothBackends) {
  Rng rng(2);
  for (auto backend : {CircuitBackend::kFast, CircuitBackend::kStatevector}) {
    QuantumCircuit circuit;
    circuit.theta = qcaa::testing::random_tensor({3}, rng, 0.5, true);
    circuit.angle_encoding_scale = 1.3;
    circuit.backend = backend;
    Tensor scores = qcaa::testing::random_tensor({2, 3}, rng, 1.0, true);
    Tensor w = qcaa::testing::random_tensor({2, 3}, rng);
    const double err = grad_check(
        [&](Graph& g) { return sum(g, mul(g, circuit_expectation(g, scores, circuit), w)); }, {scores, circuit.theta});
    EXPECT_LE(err, 1e-6);
  }
}

TEST(Circuit, BackendsAgreeElementwise) {
  Rng rng(6);
  QuantumCircuit fast;
  fast.theta = qcaa::testing::random_tensor({4}, rng);
  QuantumCircuit exact = fast;
  exact.backend = CircuitBackend::kStatevector;
  Tensor scores = qcaa::testing::random_tensor({5, 5}, rng, 2.0);
  Graph g;
  const Tensor a = circuit_expectation(g, scores, fast);
  const Tensor b = circuit_expectation(g, scores, exact);
  EXPECT_LE(qcaa::testing::max_abs_diff(a.data(), b.data()), 1e-12);
}
