#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qcaa/errors.hpp"
#include "qcaa/ops.hpp"
#include "qcaa/tensor.hpp"

namespace qcaa {

/// Exact n-qubit pure state. Qubit q is bit q of the basis index, so qubit 0
/// is the least significant bit.
class StateVector {
 public:
  static constexpr int kMaxQubits = 12;

  /// |0...0>
  explicit StateVector(int n_qubits) : n_qubits_(checked_qubits(n_qubits)) {
    amplitudes_.assign(std::size_t{1} << n_qubits_, {0.0, 0.0});
    amplitudes_[0] = 1.0;
  }

  static StateVector basis(int n_qubits, std::size_t index) {
    StateVector s(n_qubits);
    if (index >= s.amplitudes_.size()) throw IndexError("basis index out of range");
    s.amplitudes_[0] = 0.0;
    s.amplitudes_[index] = 1.0;
    return s;
  }

  /// Takes amplitudes as given; the caller is responsible for normalization.
  static StateVector from_amplitudes(std::vector<std::complex<double>> amplitudes) {
    int n = 0;
    while ((std::size_t{1} << n) < amplitudes.size()) ++n;
    if ((std::size_t{1} << n) != amplitudes.size()) {
      throw DimensionError("state vector length must be a power of two");
    }
    StateVector s(n);
    s.amplitudes_ = std::move(amplitudes);
    return s;
  }

  int n_qubits() const noexcept { return n_qubits_; }
  std::span<const std::complex<double>> amplitudes() const noexcept { return amplitudes_; }

  StateVector& apply_ry(int qubit, double angle) {
    check_qubit(qubit);
    const double c = std::cos(0.5 * angle);
    const double s = std::sin(0.5 * angle);
    const std::size_t bit = std::size_t{1} << qubit;
    for (std::size_t i = 0; i < amplitudes_.size(); ++i) {
      if (i & bit) continue;
      const auto a0 = amplitudes_[i];
      const auto a1 = amplitudes_[i | bit];
      amplitudes_[i] = c * a0 - s * a1;
      amplitudes_[i | bit] = s * a0 + c * a1;
    }
    return *this;
  }

  StateVector& apply_cnot(int control, int target) {
    check_qubit(control);
    check_qubit(target);
    if (control == target) throw ParameterError("CNOT control and target must differ");
    const std::size_t cbit = std::size_t{1} << control;
    const std::size_t tbit = std::size_t{1} << target;
    for (std::size_t i = 0; i < amplitudes_.size(); ++i) {
      if ((i & cbit) && !(i & tbit)) std::swap(amplitudes_[i], amplitudes_[i | tbit]);
    }
    return *this;
  }

  double expect_z(int qubit) const {
    check_qubit(qubit);
    const std::size_t bit = std::size_t{1} << qubit;
    double total = 0.0;
    for (std::size_t i = 0; i < amplitudes_.size(); ++i) {
      const double p = std::norm(amplitudes_[i]);
      total += (i & bit) ? -p : p;
    }
    return total;
  }

  double norm_squared() const {
    double total = 0.0;
    for (const auto& a : amplitudes_) total += std::norm(a);
    return total;
  }

 private:
  static int checked_qubits(int n) {
    if (n < 1 || n > kMaxQubits) {
      throw ParameterError("qubit count must be in [1, " + std::to_string(kMaxQubits) + "], got " +
                           std::to_string(n));
    }
    return n;
  }

  void check_qubit(int q) const {
    if (q < 0 || q >= n_qubits_) {
      throw IndexError("qubit " + std::to_string(q) + " out of range for " + std::to_string(n_qubits_) +
                       " qubits");
    }
  }

  int n_qubits_;
  std::vector<std::complex<double>> amplitudes_;
};

inline StateVector init_state(int n_qubits) { return StateVector(n_qubits); }

/// Rotation angles of the attention circuit plus the fixed score encoding scale.
struct CircuitParams {
  std::vector<double> theta;
  double angle_encoding_scale = 1.0;

  int n_qubits() const noexcept { return static_cast<int>(theta.size()); }

  void validate() const {
    if (theta.empty()) throw ParameterError("circuit needs at least one qubit");
    for (double t : theta) {
      if (!std::isfinite(t)) throw ParameterError("circuit angle is not finite");
    }
  }
};

/// Angle fed to every RY gate on top of its own theta: tanh(score) * scale.
inline double encoded_angle(const CircuitParams& params, double score) {
  return std::tanh(score) * params.angle_encoding_scale;
}

/// <Z_0> after RY(theta_i + tanh(score) * scale) on every qubit followed by the
/// CNOT(i, i+1) chain, computed by statevector simulation.
inline double qcsa_expectation(const CircuitParams& params, double score) {
  params.validate();
  const double shift = encoded_angle(params, score);
  StateVector state(params.n_qubits());
  for (int i = 0; i < params.n_qubits(); ++i) state.apply_ry(i, params.theta[i] + shift);
  for (int i = 0; i + 1 < params.n_qubits(); ++i) state.apply_cnot(i, i + 1);
  return state.expect_z(0);
}

struct CircuitGradient {
  std::vector<double> d_theta;
  double d_score = 0.0;
};

/// Parameter-shift gradient: two circuit evaluations per angle.
inline CircuitGradient qcsa_expectation_grad(const CircuitParams& params, double score) {
  params.validate();
  CircuitGradient grad;
  grad.d_theta.resize(params.theta.size());
  CircuitParams shifted = params;
  double total = 0.0;
  for (std::size_t i = 0; i < params.theta.size(); ++i) {
    shifted.theta[i] = params.theta[i] + std::numbers::pi / 2.0;
    const double plus = qcsa_expectation(shifted, score);
    shifted.theta[i] = params.theta[i] - std::numbers::pi / 2.0;
    const double minus = qcsa_expectation(shifted, score);
    shifted.theta[i] = params.theta[i];
    grad.d_theta[i] = 0.5 * (plus - minus);
    total += grad.d_theta[i];
  }
  const double t = std::tanh(score);
  grad.d_score = total * (1.0 - t * t) * params.angle_encoding_scale;
  return grad;
}

// Z on qubit 0 commutes with every CNOT in the chain because qubit 0 is only
// ever a control, so <Z_0> is the single-qubit value cos(angle on qubit 0).
inline double qcsa_expectation_fast(const CircuitParams& params, double score) {
  return std::cos(params.theta.at(0) + encoded_angle(params, score));
}

inline CircuitGradient qcsa_expectation_fast_grad(const CircuitParams& params, double score) {
  CircuitGradient grad;
  grad.d_theta.assign(params.theta.size(), 0.0);
  const double s = std::sin(params.theta.at(0) + encoded_angle(params, score));
  const double t = std::tanh(score);
  grad.d_theta[0] = -s;
  grad.d_score = -s * (1.0 - t * t) * params.angle_encoding_scale;
  return grad;
}

enum class CircuitBackend { kStatevector, kFast };

/// Trainable circuit owned by one quantum attention layer.
struct QuantumCircuit {
  Tensor theta;  // [n_qubits]
  double angle_encoding_scale = 1.0;
  CircuitBackend backend = CircuitBackend::kFast;

  CircuitParams snapshot() const {
    return CircuitParams{std::vector<double>(theta.data().begin(), theta.data().end()), angle_encoding_scale};
  }
};

/// Elementwise circuit expectation of every score; differentiable in both the
/// scores and theta.
inline Tensor circuit_expectation(Graph& g, const Tensor& scores, const QuantumCircuit& circuit) {
  const CircuitParams params = circuit.snapshot();
  params.validate();
  const bool fast = circuit.backend == CircuitBackend::kFast;
  Tensor theta = circuit.theta;
  const bool tracked = detail::any_tracks(scores, theta);
  Tensor out(scores.shape(), tracked);
  auto o = out.data();
  auto s = scores.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = fast ? qcsa_expectation_fast(params, s[i]) : qcsa_expectation(params, s[i]);
  }
  if (tracked) {
    g.record(out, {scores, theta}, [scores, theta, out, params, fast]() mutable {
      auto go = out.grad();
      auto s = scores.data();
      std::vector<double> d_theta(params.theta.size(), 0.0);
      std::span<double> d_scores;
      if (scores.requires_grad()) d_scores = scores.mutable_grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (go[i] == 0.0) continue;
        const auto grad = fast ? qcsa_expectation_fast_grad(params, s[i]) : qcsa_expectation_grad(params, s[i]);
        if (!d_scores.empty()) d_scores[i] += go[i] * grad.d_score;
        for (std::size_t q = 0; q < d_theta.size(); ++q) d_theta[q] += go[i] * grad.d_theta[q];
      }
      if (theta.requires_grad()) {
        auto gt = theta.mutable_grad();
        for (std::size_t q = 0; q < d_theta.size(); ++q) gt[q] += d_theta[q];
      }
    });
  }
  return out;
}

}  // namespace qcaa
