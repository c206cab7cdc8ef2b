#pragma once

// Dense complex operator algebra for small cavity (x) qubit systems.
//
// Conventions used throughout the library:
//   * factor order is cavity (leftmost) (x) qubit, built via tensor();
//   * |g> is index 0 of the qubit factor and the +1 eigenvector of sigma_z;
//   * everything is a dense Eigen::MatrixXcd; dimensions stay <= ~80.

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <iostream>
#include <stdexcept>

namespace flagrape {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr Complex kI{0.0, 1.0};

/// Composite Hilbert space: cavity truncation first, then the two-level ancilla.
struct HilbertSpace {
  int cavity_dim;
  static constexpr int qubit_dim = 2;

  explicit HilbertSpace(int d_c) : cavity_dim(d_c) {
    if (d_c < 2) throw std::invalid_argument("HilbertSpace: cavity_dim must be >= 2");
  }
  int total_dim() const { return cavity_dim * qubit_dim; }
};

/// Annihilation operator a at truncation d_c: a|n> = sqrt(n)|n-1>.
inline Matrix fock_annihilation(int d_c) {
  if (d_c < 2) throw std::invalid_argument("fock_annihilation: d_c must be >= 2");
  Matrix a = Matrix::Zero(d_c, d_c);
  for (int n = 0; n + 1 < d_c; ++n) a(n, n + 1) = std::sqrt(double(n + 1));
  return a;
}

inline Matrix fock_number(int d_c) {
  Matrix n = Matrix::Zero(d_c, d_c);
  for (int k = 0; k < d_c; ++k) n(k, k) = double(k);
  return n;
}

enum class Pauli { X, Y, Z, minus, identity };

/// 2x2 Pauli matrices in the {|g>, |e>} basis; sigma_z = diag(+1, -1),
/// sigma_- = |g><e|.
inline Matrix pauli(Pauli which) {
  Matrix m = Matrix::Zero(2, 2);
  switch (which) {
    case Pauli::X: m(0, 1) = 1.0; m(1, 0) = 1.0; break;
    case Pauli::Y: m(0, 1) = -kI; m(1, 0) = kI; break;
    case Pauli::Z: m(0, 0) = 1.0; m(1, 1) = -1.0; break;
    case Pauli::minus: m(0, 1) = 1.0; break;
    case Pauli::identity: m.setIdentity(); break;
  }
  return m;
}

/// Kronecker product, factor order matching HilbertSpace (left factor = cavity).
inline Matrix tensor(const Matrix& a, const Matrix& b) {
  return Eigen::kroneckerProduct(a, b).eval();
}

inline Vector tensor(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

// The single lifting helpers used by every composite-operator construction;
// see HilbertSpace for the fixed factor order.
inline Matrix lift_cavity(const Matrix& op, const HilbertSpace& space) {
  if (op.rows() != space.cavity_dim)
    throw std::invalid_argument("lift_cavity: dimension mismatch");
  return tensor(op, Matrix::Identity(2, 2));
}

inline Matrix lift_qubit(const Matrix& op, const HilbertSpace& space) {
  if (op.rows() != 2) throw std::invalid_argument("lift_qubit: dimension mismatch");
  return tensor(Matrix::Identity(space.cavity_dim, space.cavity_dim), op);
}

/// exp(A) for a square matrix; Pade scaling-and-squaring via Eigen.
inline Matrix matrix_exponential(const Matrix& a) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("matrix_exponential: input must be square");
  return a.exp();
}

/// Coherent states of amplitude alpha keep >= 1 - 1e-6 of their norm when this
/// holds (Poisson tail bound).
inline bool truncation_adequate(Complex alpha, int d_c) {
  const double m = std::abs(alpha);
  return m * m + 4.0 * m + 6.0 <= double(d_c);
}

/// Displacement operator D(alpha) = exp(alpha a' - conj(alpha) a) at truncation
/// d_c. Warns (does not fail) when the truncation-adequacy heuristic is violated.
inline Matrix displacement(Complex alpha, int d_c) {
  if (!truncation_adequate(alpha, d_c))
    std::cerr << "flagrape: displacement(|alpha|=" << std::abs(alpha)
              << ", d_c=" << d_c << ") below truncation-adequacy heuristic\n";
  const Matrix a = fock_annihilation(d_c);
  return matrix_exponential(alpha * a.adjoint() - std::conj(alpha) * a);
}

/// Column-0 expansion of D(alpha): amplitudes e^{-|a|^2/2} a^n / sqrt(n!).
inline Vector coherent_state(Complex alpha, int d_c) {
  Vector psi(d_c);
  Complex amp = std::exp(-0.5 * std::norm(alpha));
  for (int n = 0; n < d_c; ++n) {
    psi(n) = amp;
    amp *= alpha / std::sqrt(double(n + 1));
  }
  return psi;
}

inline Vector fock_state(int n, int d_c) {
  Vector psi = Vector::Zero(d_c);
  psi(n) = 1.0;
  return psi;
}

inline bool is_hermitian(const Matrix& m, double tol = 1e-10) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace flagrape
