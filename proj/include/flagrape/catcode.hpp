#pragma once

// Four-component cat-code states and decoded logical tomography operators on
// the cavity space, plus the three-qubit repetition-code fixture used as an
// exactly solvable decoding test.

#include "flagrape/hilbert.hpp"
#include "flagrape/lindblad.hpp"

namespace flagrape {

struct CatCodeParams {
  Complex alpha = 2.0;
  int d_c = 40;
};

struct TruncationInadequate : std::runtime_error {
  TruncationInadequate(double a, int d)
      : std::runtime_error("cat code truncation d_c = " + std::to_string(d) +
                           " inadequate for |alpha| = " + std::to_string(a)) {}
};

/// Normalized |0_L> and |1_L> built from the four coherent components
/// {alpha, -alpha, i alpha, -i alpha}; |0_L> lives on Fock levels 0 mod 4,
/// |1_L> on 2 mod 4. Errors out on inadequate truncation, since support
/// leakage corrupts the parity structure.
inline std::pair<Vector, Vector> cat_basis(const CatCodeParams& params) {
  if (!truncation_adequate(params.alpha, params.d_c))
    throw TruncationInadequate(std::abs(params.alpha), params.d_c);
  const Vector cp = coherent_state(params.alpha, params.d_c);
  const Vector cm = coherent_state(-params.alpha, params.d_c);
  const Vector cip = coherent_state(kI * params.alpha, params.d_c);
  const Vector cim = coherent_state(-kI * params.alpha, params.d_c);
  Vector zero = cp + cm + cip + cim;
  Vector one = cp + cm - cip - cim;
  return {zero / zero.norm(), one / one.norm()};
}

/// (|0_L> + e^{i theta} |1_L>) / sqrt(2) up to normalization.
inline Vector logical_target(const CatCodeParams& params, double theta) {
  auto [zero, one] = cat_basis(params);
  Vector psi = zero + std::exp(kI * theta) * one;
  return psi / psi.norm();
}

/// Z tomography operator: diagonal +-1 assigning +1 to Fock levels 0,3 (mod 4)
/// (code |0_L> and its single-loss image) and -1 to levels 1,2 (mod 4).
inline Matrix z_cat(int d_c) {
  if (d_c < 4) throw std::invalid_argument("z_cat: d_c must be >= 4");
  Matrix z = Matrix::Zero(d_c, d_c);
  for (int n = 0; n < d_c; ++n)
    z(n, n) = (n % 4 == 0 || n % 4 == 3) ? 1.0 : -1.0;
  return z;
}

/// Approximate X tomography operator: X_cat = 2 X^+ - I with X^+ = X_1 + X_2,
/// X_1 = D'(alpha) (|0><0|+|1><1|) D(alpha),
/// X_2 = (I - X_1) D'(-alpha) (|0><0|+|1><1|) D(-alpha) (I - X_1).
inline Matrix x_cat(const CatCodeParams& params) {
  if (!truncation_adequate(params.alpha, params.d_c))
    std::cerr << "flagrape: x_cat truncation-adequacy heuristic violated\n";
  const int d = params.d_c;
  Matrix p01 = Matrix::Zero(d, d);
  p01(0, 0) = 1.0;
  p01(1, 1) = 1.0;
  const Matrix dp = displacement(params.alpha, d);
  const Matrix dm = displacement(-params.alpha, d);
  const Matrix x1 = dp.adjoint() * p01 * dp;
  const Matrix compl1 = Matrix::Identity(d, d) - x1;
  const Matrix x2 = compl1 * (dm.adjoint() * p01 * dm) * compl1;
  return 2.0 * (x1 + x2) - Matrix::Identity(d, d);
}

/// Y_cat = e^{-i pi Z_cat / 4} X_cat e^{+i pi Z_cat / 4}.
inline Matrix y_cat(const CatCodeParams& params) {
  const Matrix z = z_cat(params.d_c);
  const Matrix quarter = matrix_exponential(-kI * (M_PI / 4.0) * z);
  return quarter * x_cat(params) * quarter.adjoint();
}

inline TomographySet cat_tomography(const CatCodeParams& params) {
  return {x_cat(params), y_cat(params), z_cat(params.d_c)};
}

/// Decoded three-qubit repetition-code logical Z:
/// Z_L = S_0 Z_0 S_0 + S_1 Z_1 S_1 = Z_0 + Z_1 with
/// Z_0 = |000><000| - |111><111|, Z_1 = |100><100| - |011><011|.
/// Basis order |abc> = 4a + 2b + c with 0 = |0>.
inline Matrix repetition_logical_z() {
  Matrix z = Matrix::Zero(8, 8);
  z(0, 0) = 1.0;   // |000>
  z(7, 7) = -1.0;  // |111>
  z(4, 4) = 1.0;   // |100>
  z(3, 3) = -1.0;  // |011>
  return z;
}

}  // namespace flagrape
