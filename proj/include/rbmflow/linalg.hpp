#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "rbmflow/errors.hpp"

namespace rbmflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Operator (spectral) norm. Uses singular values for n <= 8 and the
/// Frobenius norm, an upper bound, beyond that.
inline double operator_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    if (m.rows() <= 8 && m.cols() <= 8) {
        Eigen::JacobiSVD<Matrix> svd(m);
        return svd.singularValues()(0);
    }
    return m.norm();
}

/// Singular values in decreasing order.
inline Vector singular_values(const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues();
}

/// Symmetric part (M + M^T) / 2.
inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Eigendecomposition of a symmetric matrix, kept so that exp(tM) can be
/// evaluated repeatedly for different t without refactoring.
class SymmetricExp {
public:
    SymmetricExp() = default;

    explicit SymmetricExp(const Matrix& symmetric) {
        Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric);
        if (solver.info() != Eigen::Success) {
            throw NumericalBreakdown("symmetric eigendecomposition failed");
        }
        eigenvalues_ = solver.eigenvalues();
        eigenvectors_ = solver.eigenvectors();
    }

    Matrix operator()(double t) const {
        const Vector scaled = (t * eigenvalues_).array().exp().matrix();
        return eigenvectors_ * scaled.asDiagonal() * eigenvectors_.transpose();
    }

    Vector apply(double t, const Vector& z) const {
        const Vector coords = eigenvectors_.transpose() * z;
        const Vector scaled = ((t * eigenvalues_).array().exp() * coords.array()).matrix();
        return eigenvectors_ * scaled;
    }

    const Vector& eigenvalues() const { return eigenvalues_; }
    const Matrix& eigenvectors() const { return eigenvectors_; }

    double spectral_radius() const {
        return eigenvalues_.size() == 0 ? 0.0 : eigenvalues_.cwiseAbs().maxCoeff();
    }

private:
    Vector eigenvalues_;
    Matrix eigenvectors_;
};

}  // namespace rbmflow
