#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "orthotrack/core/matrix.hpp"
#include "orthotrack/core/tensor.hpp"

namespace orthotrack {

/// Thin SVD M = U·diag(sigma)·Vᵀ with r = min(n, m).
struct SvdResult {
    Matrix u;                  ///< n×r, orthonormal columns
    std::vector<double> sigma; ///< r values, non-negative, descending
    Matrix v;                  ///< m×r, orthonormal columns
    int sweeps = 0;
};

struct SvdOptions {
    /// Converged once every column pair has |cos| below this.
    double tolerance = 1e-12;
    int max_sweeps = 100;
};

/// One-sided (Hestenes) Jacobi SVD.
///
/// Each column u_i is sign-normalized so its largest-magnitude entry is
/// positive, with v_i flipped to match; the factorization is therefore a pure
/// function of the input. Throws NumericError on non-finite input or when the
/// sweep cap is hit.
SvdResult svd(const Matrix& m, const SvdOptions& options = {});
SvdResult svd(const Tensor& m, const SvdOptions& options = {});

/// dL/dM = Σᵢ gᵢ·uᵢvᵢᵀ for upstream gradient g over the singular values.
Matrix svd_sigma_backward(const SvdResult& factors, std::span<const double> upstream);
Matrix svd_sigma_backward(const Matrix& m, std::span<const double> upstream);

/// Differentiable singular values of a matrix, shape [r]. Gradient flows only
/// through the values, never through the singular vectors.
Tensor singular_values(const Tensor& m, const SvdOptions& options = {});

/// Σᵢ |σᵢ − τ| as a scalar; subgradient sign(σᵢ − τ), zero at the kink.
Tensor l1_to_threshold(const Tensor& sigma, double tau);
double l1_to_threshold(std::span<const double> sigma, double tau);

/// ‖M‖_F² / σ₁²; zero for the zero matrix.
double stable_rank(std::span<const double> sigma);

} // namespace orthotrack
