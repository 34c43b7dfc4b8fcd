#include "orthotrack/core/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

namespace orthotrack {

namespace {

// Column-major working storage: column j occupies [j*rows, (j+1)*rows).
struct Columns {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    double* col(std::size_t j) { return data.data() + j * rows; }
    const double* col(std::size_t j) const { return data.data() + j * rows; }
};

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s += a[i] * b[i];
    }
    return s;
}

void rotate(double* p, double* q, std::size_t n, double c, double s) {
    for (std::size_t i = 0; i < n; ++i) {
        const double xp = p[i];
        const double xq = q[i];
        p[i] = c * xp - s * xq;
        q[i] = s * xp + c * xq;
    }
}

// Orthonormal completion of the columns of u flagged in `missing`. Each gap
// is filled by the standard basis vector with the largest residual after
// projecting out the columns already present; with k orthonormal columns
// that residual is at least sqrt((n - k) / n).
void complete_basis(Matrix& u, const std::vector<bool>& missing) {
    const std::size_t n = u.rows();
    const std::size_t r = u.cols();
    std::vector<bool> present(r);
    for (std::size_t k = 0; k < r; ++k) {
        present[k] = !missing[k];
    }
    std::vector<double> w(n);
    std::vector<double> best(n);
    auto residual = [&](std::size_t candidate) {
        std::fill(w.begin(), w.end(), 0.0);
        w[candidate] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k = 0; k < r; ++k) {
                if (!present[k]) {
                    continue;
                }
                double proj = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    proj += u(i, k) * w[i];
                }
                for (std::size_t i = 0; i < n; ++i) {
                    w[i] -= proj * u(i, k);
                }
            }
        }
        return std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
    };
    for (std::size_t j = 0; j < r; ++j) {
        if (present[j]) {
            continue;
        }
        double best_norm = 0.0;
        for (std::size_t candidate = 0; candidate < n; ++candidate) {
            const double norm = residual(candidate);
            if (norm > best_norm) {
                best_norm = norm;
                best = w;
            }
        }
        if (best_norm < 0.5 / std::sqrt(static_cast<double>(n))) {
            throw NumericError("svd: could not complete orthonormal basis");
        }
        for (std::size_t i = 0; i < n; ++i) {
            u(i, j) = best[i] / best_norm;
        }
        present[j] = true;
    }
}

// Requires rows >= cols.
SvdResult jacobi_tall(const Matrix& a, const SvdOptions& options) {
    const std::size_t n = a.rows();
    const std::size_t m = a.cols();

    Columns w{n, m, std::vector<double>(n * m)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            w.col(j)[i] = a(i, j);
        }
    }
    Columns v{m, m, std::vector<double>(m * m, 0.0)};
    for (std::size_t j = 0; j < m; ++j) {
        v.col(j)[j] = 1.0;
    }

    const double eps = std::numeric_limits<double>::epsilon();
    const double zero_norm = static_cast<double>(std::max(n, m)) * eps * a.frobenius_norm();
    const double zero_sq = zero_norm * zero_norm;

    int sweep = 0;
    double off = 0.0;
    for (; sweep < options.max_sweeps; ++sweep) {
        off = 0.0;
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < m; ++p) {
            for (std::size_t q = p + 1; q < m; ++q) {
                const double alpha = dot(w.col(p), w.col(p), n);
                const double beta = dot(w.col(q), w.col(q), n);
                if (alpha <= zero_sq || beta <= zero_sq) {
                    continue;
                }
                const double gamma = dot(w.col(p), w.col(q), n);
                const double cosine = std::abs(gamma) / std::sqrt(alpha * beta);
                off = std::max(off, cosine);
                if (cosine <= options.tolerance) {
                    continue;
                }
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(w.col(p), w.col(q), n, c, s);
                rotate(v.col(p), v.col(q), m, c, s);
            }
        }
        if (!rotated) {
            break;
        }
    }
    if (sweep >= options.max_sweeps) {
        std::ostringstream os;
        os << "svd: no convergence after " << options.max_sweeps
           << " sweeps; max off-diagonal cosine " << off;
        throw NumericError(os.str());
    }

    std::vector<double> norms(m);
    for (std::size_t j = 0; j < m; ++j) {
        const double sq = dot(w.col(j), w.col(j), n);
        norms[j] = sq <= zero_sq ? 0.0 : std::sqrt(sq);
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    SvdResult out;
    out.sweeps = sweep + 1;
    out.u = Matrix(n, m);
    out.v = Matrix(m, m);
    out.sigma.resize(m);
    std::vector<bool> missing(m, false);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t j = order[k];
        out.sigma[k] = norms[j];
        for (std::size_t i = 0; i < m; ++i) {
            out.v(i, k) = v.col(j)[i];
        }
        if (norms[j] == 0.0) {
            missing[k] = true;
            continue;
        }
        for (std::size_t i = 0; i < n; ++i) {
            out.u(i, k) = w.col(j)[i] / norms[j];
        }
    }
    if (std::find(missing.begin(), missing.end(), true) != missing.end()) {
        complete_basis(out.u, missing);
    }
    return out;
}

void normalize_signs(SvdResult& res) {
    for (std::size_t k = 0; k < res.sigma.size(); ++k) {
        std::size_t best = 0;
        double mag = -1.0;
        for (std::size_t i = 0; i < res.u.rows(); ++i) {
            if (std::abs(res.u(i, k)) > mag) {
                mag = std::abs(res.u(i, k));
                best = i;
            }
        }
        if (res.u(best, k) < 0.0) {
            for (std::size_t i = 0; i < res.u.rows(); ++i) {
                res.u(i, k) = -res.u(i, k);
            }
            for (std::size_t i = 0; i < res.v.rows(); ++i) {
                res.v(i, k) = -res.v(i, k);
            }
        }
    }
}

} // namespace

SvdResult svd(const Matrix& m, const SvdOptions& options) {
    if (m.rows() == 0 || m.cols() == 0) {
        throw DimensionError("svd: empty matrix");
    }
    for (double x : m.data()) {
        if (!std::isfinite(x)) {
            throw NumericError("svd: non-finite entry");
        }
    }
    SvdResult res;
    if (m.rows() >= m.cols()) {
        res = jacobi_tall(m, options);
    } else {
        res = jacobi_tall(m.transposed(), options);
        std::swap(res.u, res.v);
    }
    normalize_signs(res);
    return res;
}

SvdResult svd(const Tensor& m, const SvdOptions& options) {
    return svd(Matrix::from_span(m.rows(), m.cols(), m.values()), options);
}

Matrix svd_sigma_backward(const SvdResult& factors, std::span<const double> upstream) {
    const std::size_t r = factors.sigma.size();
    if (upstream.size() != r) {
        throw DimensionError("svd_sigma_backward: upstream has " + std::to_string(upstream.size()) +
                             " entries, expected " + std::to_string(r));
    }
    const std::size_t n = factors.u.rows();
    const std::size_t m = factors.v.rows();
    Matrix grad(n, m);
    for (std::size_t k = 0; k < r; ++k) {
        const double g = upstream[k];
        if (g == 0.0) {
            continue;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double gu = g * factors.u(i, k);
            for (std::size_t j = 0; j < m; ++j) {
                grad(i, j) += gu * factors.v(j, k);
            }
        }
    }
    return grad;
}

Matrix svd_sigma_backward(const Matrix& m, std::span<const double> upstream) {
    return svd_sigma_backward(svd(m), upstream);
}

Tensor singular_values(const Tensor& m, const SvdOptions& options) {
    auto factors = std::make_shared<SvdResult>(svd(m, options));
    const std::size_t r = factors->sigma.size();
    return make_op({r}, factors->sigma, {m}, [m, factors](std::span<const double> g) {
        const Matrix dm = svd_sigma_backward(*factors, g);
        auto buf = m.grad_buffer();
        for (std::size_t i = 0; i < buf.size(); ++i) {
            buf[i] += dm.data()[i];
        }
    });
}

double l1_to_threshold(std::span<const double> sigma, double tau) {
    double s = 0.0;
    for (double x : sigma) {
        s += std::abs(x - tau);
    }
    return s;
}

Tensor l1_to_threshold(const Tensor& sigma, double tau) {
    if (sigma.numel() == 0) {
        throw DimensionError("l1_to_threshold: empty singular value vector");
    }
    return make_op({}, {l1_to_threshold(sigma.values(), tau)}, {sigma},
                   [sigma, tau](std::span<const double> g) {
                       auto buf = sigma.grad_buffer();
                       auto vals = sigma.values();
                       for (std::size_t i = 0; i < vals.size(); ++i) {
                           const double d = vals[i] - tau;
                           buf[i] += g[0] * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
                       }
                   });
}

double stable_rank(std::span<const double> sigma) {
    if (sigma.empty() || sigma[0] == 0.0) {
        return 0.0;
    }
    double fro = 0.0;
    for (double s : sigma) {
        fro += s * s;
    }
    return fro / (sigma[0] * sigma[0]);
}

} // namespace orthotrack
