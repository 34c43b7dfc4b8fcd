#include "orthotrack/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace orthotrack {

namespace {

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

void accumulate(const Tensor& t, std::span<const double> g) {
    if (!t.requires_grad()) {
        return;
    }
    auto buf = t.grad_buffer();
    for (std::size_t i = 0; i < buf.size(); ++i) {
        buf[i] += g[i];
    }
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t n = a.rows();
    const std::size_t k = a.cols();
    const std::size_t m = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " by " +
                             shape_str(b.shape()));
    }
    std::vector<double> out(n * m, 0.0);
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const double* brow = bv.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) {
                row[j] += aip * brow[j];
            }
        }
    }
    return make_op({n, m}, std::move(out), {a, b}, [a, b, n, k, m](std::span<const double> g) {
        auto av = a.values();
        auto bv = b.values();
        if (a.requires_grad()) {
            auto ga = a.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                const double* grow = g.data() + i * m;
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = bv.data() + p * m;
                    double s = 0.0;
                    for (std::size_t j = 0; j < m; ++j) {
                        s += grow[j] * brow[j];
                    }
                    ga[i * k + p] += s;
                }
            }
        }
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                const double* grow = g.data() + i * m;
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = av[i * k + p];
                    double* gbrow = gb.data() + p * m;
                    for (std::size_t j = 0; j < m; ++j) {
                        gbrow[j] += aip * grow[j];
                    }
                }
            }
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t n = a.rows();
    const std::size_t m = a.cols();
    std::vector<double> out(n * m);
    auto av = a.values();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            out[j * n + i] = av[i * m + j];
        }
    }
    return make_op({m, n}, std::move(out), {a}, [a, n, m](std::span<const double> g) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                ga[i * m + j] += g[j * n + i];
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.values().begin(), a.values().end());
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += bv[i];
    }
    return make_op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        accumulate(a, g);
        accumulate(b, g);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.values().begin(), a.values().end());
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= bv[i];
    }
    return make_op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        accumulate(a, g);
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            for (std::size_t i = 0; i < gb.size(); ++i) {
                gb[i] -= g[i];
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] * bv[i];
    }
    return make_op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        auto av = a.values();
        auto bv = b.values();
        if (a.requires_grad()) {
            auto ga = a.grad_buffer();
            for (std::size_t i = 0; i < ga.size(); ++i) {
                ga[i] += g[i] * bv[i];
            }
        }
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            for (std::size_t i = 0; i < gb.size(); ++i) {
                gb[i] += g[i] * av[i];
            }
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.values().begin(), a.values().end());
    for (double& x : out) {
        x *= factor;
    }
    return make_op(a.shape(), std::move(out), {a}, [a, factor](std::span<const double> g) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += factor * g[i];
        }
    });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
    require_matrix(x, "add_row");
    const std::size_t n = x.rows();
    const std::size_t m = x.cols();
    if (row.numel() != m) {
        throw DimensionError("add_row: row of " + shape_str(row.shape()) + " for " + shape_str(x.shape()));
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    auto rv = row.values();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            out[i * m + j] += rv[j];
        }
    }
    return make_op(x.shape(), std::move(out), {x, row}, [x, row, n, m](std::span<const double> g) {
        accumulate(x, g);
        if (row.requires_grad()) {
            auto gr = row.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < m; ++j) {
                    gr[j] += g[i * m + j];
                }
            }
        }
    });
}

Tensor scale_rows(const Tensor& x, std::span<const double> weights) {
    require_matrix(x, "scale_rows");
    const std::size_t n = x.rows();
    const std::size_t m = x.cols();
    if (weights.size() != n) {
        throw DimensionError("scale_rows: " + std::to_string(weights.size()) + " weights for " +
                             shape_str(x.shape()));
    }
    std::vector<double> w(weights.begin(), weights.end());
    std::vector<double> out(x.values().begin(), x.values().end());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            out[i * m + j] *= w[i];
        }
    }
    return make_op(x.shape(), std::move(out), {x}, [x, w = std::move(w), n, m](std::span<const double> g) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                gx[i * m + j] += w[i] * g[i * m + j];
            }
        }
    });
}

Tensor softmax_rows(const Tensor& x) {
    require_matrix(x, "softmax_rows");
    const std::size_t n = x.rows();
    const std::size_t m = x.cols();
    auto xv = x.values();
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = xv.data() + i * m;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < m; ++j) {
            if (std::isnan(row[j])) {
                throw NumericError("softmax_rows: NaN at (" + std::to_string(i) + "," + std::to_string(j) + ")");
            }
            mx = std::max(mx, row[j]);
        }
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            out[i * m + j] = std::exp(row[j] - mx);
            s += out[i * m + j];
        }
        for (std::size_t j = 0; j < m; ++j) {
            out[i * m + j] /= s;
        }
    }
    std::vector<double> saved = out;
    return make_op(x.shape(), std::move(out), {x}, [x, y = std::move(saved), n, m](std::span<const double> g) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
            double dotgy = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                dotgy += g[i * m + j] * y[i * m + j];
            }
            for (std::size_t j = 0; j < m; ++j) {
                gx[i * m + j] += y[i * m + j] * (g[i * m + j] - dotgy);
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_matrix(x, "layer_norm");
    const std::size_t n = x.rows();
    const std::size_t m = x.cols();
    if (gamma.numel() != m || beta.numel() != m) {
        throw DimensionError("layer_norm: affine parameters must have " + std::to_string(m) + " entries");
    }
    auto xv = x.values();
    auto gv = gamma.values();
    auto bv = beta.values();
    std::vector<double> xhat(n * m);
    std::vector<double> inv_std(n);
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = xv.data() + i * m;
        double mu = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            mu += row[j];
        }
        mu /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            var += (row[j] - mu) * (row[j] - mu);
        }
        var /= static_cast<double>(m);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < m; ++j) {
            xhat[i * m + j] = (row[j] - mu) * inv_std[i];
            out[i * m + j] = gv[j] * xhat[i * m + j] + bv[j];
        }
    }
    return make_op(x.shape(), std::move(out), {x, gamma, beta},
                   [x, gamma, beta, n, m, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                       std::span<const double> g) {
                       auto gv = gamma.values();
                       if (gamma.requires_grad()) {
                           auto gg = gamma.grad_buffer();
                           for (std::size_t i = 0; i < n; ++i) {
                               for (std::size_t j = 0; j < m; ++j) {
                                   gg[j] += g[i * m + j] * xhat[i * m + j];
                               }
                           }
                       }
                       if (beta.requires_grad()) {
                           auto gb = beta.grad_buffer();
                           for (std::size_t i = 0; i < n; ++i) {
                               for (std::size_t j = 0; j < m; ++j) {
                                   gb[j] += g[i * m + j];
                               }
                           }
                       }
                       if (x.requires_grad()) {
                           auto gx = x.grad_buffer();
                           const double inv_m = 1.0 / static_cast<double>(m);
                           for (std::size_t i = 0; i < n; ++i) {
                               double mean_d = 0.0;
                               double mean_dx = 0.0;
                               for (std::size_t j = 0; j < m; ++j) {
                                   const double d = g[i * m + j] * gv[j];
                                   mean_d += d;
                                   mean_dx += d * xhat[i * m + j];
                               }
                               mean_d *= inv_m;
                               mean_dx *= inv_m;
                               for (std::size_t j = 0; j < m; ++j) {
                                   const double d = g[i * m + j] * gv[j];
                                   gx[i * m + j] += inv_std[i] * (d - mean_d - xhat[i * m + j] * mean_dx);
                               }
                           }
                       }
                   });
}

Tensor gelu(const Tensor& x) {
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
    }
    return make_op(x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
        auto xv = x.values();
        auto gx = x.grad_buffer();
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double cdf = 0.5 * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * xv[i] * xv[i]);
            gx[i] += g[i] * (cdf + xv[i] * pdf);
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = xv[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-xv[i])) : std::exp(xv[i]) / (1.0 + std::exp(xv[i]));
    }
    std::vector<double> saved = out;
    return make_op(x.shape(), std::move(out), {x}, [x, y = std::move(saved)](std::span<const double> g) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < y.size(); ++i) {
            gx[i] += g[i] * y[i] * (1.0 - y[i]);
        }
    });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) {
        s += v;
    }
    return make_op({}, {s}, {x}, [x](std::span<const double> g) {
        auto gx = x.grad_buffer();
        for (double& v : gx) {
            v += g[0];
        }
    });
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) {
        throw DimensionError("mean: empty tensor");
    }
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor block(const Tensor& x, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
             std::size_t col_end) {
    require_matrix(x, "block");
    const std::size_t m = x.cols();
    if (row_begin > row_end || row_end > x.rows() || col_begin > col_end || col_end > m) {
        throw DimensionError("block: range out of bounds for " + shape_str(x.shape()));
    }
    const std::size_t br = row_end - row_begin;
    const std::size_t bc = col_end - col_begin;
    std::vector<double> out(br * bc);
    auto xv = x.values();
    for (std::size_t i = 0; i < br; ++i) {
        std::copy_n(xv.data() + (row_begin + i) * m + col_begin, bc, out.data() + i * bc);
    }
    return make_op({br, bc}, std::move(out), {x},
                   [x, row_begin, col_begin, br, bc, m](std::span<const double> g) {
                       auto gx = x.grad_buffer();
                       for (std::size_t i = 0; i < br; ++i) {
                           for (std::size_t j = 0; j < bc; ++j) {
                               gx[(row_begin + i) * m + col_begin + j] += g[i * bc + j];
                           }
                       }
                   });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    return block(x, begin, end, 0, x.cols());
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    return block(x, 0, x.rows(), begin, end);
}

Tensor index_rows(const Tensor& x, std::span<const std::size_t> rows) {
    require_matrix(x, "index_rows");
    const std::size_t m = x.cols();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    std::vector<double> out(idx.size() * m);
    auto xv = x.values();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= x.rows()) {
            throw DimensionError("index_rows: row " + std::to_string(idx[i]) + " out of range");
        }
        std::copy_n(xv.data() + idx[i] * m, m, out.data() + i * m);
    }
    const std::size_t n_out = idx.size();
    return make_op({n_out, m}, std::move(out), {x}, [x, idx = std::move(idx), m](std::span<const double> g) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                gx[idx[i] * m + j] += g[i * m + j];
            }
        }
    });
}

Tensor index_cols(const Tensor& x, std::span<const std::size_t> cols) {
    require_matrix(x, "index_cols");
    const std::size_t n = x.rows();
    const std::size_t m = x.cols();
    std::vector<std::size_t> idx(cols.begin(), cols.end());
    const std::size_t k = idx.size();
    std::vector<double> out(n * k);
    auto xv = x.values();
    for (std::size_t j = 0; j < k; ++j) {
        if (idx[j] >= m) {
            throw DimensionError("index_cols: column " + std::to_string(idx[j]) + " out of range");
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            out[i * k + j] = xv[i * m + idx[j]];
        }
    }
    return make_op({n, k}, std::move(out), {x}, [x, idx = std::move(idx), n, m, k](std::span<const double> g) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                gx[i * m + idx[j]] += g[i * k + j];
            }
        }
    });
}

Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> rows, std::size_t total) {
    require_matrix(x, "scatter_rows");
    if (rows.size() != x.rows()) {
        throw DimensionError("scatter_rows: " + std::to_string(rows.size()) + " targets for " +
                             shape_str(x.shape()));
    }
    const std::size_t m = x.cols();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    std::vector<double> out(total * m, 0.0);
    auto xv = x.values();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= total) {
            throw DimensionError("scatter_rows: target row " + std::to_string(idx[i]) + " out of range");
        }
        for (std::size_t j = 0; j < m; ++j) {
            out[idx[i] * m + j] += xv[i * m + j];
        }
    }
    return make_op({total, m}, std::move(out), {x}, [x, idx = std::move(idx), m](std::span<const double> g) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                gx[i * m + j] += g[idx[i] * m + j];
            }
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_rows: no inputs");
    }
    const std::size_t m = parts.front().cols();
    std::size_t n = 0;
    for (const auto& p : parts) {
        if (p.cols() != m) {
            throw DimensionError("concat_rows: column mismatch " + shape_str(p.shape()));
        }
        n += p.rows();
    }
    std::vector<double> out;
    out.reserve(n * m);
    for (const auto& p : parts) {
        out.insert(out.end(), p.values().begin(), p.values().end());
    }
    return make_op({n, m}, std::move(out), parts, [parts](std::span<const double> g) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            accumulate(p, g.subspan(offset, p.numel()));
            offset += p.numel();
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols: no inputs");
    }
    const std::size_t n = parts.front().rows();
    std::size_t m = 0;
    for (const auto& p : parts) {
        if (p.rows() != n) {
            throw DimensionError("concat_cols: row mismatch " + shape_str(p.shape()));
        }
        m += p.cols();
    }
    std::vector<double> out(n * m);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t pc = p.cols();
        auto pv = p.values();
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(pv.data() + i * pc, pc, out.data() + i * m + offset);
        }
        offset += pc;
    }
    return make_op({n, m}, std::move(out), parts, [parts, n, m](std::span<const double> g) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            const std::size_t pc = p.cols();
            if (p.requires_grad()) {
                auto gp = p.grad_buffer();
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < pc; ++j) {
                        gp[i * pc + j] += g[i * m + offset + j];
                    }
                }
            }
            offset += pc;
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    return make_op(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()), {x},
                   [x](std::span<const double> g) { accumulate(x, g); });
}

} // namespace orthotrack
