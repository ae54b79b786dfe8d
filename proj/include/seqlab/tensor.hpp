#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "seqlab/runtime.hpp"

namespace seqlab {

/// Dense row-major numeric array. The one value carrier shared by every
/// layer, optimizer and analysis routine. Instantiated with float for
/// training and double for gradient checking.
template <typename Scalar>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<Scalar> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), Scalar(0));
    }

    Tensor(std::vector<std::size_t> s, std::vector<Scalar> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != data.size())
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) {
            if (d == 0) throw std::invalid_argument("tensor: zero dimension");
            n *= d;
        }
        return n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    // 2-D accessors; most of the library works on matrices.
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }
    Scalar& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    Scalar at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
    Scalar* row_ptr(std::size_t i) { return data.data() + i * cols(); }
    const Scalar* row_ptr(std::size_t i) const { return data.data() + i * cols(); }

    void fill(Scalar v) { std::fill(data.begin(), data.end(), v); }

    std::string shape_str() const {
        std::ostringstream os;
        os << '(';
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << ')';
        return os.str();
    }
};

template <typename S>
Tensor<S> zeros(std::vector<std::size_t> shape) {
    return Tensor<S>(std::move(shape));
}

template <typename S>
Tensor<S> full(std::vector<std::size_t> shape, S v) {
    Tensor<S> t(std::move(shape));
    t.fill(v);
    return t;
}

template <typename S>
Tensor<S> identity(std::size_t n) {
    Tensor<S> t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = S(1);
    return t;
}

/// Row-major matrix from nested braces, e.g. matrix<double>({{1,2},{3,4}}).
template <typename S>
Tensor<S> matrix(std::initializer_list<std::initializer_list<S>> rows_init) {
    const std::size_t r = rows_init.size();
    if (r == 0) throw std::invalid_argument("matrix: empty");
    const std::size_t c = rows_init.begin()->size();
    Tensor<S> t({r, c});
    std::size_t i = 0;
    for (const auto& row : rows_init) {
        if (row.size() != c) throw std::invalid_argument("matrix: ragged rows");
        std::copy(row.begin(), row.end(), t.row_ptr(i++));
    }
    return t;
}

template <typename S>
Tensor<S> vector_tensor(std::initializer_list<S> v) {
    return Tensor<S>({v.size()}, std::vector<S>(v));
}

namespace detail {

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

template <typename S>
void require_matrix(const Tensor<S>& t, const char* who) {
    require(t.rank() == 2, std::string(who) + ": expected a matrix, got rank " +
                               std::to_string(t.rank()));
}

// Register-tiled microkernel: an MR x NR block of C is accumulated in local
// storage over the full p range, then added back. Each C element sees the p
// reduction in ascending order, so results do not depend on how the caller
// partitions rows across threads.
inline constexpr std::size_t kGemmMR = 8;
inline constexpr std::size_t kGemmNR = 32;

template <typename S>
void gemm_tile(const S* a, const S* b, S* c, std::size_t i0, std::size_t j0, std::size_t k,
               std::size_t n, std::size_t lda) {
    constexpr std::size_t MR = kGemmMR, NR = kGemmNR;
    S acc[MR][NR] = {};
    for (std::size_t p = 0; p < k; ++p) {
        const S* brow = b + p * n + j0;
        S av[MR];
        for (std::size_t im = 0; im < MR; ++im) av[im] = a[(i0 + im) * lda + p];
#pragma omp simd
        for (std::size_t j = 0; j < NR; ++j) {
            const S bv = brow[j];
            for (std::size_t im = 0; im < MR; ++im) acc[im][j] += av[im] * bv;
        }
    }
    for (std::size_t im = 0; im < MR; ++im) {
        S* crow = c + (i0 + im) * n + j0;
        for (std::size_t j = 0; j < NR; ++j) crow[j] += acc[im][j];
    }
}

// Fallback for ragged edges; same fixed p order per element.
template <typename S>
void gemm_edge(const S* a, const S* b, S* c, std::size_t i0, std::size_t i1, std::size_t j0,
               std::size_t j1, std::size_t k, std::size_t n, std::size_t lda) {
    for (std::size_t i = i0; i < i1; ++i) {
        const S* arow = a + i * lda;
        S* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const S ap = arow[p];
            const S* brow = b + p * n;
            for (std::size_t j = j0; j < j1; ++j) crow[j] += ap * brow[j];
        }
    }
}

// C += A*B restricted to rows [i0,i1).
template <typename S>
void gemm_rows(const S* a, const S* b, S* c, std::size_t i0, std::size_t i1, std::size_t k,
               std::size_t n) {
    constexpr std::size_t MR = kGemmMR, NR = kGemmNR;
    const std::size_t jt = n - n % NR;
    std::size_t i = i0;
    for (; i + MR <= i1; i += MR) {
        for (std::size_t j = 0; j < jt; j += NR) gemm_tile(a, b, c, i, j, k, n, k);
        if (jt < n) gemm_edge(a, b, c, i, i + MR, jt, n, k, n, k);
    }
    if (i < i1) gemm_edge(a, b, c, i, i1, 0, n, k, n, k);
}

// Branch-free single-precision exp (Cephes polynomial over one octave plus
// exponent reconstruction), accurate to a couple of ulps. Written scalar so
// the surrounding loops vectorize; libm stays in charge of the double path,
// which gradient checking depends on.
[[gnu::always_inline]] inline float fast_expf(float x) {
    x = std::min(87.0f, std::max(-87.33654f, x));
    // nearest multiple of ln2 via int conversion (std::floor defeats the
    // vectorizer); the integer doubles as the result exponent
    const float y = 1.44269504088896341f * x;
    const std::int32_t n = static_cast<std::int32_t>(y >= 0.0f ? y + 0.5f : y - 0.5f);
    const float z = static_cast<float>(n);
    float r = x - z * 0.693359375f;
    r -= z * -2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    return p * std::bit_cast<float>((n + 127) << 23);
}

[[gnu::always_inline]] inline float fast_sigmoidf(float x) { return 1.0f / (1.0f + fast_expf(-x)); }

[[gnu::always_inline]] inline float fast_tanhf(float x) {
    const float e = fast_expf(2.0f * x);
    return (e - 1.0f) / (e + 1.0f);
}

}  // namespace detail

/// c += a*b without clearing c first.
template <typename S>
void gemm_acc(const Tensor<S>& a, const Tensor<S>& b, Tensor<S>& c) {
    detail::require_matrix(a, "gemm");
    detail::require_matrix(b, "gemm");
    detail::require(a.cols() == b.rows(),
                    "gemm: inner dimensions mismatch " + a.shape_str() + " x " + b.shape_str());
    detail::require(c.rank() == 2 && c.rows() == a.rows() && c.cols() == b.cols(),
                    "gemm: output shape mismatch " + c.shape_str());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    runtime::parallel_for(0, m, [&](std::size_t i0, std::size_t i1) {
        detail::gemm_rows(a.data.data(), b.data.data(), c.data.data(), i0, i1, k, n);
    });
}

/// Matrix product c[i][j] = sum_p a[i][p] * b[p][j].
template <typename S>
Tensor<S> gemm(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_matrix(a, "gemm");
    detail::require_matrix(b, "gemm");
    detail::require(a.cols() == b.rows(),
                    "gemm: inner dimensions mismatch " + a.shape_str() + " x " + b.shape_str());
    Tensor<S> c({a.rows(), b.cols()});
    gemm_acc(a, b, c);
    return c;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
    detail::require_matrix(a, "transpose");
    Tensor<S> t({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

/// a[m x k] * b^T where b is [n x k]; the layout every layer stores its
/// weights in, so forward passes avoid materializing transposes by hand.
template <typename S>
Tensor<S> gemm_nt(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_matrix(a, "gemm_nt");
    detail::require_matrix(b, "gemm_nt");
    detail::require(a.cols() == b.cols(),
                    "gemm_nt: inner dimensions mismatch " + a.shape_str() + " x " +
                        b.shape_str() + "^T");
    return gemm(a, transpose(b));
}

/// c += a^T * b with a [p x m], b [p x n]: the weight-gradient product.
/// Realized as an explicit transpose followed by the tiled kernel; the p
/// reduction order per output element stays fixed either way.
template <typename S>
void gemm_tn_acc(const Tensor<S>& a, const Tensor<S>& b, Tensor<S>& c) {
    detail::require_matrix(a, "gemm_tn");
    detail::require_matrix(b, "gemm_tn");
    detail::require(a.rows() == b.rows(),
                    "gemm_tn: inner dimensions mismatch " + a.shape_str() + "^T x " +
                        b.shape_str());
    detail::require(c.rank() == 2 && c.rows() == a.cols() && c.cols() == b.cols(),
                    "gemm_tn: output shape mismatch " + c.shape_str());
    gemm_acc(transpose(a), b, c);
}

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* who) {
    detail::require(a.shape == b.shape, std::string(who) + ": shape mismatch " + a.shape_str() +
                                            " vs " + b.shape_str());
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    Tensor<S> y(x.shape);
    const S* in = x.data.data();
    S* out = y.data.data();
    const std::size_t n = x.numel();
    if constexpr (std::is_same_v<S, float>) {
#pragma omp simd
        for (std::size_t i = 0; i < n; ++i) out[i] = detail::fast_sigmoidf(in[i]);
    } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = S(1) / (S(1) + std::exp(-in[i]));
    }
    return y;
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
    Tensor<S> y(x.shape);
    const S* in = x.data.data();
    S* out = y.data.data();
    const std::size_t n = x.numel();
    if constexpr (std::is_same_v<S, float>) {
#pragma omp simd
        for (std::size_t i = 0; i < n; ++i) out[i] = detail::fast_tanhf(in[i]);
    } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
    }
    return y;
}

template <typename S>
Tensor<S> hadamard(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape(a, b, "hadamard");
    Tensor<S> y(a.shape);
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = a.data[i] * b.data[i];
    return y;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape(a, b, "add");
    Tensor<S> y(a.shape);
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = a.data[i] + b.data[i];
    return y;
}

template <typename S>
void add_inplace(Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape(a, b, "add_inplace");
    for (std::size_t i = 0; i < a.numel(); ++i) a.data[i] += b.data[i];
}

/// Adds a length-n bias vector to every row of an [m x n] matrix.
template <typename S>
void add_bias_rows(Tensor<S>& m, const Tensor<S>& bias) {
    detail::require_matrix(m, "add_bias_rows");
    detail::require(bias.rank() == 1 && bias.dim(0) == m.cols(),
                    "add_bias_rows: bias shape mismatch " + bias.shape_str());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        S* row = m.row_ptr(i);
        const S* b = bias.data.data();
        for (std::size_t j = 0; j < m.cols(); ++j) row[j] += b[j];
    }
}

/// Shift-stable softmax over the last dimension: the row max is subtracted
/// before exponentiating so arbitrarily large logits cannot overflow.
template <typename S>
Tensor<S> softmax(const Tensor<S>& logits) {
    detail::require(logits.rank() >= 1, "softmax: rank must be >= 1");
    const std::size_t v = logits.shape.back();
    const std::size_t rows = logits.numel() / v;
    Tensor<S> out(logits.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const S* in = logits.data.data() + r * v;
        S* o = out.data.data() + r * v;
        S mx = in[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, in[j]);
        S sum = S(0);
        for (std::size_t j = 0; j < v; ++j) {
            if constexpr (std::is_same_v<S, float>)
                o[j] = detail::fast_expf(in[j] - mx);
            else
                o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        const S inv = S(1) / sum;
        for (std::size_t j = 0; j < v; ++j) o[j] *= inv;
    }
    return out;
}

template <typename S>
bool all_finite(const Tensor<S>& t) {
    for (S v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

/// Concatenates two matrices with equal row counts along columns: [a | b].
template <typename S>
Tensor<S> hconcat(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_matrix(a, "hconcat");
    detail::require_matrix(b, "hconcat");
    detail::require(a.rows() == b.rows(),
                    "hconcat: row mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor<S> out({a.rows(), a.cols() + b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::copy(a.row_ptr(i), a.row_ptr(i) + a.cols(), out.row_ptr(i));
        std::copy(b.row_ptr(i), b.row_ptr(i) + b.cols(), out.row_ptr(i) + a.cols());
    }
    return out;
}

}  // namespace seqlab
