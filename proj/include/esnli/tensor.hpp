#pragma once

// Dense row-major tensors of 64-bit floats plus the deterministic RNG and
// hashing helpers shared by the rest of the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace esnli {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

    Tensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_numel(shape_))
            throw std::invalid_argument("Tensor: data length does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

    static Tensor row(std::vector<double> v) {
        Shape s{1, v.size()};
        return Tensor(std::move(s), std::move(v));
    }
    static Tensor vec(std::vector<double> v) {
        Shape s{v.size()};
        return Tensor(std::move(s), std::move(v));
    }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        return Tensor(Shape{rows, cols}, std::move(v));
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const { return rank() == 2 ? shape_[0] : (rank() == 1 ? 1 : dim_err()); }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : dim_err()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double& at(std::size_t i) { return data_[i]; }
    double at(std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    double item() const {
        if (numel() != 1) throw std::logic_error("Tensor::item: tensor has " + std::to_string(numel()) + " elements");
        return data_[0];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& o) {
        if (!same_shape(o)) throw std::invalid_argument("Tensor+=: shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& scale(double a) {
        for (double& v : data_) v *= a;
        return *this;
    }

private:
    [[noreturn]] std::size_t dim_err() const {
        throw std::logic_error("Tensor: rank-2 access on tensor of shape " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<double> data_;
};

// --- Eigen-backed dense kernels -------------------------------------------
// Only the GEMM-shaped inner loops are delegated; everything else in the
// library is explicit C++.

namespace detail {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;
}  // namespace detail

// c (m×n) = a (m×k) · b (k×n)
inline void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
    detail::ECMap am(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
    detail::ECMap bm(b.data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
    detail::EMap cm(c.data(), static_cast<Eigen::Index>(c.rows()), static_cast<Eigen::Index>(c.cols()));
    cm.noalias() = am * bm;
}

// c (m×n) += a (m×k) · bᵀ (k×n from b n×k)
inline void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    detail::ECMap am(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
    detail::ECMap bm(b.data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
    detail::EMap cm(c.data(), static_cast<Eigen::Index>(c.rows()), static_cast<Eigen::Index>(c.cols()));
    cm.noalias() += am * bm.transpose();
}

// c (m×n) += aᵀ (m×k from a k×m) · b (k×n)
inline void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    detail::ECMap am(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
    detail::ECMap bm(b.data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
    detail::EMap cm(c.data(), static_cast<Eigen::Index>(c.rows()), static_cast<Eigen::Index>(c.cols()));
    cm.noalias() += am.transpose() * bm;
}

// --- hashing ---------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

// --- deterministic RNG -------------------------------------------------------
// Sampling is spelled out here rather than via std:: distributions so that a
// given seed reproduces bit-identical streams on any standard library.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double next_unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Box–Muller; one draw per call, the paired value is discarded.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = next_unit();
        double u2 = next_unit();
        while (u1 <= 0.0) u1 = next_unit();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
        return mean + stddev * z;
    }

    std::size_t index(std::size_t n) {
        // modulo bias is irrelevant for n << 2^64
        return static_cast<std::size_t>(engine_() % n);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        // Fisher–Yates with our own index draws, so the permutation stream is
        // pinned to the seed rather than to std::shuffle internals.
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    return fnv1a64(tag, seed ^ 0x9e3779b97f4a7c15ull);
}

}  // namespace esnli
