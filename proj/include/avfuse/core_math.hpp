#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace avfuse {

// Dense row-major matrix of doubles. All stored values must be finite;
// constructors and file readers reject NaN/inf.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool all_finite() const;
    void require_finite(const std::string& what) const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Seedable deterministic generator: mt19937_64 engine (bit-exact across
// platforms per the standard) with hand-rolled uniform/normal transforms so
// the produced stream never depends on libstdc++ distribution internals.
// Single-owner: do not share one instance across threads.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform();
    // uniform in [lo, hi)
    double uniform(double lo, double hi);
    // standard normal via Box-Muller (caches the second variate)
    double normal();

    // sub-seed for per-item generators, mixed with splitmix64
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t salt);
    static std::uint64_t hash_string(const std::string& s);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Numerically stable softmax (max subtraction). Throws std::invalid_argument
// on empty or non-finite input.
std::vector<double> softmax(std::span<const double> v);

// Index of the maximum; lowest index wins ties. Throws on empty input.
std::size_t argmax(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);

// Central-difference gradient oracle: (f(x+eps e_k) - f(x-eps e_k)) / (2 eps).
// Used by the test suite and the gradcheck command; independent of any
// analytic gradient path.
std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double eps);

}  // namespace avfuse
