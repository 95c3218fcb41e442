#include "avfuse/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace avfuse {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("Matrix: value count does not match shape");
    }
    require_finite("Matrix");
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double x) { return std::isfinite(x); });
}

void Matrix::require_finite(const std::string& what) const {
    if (!all_finite()) {
        throw std::invalid_argument(what + ": non-finite value");
    }
}

double Rng::uniform() {
    // 53 high bits -> double in [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; u1 in (0,1] so the log is finite
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    double ang = 2.0 * std::numbers::pi * u2;
    spare_ = mag * std::sin(ang);
    has_spare_ = true;
    return mag * std::cos(ang);
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t salt) {
    return splitmix64(seed ^ splitmix64(salt));
}

std::uint64_t Rng::hash_string(const std::string& s) {
    // FNV-1a
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<double> softmax(std::span<const double> v) {
    if (v.empty()) {
        throw std::invalid_argument("softmax: empty input");
    }
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw std::invalid_argument("softmax: non-finite input");
        }
    }
    double m = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        denom += out[i];
    }
    for (double& x : out) x /= denom;
    return out;
}

std::size_t argmax(std::span<const double> v) {
    if (v.empty()) {
        throw std::invalid_argument("argmax: empty input");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double eps) {
    if (eps <= 0.0) {
        throw std::invalid_argument("finite_diff_grad: eps must be positive");
    }
    std::vector<double> xs(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
        double orig = xs[k];
        xs[k] = orig + eps;
        double fp = f(xs);
        xs[k] = orig - eps;
        double fm = f(xs);
        xs[k] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw std::runtime_error("finite_diff_grad: non-finite evaluation");
        }
        grad[k] = (fp - fm) / (2.0 * eps);
    }
    return grad;
}

}  // namespace avfuse
