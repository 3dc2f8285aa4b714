#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace pwt {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major n-dimensional array of reals. The single value carrier for
// activations, parameters and gradients. Dimensions must be positive.
template <typename T>
class Tensor {
    static_assert(std::is_floating_point_v<T>);

public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        std::size_t n = 1;
        for (std::size_t d : shape_) {
            if (d == 0) throw std::invalid_argument("Tensor: zero-sized dimension in " + shape_str(shape_));
            n *= d;
        }
        data_.assign(n, T{0});
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor from(Shape shape, std::vector<T> values) {
        Tensor t(std::move(shape));
        if (values.size() != t.numel())
            throw std::invalid_argument("Tensor::from: value count does not match shape " + shape_str(t.shape_));
        t.data_ = std::move(values);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_.size(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Same data, new shape; element count must be preserved.
    Tensor reshaped(Shape shape) const {
        Tensor t;
        t.shape_ = std::move(shape);
        std::size_t n = 1;
        for (std::size_t d : t.shape_) n *= d;
        if (n != numel())
            throw std::invalid_argument("Tensor::reshaped: cannot reshape " + shape_str(shape_) + " to " +
                                        shape_str(t.shape_));
        t.data_ = data_;
        return t;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

// Every kernel ends with finite outputs; NaN/Inf anywhere is a hard error.
template <typename T>
void ensure_finite(const Tensor<T>& t, const char* context) {
    if (!t.all_finite()) throw std::runtime_error(std::string(context) + ": non-finite value produced");
}

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Derives independent deterministic sub-stream seeds from a run seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t extra = 0) {
    return mix64(seed ^ mix64(tag) ^ mix64(mix64(extra) + 0xD1B54A32D192ED03ull));
}

// Deterministic random source. All draws go through explicit, portable
// transformations of the mt19937_64 stream so that a seed fully determines
// every generated value on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Unbiased draw in [0, n) via power-of-two rejection.
    std::uint64_t bounded(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::bounded: n must be positive");
        std::uint64_t mask = n - 1;
        mask |= mask >> 1;
        mask |= mask >> 2;
        mask |= mask >> 4;
        mask |= mask >> 8;
        mask |= mask >> 16;
        mask |= mask >> 32;
        for (;;) {
            std::uint64_t v = gen_() & mask;
            if (v < n) return v;
        }
    }

    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    template <typename Int>
    void shuffle(std::vector<Int>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace pwt
