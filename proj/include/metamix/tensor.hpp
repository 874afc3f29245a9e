#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace metamix {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

// Dense row-major array of doubles. Rank 0 is a scalar with one element.
class Tensor {
public:
    Tensor() : shape_{}, data_(1, 0.0) {}

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

    Tensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_numel(shape_)) {
            throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor scalar(double v) {
        Tensor t;
        t.data_[0] = v;
        return t;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-d access
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    double item() const {
        if (numel() != 1) {
            throw std::invalid_argument("Tensor::item: tensor has " + std::to_string(numel()) +
                                        " elements, expected 1");
        }
        return data_[0];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

namespace detail {
inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}
inline void require_rank(const char* op, const Tensor& t, std::size_t r) {
    if (t.rank() != r) {
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(r) +
                                    " tensor, got " + shape_str(t.shape()));
    }
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("add", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("subtract", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("multiply", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

inline Tensor neg(const Tensor& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = -a[i];
    return out;
}

inline Tensor scale(const Tensor& a, double c) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * c;
    return out;
}

inline Tensor relu(const Tensor& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
    return out;
}

inline Tensor exp(const Tensor& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = std::exp(a[i]);
    return out;
}

inline Tensor transpose(const Tensor& a) {
    detail::require_rank("transpose", a, 2);
    const std::size_t r = a.dim(0), c = a.dim(1);
    Tensor out(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

// C = op(A) * op(B) where op transposes when the flag is set.
inline Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false) {
    detail::require_rank("matrix-multiply", a, 2);
    detail::require_rank("matrix-multiply", b, 2);
    Tensor at_local, bt_local;
    if (trans_a) at_local = transpose(a);
    if (trans_b) bt_local = transpose(b);
    const Tensor& A = trans_a ? at_local : a;
    const Tensor& B = trans_b ? bt_local : b;
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    if (k != B.dim(0)) {
        throw std::invalid_argument("matrix-multiply: inner dimensions differ, " +
                                    shape_str(A.shape()) + " vs " + shape_str(B.shape()));
    }
    Tensor out(Shape{m, n});
    const double* ad = A.data();
    const double* bd = B.data();
    double* od = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = ad + i * k;
        double* orow = od + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = bd + kk * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

// Row-wise log-softmax with max subtraction.
inline Tensor log_softmax_rows(const Tensor& x) {
    detail::require_rank("log-softmax", x, 2);
    const std::size_t r = x.dim(0), c = x.dim(1);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = x.data() + i * c;
        double m = row[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
        const double lse = m + std::log(s);
        double* orow = out.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) orow[j] = row[j] - lse;
    }
    return out;
}

inline double sum_all(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i];
    return s;
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                    shape_str(shape));
    }
    return Tensor(std::move(shape), a.vec());
}

// [c] -> [rows, c], repeating the vector in every row.
inline Tensor tile_rows(const Tensor& v, std::size_t rows) {
    detail::require_rank("tile-rows", v, 1);
    const std::size_t c = v.dim(0);
    Tensor out(Shape{rows, c});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = v[j];
    return out;
}

// [r, c] -> [c], summing over rows.
inline Tensor colsum(const Tensor& x) {
    detail::require_rank("colsum", x, 2);
    const std::size_t r = x.dim(0), c = x.dim(1);
    Tensor out(Shape{c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += x.at(i, j);
    return out;
}

inline std::size_t argmax_row(const Tensor& x, std::size_t row) {
    detail::require_rank("argmax", x, 2);
    const std::size_t c = x.dim(1);
    const double* r = x.data() + row * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
        if (r[j] > r[best]) best = j;
    return best;
}

}  // namespace metamix
