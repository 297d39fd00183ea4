#include "rlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace rlab {

namespace {

size_t checked_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + std::to_string(d));
        n *= static_cast<size_t>(d);
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape));
}

bool needs_grad(const Tensor& a) { return a.requires_grad; }
bool needs_grad(const Tensor& a, const Tensor& b) { return a.requires_grad || b.requires_grad; }

// Runs fn(row_begin, row_end) over a fixed partition of [0, rows). Each
// row is written by exactly one thread, so results are bit-identical to
// the serial loop.
void parallel_rows(int rows, size_t total_work, const std::function<void(int, int)>& fn) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw < 2 || rows < 2 || total_work < (1u << 20)) {
        fn(0, rows);
        return;
    }
    const int nthreads = static_cast<int>(std::min<unsigned>(hw, 4));
    const int chunk = (rows + nthreads - 1) / nthreads;
    std::vector<std::thread> workers;
    for (int t = 0; t < nthreads; ++t) {
        const int lo = t * chunk;
        const int hi = std::min(rows, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back(fn, lo, hi);
    }
    for (auto& w : workers) w.join();
}

} // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    Tensor t;
    const size_t n = checked_numel(shape);
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<double>>(n, 0.0);
    t.requires_grad = requires_grad;
    if (requires_grad) t.grad = std::make_shared<std::vector<double>>(n, 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.data->begin(), t.data->end(), value);
    check_finite(t, "full");
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    const size_t n = checked_numel(shape);
    if (n != values.size())
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<double>>(std::move(values));
    t.requires_grad = requires_grad;
    if (requires_grad) t.grad = std::make_shared<std::vector<double>>(n, 0.0);
    check_finite(t, "from");
    return t;
}

Tensor Tensor::scalar_of(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double mean, double sd,
                     bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : *t.data) v = rng.normal(mean, sd);
    return t;
}

double Tensor::scalar_value() const {
    if (!is_scalar()) throw ContractError("scalar_value: tensor is not scalar");
    return (*data)[0];
}

void Tensor::zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

int Tensor::last_dim() const {
    if (shape.empty()) throw ShapeError("last_dim: rank-0 tensor");
    return shape.back();
}

size_t Tensor::row_count() const {
    return numel() / static_cast<size_t>(last_dim());
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape)
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
}

void check_finite(const Tensor& t, const char* op) {
    for (double v : *t.data)
        if (!std::isfinite(v))
            throw NumericError(std::string(op) + ": non-finite value produced");
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || !loss.is_scalar())
        throw ContractError("backward: loss must be a scalar tensor");
    if (!loss.requires_grad || !loss.grad)
        throw ContractError("backward: loss does not require grad (not produced through the tape?)");
    (*loss.grad)[0] = 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

namespace {

// C[mxn] = A[mxk] * B[kxn], k ascending per cell. ikj order for locality;
// identical summation order to the naive ijk loop.
void matmul_raw(const double* a, const double* b, double* c, int m, int k, int n) {
    parallel_rows(m, static_cast<size_t>(m) * k * n, [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            double* crow = c + static_cast<size_t>(i) * n;
            std::fill(crow, crow + n, 0.0);
            const double* arow = a + static_cast<size_t>(i) * k;
            for (int kk = 0; kk < k; ++kk) {
                const double av = arow[kk];
                const double* brow = b + static_cast<size_t>(kk) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

// C[mxn] += A[mxk] * B[nxk]^T
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    parallel_rows(m, static_cast<size_t>(m) * k * n, [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            const double* arow = a + static_cast<size_t>(i) * k;
            double* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                const double* brow = b + static_cast<size_t>(j) * k;
                double s = 0.0;
                for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
                crow[j] += s;
            }
        }
    });
}

// C[kxn] += A[mxk]^T * B[mxn]
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    parallel_rows(k, static_cast<size_t>(m) * k * n, [&](int lo, int hi) {
        for (int kk = lo; kk < hi; ++kk) {
            double* crow = c + static_cast<size_t>(kk) * n;
            for (int i = 0; i < m; ++i) {
                const double av = a[static_cast<size_t>(i) * k + kk];
                const double* brow = b + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

} // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n}, needs_grad(a, b));
    matmul_raw(a.data->data(), b.data->data(), out.data->data(), m, k, n);
    check_finite(out, "matmul");
    if (out.requires_grad) {
        tape.record([a, b, out, m, k, n] {
            if (a.requires_grad) // dA += dC * B^T
                matmul_nt_acc(out.grad->data(), b.data->data(), a.grad->data(), m, n, k);
            if (b.requires_grad) // dB += A^T * dC
                matmul_tn_acc(a.data->data(), out.grad->data(), b.grad->data(), m, k, n);
        });
    }
    return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
    require_rank2(a, "transpose");
    const int m = a.dim(0), n = a.dim(1);
    Tensor out = Tensor::zeros({n, m}, needs_grad(a));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at2(j, i) = a.at2(i, j);
    if (out.requires_grad) {
        tape.record([a, out, m, n]() mutable {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    (*a.grad)[static_cast<size_t>(i) * n + j] +=
                        (*out.grad)[static_cast<size_t>(j) * m + i];
        });
    }
    return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape, needs_grad(a, b));
    const size_t n = out.numel();
    for (size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
    check_finite(out, "add");
    if (out.requires_grad) {
        tape.record([a, b, out, n] {
            if (a.requires_grad)
                for (size_t i = 0; i < n; ++i) (*a.grad)[i] += (*out.grad)[i];
            if (b.requires_grad)
                for (size_t i = 0; i < n; ++i) (*b.grad)[i] += (*out.grad)[i];
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape, needs_grad(a, b));
    const size_t n = out.numel();
    for (size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
    check_finite(out, "mul");
    if (out.requires_grad) {
        tape.record([a, b, out, n] {
            if (a.requires_grad)
                for (size_t i = 0; i < n; ++i) (*a.grad)[i] += (*out.grad)[i] * (*b.data)[i];
            if (b.requires_grad)
                for (size_t i = 0; i < n; ++i) (*b.grad)[i] += (*out.grad)[i] * (*a.data)[i];
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
    if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
    Tensor out = Tensor::zeros(a.shape, needs_grad(a));
    const size_t n = out.numel();
    for (size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * c;
    check_finite(out, "scale");
    if (out.requires_grad) {
        tape.record([a, out, c, n] {
            for (size_t i = 0; i < n; ++i) (*a.grad)[i] += (*out.grad)[i] * c;
        });
    }
    return out;
}

Tensor add_row_vector(Tape& tape, const Tensor& x, const Tensor& v) {
    require_rank2(x, "add_row_vector");
    if (v.rank() != 1 || v.dim(0) != x.dim(1))
        throw ShapeError("add_row_vector: vector " + shape_str(v.shape) + " does not match " +
                         shape_str(x.shape));
    const int rows = x.dim(0), cols = x.dim(1);
    Tensor out = Tensor::zeros(x.shape, needs_grad(x, v));
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out.at2(i, j) = x.at2(i, j) + v.at(static_cast<size_t>(j));
    check_finite(out, "add_row_vector");
    if (out.requires_grad) {
        tape.record([x, v, out, rows, cols] {
            if (x.requires_grad)
                for (size_t i = 0; i < static_cast<size_t>(rows) * cols; ++i)
                    (*x.grad)[i] += (*out.grad)[i];
            if (v.requires_grad)
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j)
                        (*v.grad)[static_cast<size_t>(j)] +=
                            (*out.grad)[static_cast<size_t>(i) * cols + j];
        });
    }
    return out;
}

Tensor embedding_rows(Tape& tape, const Tensor& table, const std::vector<int>& ids) {
    require_rank2(table, "embedding_rows");
    if (ids.empty()) throw ShapeError("embedding_rows: empty id list");
    const int v = table.dim(0), d = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v)
            throw IndexError("embedding_rows: id " + std::to_string(id) + " out of range [0, " +
                             std::to_string(v) + ")");
    const int n = static_cast<int>(ids.size());
    Tensor out = Tensor::zeros({n, d}, needs_grad(table));
    for (int i = 0; i < n; ++i)
        std::copy_n(table.data->data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * d, d,
                    out.data->data() + static_cast<size_t>(i) * d);
    if (out.requires_grad) {
        tape.record([table, out, ids, n, d] {
            for (int i = 0; i < n; ++i) {
                const size_t src = static_cast<size_t>(i) * d;
                const size_t dst = static_cast<size_t>(ids[static_cast<size_t>(i)]) * d;
                for (int j = 0; j < d; ++j) (*table.grad)[dst + j] += (*out.grad)[src + j];
            }
        });
    }
    return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias) {
    const int d = x.last_dim();
    if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d)
        throw ShapeError("layer_norm: gain/bias must have shape [" + std::to_string(d) + "]");
    const size_t rows = x.row_count();
    Tensor out = Tensor::zeros(x.shape, x.requires_grad || gain.requires_grad || bias.requires_grad);
    // Saved per-row statistics for backward.
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    for (size_t r = 0; r < rows; ++r) {
        const double* xi = x.data->data() + r * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xi[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= d;
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        (*inv_std)[r] = is;
        for (int j = 0; j < d; ++j) {
            const double h = (xi[j] - mean) * is;
            (*xhat)[r * d + j] = h;
            (*out.data)[r * d + j] = h * gain.at(static_cast<size_t>(j)) + bias.at(static_cast<size_t>(j));
        }
    }
    check_finite(out, "layer_norm");
    if (out.requires_grad) {
        tape.record([x, gain, bias, out, xhat, inv_std, rows, d] {
            for (size_t r = 0; r < rows; ++r) {
                const double* go = out.grad->data() + r * d;
                const double* h = xhat->data() + r * d;
                if (gain.requires_grad)
                    for (int j = 0; j < d; ++j) (*gain.grad)[static_cast<size_t>(j)] += go[j] * h[j];
                if (bias.requires_grad)
                    for (int j = 0; j < d; ++j) (*bias.grad)[static_cast<size_t>(j)] += go[j];
                if (x.requires_grad) {
                    // dxhat = go * gain; dx = (dxhat - mean(dxhat) - h*mean(dxhat*h)) * inv_std
                    double s1 = 0.0, s2 = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double dh = go[j] * gain.at(static_cast<size_t>(j));
                        s1 += dh;
                        s2 += dh * h[j];
                    }
                    s1 /= d;
                    s2 /= d;
                    const double is = (*inv_std)[r];
                    for (int j = 0; j < d; ++j) {
                        const double dh = go[j] * gain.at(static_cast<size_t>(j));
                        (*x.grad)[r * d + j] += (dh - s1 - h[j] * s2) * is;
                    }
                }
            }
        });
    }
    return out;
}

Tensor gelu(Tape& tape, const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape, needs_grad(x));
    const size_t n = out.numel();
    constexpr double c = 0.7978845608028654; // sqrt(2/pi)
    for (size_t i = 0; i < n; ++i) {
        const double v = (*x.data)[i];
        (*out.data)[i] = 0.5 * v * (1.0 + std::tanh(c * (v + 0.044715 * v * v * v)));
    }
    check_finite(out, "gelu");
    if (out.requires_grad) {
        tape.record([x, out, n] {
            constexpr double cc = 0.7978845608028654;
            for (size_t i = 0; i < n; ++i) {
                const double v = (*x.data)[i];
                const double u = cc * (v + 0.044715 * v * v * v);
                const double t = std::tanh(u);
                const double du = cc * (1.0 + 3.0 * 0.044715 * v * v);
                const double dgelu = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
                (*x.grad)[i] += (*out.grad)[i] * dgelu;
            }
        });
    }
    return out;
}

namespace {

void require_rows(const Tensor& x, const char* op) {
    require_rank2(x, op);
    if (x.dim(1) < 1) throw ShapeError(std::string(op) + ": empty rows");
}

} // namespace

Tensor softmax_rows(Tape& tape, const Tensor& x) {
    require_rows(x, "softmax_rows");
    const int rows = x.dim(0), cols = x.dim(1);
    Tensor out = Tensor::zeros(x.shape, needs_grad(x));
    for (int r = 0; r < rows; ++r) {
        const double* xi = x.data->data() + static_cast<size_t>(r) * cols;
        double* yi = out.data->data() + static_cast<size_t>(r) * cols;
        double mx = xi[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += yi[j];
        }
        for (int j = 0; j < cols; ++j) yi[j] /= sum;
    }
    check_finite(out, "softmax_rows");
    if (out.requires_grad) {
        tape.record([x, out, rows, cols] {
            for (int r = 0; r < rows; ++r) {
                const double* y = out.data->data() + static_cast<size_t>(r) * cols;
                const double* gy = out.grad->data() + static_cast<size_t>(r) * cols;
                double dot = 0.0;
                for (int j = 0; j < cols; ++j) dot += gy[j] * y[j];
                double* gx = x.grad->data() + static_cast<size_t>(r) * cols;
                for (int j = 0; j < cols; ++j) gx[j] += (gy[j] - dot) * y[j];
            }
        });
    }
    return out;
}

Tensor log_softmax_rows(Tape& tape, const Tensor& x) {
    require_rows(x, "log_softmax_rows");
    const int rows = x.dim(0), cols = x.dim(1);
    Tensor out = Tensor::zeros(x.shape, needs_grad(x));
    for (int r = 0; r < rows; ++r) {
        const double* xi = x.data->data() + static_cast<size_t>(r) * cols;
        double* yi = out.data->data() + static_cast<size_t>(r) * cols;
        double mx = xi[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) sum += std::exp(xi[j] - mx);
        const double lse = mx + std::log(sum);
        for (int j = 0; j < cols; ++j) yi[j] = xi[j] - lse;
    }
    check_finite(out, "log_softmax_rows");
    if (out.requires_grad) {
        tape.record([x, out, rows, cols] {
            for (int r = 0; r < rows; ++r) {
                const double* y = out.data->data() + static_cast<size_t>(r) * cols;
                const double* gy = out.grad->data() + static_cast<size_t>(r) * cols;
                double gsum = 0.0;
                for (int j = 0; j < cols; ++j) gsum += gy[j];
                double* gx = x.grad->data() + static_cast<size_t>(r) * cols;
                for (int j = 0; j < cols; ++j) gx[j] += gy[j] - std::exp(y[j]) * gsum;
            }
        });
    }
    return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& targets) {
    require_rows(logits, "cross_entropy");
    const int rows = logits.dim(0), cols = logits.dim(1);
    if (static_cast<int>(targets.size()) != rows)
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
    for (int t : targets)
        if (t < 0 || t >= cols)
            throw IndexError("cross_entropy: target id " + std::to_string(t) +
                             " out of range [0, " + std::to_string(cols) + ")");
    // Saved log-probabilities for backward.
    auto logp = std::make_shared<std::vector<double>>(logits.numel());
    double total = 0.0;
    for (int r = 0; r < rows; ++r) {
        const double* xi = logits.data->data() + static_cast<size_t>(r) * cols;
        double mx = xi[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) sum += std::exp(xi[j] - mx);
        const double lse = mx + std::log(sum);
        for (int j = 0; j < cols; ++j) (*logp)[static_cast<size_t>(r) * cols + j] = xi[j] - lse;
        total -= (*logp)[static_cast<size_t>(r) * cols + targets[static_cast<size_t>(r)]];
    }
    Tensor out = Tensor::scalar_of(total / rows, needs_grad(logits));
    check_finite(out, "cross_entropy");
    if (out.requires_grad) {
        tape.record([logits, out, logp, targets, rows, cols] {
            const double g = (*out.grad)[0] / rows;
            for (int r = 0; r < rows; ++r) {
                double* gx = logits.grad->data() + static_cast<size_t>(r) * cols;
                const double* lp = logp->data() + static_cast<size_t>(r) * cols;
                const int tgt = targets[static_cast<size_t>(r)];
                for (int j = 0; j < cols; ++j) gx[j] += g * (std::exp(lp[j]) - (j == tgt ? 1.0 : 0.0));
            }
        });
    }
    return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, int start, int len) {
    require_rank2(x, "slice_cols");
    const int rows = x.dim(0), cols = x.dim(1);
    if (start < 0 || len <= 0 || start + len > cols)
        throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of " + std::to_string(cols) +
                         " columns");
    Tensor out = Tensor::zeros({rows, len}, needs_grad(x));
    for (int i = 0; i < rows; ++i)
        std::copy_n(x.data->data() + static_cast<size_t>(i) * cols + start, len,
                    out.data->data() + static_cast<size_t>(i) * len);
    if (out.requires_grad) {
        tape.record([x, out, start, len, rows, cols] {
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < len; ++j)
                    (*x.grad)[static_cast<size_t>(i) * cols + start + j] +=
                        (*out.grad)[static_cast<size_t>(i) * len + j];
        });
    }
    return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: no inputs");
    const int rows = xs.front().dim(0);
    int cols = 0;
    bool rg = false;
    for (const Tensor& x : xs) {
        require_rank2(x, "concat_cols");
        if (x.dim(0) != rows) throw ShapeError("concat_cols: row counts differ");
        cols += x.dim(1);
        rg = rg || x.requires_grad;
    }
    Tensor out = Tensor::zeros({rows, cols}, rg);
    int off = 0;
    for (const Tensor& x : xs) {
        const int c = x.dim(1);
        for (int i = 0; i < rows; ++i)
            std::copy_n(x.data->data() + static_cast<size_t>(i) * c, c,
                        out.data->data() + static_cast<size_t>(i) * cols + off);
        off += c;
    }
    if (rg) {
        tape.record([xs, out, rows, cols] {
            int o = 0;
            for (const Tensor& x : xs) {
                const int c = x.dim(1);
                if (x.requires_grad)
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < c; ++j)
                            (*x.grad)[static_cast<size_t>(i) * c + j] +=
                                (*out.grad)[static_cast<size_t>(i) * cols + o + j];
                o += c;
            }
        });
    }
    return out;
}

} // namespace rlab
