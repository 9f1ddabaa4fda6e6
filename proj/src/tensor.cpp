#include "sten/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace sten {

namespace {

[[noreturn]] void shape_error(const char* prim, const Tensor& a, const Tensor& b) {
    std::ostringstream os;
    os << prim << ": shape mismatch " << a.shape_str() << " vs " << b.shape_str();
    throw Error(os.str());
}

void check_finite(const char* prim, const Tensor& t) {
    for (double v : t.values) {
        if (!std::isfinite(v)) {
            throw Error(std::string(prim) + ": non-finite value in result");
        }
    }
}

bool needs_grad(const TensorPtr& a) { return a->requires_grad; }

} // namespace

Tensor::Tensor(std::vector<int> shp, bool rg) : shape(std::move(shp)), requires_grad(rg) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw Error("Tensor: negative dimension");
        n *= static_cast<std::size_t>(d);
    }
    values.assign(n, 0.0);
    grad.assign(n, 0.0);
}

int Tensor::rows() const { return shape.empty() ? 1 : shape[0]; }

int Tensor::cols() const {
    if (shape.size() >= 2) return shape[1];
    return 1;
}

double& Tensor::at(int r, int c) { return values[static_cast<std::size_t>(r) * cols() + c]; }
double Tensor::at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols() + c]; }

double Tensor::scalar() const {
    if (size() != 1) throw Error("Tensor::scalar: tensor has " + std::to_string(size()) + " elements");
    return values[0];
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad) {
    return std::make_shared<Tensor>(std::move(shape), requires_grad);
}

TensorPtr make_tensor(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    auto t = std::make_shared<Tensor>(std::move(shape), requires_grad);
    if (values.size() != t->size()) throw Error("make_tensor: value count does not match shape");
    t->values = std::move(values);
    return t;
}

TensorPtr make_scalar(double v, bool requires_grad) {
    return make_tensor({1}, {v}, requires_grad);
}

void Tape::record(TensorPtr output, std::function<void()> backward_fn) {
    outputs_.insert(output.get());
    nodes_.push_back({std::move(output), std::move(backward_fn)});
}

bool Tape::contains(const Tensor* t) const { return outputs_.count(t) != 0; }

void Tape::backward(const TensorPtr& loss) {
    if (loss->size() != 1) throw Error("backward: loss is not a scalar");
    if (!contains(loss.get())) throw Error("backward: loss was not produced on this tape");
    // Intermediates are reset so repeated backward calls only accumulate
    // into leaves.
    for (auto& n : nodes_) n.output->zero_grad();
    loss->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->backward_fn) it->backward_fn();
    }
}

void Tape::clear() {
    nodes_.clear();
    outputs_.clear();
}

// ---- primitives -----------------------------------------------------------

TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b, bool transpose_b) {
    const int m = a->rows(), k = a->cols();
    const int bk = transpose_b ? b->cols() : b->rows();
    const int n = transpose_b ? b->rows() : b->cols();
    if (k != bk) shape_error("matmul", *a, *b);
    auto out = make_tensor({m, n}, a->requires_grad || b->requires_grad);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                const double bv = transpose_b ? b->at(j, p) : b->at(p, j);
                acc += a->at(i, p) * bv;
            }
            out->at(i, j) = acc;
        }
    }
    check_finite("matmul", *out);
    if (out->requires_grad) {
        tape.record(out, [out, a, b, transpose_b, m, n, k]() {
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    const double g = out->grad[static_cast<std::size_t>(i) * n + j];
                    if (g == 0.0) continue;
                    for (int p = 0; p < k; ++p) {
                        const double bv = transpose_b ? b->at(j, p) : b->at(p, j);
                        if (a->requires_grad)
                            a->grad[static_cast<std::size_t>(i) * k + p] += g * bv;
                        if (b->requires_grad) {
                            const std::size_t bi = transpose_b
                                ? static_cast<std::size_t>(j) * k + p
                                : static_cast<std::size_t>(p) * n + j;
                            b->grad[bi] += g * a->at(i, p);
                        }
                    }
                }
            }
        });
    }
    return out;
}

namespace {

TensorPtr binary_elementwise(Tape& tape, const char* name, const TensorPtr& a,
                             const TensorPtr& b,
                             const std::function<double(double, double)>& f,
                             const std::function<double(double, double)>& dfa,
                             const std::function<double(double, double)>& dfb) {
    if (a->shape != b->shape) shape_error(name, *a, *b);
    auto out = make_tensor(a->shape, a->requires_grad || b->requires_grad);
    for (std::size_t i = 0; i < a->size(); ++i) out->values[i] = f(a->values[i], b->values[i]);
    check_finite(name, *out);
    if (out->requires_grad) {
        tape.record(out, [out, a, b, dfa, dfb]() {
            for (std::size_t i = 0; i < out->size(); ++i) {
                const double g = out->grad[i];
                if (a->requires_grad) a->grad[i] += g * dfa(a->values[i], b->values[i]);
                if (b->requires_grad) b->grad[i] += g * dfb(a->values[i], b->values[i]);
            }
        });
    }
    return out;
}

TensorPtr unary_elementwise(Tape& tape, const char* name, const TensorPtr& x,
                            const std::function<double(double)>& f,
                            const std::function<double(double, double)>& dfdx_of_xy) {
    auto out = make_tensor(x->shape, x->requires_grad);
    for (std::size_t i = 0; i < x->size(); ++i) out->values[i] = f(x->values[i]);
    check_finite(name, *out);
    if (out->requires_grad) {
        tape.record(out, [out, x, dfdx_of_xy]() {
            for (std::size_t i = 0; i < out->size(); ++i)
                x->grad[i] += out->grad[i] * dfdx_of_xy(x->values[i], out->values[i]);
        });
    }
    return out;
}

} // namespace

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    return binary_elementwise(tape, "add", a, b,
                              [](double x, double y) { return x + y; },
                              [](double, double) { return 1.0; },
                              [](double, double) { return 1.0; });
}

TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    return binary_elementwise(tape, "sub", a, b,
                              [](double x, double y) { return x - y; },
                              [](double, double) { return 1.0; },
                              [](double, double) { return -1.0; });
}

TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    return binary_elementwise(tape, "mul", a, b,
                              [](double x, double y) { return x * y; },
                              [](double, double y) { return y; },
                              [](double x, double) { return x; });
}

TensorPtr affine(Tape& tape, const TensorPtr& x, double k, double c) {
    return unary_elementwise(tape, "affine", x,
                             [k, c](double v) { return k * v + c; },
                             [k](double, double) { return k; });
}

TensorPtr add_rowvec(Tape& tape, const TensorPtr& x, const TensorPtr& v) {
    const int r = x->rows(), c = x->cols();
    if (static_cast<int>(v->size()) != c) shape_error("add_rowvec", *x, *v);
    auto out = make_tensor(x->shape, x->requires_grad || v->requires_grad);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out->at(i, j) = x->at(i, j) + v->values[j];
    check_finite("add_rowvec", *out);
    if (out->requires_grad) {
        tape.record(out, [out, x, v, r, c]() {
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < c; ++j) {
                    const double g = out->grad[static_cast<std::size_t>(i) * c + j];
                    if (x->requires_grad) x->grad[static_cast<std::size_t>(i) * c + j] += g;
                    if (v->requires_grad) v->grad[j] += g;
                }
            }
        });
    }
    return out;
}

TensorPtr scale_const(Tape& tape, const TensorPtr& s, const TensorPtr& c) {
    if (s->size() != 1) throw Error("scale_const: scale is not a scalar");
    const double sv = s->values[0];
    auto out = make_tensor(c->shape, s->requires_grad);
    for (std::size_t i = 0; i < c->size(); ++i) out->values[i] = sv * c->values[i];
    check_finite("scale_const", *out);
    if (out->requires_grad) {
        tape.record(out, [out, s, c]() {
            double acc = 0.0;
            for (std::size_t i = 0; i < out->size(); ++i) acc += out->grad[i] * c->values[i];
            s->grad[0] += acc;
        });
    }
    return out;
}

TensorPtr add_scalar(Tape& tape, const TensorPtr& x, const TensorPtr& s) {
    if (s->size() != 1) throw Error("add_scalar: addend is not a scalar");
    const double sv = s->values[0];
    auto out = make_tensor(x->shape, x->requires_grad || s->requires_grad);
    for (std::size_t i = 0; i < x->size(); ++i) out->values[i] = x->values[i] + sv;
    check_finite("add_scalar", *out);
    if (out->requires_grad) {
        tape.record(out, [out, x, s]() {
            for (std::size_t i = 0; i < out->size(); ++i) {
                const double g = out->grad[i];
                if (x->requires_grad) x->grad[i] += g;
                if (s->requires_grad) s->grad[0] += g;
            }
        });
    }
    return out;
}

TensorPtr scale_by_entry(Tape& tape, const TensorPtr& x, const TensorPtr& coeffs, int index) {
    if (index < 0 || static_cast<std::size_t>(index) >= coeffs->size())
        throw Error("scale_by_entry: index out of range");
    const double k = coeffs->values[index];
    auto out = make_tensor(x->shape, x->requires_grad || coeffs->requires_grad);
    for (std::size_t i = 0; i < x->size(); ++i) out->values[i] = k * x->values[i];
    check_finite("scale_by_entry", *out);
    if (out->requires_grad) {
        tape.record(out, [out, x, coeffs, index, k]() {
            double acc = 0.0;
            for (std::size_t i = 0; i < out->size(); ++i) {
                const double g = out->grad[i];
                if (x->requires_grad) x->grad[i] += g * k;
                acc += g * x->values[i];
            }
            if (coeffs->requires_grad) coeffs->grad[index] += acc;
        });
    }
    return out;
}

TensorPtr concat_rows(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->cols() != b->cols()) shape_error("concat_rows", *a, *b);
    const int c = a->cols(), ra = a->rows(), rb = b->rows();
    auto out = make_tensor({ra + rb, c}, a->requires_grad || b->requires_grad);
    std::copy(a->values.begin(), a->values.end(), out->values.begin());
    std::copy(b->values.begin(), b->values.end(), out->values.begin() + a->size());
    if (out->requires_grad) {
        tape.record(out, [out, a, b]() {
            if (a->requires_grad)
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[a->size() + i];
        });
    }
    return out;
}

TensorPtr concat_cols(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->rows() != b->rows()) shape_error("concat_cols", *a, *b);
    const int r = a->rows(), ca = a->cols(), cb = b->cols();
    auto out = make_tensor({r, ca + cb}, a->requires_grad || b->requires_grad);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < ca; ++j) out->at(i, j) = a->at(i, j);
        for (int j = 0; j < cb; ++j) out->at(i, ca + j) = b->at(i, j);
    }
    if (out->requires_grad) {
        tape.record(out, [out, a, b, r, ca, cb]() {
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < ca; ++j)
                    if (a->requires_grad)
                        a->grad[static_cast<std::size_t>(i) * ca + j] +=
                            out->grad[static_cast<std::size_t>(i) * (ca + cb) + j];
                for (int j = 0; j < cb; ++j)
                    if (b->requires_grad)
                        b->grad[static_cast<std::size_t>(i) * cb + j] += out->grad[static_cast<std::size_t>(i) * (ca + cb) + ca + j];
            }
        });
    }
    return out;
}

TensorPtr slice_rows(Tape& tape, const TensorPtr& x, int start, int count) {
    const int r = x->rows(), c = x->cols();
    if (start < 0 || count < 0 || start + count > r)
        throw Error("slice_rows: range [" + std::to_string(start) + ", " +
                    std::to_string(start + count) + ") outside " + x->shape_str());
    auto out = make_tensor({count, c}, x->requires_grad);
    std::copy(x->values.begin() + static_cast<std::size_t>(start) * c,
              x->values.begin() + static_cast<std::size_t>(start + count) * c,
              out->values.begin());
    if (out->requires_grad) {
        tape.record(out, [out, x, start, c]() {
            for (std::size_t i = 0; i < out->size(); ++i)
                x->grad[static_cast<std::size_t>(start) * c + i] += out->grad[i];
        });
    }
    return out;
}

TensorPtr gather_rows(Tape& tape, const TensorPtr& x, const std::vector<int>& idx) {
    const int r = x->rows(), c = x->cols();
    for (int i : idx)
        if (i < 0 || i >= r)
            throw Error("gather_rows: index " + std::to_string(i) + " outside " + x->shape_str());
    auto out = make_tensor({static_cast<int>(idx.size()), c}, x->requires_grad);
    for (std::size_t k = 0; k < idx.size(); ++k)
        for (int j = 0; j < c; ++j) out->at(static_cast<int>(k), j) = x->at(idx[k], j);
    if (out->requires_grad) {
        tape.record(out, [out, x, idx, c]() {
            for (std::size_t k = 0; k < idx.size(); ++k)
                for (int j = 0; j < c; ++j)
                    x->grad[static_cast<std::size_t>(idx[k]) * c + j] +=
                        out->grad[k * c + j];
        });
    }
    return out;
}

TensorPtr sigmoid(Tape& tape, const TensorPtr& x) {
    return unary_elementwise(tape, "sigmoid", x,
                             [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                             [](double, double y) { return y * (1.0 - y); });
}

TensorPtr exp_(Tape& tape, const TensorPtr& x) {
    return unary_elementwise(tape, "exp", x,
                             [](double v) { return std::exp(v); },
                             [](double, double y) { return y; });
}

TensorPtr log_(Tape& tape, const TensorPtr& x) {
    for (double v : x->values)
        if (v <= 0.0) throw Error("log: non-positive input " + std::to_string(v));
    return unary_elementwise(tape, "log", x,
                             [](double v) { return std::log(v); },
                             [](double v, double) { return 1.0 / v; });
}

TensorPtr softplus(Tape& tape, const TensorPtr& x) {
    // log(1+e^x) computed stably; derivative is the logistic function.
    return unary_elementwise(tape, "softplus", x,
                             [](double v) {
                                 return v > 30.0 ? v : std::log1p(std::exp(v));
                             },
                             [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

TensorPtr sqrt_(Tape& tape, const TensorPtr& x) {
    for (double v : x->values)
        if (v < 0.0) throw Error("sqrt: negative input " + std::to_string(v));
    return unary_elementwise(tape, "sqrt", x,
                             [](double v) { return std::sqrt(v); },
                             [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

TensorPtr masked_softmax(Tape& tape, const TensorPtr& x, const Mask& mask) {
    const int r = x->rows(), c = x->cols();
    if (mask.rows != r || mask.cols != c)
        throw Error("masked_softmax: mask " + std::to_string(mask.rows) + "x" +
                    std::to_string(mask.cols) + " vs scores " + x->shape_str());
    auto out = make_tensor({r, c}, x->requires_grad);
    for (int i = 0; i < r; ++i) {
        // Max/exp/sum run over visible entries only so masked inputs cannot
        // perturb visible outputs even at the bit level.
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j)
            if (mask.at(i, j)) mx = std::max(mx, x->at(i, j));
        if (!std::isfinite(mx))
            throw Error("masked_softmax: fully masked row " + std::to_string(i));
        double denom = 0.0;
        for (int j = 0; j < c; ++j) {
            if (mask.at(i, j)) {
                const double e = std::exp(x->at(i, j) - mx);
                out->at(i, j) = e;
                denom += e;
            } else {
                out->at(i, j) = 0.0;
            }
        }
        for (int j = 0; j < c; ++j)
            if (mask.at(i, j)) out->at(i, j) /= denom;
    }
    if (out->requires_grad) {
        tape.record(out, [out, x, mask, r, c]() {
            for (int i = 0; i < r; ++i) {
                double dot = 0.0;
                for (int j = 0; j < c; ++j)
                    dot += out->grad[static_cast<std::size_t>(i) * c + j] * out->at(i, j);
                for (int j = 0; j < c; ++j) {
                    if (!mask.at(i, j)) continue;
                    const double y = out->at(i, j);
                    x->grad[static_cast<std::size_t>(i) * c + j] +=
                        y * (out->grad[static_cast<std::size_t>(i) * c + j] - dot);
                }
            }
        });
    }
    return out;
}

TensorPtr sum_all(Tape& tape, const TensorPtr& x) {
    auto out = make_tensor({1}, x->requires_grad);
    double acc = 0.0;
    for (double v : x->values) acc += v;
    out->values[0] = acc;
    check_finite("sum", *out);
    if (out->requires_grad) {
        tape.record(out, [out, x]() {
            for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[0];
        });
    }
    return out;
}

TensorPtr mean_all(Tape& tape, const TensorPtr& x) {
    if (x->size() == 0) throw Error("mean: empty tensor");
    return affine(tape, sum_all(tape, x), 1.0 / static_cast<double>(x->size()), 0.0);
}

TensorPtr mean_rows(Tape& tape, const TensorPtr& x) {
    const int r = x->rows(), c = x->cols();
    if (r == 0) throw Error("mean_rows: empty tensor");
    auto out = make_tensor({1, c}, x->requires_grad);
    for (int j = 0; j < c; ++j) {
        double acc = 0.0;
        for (int i = 0; i < r; ++i) acc += x->at(i, j);
        out->values[j] = acc / r;
    }
    check_finite("mean_rows", *out);
    if (out->requires_grad) {
        tape.record(out, [out, x, r, c]() {
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j)
                    x->grad[static_cast<std::size_t>(i) * c + j] += out->grad[j] / r;
        });
    }
    return out;
}

TensorPtr dropout(Tape& tape, const TensorPtr& x, double ratio, std::mt19937_64& rng) {
    if (ratio < 0.0 || ratio >= 1.0) throw Error("dropout: ratio outside [0, 1)");
    if (ratio == 0.0) return x;
    auto keep = std::make_shared<std::vector<std::uint8_t>>(x->size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double scale = 1.0 / (1.0 - ratio);
    auto out = make_tensor(x->shape, x->requires_grad);
    for (std::size_t i = 0; i < x->size(); ++i) {
        const bool k = u(rng) >= ratio;
        (*keep)[i] = k ? 1 : 0;
        out->values[i] = k ? x->values[i] * scale : 0.0;
    }
    if (out->requires_grad) {
        tape.record(out, [out, x, keep, scale]() {
            for (std::size_t i = 0; i < x->size(); ++i)
                if ((*keep)[i]) x->grad[i] += out->grad[i] * scale;
        });
    }
    return out;
}

double grad_check(const std::function<TensorPtr(Tape&, const TensorPtr&)>& f,
                  const TensorPtr& x, double eps) {
    if (eps <= 0.0) throw Error("grad_check: eps must be positive");
    auto eval = [&](const TensorPtr& in) {
        Tape t;
        return f(t, in)->scalar();
    };
    auto probe = make_tensor(x->shape, x->values, false);
    const double base1 = eval(probe);
    const double base2 = eval(probe);
    if (base1 != base2) throw Error("grad_check: function is not deterministic");

    auto leaf = make_tensor(x->shape, x->values, true);
    Tape tape;
    auto y = f(tape, leaf);
    tape.backward(y);

    double max_err = 0.0;
    for (std::size_t i = 0; i < x->size(); ++i) {
        auto pert = make_tensor(x->shape, x->values, false);
        pert->values[i] = x->values[i] + eps;
        const double fp = eval(pert);
        pert->values[i] = x->values[i] - eps;
        const double fm = eval(pert);
        const double cd = (fp - fm) / (2.0 * eps);
        const double a = leaf->grad[i];
        const double err = std::abs(a - cd) / std::max(1.0, std::abs(a));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

} // namespace sten
