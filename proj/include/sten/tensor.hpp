#pragma once

// Dense double-precision tensors with a define-by-run tape for reverse-mode
// differentiation. Shapes are limited to what the model needs: vectors and
// row-major matrices. Every primitive validates operand shapes and records a
// backward closure on the tape when any input requires gradients.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace sten {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<int> shp, bool rg);

    std::size_t size() const { return values.size(); }
    int rows() const;
    int cols() const;
    double& at(int r, int c);
    double at(int r, int c) const;
    double scalar() const;

    void zero_grad();
    std::string shape_str() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false);
TensorPtr make_tensor(std::vector<int> shape, std::vector<double> values,
                      bool requires_grad = false);
TensorPtr make_scalar(double v, bool requires_grad = false);

// Boolean visibility matrix used by masked softmax; true = visible.
struct Mask {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> vis;

    Mask() = default;
    Mask(int r, int c) : rows(r), cols(c), vis(static_cast<std::size_t>(r) * c, 0) {}
    bool at(int r, int c) const { return vis[static_cast<std::size_t>(r) * cols + c] != 0; }
    void set(int r, int c, bool v) { vis[static_cast<std::size_t>(r) * cols + c] = v ? 1 : 0; }
};

// Records primitive applications in topological (creation) order. Rebuilt per
// forward pass; confined to a single thread.
class Tape {
public:
    void record(TensorPtr output, std::function<void()> backward_fn);
    bool contains(const Tensor* t) const;

    // Propagates d(loss)/d(leaf) into every requires_grad leaf. Leaf grads
    // accumulate across calls; intermediate grads are reset on each call.
    void backward(const TensorPtr& loss);

    std::size_t num_nodes() const { return nodes_.size(); }
    void clear();

private:
    struct Node {
        TensorPtr output;
        std::function<void()> backward_fn;
    };
    std::vector<Node> nodes_;
    std::unordered_set<const Tensor*> outputs_;
};

// ---- primitives -----------------------------------------------------------

TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b,
                 bool transpose_b = false);
TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b);
// k * x + c with plain double coefficients
TensorPtr affine(Tape& tape, const TensorPtr& x, double k, double c);
// x + v broadcast over rows; v has shape [1, d] or [d]
TensorPtr add_rowvec(Tape& tape, const TensorPtr& x, const TensorPtr& v);
// s * c where s is a 1-element tensor and c carries constant data
TensorPtr scale_const(Tape& tape, const TensorPtr& s, const TensorPtr& c);
// x + s broadcast, s a 1-element tensor
TensorPtr add_scalar(Tape& tape, const TensorPtr& x, const TensorPtr& s);
// x * coeffs.values[index], differentiable in both x and the indexed entry
TensorPtr scale_by_entry(Tape& tape, const TensorPtr& x, const TensorPtr& coeffs,
                         int index);
TensorPtr concat_rows(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr concat_cols(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr slice_rows(Tape& tape, const TensorPtr& x, int start, int count);
TensorPtr gather_rows(Tape& tape, const TensorPtr& x, const std::vector<int>& idx);
TensorPtr sigmoid(Tape& tape, const TensorPtr& x);
TensorPtr exp_(Tape& tape, const TensorPtr& x);
TensorPtr log_(Tape& tape, const TensorPtr& x);
TensorPtr softplus(Tape& tape, const TensorPtr& x);
TensorPtr sqrt_(Tape& tape, const TensorPtr& x);
// Row-wise softmax over the last axis restricted to visible entries; masked
// positions are exactly 0 in the output. Throws on a fully masked row.
TensorPtr masked_softmax(Tape& tape, const TensorPtr& x, const Mask& mask);
TensorPtr sum_all(Tape& tape, const TensorPtr& x);
TensorPtr mean_all(Tape& tape, const TensorPtr& x);
// column-wise mean over rows -> [1, cols]
TensorPtr mean_rows(Tape& tape, const TensorPtr& x);
// Inverted dropout; identity when ratio == 0.
TensorPtr dropout(Tape& tape, const TensorPtr& x, double ratio, std::mt19937_64& rng);

// ---- gradient checking ----------------------------------------------------

// f must build its output through `tape` from `x`; deterministic.
// Returns max over entries of |analytic - central_diff| / max(1, |analytic|).
double grad_check(const std::function<TensorPtr(Tape&, const TensorPtr&)>& f,
                  const TensorPtr& x, double eps);

} // namespace sten
