#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace emodyn {

/// Dense row-major f64 tensor with reverse-mode autodiff.
///
/// A Tensor is a cheap handle onto shared storage; copies alias the same
/// buffer. Operations record backward rules on the thread's active Tape
/// when at least one input requires gradients. Without an active tape the
/// same operations run as plain forward arithmetic.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0,
                    bool requires_grad = false);

    static Tensor from_values(std::vector<std::size_t> shape,
                              std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar(double value);
    /// Truncated-normal init (resampled beyond 2*stddev), the BERT convention.
    static Tensor randn(std::vector<std::size_t> shape, double stddev,
                        std::mt19937_64& rng, bool requires_grad = true);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const;
    std::size_t size() const;
    std::size_t rank() const;
    std::size_t rows() const;  // first dimension (1 for rank-1)
    std::size_t cols() const;  // last dimension

    std::vector<double>& values();
    const std::vector<double>& values() const;
    double& operator()(std::size_t i);
    double operator()(std::size_t i) const;
    double& operator()(std::size_t i, std::size_t j);
    double operator()(std::size_t i, std::size_t j) const;
    double item() const;  // scalar access, throws ContractError otherwise

    bool requires_grad() const;
    void set_requires_grad(bool requires_grad);
    /// Gradient buffer, allocated (zeroed) on first access.
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();

    bool shares_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    struct Impl {
        std::vector<std::size_t> shape;
        std::vector<double> data;
        std::vector<double> grad;  // empty until needed
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> impl_;
    friend class Tape;
    friend struct OpRecorder;
};

/// Records backward rules of one forward pass, in construction order.
///
/// Construction order is topological by definition: an op's inputs exist
/// before its output. backward() replays the rules once, in reverse.
/// A tape plus the tensors written to it form a single-threaded unit;
/// independent tapes may live on different threads (the active tape is
/// thread-local).
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
    /// requires_grad leaf reachable from `loss`. Repeated calls accumulate.
    void backward(const Tensor& loss);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::shared_ptr<Tensor::Impl> result;
        std::function<void()> rule;
    };
    void record(std::shared_ptr<Tensor::Impl> result, std::function<void()> rule);
    std::vector<Node> nodes_;
    Tape* previous_ = nullptr;
    friend struct OpRecorder;
};

// ---- forward/backward operations ----------------------------------------
// Elementwise ops require exactly equal shapes; the only broadcast is the
// explicit add_bias_row. Every op validates that its output is finite.

Tensor matmul(const Tensor& a, const Tensor& b);     // [m×k]·[k×n] ([k] treated as row)
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a·bᵀ, b is [n×k]
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor add_bias_row(const Tensor& x, const Tensor& bias);  // bias[d] over each row
Tensor scale(const Tensor& x, double c);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& x, const Tensor& s);  // s is a scalar tensor
Tensor one_minus(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax(const Tensor& x);  // last axis, max-shifted
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-12);
Tensor concat_last_axis(const Tensor& a, const Tensor& b);
Tensor stack_rows(const std::vector<Tensor>& rows);  // n×[d] -> [n×d]
Tensor take_row(const Tensor& x, std::size_t row);   // [n×d] -> [d]
Tensor dot(const Tensor& a, const Tensor& b);        // [d]·[d] -> scalar
Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& ids);
Tensor cross_entropy(const Tensor& logits, std::size_t target);  // -log softmax[target]
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);
Tensor detach(const Tensor& x);  // same values, no gradient link

/// Convenience: Tape::active()->backward(loss). Throws ContractError when
/// loss is not scalar or no tape is active.
void backward(const Tensor& loss);

}  // namespace emodyn
