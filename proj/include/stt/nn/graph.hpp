#pragma once

#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stt/nn/tensor.hpp"

namespace stt::nn {

// A named trainable parameter. The gradient buffer is filled by
// Graph::flush_param_grads (or manually from Graph::param_leaves when the
// caller manages accumulation itself, e.g. sharded batches).
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor::zeros(value.shape);
    }
    void zero_grad() { grad.fill(0.0); }
};

using NodeRef = int;

// Reverse-mode tape. One Graph per forward pass; nodes are appended in
// evaluation order and backward() sweeps them in reverse. Node gradients
// are allocated lazily, so forward-only use pays nothing for them.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // ---- leaves ----
    NodeRef input(Tensor v);
    NodeRef param(Param& p); // cached: the same Param yields the same leaf

    // ---- elementwise / shape ----
    NodeRef add(NodeRef a, NodeRef b);                 // same shape
    NodeRef sub(NodeRef a, NodeRef b);                 // same shape
    NodeRef add_rowvec(NodeRef a, NodeRef b);          // [m x n] + [n]
    NodeRef mul(NodeRef a, NodeRef b);                 // hadamard, same shape
    NodeRef scale(NodeRef a, double s);
    NodeRef gelu(NodeRef a);
    NodeRef relu(NodeRef a);
    NodeRef apply_unary(NodeRef a, std::function<double(double)> f,
                        std::function<double(double)> df); // y=f(x), dy/dx=df(x)
    NodeRef cols(NodeRef a, int start, int n);         // column slice of a matrix
    NodeRef concat_cols(const std::vector<NodeRef>& parts);
    NodeRef sum(NodeRef a);                            // scalar [1]
    NodeRef mean(NodeRef a);                           // scalar [1]

    // ---- linear algebra ----
    NodeRef matmul(NodeRef a, NodeRef b);              // [m x k] * [k x n]
    NodeRef matmul_nt(NodeRef a, NodeRef b);           // [m x k] * [n x k]^T

    // ---- normalization / softmax ----
    NodeRef layer_norm(NodeRef a, NodeRef gain, NodeRef bias, double eps = 1e-5);
    NodeRef softmax_rows(NodeRef a);                   // subtract-max stabilized
    NodeRef causal_softmax(NodeRef a);                 // [T x T], row i sums over j<=i

    // ---- gather / scatter ----
    NodeRef gather_rows(NodeRef a, std::vector<int> idx);             // rows a[idx[i],:]
    NodeRef scatter_rows(NodeRef a, std::vector<int> idx, int m);     // out[idx[i],:] += a[i,:]
    NodeRef scale_rows(NodeRef a, NodeRef s);          // row i scaled by s[i]; s is [m] or [m x 1]
    NodeRef scalar_embed(NodeRef w, NodeRef b, std::vector<double> scalars); // rows s_i*w + b

    // ---- losses / reductions ----
    // Mean over rows of -log softmax(logits)[target].
    NodeRef cross_entropy_rows(NodeRef logits, std::vector<int> targets);
    NodeRef mse(NodeRef pred, Tensor target);          // mean squared error
    NodeRef col_means(NodeRef a);                      // [m x n] -> [n]
    NodeRef dot_const(NodeRef a, Tensor c);            // scalar <a, c>

    // ---- execution ----
    void backward(NodeRef root);                       // seeds d(root)=1
    void flush_param_grads();                          // p.grad += leaf grad
    const std::vector<std::pair<Param*, NodeRef>>& param_leaves() const { return param_leaves_; }

    const Tensor& value(NodeRef id) const { return nodes_[id].val; }
    const Tensor& grad(NodeRef id) const { return nodes_[id].grad; }

private:
    struct Node {
        Tensor val;
        Tensor grad; // lazily allocated
        std::function<void()> back;
    };

    NodeRef push(Tensor val) {
        nodes_.push_back(Node{std::move(val), Tensor{}, nullptr});
        return static_cast<NodeRef>(nodes_.size() - 1);
    }
    Tensor& grad_of(NodeRef id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad = Tensor::zeros(n.val.shape);
        return n.grad;
    }
    bool has_grad(NodeRef id) const { return !nodes_[id].grad.empty(); }

    std::vector<Node> nodes_;
    std::vector<std::pair<Param*, NodeRef>> param_leaves_;
    std::unordered_map<const Param*, NodeRef> param_cache_;
};

// Pins the BLAS backend to one thread; caller-level data parallelism owns
// the cores. Safe to call repeatedly.
void init_blas_single_thread();

// dgemm-backed matrix products on raw tensors (also used outside the tape).
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out, double alpha = 1.0, double beta = 0.0);
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out, double alpha = 1.0, double beta = 0.0);
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& out, double alpha = 1.0, double beta = 0.0);

// Stabilized in-place row softmax on raw storage.
void softmax_row_inplace(double* row, int n);

} // namespace stt::nn
