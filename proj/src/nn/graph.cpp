#include "stt/nn/graph.hpp"

#include <cblas.h>

#include <cmath>
#include <stdexcept>

namespace stt::nn {

namespace {

void check_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected a matrix, got " + t.shape_str());
}

constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double gelu_fn(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_dfn(double x) {
    double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

} // namespace

extern "C" void openblas_set_num_threads(int);

void init_blas_single_thread() {
    static const bool done = [] {
        openblas_set_num_threads(1);
        return true;
    }();
    (void)done;
}

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out, double alpha, double beta) {
    int m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) throw std::invalid_argument("gemm_nn: inner dims " + a.shape_str() + " vs " + b.shape_str());
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, alpha, a.data.data(), k,
                b.data.data(), n, beta, out.data.data(), n);
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out, double alpha, double beta) {
    int m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) throw std::invalid_argument("gemm_nt: inner dims " + a.shape_str() + " vs " + b.shape_str());
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, n, k, alpha, a.data.data(), k,
                b.data.data(), k, beta, out.data.data(), n);
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& out, double alpha, double beta) {
    int m = a.cols(), k = a.rows(), n = b.cols();
    if (b.rows() != k) throw std::invalid_argument("gemm_tn: inner dims " + a.shape_str() + " vs " + b.shape_str());
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, m, n, k, alpha, a.data.data(), m,
                b.data.data(), n, beta, out.data.data(), n);
}

void softmax_row_inplace(double* row, int n) {
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
    }
    for (int j = 0; j < n; ++j) row[j] /= sum;
}

NodeRef Graph::input(Tensor v) { return push(std::move(v)); }

NodeRef Graph::param(Param& p) {
    auto it = param_cache_.find(&p);
    if (it != param_cache_.end()) return it->second;
    NodeRef id = push(p.value);
    param_leaves_.emplace_back(&p, id);
    param_cache_.emplace(&p, id);
    return id;
}

NodeRef Graph::add(NodeRef a, NodeRef b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    add_into(out, tb);
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, b] {
        const Tensor& g = nodes_[id].grad;
        add_into(grad_of(a), g);
        add_into(grad_of(b), g);
    };
    return id;
}

NodeRef Graph::sub(NodeRef a, NodeRef b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    if (!ta.same_shape(tb)) throw std::invalid_argument("sub: shape mismatch");
    Tensor out = ta;
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, b] {
        const Tensor& g = nodes_[id].grad;
        add_into(grad_of(a), g);
        Tensor& gb = grad_of(b);
        for (int64_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    };
    return id;
}

NodeRef Graph::add_rowvec(NodeRef a, NodeRef b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    check_matrix(ta, "add_rowvec");
    if (tb.size() != ta.cols()) throw std::invalid_argument("add_rowvec: vec size mismatch");
    Tensor out = ta;
    int m = ta.rows(), n = ta.cols();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) += tb[j];
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, b, m, n] {
        const Tensor& g = nodes_[id].grad;
        add_into(grad_of(a), g);
        Tensor& gb = grad_of(b);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) gb[j] += g.at(i, j);
    };
    return id;
}

NodeRef Graph::mul(NodeRef a, NodeRef b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    if (!ta.same_shape(tb)) throw std::invalid_argument("mul: shape mismatch");
    Tensor out = ta;
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, b] {
        const Tensor& g = nodes_[id].grad;
        const Tensor& va = nodes_[a].val;
        const Tensor& vb = nodes_[b].val;
        Tensor& ga = grad_of(a);
        Tensor& gb = grad_of(b);
        for (int64_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * vb[i];
            gb[i] += g[i] * va[i];
        }
    };
    return id;
}

NodeRef Graph::scale(NodeRef a, double s) {
    Tensor out = nodes_[a].val;
    scale_inplace(out, s);
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, s] {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = grad_of(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    };
    return id;
}

NodeRef Graph::gelu(NodeRef a) { return apply_unary(a, gelu_fn, gelu_dfn); }

NodeRef Graph::relu(NodeRef a) {
    return apply_unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

NodeRef Graph::apply_unary(NodeRef a, std::function<double(double)> f, std::function<double(double)> df) {
    const Tensor& ta = nodes_[a].val;
    Tensor out = ta;
    for (double& v : out.data) v = f(v);
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, df = std::move(df)] {
        const Tensor& g = nodes_[id].grad;
        const Tensor& x = nodes_[a].val;
        Tensor& ga = grad_of(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i]);
    };
    return id;
}

NodeRef Graph::cols(NodeRef a, int start, int n) {
    const Tensor& ta = nodes_[a].val;
    check_matrix(ta, "cols");
    int m = ta.rows(), c = ta.cols();
    if (start < 0 || start + n > c) throw std::invalid_argument("cols: slice out of range");
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = ta.at(i, start + j);
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, start, n, m] {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = grad_of(a);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) ga.at(i, start + j) += g.at(i, j);
    };
    return id;
}

NodeRef Graph::concat_cols(const std::vector<NodeRef>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    int m = nodes_[parts[0]].val.rows();
    int total = 0;
    for (NodeRef p : parts) {
        check_matrix(nodes_[p].val, "concat_cols");
        if (nodes_[p].val.rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
        total += nodes_[p].val.cols();
    }
    Tensor out({m, total});
    int off = 0;
    for (NodeRef p : parts) {
        const Tensor& tp = nodes_[p].val;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < tp.cols(); ++j) out.at(i, off + j) = tp.at(i, j);
        off += tp.cols();
    }
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, parts, m] {
        const Tensor& g = nodes_[id].grad;
        int off2 = 0;
        for (NodeRef p : parts) {
            int n = nodes_[p].val.cols();
            Tensor& gp = grad_of(p);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gp.at(i, j) += g.at(i, off2 + j);
            off2 += n;
        }
    };
    return id;
}

NodeRef Graph::sum(NodeRef a) {
    double s = 0.0;
    for (double v : nodes_[a].val.data) s += v;
    NodeRef id = push(Tensor::scalar(s));
    nodes_[id].back = [this, id, a] {
        double g = nodes_[id].grad[0];
        Tensor& ga = grad_of(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
    return id;
}

NodeRef Graph::mean(NodeRef a) {
    int64_t n = nodes_[a].val.size();
    double s = 0.0;
    for (double v : nodes_[a].val.data) s += v;
    NodeRef id = push(Tensor::scalar(s / static_cast<double>(n)));
    nodes_[id].back = [this, id, a, n] {
        double g = nodes_[id].grad[0] / static_cast<double>(n);
        Tensor& ga = grad_of(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
    return id;
}

NodeRef Graph::matmul(NodeRef a, NodeRef b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    check_matrix(ta, "matmul");
    check_matrix(tb, "matmul");
    Tensor out({ta.rows(), tb.cols()});
    gemm_nn(ta, tb, out);
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, b] {
        const Tensor& g = nodes_[id].grad;
        // dA += dC * B^T ; dB += A^T * dC
        gemm_nt(g, nodes_[b].val, grad_of(a), 1.0, 1.0);
        gemm_tn(nodes_[a].val, g, grad_of(b), 1.0, 1.0);
    };
    return id;
}

NodeRef Graph::matmul_nt(NodeRef a, NodeRef b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    check_matrix(ta, "matmul_nt");
    check_matrix(tb, "matmul_nt");
    Tensor out({ta.rows(), tb.rows()});
    gemm_nt(ta, tb, out);
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, b] {
        const Tensor& g = nodes_[id].grad;
        // C = A * B^T : dA += dC * B ; dB += dC^T * A
        gemm_nn(g, nodes_[b].val, grad_of(a), 1.0, 1.0);
        gemm_tn(g, nodes_[a].val, grad_of(b), 1.0, 1.0);
    };
    return id;
}

NodeRef Graph::layer_norm(NodeRef a, NodeRef gain, NodeRef bias, double eps) {
    const Tensor& x = nodes_[a].val;
    check_matrix(x, "layer_norm");
    int m = x.rows(), n = x.cols();
    if (nodes_[gain].val.size() != n || nodes_[bias].val.size() != n)
        throw std::invalid_argument("layer_norm: gain/bias size mismatch");
    Tensor out({m, n});
    Tensor xhat({m, n});
    std::vector<double> inv_std(m);
    const Tensor& g = nodes_[gain].val;
    const Tensor& b = nodes_[bias].val;
    for (int i = 0; i < m; ++i) {
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += x.at(i, j);
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = x.at(i, j) - mu;
            var += d * d;
        }
        var /= n;
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < n; ++j) {
            double xh = (x.at(i, j) - mu) * is;
            xhat.at(i, j) = xh;
            out.at(i, j) = g[j] * xh + b[j];
        }
    }
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, gain, bias, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
        const Tensor& go = nodes_[id].grad;
        const Tensor& gn = nodes_[gain].val;
        Tensor& ga = grad_of(a);
        Tensor& gg = grad_of(gain);
        Tensor& gb = grad_of(bias);
        for (int i = 0; i < m; ++i) {
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (int j = 0; j < n; ++j) {
                double dxh = go.at(i, j) * gn[j];
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xhat.at(i, j);
                gg[j] += go.at(i, j) * xhat.at(i, j);
                gb[j] += go.at(i, j);
            }
            for (int j = 0; j < n; ++j) {
                double dxh = go.at(i, j) * gn[j];
                ga.at(i, j) += inv_std[i] / n * (n * dxh - sum_dxh - xhat.at(i, j) * sum_dxh_xh);
            }
        }
    };
    return id;
}

NodeRef Graph::softmax_rows(NodeRef a) {
    Tensor out = nodes_[a].val;
    check_matrix(out, "softmax_rows");
    int m = out.rows(), n = out.cols();
    for (int i = 0; i < m; ++i) softmax_row_inplace(&out.data[static_cast<size_t>(i) * n], n);
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, m, n] {
        const Tensor& g = nodes_[id].grad;
        const Tensor& p = nodes_[id].val;
        Tensor& ga = grad_of(a);
        for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += g.at(i, j) * p.at(i, j);
            for (int j = 0; j < n; ++j) ga.at(i, j) += p.at(i, j) * (g.at(i, j) - dot);
        }
    };
    return id;
}

NodeRef Graph::causal_softmax(NodeRef a) {
    const Tensor& ta = nodes_[a].val;
    check_matrix(ta, "causal_softmax");
    int t = ta.rows();
    if (ta.cols() != t) throw std::invalid_argument("causal_softmax: expected square scores");
    Tensor out({t, t});
    for (int i = 0; i < t; ++i) {
        int n = i + 1;
        double mx = ta.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, ta.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            double e = std::exp(ta.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < n; ++j) out.at(i, j) /= sum;
        // j > i stays exactly zero
    }
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, t] {
        const Tensor& g = nodes_[id].grad;
        const Tensor& p = nodes_[id].val;
        Tensor& ga = grad_of(a);
        for (int i = 0; i < t; ++i) {
            double dot = 0.0;
            for (int j = 0; j <= i; ++j) dot += g.at(i, j) * p.at(i, j);
            for (int j = 0; j <= i; ++j) ga.at(i, j) += p.at(i, j) * (g.at(i, j) - dot);
        }
    };
    return id;
}

NodeRef Graph::gather_rows(NodeRef a, std::vector<int> idx) {
    const Tensor& ta = nodes_[a].val;
    check_matrix(ta, "gather_rows");
    int n = ta.cols();
    Tensor out({static_cast<int>(idx.size()), n});
    for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < n; ++j) out.at(static_cast<int>(i), j) = ta.at(idx[i], j);
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, idx = std::move(idx), n] {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = grad_of(a);
        for (size_t i = 0; i < idx.size(); ++i)
            for (int j = 0; j < n; ++j) ga.at(idx[i], j) += g.at(static_cast<int>(i), j);
    };
    return id;
}

NodeRef Graph::scatter_rows(NodeRef a, std::vector<int> idx, int m) {
    const Tensor& ta = nodes_[a].val;
    check_matrix(ta, "scatter_rows");
    if (static_cast<int>(idx.size()) != ta.rows()) throw std::invalid_argument("scatter_rows: index count mismatch");
    int n = ta.cols();
    Tensor out({m, n});
    for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < n; ++j) out.at(idx[i], j) += ta.at(static_cast<int>(i), j);
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, idx = std::move(idx), n] {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = grad_of(a);
        for (size_t i = 0; i < idx.size(); ++i)
            for (int j = 0; j < n; ++j) ga.at(static_cast<int>(i), j) += g.at(idx[i], j);
    };
    return id;
}

NodeRef Graph::scale_rows(NodeRef a, NodeRef s) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& ts = nodes_[s].val;
    check_matrix(ta, "scale_rows");
    if (ts.size() != ta.rows()) throw std::invalid_argument("scale_rows: scale size mismatch");
    int m = ta.rows(), n = ta.cols();
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = ta.at(i, j) * ts[i];
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, s, m, n] {
        const Tensor& g = nodes_[id].grad;
        const Tensor& va = nodes_[a].val;
        const Tensor& vs = nodes_[s].val;
        Tensor& ga = grad_of(a);
        Tensor& gs = grad_of(s);
        for (int i = 0; i < m; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) {
                ga.at(i, j) += g.at(i, j) * vs[i];
                acc += g.at(i, j) * va.at(i, j);
            }
            gs[i] += acc;
        }
    };
    return id;
}

NodeRef Graph::scalar_embed(NodeRef w, NodeRef b, std::vector<double> scalars) {
    const Tensor& tw = nodes_[w].val;
    const Tensor& tb = nodes_[b].val;
    if (tw.size() != tb.size()) throw std::invalid_argument("scalar_embed: w/b size mismatch");
    int d = static_cast<int>(tw.size());
    int k = static_cast<int>(scalars.size());
    Tensor out({k, d});
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) = scalars[static_cast<size_t>(i)] * tw[j] + tb[j];
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, w, b, scalars = std::move(scalars), d, k] {
        const Tensor& g = nodes_[id].grad;
        Tensor& gw = grad_of(w);
        Tensor& gb = grad_of(b);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < d; ++j) {
                gw[j] += scalars[static_cast<size_t>(i)] * g.at(i, j);
                gb[j] += g.at(i, j);
            }
    };
    return id;
}

NodeRef Graph::cross_entropy_rows(NodeRef logits, std::vector<int> targets) {
    const Tensor& tl = nodes_[logits].val;
    check_matrix(tl, "cross_entropy_rows");
    int m = tl.rows(), n = tl.cols();
    if (static_cast<int>(targets.size()) != m) throw std::invalid_argument("cross_entropy_rows: target count mismatch");
    for (int t : targets)
        if (t < 0 || t >= n) throw std::out_of_range("cross_entropy_rows: target out of vocabulary");
    Tensor probs = tl;
    double loss = 0.0;
    for (int i = 0; i < m; ++i) {
        softmax_row_inplace(&probs.data[static_cast<size_t>(i) * n], n);
        loss -= std::log(probs.at(i, targets[static_cast<size_t>(i)]));
    }
    loss /= m;
    NodeRef id = push(Tensor::scalar(loss));
    nodes_[id].back = [this, id, logits, targets = std::move(targets), probs = std::move(probs), m, n] {
        double g = nodes_[id].grad[0] / m;
        Tensor& gl = grad_of(logits);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) gl.at(i, j) += g * probs.at(i, j);
            gl.at(i, targets[static_cast<size_t>(i)]) -= g;
        }
    };
    return id;
}

NodeRef Graph::mse(NodeRef pred, Tensor target) {
    const Tensor& tp = nodes_[pred].val;
    if (!tp.same_shape(target)) throw std::invalid_argument("mse: shape mismatch");
    int64_t n = tp.size();
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = tp[i] - target[i];
        loss += d * d;
    }
    loss /= static_cast<double>(n);
    NodeRef id = push(Tensor::scalar(loss));
    nodes_[id].back = [this, id, pred, target = std::move(target), n] {
        double g = nodes_[id].grad[0];
        const Tensor& vp = nodes_[pred].val;
        Tensor& gp = grad_of(pred);
        for (int64_t i = 0; i < n; ++i) gp[i] += g * 2.0 * (vp[i] - target[i]) / static_cast<double>(n);
    };
    return id;
}

NodeRef Graph::col_means(NodeRef a) {
    const Tensor& ta = nodes_[a].val;
    check_matrix(ta, "col_means");
    int m = ta.rows(), n = ta.cols();
    Tensor out({n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[j] += ta.at(i, j);
    for (int j = 0; j < n; ++j) out[j] /= m;
    NodeRef id = push(std::move(out));
    nodes_[id].back = [this, id, a, m, n] {
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = grad_of(a);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) ga.at(i, j) += g[j] / m;
    };
    return id;
}

NodeRef Graph::dot_const(NodeRef a, Tensor c) {
    const Tensor& ta = nodes_[a].val;
    if (ta.size() != c.size()) throw std::invalid_argument("dot_const: size mismatch");
    double s = 0.0;
    for (int64_t i = 0; i < ta.size(); ++i) s += ta[i] * c[i];
    NodeRef id = push(Tensor::scalar(s));
    nodes_[id].back = [this, id, a, c = std::move(c)] {
        double g = nodes_[id].grad[0];
        Tensor& ga = grad_of(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g * c[i];
    };
    return id;
}

void Graph::backward(NodeRef root) {
    if (nodes_[root].val.size() != 1) throw std::invalid_argument("backward: root must be scalar");
    grad_of(root)[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.back && !n.grad.empty()) n.back();
    }
}

void Graph::flush_param_grads() {
    for (auto& [p, id] : param_leaves_)
        if (has_grad(id)) add_into(p->grad, nodes_[id].grad);
}

} // namespace stt::nn
