#include "stt/nn/transformer.hpp"

#include <cmath>
#include <stdexcept>

namespace stt::nn {

namespace {

Param init_projection(const std::string& name, int rows, int cols, Rng& rng) {
    Param p(name, Tensor::zeros({rows, cols}));
    for (auto& v : p.value.data) v = rng.normal(0.0, 0.02);
    return p;
}

Param ones_vec(const std::string& name, int n) {
    Param p(name, Tensor::zeros({n}));
    p.value.fill(1.0);
    return p;
}

} // namespace

void TransformerConfig::validate() const {
    if (d_embed % n_head != 0) throw std::invalid_argument("transformer: d_embed must divide by n_head");
    if (n_layer < 0 || n_head < 1 || d_embed < 1 || context < 1)
        throw std::invalid_argument("transformer: bad dimensions");
    if (ffn_kind == FfnKind::Switch && (n_experts < 1 || top_k < 1 || top_k > n_experts))
        throw std::invalid_argument("transformer: bad expert configuration");
}

TransformerConfig TransformerConfig::preset(const std::string& name) {
    TransformerConfig cfg;
    if (name == "small") {
        cfg.n_head = 4;
        cfg.n_layer = 4;
        cfg.d_embed = 64;
    } else if (name == "medium") {
        cfg.n_head = 8;
        cfg.n_layer = 4;
        cfg.d_embed = 64;
    } else if (name == "large") {
        cfg.n_head = 8;
        cfg.n_layer = 4;
        cfg.d_embed = 128;
    } else {
        throw std::invalid_argument("unknown model preset '" + name + "'");
    }
    return cfg;
}

AttentionParams::AttentionParams(const std::string& prefix, int d, Rng& rng)
    : wq(init_projection(prefix + ".wq", d, d, rng)),
      bq(prefix + ".bq", Tensor::zeros({d})),
      wk(init_projection(prefix + ".wk", d, d, rng)),
      bk(prefix + ".bk", Tensor::zeros({d})),
      wv(init_projection(prefix + ".wv", d, d, rng)),
      bv(prefix + ".bv", Tensor::zeros({d})),
      wo(init_projection(prefix + ".wo", d, d, rng)),
      bo(prefix + ".bo", Tensor::zeros({d})) {}

std::vector<Param*> AttentionParams::params() { return {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo}; }

NodeRef causal_self_attention(Graph& g, NodeRef x, AttentionParams& p, int n_head) {
    int d = g.value(x).cols();
    int dh = d / n_head;
    NodeRef q = g.add_rowvec(g.matmul(x, g.param(p.wq)), g.param(p.bq));
    NodeRef k = g.add_rowvec(g.matmul(x, g.param(p.wk)), g.param(p.bk));
    NodeRef v = g.add_rowvec(g.matmul(x, g.param(p.wv)), g.param(p.bv));
    std::vector<NodeRef> heads;
    heads.reserve(static_cast<size_t>(n_head));
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < n_head; ++h) {
        NodeRef qh = g.cols(q, h * dh, dh);
        NodeRef kh = g.cols(k, h * dh, dh);
        NodeRef vh = g.cols(v, h * dh, dh);
        NodeRef scores = g.scale(g.matmul_nt(qh, kh), scale);
        NodeRef probs = g.causal_softmax(scores);
        heads.push_back(g.matmul(probs, vh));
    }
    NodeRef merged = n_head == 1 ? heads[0] : g.concat_cols(heads);
    return g.add_rowvec(g.matmul(merged, g.param(p.wo)), g.param(p.bo));
}

Block::Block(const TransformerConfig& cfg, const std::string& prefix, Rng& rng)
    : ln1_g(ones_vec(prefix + ".ln1.g", cfg.d_embed)),
      ln1_b(prefix + ".ln1.b", Tensor::zeros({cfg.d_embed})),
      ln2_g(ones_vec(prefix + ".ln2.g", cfg.d_embed)),
      ln2_b(prefix + ".ln2.b", Tensor::zeros({cfg.d_embed})),
      attn(prefix + ".attn", cfg.d_embed, rng),
      n_head(cfg.n_head) {
    if (cfg.ffn_kind == FfnKind::Dense) {
        dense = std::make_unique<DenseFfn>(prefix + ".ffn", cfg.d_embed, cfg.d_ff(), rng);
    } else {
        swi = std::make_unique<SwitchFfn>(prefix + ".switch", cfg.d_embed, cfg.d_ff(), cfg.n_experts,
                                          cfg.top_k, rng);
    }
}

NodeRef Block::forward(Graph& g, NodeRef x, RoutingStats* stats, std::vector<NodeRef>* lb_losses) {
    NodeRef a = causal_self_attention(g, g.layer_norm(x, g.param(ln1_g), g.param(ln1_b)), attn, n_head);
    x = g.add(x, a);
    NodeRef h = g.layer_norm(x, g.param(ln2_g), g.param(ln2_b));
    NodeRef f;
    if (dense) {
        f = dense->forward(g, h);
    } else {
        NodeRef lb = -1;
        f = swi->forward(g, h, stats, lb_losses ? &lb : nullptr);
        if (lb_losses && lb >= 0) lb_losses->push_back(lb);
    }
    return g.add(x, f);
}

std::vector<Param*> Block::params() {
    std::vector<Param*> out{&ln1_g, &ln1_b, &ln2_g, &ln2_b};
    for (Param* p : attn.params()) out.push_back(p);
    if (dense)
        for (Param* p : dense->params()) out.push_back(p);
    if (swi)
        for (Param* p : swi->params()) out.push_back(p);
    return out;
}

TransformerTrunk::TransformerTrunk(const TransformerConfig& cfg, const std::string& prefix, Rng& rng)
    : cfg_(cfg) {
    cfg_.validate();
    blocks_.reserve(static_cast<size_t>(cfg.n_layer));
    for (int l = 0; l < cfg.n_layer; ++l)
        blocks_.push_back(std::make_unique<Block>(cfg, prefix + ".block" + std::to_string(l), rng));
}

NodeRef TransformerTrunk::forward(Graph& g, NodeRef x, RoutingStats* stats,
                                  std::vector<NodeRef>* lb_losses) {
    for (auto& b : blocks_) x = b->forward(g, x, stats, lb_losses);
    return x;
}

std::vector<Param*> TransformerTrunk::params() {
    std::vector<Param*> out;
    for (auto& b : blocks_)
        for (Param* p : b->params()) out.push_back(p);
    return out;
}

} // namespace stt::nn
