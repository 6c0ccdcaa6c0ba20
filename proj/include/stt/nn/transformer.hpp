#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stt/nn/switch_ffn.hpp"

namespace stt::nn {

enum class FfnKind { Dense, Switch };

struct TransformerConfig {
    int n_head = 4;
    int n_layer = 4;
    int d_embed = 64;
    int context = 30; // max timestep groups fed to the model
    FfnKind ffn_kind = FfnKind::Dense;
    int n_experts = 4;
    int top_k = 1;
    double aux_coef = 0.01; // load-balance loss coefficient (switch only)

    int d_ff() const { return 4 * d_embed; }
    void validate() const;

    // Named presets: (head, layer, embedding) = small (4,4,64),
    // medium (8,4,64), large (8,4,128).
    static TransformerConfig preset(const std::string& name);
};

struct AttentionParams {
    Param wq, bq, wk, bk, wv, bv, wo, bo;
    AttentionParams(const std::string& prefix, int d, Rng& rng);
    std::vector<Param*> params();
};

// Pre-norm GPT block: x + attn(ln(x)), then x + ffn(ln(x)).
struct Block {
    Param ln1_g, ln1_b, ln2_g, ln2_b;
    AttentionParams attn;
    int n_head;
    std::unique_ptr<DenseFfn> dense;
    std::unique_ptr<SwitchFfn> swi;

    Block(const TransformerConfig& cfg, const std::string& prefix, Rng& rng);
    NodeRef forward(Graph& g, NodeRef x, RoutingStats* stats, std::vector<NodeRef>* lb_losses);
    std::vector<Param*> params();
};

NodeRef causal_self_attention(Graph& g, NodeRef x, AttentionParams& p, int n_head);

// A stack of blocks. Depth zero is the identity, so the embedded input
// passes through untouched; any final normalization belongs to the heads.
class TransformerTrunk {
public:
    TransformerTrunk(const TransformerConfig& cfg, const std::string& prefix, Rng& rng);

    NodeRef forward(Graph& g, NodeRef x, RoutingStats* stats = nullptr,
                    std::vector<NodeRef>* lb_losses = nullptr);
    std::vector<Param*> params();
    const TransformerConfig& config() const { return cfg_; }

private:
    TransformerConfig cfg_;
    std::vector<std::unique_ptr<Block>> blocks_;
};

} // namespace stt::nn
