#include "stt/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stt/nn/checkpoint.hpp"

namespace stt::model {

using nn::Graph;
using nn::NodeRef;
using nn::Param;
using nn::Tensor;

void ValueDistribution::validate(double tol) const {
    if (n_atoms < 2) throw std::invalid_argument("value distribution: need at least 2 atoms");
    if (static_cast<int>(probs.size()) != n_atoms)
        throw std::invalid_argument("value distribution: probs size mismatch");
    double sum = 0.0;
    for (double p : probs) {
        if (p < 0.0) throw std::invalid_argument("value distribution: negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > tol)
        throw std::invalid_argument("value distribution: probabilities sum to " + std::to_string(sum));
}

int atom_label(double r, int n_atoms, double v_min, double v_max) {
    if (n_atoms < 2) throw std::invalid_argument("atom_label: need at least 2 atoms");
    if (!(v_max > v_min)) throw std::invalid_argument("atom_label: empty support range");
    if (!std::isfinite(r)) throw std::invalid_argument("atom_label: non-finite return");
    double dz = (v_max - v_min) / (n_atoms - 1);
    long long c = std::llround((r - v_min) / dz);
    if (c < 0) c = 0;
    if (c > n_atoms - 1) c = n_atoms - 1;
    return static_cast<int>(c);
}

double expected_value(const ValueDistribution& dist) {
    dist.validate();
    double v = 0.0;
    for (int i = 0; i < dist.n_atoms; ++i) v += dist.probs[static_cast<size_t>(i)] * dist.atom(i);
    return v;
}

std::string model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::Action: return "action";
        case ModelKind::Dynamics: return "dynamics";
        case ModelKind::ReturnDist: return "rtg_dist";
        case ModelKind::ReturnMean: return "rtg_mean";
    }
    return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "action") return ModelKind::Action;
    if (name == "dynamics") return ModelKind::Dynamics;
    if (name == "rtg_dist") return ModelKind::ReturnDist;
    if (name == "rtg_mean") return ModelKind::ReturnMean;
    throw std::invalid_argument("unknown model kind '" + name + "'");
}

ModelVocab ModelVocab::from_dataset(const data::Dataset& ds) {
    ModelVocab v;
    v.codec = ds.codec;
    int max_id = 0;
    for (const auto& s : ds.specs) max_id = std::max(max_id, s.task_id);
    v.n_tasks = max_id + 1;
    return v;
}

void ModelConfig::validate() const {
    trunk.validate();
    if (vocab.n_tasks < 1 || vocab.n_actions < 1) throw std::invalid_argument("model: empty vocabulary");
    if (kind == ModelKind::ReturnDist) {
        if (n_atoms < 2) throw std::invalid_argument("model: distributional head needs >= 2 atoms");
        if (!(v_max > v_min)) throw std::invalid_argument("model: v_max must exceed v_min");
    }
    if ((kind == ModelKind::ReturnDist || kind == ModelKind::ReturnMean) && rtg_window < 1)
        throw std::invalid_argument("model: rtg window must be positive");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
    std::map<std::string, std::string> m;
    m["kind"] = model_kind_name(kind);
    m["n_head"] = std::to_string(trunk.n_head);
    m["n_layer"] = std::to_string(trunk.n_layer);
    m["d_embed"] = std::to_string(trunk.d_embed);
    m["context"] = std::to_string(trunk.context);
    m["ffn"] = trunk.ffn_kind == nn::FfnKind::Dense ? "dense" : "switch";
    m["n_experts"] = std::to_string(trunk.n_experts);
    m["top_k"] = std::to_string(trunk.top_k);
    m["aux_coef"] = std::to_string(trunk.aux_coef);
    m["max_w"] = std::to_string(vocab.codec.max_w);
    m["max_h"] = std::to_string(vocab.codec.max_h);
    m["door_slots"] = std::to_string(vocab.codec.door_slots);
    m["key_slots"] = std::to_string(vocab.codec.key_slots);
    m["n_tasks"] = std::to_string(vocab.n_tasks);
    m["n_actions"] = std::to_string(vocab.n_actions);
    m["n_atoms"] = std::to_string(n_atoms);
    m["v_min"] = std::to_string(v_min);
    m["v_max"] = std::to_string(v_max);
    m["rtg_window"] = std::to_string(rtg_window);
    return m;
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& m) {
    ModelConfig c;
    auto get = [&](const std::string& k) {
        auto it = m.find(k);
        if (it == m.end()) throw std::invalid_argument("model config: missing key '" + k + "'");
        return it->second;
    };
    c.kind = model_kind_from_name(get("kind"));
    c.trunk.n_head = std::stoi(get("n_head"));
    c.trunk.n_layer = std::stoi(get("n_layer"));
    c.trunk.d_embed = std::stoi(get("d_embed"));
    c.trunk.context = std::stoi(get("context"));
    c.trunk.ffn_kind = get("ffn") == "switch" ? nn::FfnKind::Switch : nn::FfnKind::Dense;
    c.trunk.n_experts = std::stoi(get("n_experts"));
    c.trunk.top_k = std::stoi(get("top_k"));
    c.trunk.aux_coef = std::stod(get("aux_coef"));
    c.vocab.codec.max_w = std::stoi(get("max_w"));
    c.vocab.codec.max_h = std::stoi(get("max_h"));
    c.vocab.codec.door_slots = std::stoi(get("door_slots"));
    c.vocab.codec.key_slots = std::stoi(get("key_slots"));
    c.vocab.n_tasks = std::stoi(get("n_tasks"));
    c.vocab.n_actions = std::stoi(get("n_actions"));
    c.n_atoms = std::stoi(get("n_atoms"));
    c.v_min = std::stod(get("v_min"));
    c.v_max = std::stod(get("v_max"));
    c.rtg_window = std::stoi(get("rtg_window"));
    return c;
}

namespace {

Param embed_table(const std::string& name, int vocab, int d, Rng& rng) {
    Param p(name, Tensor::zeros({vocab, d}));
    for (auto& v : p.value.data) v = rng.normal(0.0, 0.02);
    return p;
}

Param ones_param(const std::string& name, int n) {
    Param p(name, Tensor::zeros({n}));
    p.value.fill(1.0);
    return p;
}

int argmax_row(const double* row, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

} // namespace

SequenceModel::SequenceModel(const ModelConfig& cfg, uint64_t param_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(mix_seed(param_seed, 0x6d6f64));
    int d = cfg_.trunk.d_embed;
    const auto vocab_sizes = cfg_.vocab.codec.vocab_sizes();

    task_embed_ = embed_table("embed.task", cfg_.vocab.n_tasks, d, rng);
    action_embed_ = embed_table("embed.action", cfg_.vocab.n_actions, d, rng);
    pos_embed_ = embed_table("embed.pos", cfg_.trunk.context, d, rng);
    rtg_w_ = Param("embed.rtg.w", Tensor::zeros({d}));
    for (auto& v : rtg_w_.value.data) v = rng.normal(0.0, 0.02);
    rtg_b_ = Param("embed.rtg.b", Tensor::zeros({d}));
    for (size_t c = 0; c < vocab_sizes.size(); ++c)
        state_embeds_.push_back(embed_table("embed.state" + std::to_string(c), vocab_sizes[c], d, rng));

    trunk_ = std::make_unique<nn::TransformerTrunk>(cfg_.trunk, "trunk", rng);
    final_ln_g_ = ones_param("ln_f.g", d);
    final_ln_b_ = Param("ln_f.b", Tensor::zeros({d}));

    action_head_w_ = embed_table("head.action.w", d, cfg_.vocab.n_actions, rng);
    action_head_b_ = Param("head.action.b", Tensor::zeros({cfg_.vocab.n_actions}));
    for (size_t c = 0; c < vocab_sizes.size(); ++c) {
        state_head_w_.push_back(embed_table("head.state" + std::to_string(c) + ".w", d, vocab_sizes[c], rng));
        state_head_b_.push_back(
            Param("head.state" + std::to_string(c) + ".b", Tensor::zeros({vocab_sizes[c]})));
    }
    int value_out = cfg_.kind == ModelKind::ReturnDist ? cfg_.n_atoms : 1;
    value_head_w_ = embed_table("head.value.w", d, value_out, rng);
    value_head_b_ = Param("head.value.b", Tensor::zeros({value_out}));
}

std::vector<Param*> SequenceModel::params() {
    std::vector<Param*> out{&task_embed_, &action_embed_, &pos_embed_};
    if (uses_rtg_tokens()) {
        out.push_back(&rtg_w_);
        out.push_back(&rtg_b_);
    }
    for (auto& p : state_embeds_) out.push_back(&p);
    for (Param* p : trunk_->params()) out.push_back(p);
    out.push_back(&final_ln_g_);
    out.push_back(&final_ln_b_);
    switch (cfg_.kind) {
        case ModelKind::Action:
            out.push_back(&action_head_w_);
            out.push_back(&action_head_b_);
            break;
        case ModelKind::Dynamics:
            for (size_t c = 0; c < state_head_w_.size(); ++c) {
                out.push_back(&state_head_w_[c]);
                out.push_back(&state_head_b_[c]);
            }
            break;
        case ModelKind::ReturnDist:
        case ModelKind::ReturnMean:
            out.push_back(&value_head_w_);
            out.push_back(&value_head_b_);
            break;
    }
    return out;
}

int64_t SequenceModel::param_count() {
    int64_t n = 0;
    for (Param* p : params()) n += p->value.size();
    return n;
}

int64_t SequenceModel::active_params_per_token() const {
    // embeddings: one row each of task/pos (or rtg/state/action) ~ d + d
    int d = cfg_.trunk.d_embed;
    int64_t embed_cost = 2 * d;
    int64_t per_block = 0;
    // layer norms + attention projections
    per_block += 4 * d;
    per_block += 4 * (static_cast<int64_t>(d) * d + d);
    // one expert (or the dense ffn) plus the router row
    int64_t ffn = 2 * (static_cast<int64_t>(d) * cfg_.trunk.d_ff()) + cfg_.trunk.d_ff() + d;
    if (cfg_.trunk.ffn_kind == nn::FfnKind::Switch) ffn += static_cast<int64_t>(d) * cfg_.trunk.n_experts;
    per_block += ffn;
    int64_t head = 0;
    switch (cfg_.kind) {
        case ModelKind::Action: head = static_cast<int64_t>(d) * cfg_.vocab.n_actions + cfg_.vocab.n_actions; break;
        case ModelKind::Dynamics: {
            for (int v : cfg_.vocab.codec.vocab_sizes()) head += static_cast<int64_t>(d) * v + v;
            break;
        }
        case ModelKind::ReturnDist: head = static_cast<int64_t>(d) * cfg_.n_atoms + cfg_.n_atoms; break;
        case ModelKind::ReturnMean: head = d + 1; break;
    }
    return embed_cost + cfg_.trunk.n_layer * per_block + 2 * d + head;
}

SequenceModel::TokenLayout SequenceModel::build_layout(const data::TokenSequence& seq,
                                                       bool zero_rtg) const {
    int g_count = static_cast<int>(seq.groups.size());
    if (g_count == 0) throw std::invalid_argument("model: empty token sequence");
    if (g_count > cfg_.trunk.context)
        throw std::invalid_argument("model: window exceeds context length");
    int n_comp = cfg_.vocab.codec.components();

    TokenLayout L;
    L.comp_ids.resize(static_cast<size_t>(n_comp));
    int pos = 0;
    for (int t = 0; t < g_count; ++t) {
        const data::TokenGroup& gp = seq.groups[static_cast<size_t>(t)];
        if (static_cast<int>(gp.state.size()) != n_comp)
            throw std::invalid_argument("model: state component count mismatch");
        if (seq.task_id < 0 || seq.task_id >= cfg_.vocab.n_tasks)
            throw std::invalid_argument("model: task id outside vocabulary");

        L.task_pos.push_back(pos);
        L.task_ids.push_back(seq.task_id);
        L.timestep.push_back(t);
        ++pos;
        if (uses_rtg_tokens()) {
            L.rtg_pos.push_back(pos);
            L.rtg_vals.push_back(zero_rtg ? 0.0 : gp.rtg);
            L.timestep.push_back(t);
            ++pos;
        }
        L.state_pos.push_back(pos);
        for (int c = 0; c < n_comp; ++c) L.comp_ids[static_cast<size_t>(c)].push_back(gp.state[static_cast<size_t>(c)]);
        L.timestep.push_back(t);
        ++pos;
        if (gp.action >= 0) {
            if (gp.action >= cfg_.vocab.n_actions)
                throw std::invalid_argument("model: action outside vocabulary");
            L.action_pos.push_back(pos);
            L.action_ids.push_back(gp.action);
            L.groups_with_action.push_back(t);
            L.timestep.push_back(t);
            ++pos;
        } else if (t != g_count - 1) {
            throw std::invalid_argument("model: only the final group may omit its action");
        }
    }
    L.total_tokens = pos;
    return L;
}

NodeRef SequenceModel::embed(Graph& g, const TokenLayout& L) {
    int T = L.total_tokens;
    // positional embedding covers every token; stream embeddings scatter in
    NodeRef x = g.gather_rows(g.param(pos_embed_), L.timestep);
    x = g.add(x, g.scatter_rows(g.gather_rows(g.param(task_embed_), L.task_ids), L.task_pos, T));
    if (uses_rtg_tokens()) {
        NodeRef remb = g.scalar_embed(g.param(rtg_w_), g.param(rtg_b_), L.rtg_vals);
        x = g.add(x, g.scatter_rows(remb, L.rtg_pos, T));
    }
    for (size_t c = 0; c < state_embeds_.size(); ++c) {
        NodeRef comp = g.gather_rows(g.param(state_embeds_[c]), L.comp_ids[c]);
        x = g.add(x, g.scatter_rows(comp, L.state_pos, T));
    }
    if (!L.action_pos.empty()) {
        NodeRef act = g.gather_rows(g.param(action_embed_), L.action_ids);
        x = g.add(x, g.scatter_rows(act, L.action_pos, T));
    }
    return x;
}

NodeRef SequenceModel::encode(Graph& g, const TokenLayout& L, nn::RoutingStats* stats,
                              std::vector<NodeRef>* lb_losses) {
    NodeRef x = embed(g, L);
    x = trunk_->forward(g, x, stats, lb_losses);
    return g.layer_norm(x, g.param(final_ln_g_), g.param(final_ln_b_));
}

NodeRef SequenceModel::loss(Graph& g, const data::TokenSequence& seq, const SampleTargets& targets,
                            bool zero_rtg, nn::RoutingStats* stats, std::vector<NodeRef>* lb_losses) {
    TokenLayout L = build_layout(seq, zero_rtg);
    NodeRef h = encode(g, L, stats, lb_losses);

    switch (cfg_.kind) {
        case ModelKind::Action: {
            // predict a_t from the state token of each group that has one
            if (targets.actions.size() != L.groups_with_action.size())
                throw std::invalid_argument("model: action target count mismatch");
            std::vector<int> read_pos;
            for (int t : L.groups_with_action) read_pos.push_back(L.state_pos[static_cast<size_t>(t)]);
            NodeRef logits = g.add_rowvec(g.matmul(g.gather_rows(h, read_pos), g.param(action_head_w_)),
                                          g.param(action_head_b_));
            return g.cross_entropy_rows(logits, targets.actions);
        }
        case ModelKind::Dynamics: {
            // predict s_{t+1} components from the action token of group t
            if (targets.next_states.size() != L.action_pos.size())
                throw std::invalid_argument("model: dynamics target count mismatch");
            NodeRef at = g.gather_rows(h, L.action_pos);
            NodeRef total = -1;
            int n_comp = cfg_.vocab.codec.components();
            for (int c = 0; c < n_comp; ++c) {
                std::vector<int> tgt;
                for (const auto& ns : targets.next_states) tgt.push_back(ns[static_cast<size_t>(c)]);
                NodeRef logits = g.add_rowvec(g.matmul(at, g.param(state_head_w_[static_cast<size_t>(c)])),
                                              g.param(state_head_b_[static_cast<size_t>(c)]));
                NodeRef ce = g.cross_entropy_rows(logits, tgt);
                total = total < 0 ? ce : g.add(total, ce);
            }
            return total;
        }
        case ModelKind::ReturnDist: {
            if (L.action_pos.empty()) throw std::invalid_argument("model: return window needs an action");
            NodeRef last = g.gather_rows(h, {L.action_pos.back()});
            NodeRef logits =
                g.add_rowvec(g.matmul(last, g.param(value_head_w_)), g.param(value_head_b_));
            int label = atom_label(targets.rtg_target, cfg_.n_atoms, cfg_.v_min, cfg_.v_max);
            return g.cross_entropy_rows(logits, {label});
        }
        case ModelKind::ReturnMean: {
            if (L.action_pos.empty()) throw std::invalid_argument("model: return window needs an action");
            NodeRef last = g.gather_rows(h, {L.action_pos.back()});
            NodeRef pred = g.add_rowvec(g.matmul(last, g.param(value_head_w_)), g.param(value_head_b_));
            return g.mse(pred, Tensor({1, 1}, {targets.rtg_target}));
        }
    }
    throw std::logic_error("model: unknown kind");
}

std::vector<double> SequenceModel::action_logits(const data::TokenSequence& seq, bool zero_rtg) {
    if (cfg_.kind != ModelKind::Action) throw std::logic_error("model: not an action model");
    Graph g;
    TokenLayout L = build_layout(seq, zero_rtg);
    NodeRef h = encode(g, L, nullptr, nullptr);
    NodeRef logits = g.add_rowvec(
        g.matmul(g.gather_rows(h, {L.state_pos.back()}), g.param(action_head_w_)), g.param(action_head_b_));
    const Tensor& v = g.value(logits);
    return std::vector<double>(v.data.begin(), v.data.end());
}

std::vector<uint16_t> SequenceModel::predict_next_state(const data::TokenSequence& seq) {
    if (cfg_.kind != ModelKind::Dynamics) throw std::logic_error("model: not a dynamics model");
    Graph g;
    TokenLayout L = build_layout(seq, false);
    if (L.action_pos.empty() || L.groups_with_action.back() != static_cast<int>(seq.groups.size()) - 1)
        throw std::invalid_argument("model: dynamics query must end with a complete (state, action) group");
    NodeRef h = encode(g, L, nullptr, nullptr);
    NodeRef at = g.gather_rows(h, {L.action_pos.back()});
    std::vector<uint16_t> out;
    for (size_t c = 0; c < state_head_w_.size(); ++c) {
        NodeRef logits = g.add_rowvec(g.matmul(at, g.param(state_head_w_[c])), g.param(state_head_b_[c]));
        const Tensor& v = g.value(logits);
        out.push_back(static_cast<uint16_t>(argmax_row(v.data.data(), v.cols())));
    }
    return out;
}

ValueDistribution SequenceModel::value_distribution(const data::TokenSequence& seq) {
    if (cfg_.kind != ModelKind::ReturnDist) throw std::logic_error("model: not a distributional head");
    Graph g;
    TokenLayout L = build_layout(seq, false);
    if (L.action_pos.empty())
        throw std::invalid_argument("model: value query needs at least one (state, action) group");
    NodeRef h = encode(g, L, nullptr, nullptr);
    NodeRef logits = g.add_rowvec(g.matmul(g.gather_rows(h, {L.action_pos.back()}), g.param(value_head_w_)),
                                  g.param(value_head_b_));
    NodeRef probs = g.softmax_rows(logits);
    ValueDistribution dist;
    dist.n_atoms = cfg_.n_atoms;
    dist.v_min = cfg_.v_min;
    dist.v_max = cfg_.v_max;
    const Tensor& v = g.value(probs);
    dist.probs.assign(v.data.begin(), v.data.end());
    return dist;
}

double SequenceModel::predict_value(const data::TokenSequence& seq) {
    if (cfg_.kind == ModelKind::ReturnDist) return expected_value(value_distribution(seq));
    if (cfg_.kind != ModelKind::ReturnMean) throw std::logic_error("model: not a value head");
    Graph g;
    TokenLayout L = build_layout(seq, false);
    if (L.action_pos.empty())
        throw std::invalid_argument("model: value query needs at least one (state, action) group");
    NodeRef h = encode(g, L, nullptr, nullptr);
    NodeRef pred = g.add_rowvec(g.matmul(g.gather_rows(h, {L.action_pos.back()}), g.param(value_head_w_)),
                                g.param(value_head_b_));
    return g.value(pred)[0];
}

void SequenceModel::save(const std::string& path) {
    std::vector<const Param*> ps;
    for (Param* p : params()) ps.push_back(p);
    nn::save_checkpoint(path, cfg_.to_map(), ps);
}

std::unique_ptr<SequenceModel> SequenceModel::load_from(const std::string& path) {
    auto cfg_map = nn::read_checkpoint_config(path);
    ModelConfig cfg = ModelConfig::from_map(cfg_map);
    auto model = std::make_unique<SequenceModel>(cfg, 0);
    nn::load_checkpoint(path, model->params());
    return model;
}

} // namespace stt::model
