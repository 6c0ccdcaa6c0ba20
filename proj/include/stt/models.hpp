#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stt/dataset.hpp"
#include "stt/nn/transformer.hpp"

namespace stt::model {

// Categorical value distribution over N fixed atoms spanning [v_min, v_max].
struct ValueDistribution {
    int n_atoms = 0;
    double v_min = 0.0, v_max = 1.0;
    std::vector<double> probs;

    double dz() const { return (v_max - v_min) / (n_atoms - 1); }
    double atom(int i) const { return v_min + i * dz(); }
    void validate(double tol = 1e-6) const;
};

// Nearest atom index for a return value; out-of-range returns clamp.
int atom_label(double r, int n_atoms, double v_min, double v_max);

// V = sum_i p_i * z_i.
double expected_value(const ValueDistribution& dist);

enum class ModelKind { Action, Dynamics, ReturnDist, ReturnMean };

std::string model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

// Vocabulary shared by dataset and models; mismatches are load/training errors.
struct ModelVocab {
    data::StateCodec codec;
    int n_tasks = 1;   // task ids in [0, n_tasks)
    int n_actions = grid::kNumActions;

    static ModelVocab from_dataset(const data::Dataset& ds);
    bool operator==(const ModelVocab&) const = default;
};

struct ModelConfig {
    ModelKind kind = ModelKind::Action;
    nn::TransformerConfig trunk;
    ModelVocab vocab;
    // return models
    int n_atoms = 101;
    double v_min = 0.0, v_max = 1.0;
    int rtg_window = 3;

    void validate() const;
    std::map<std::string, std::string> to_map() const;
    static ModelConfig from_map(const std::map<std::string, std::string>& m);
};

// Per-sample training targets; which fields apply depends on the model kind.
struct SampleTargets {
    std::vector<int> actions;                    // action model: one per predicted group
    std::vector<std::vector<uint16_t>> next_states; // dynamics: one per group
    double rtg_target = 0.0;                     // return models
};

// One transformer with a model-specific token layout and head:
//   action      4-token groups (task, rtg, state, action), 7-way head
//   dynamics    3-token groups (task, state, action), factored state head
//   return      3-token groups over a trailing window, atom or scalar head
class SequenceModel {
public:
    SequenceModel(const ModelConfig& cfg, uint64_t param_seed);

    const ModelConfig& config() const { return cfg_; }
    std::vector<nn::Param*> params();
    int64_t param_count();
    // parameters touched by a single token in one forward pass
    int64_t active_params_per_token() const;

    // Training loss for one window. `zero_rtg` drops return conditioning
    // (behaviour-cloning variant of the action model).
    nn::NodeRef loss(nn::Graph& g, const data::TokenSequence& seq, const SampleTargets& targets,
                     bool zero_rtg = false, nn::RoutingStats* stats = nullptr,
                     std::vector<nn::NodeRef>* lb_losses = nullptr);

    // Inference. The sequence must end appropriately for the model kind:
    // a state token for action logits, a complete (state, action) group for
    // dynamics and return heads.
    std::vector<double> action_logits(const data::TokenSequence& seq, bool zero_rtg = false);
    std::vector<uint16_t> predict_next_state(const data::TokenSequence& seq); // argmax per component
    ValueDistribution value_distribution(const data::TokenSequence& seq);
    double predict_value(const data::TokenSequence& seq); // expected value or scalar head

    void save(const std::string& path);
    static std::unique_ptr<SequenceModel> load_from(const std::string& path);

private:
    // Flattened token stream: per-token stream ids plus head read positions.
    struct TokenLayout {
        int total_tokens = 0;
        std::vector<int> task_pos;
        std::vector<int> task_ids;
        std::vector<int> rtg_pos;
        std::vector<double> rtg_vals;
        std::vector<int> state_pos;                 // one per group
        std::vector<std::vector<int>> comp_ids;     // [component][group]
        std::vector<int> action_pos;                // groups with an action
        std::vector<int> action_ids;
        std::vector<int> timestep;                  // per token, window-relative
        std::vector<int> groups_with_action;        // group indices
    };
    TokenLayout build_layout(const data::TokenSequence& seq, bool zero_rtg) const;
    nn::NodeRef embed(nn::Graph& g, const TokenLayout& layout);
    // embed -> blocks -> final layer norm
    nn::NodeRef encode(nn::Graph& g, const TokenLayout& layout, nn::RoutingStats* stats,
                       std::vector<nn::NodeRef>* lb_losses);

    ModelConfig cfg_;
    bool uses_rtg_tokens() const { return cfg_.kind == ModelKind::Action; }

    // embeddings
    nn::Param task_embed_, action_embed_, pos_embed_;
    nn::Param rtg_w_, rtg_b_; // action model only (kept for all kinds, unused otherwise)
    std::vector<nn::Param> state_embeds_;
    std::unique_ptr<nn::TransformerTrunk> trunk_;
    nn::Param final_ln_g_, final_ln_b_;
    // heads
    nn::Param action_head_w_, action_head_b_;
    std::vector<nn::Param> state_head_w_, state_head_b_;
    nn::Param value_head_w_, value_head_b_;
};

} // namespace stt::model
