#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "stt/models.hpp"

namespace stt::plan {

// Rolling (task, rtg, state, action) history for one episode. Between
// decisions the context is "awaiting" an action: one more state than
// actions. After appending an action it is "complete".
struct SequenceContext {
    int task_id = 0;
    std::vector<double> rtg;
    std::vector<std::vector<uint16_t>> states;
    std::vector<int> actions;

    int steps() const { return static_cast<int>(states.size()); }
    bool awaiting_action() const { return actions.size() + 1 == states.size(); }
    bool complete() const { return actions.size() == states.size(); }
};

// The three model roles the planner drives. Trained transformers and test
// oracles plug in through the same closures.
struct PlannerModels {
    // preference scores over the next action; the context ends at a state
    std::function<std::vector<double>(const SequenceContext&)> action_scores;
    // successor state after the trailing (state, action) pair
    std::function<std::vector<uint16_t>(const SequenceContext&)> next_state;
    // value of the trailing window; the context ends at a complete pair
    std::function<double(const SequenceContext&)> value;
};

enum class Mode { SwitchPlan, DtDirect, Bc };

Mode mode_from_name(const std::string& name);
std::string mode_name(Mode m);

// How the return-to-go token of imagined states is produced: the value
// model's expectation, or carried unchanged from the last real step.
enum class ImaginedRtg { Phi, Hold };

struct PlannerConfig {
    int candidates = 4; // c
    int horizon = 3;    // h
    Mode mode = Mode::SwitchPlan;
    double target_return = 1.0; // R_0
    ImaginedRtg imagined_rtg = ImaginedRtg::Phi;
    int context_k = 30; // history window bound (timestep groups)
    int n_actions = grid::kNumActions;

    void validate() const;
};

// Top-c actions by model preference, descending, ties toward the lower
// action index.
std::vector<int> candidates(const PlannerModels& models, const SequenceContext& ctx, int c,
                            int n_actions);

struct ImaginedStep {
    int action = 0;               // action taken from the previous state
    std::vector<uint16_t> state;  // predicted successor
    double rtg = 0.0;             // return token attached to that successor
};

struct ImaginedTrajectory {
    int first_action = 0;
    std::vector<ImaginedStep> steps;
    double value = 0.0; // V of the trailing window after the rollout
};

// Rolls `horizon` steps from the context: the candidate action first, the
// greedy model action afterwards, successor states from the dynamics model.
ImaginedTrajectory imagine(const PlannerModels& models, const PlannerConfig& cfg,
                           SequenceContext ctx, int first_action);

// Imagine every candidate, score with the value model, return the first
// action of the best rollout (ties toward the lower action index).
// `values_out`, when given, receives one value per candidate.
int plan(const PlannerModels& models, const PlannerConfig& cfg, const SequenceContext& ctx,
         std::vector<std::pair<int, double>>* values_out = nullptr);

struct EpisodeStepRecord {
    int t = 0;
    int action = 0;
    double rtg_token = 0.0; // R_t fed to the model at this step
    double reward = 0.0;
    std::vector<std::pair<int, double>> candidate_values;
};

struct EpisodeResult {
    double episode_return = 0.0;
    bool goal_reached = false;
    int length = 0;
    std::vector<EpisodeStepRecord> steps;
};

// Closed-loop execution with the target-return decrement R_{t+1} = R_t - r_t.
// `rollout_dump` receives one line per step (step, action, per-candidate
// values) when provided.
EpisodeResult run_episode(const PlannerModels& models, const PlannerConfig& cfg,
                          const grid::TaskSpec& spec, const data::StateCodec& codec,
                          std::ostream* rollout_dump = nullptr);

// Adapters from trained sequence models to the planner interface. The
// value model may be distributional or mean; `zero_rtg` produces the
// behaviour-cloning view of the action model.
PlannerModels wrap_models(model::SequenceModel* action, model::SequenceModel* dynamics,
                          model::SequenceModel* value, int context_k, bool zero_rtg = false);

} // namespace stt::plan
