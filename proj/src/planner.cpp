#include "stt/planner.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

namespace stt::plan {

Mode mode_from_name(const std::string& name) {
    if (name == "switch_plan") return Mode::SwitchPlan;
    if (name == "dt_direct") return Mode::DtDirect;
    if (name == "bc") return Mode::Bc;
    throw std::invalid_argument("unknown planner mode '" + name + "'");
}

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::SwitchPlan: return "switch_plan";
        case Mode::DtDirect: return "dt_direct";
        case Mode::Bc: return "bc";
    }
    return "?";
}

void PlannerConfig::validate() const {
    if (candidates < 1 || horizon < 1) throw std::invalid_argument("planner: c and h must be positive");
    if (candidates > n_actions)
        throw std::invalid_argument("planner: candidate count exceeds the action vocabulary");
    if (context_k < 1) throw std::invalid_argument("planner: context must be positive");
}

namespace {

// context truncated to the trailing k states (with their actions)
SequenceContext tail(const SequenceContext& ctx, int k) {
    int n = ctx.steps();
    if (n <= k) return ctx;
    SequenceContext out;
    out.task_id = ctx.task_id;
    int from = n - k;
    out.rtg.assign(ctx.rtg.begin() + from, ctx.rtg.end());
    out.states.assign(ctx.states.begin() + from, ctx.states.end());
    int afrom = std::min<int>(from, static_cast<int>(ctx.actions.size()));
    out.actions.assign(ctx.actions.begin() + afrom, ctx.actions.end());
    return out;
}

int greedy_action(const PlannerModels& models, const SequenceContext& ctx) {
    std::vector<double> scores = models.action_scores(ctx);
    int best = 0;
    for (int a = 1; a < static_cast<int>(scores.size()); ++a)
        if (scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(best)]) best = a;
    return best;
}

} // namespace

std::vector<int> candidates(const PlannerModels& models, const SequenceContext& ctx, int c,
                            int n_actions) {
    if (!ctx.awaiting_action()) throw std::invalid_argument("candidates: context must end at a state");
    if (c < 1 || c > n_actions) throw std::invalid_argument("candidates: c outside [1, |A|]");
    std::vector<double> scores = models.action_scores(ctx);
    if (static_cast<int>(scores.size()) != n_actions)
        throw std::invalid_argument("candidates: score vector size mismatch");
    std::vector<int> order(static_cast<size_t>(n_actions));
    for (int a = 0; a < n_actions; ++a) order[static_cast<size_t>(a)] = a;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)]; });
    order.resize(static_cast<size_t>(c));
    return order;
}

ImaginedTrajectory imagine(const PlannerModels& models, const PlannerConfig& cfg,
                           SequenceContext ctx, int first_action) {
    if (!ctx.awaiting_action()) throw std::invalid_argument("imagine: context must end at a state");
    ImaginedTrajectory traj;
    traj.first_action = first_action;

    int action = first_action;
    for (int j = 1; j <= cfg.horizon; ++j) {
        ctx.actions.push_back(action);
        std::vector<uint16_t> next = models.next_state(ctx);
        double rtg_token = cfg.imagined_rtg == ImaginedRtg::Phi ? models.value(ctx) : ctx.rtg.back();
        ctx.states.push_back(next);
        ctx.rtg.push_back(rtg_token);
        traj.steps.push_back(ImaginedStep{action, std::move(next), rtg_token});
        action = greedy_action(models, ctx);
    }
    // close the final group so the trailing (state, action) window is complete
    ctx.actions.push_back(action);
    traj.value = models.value(ctx);
    return traj;
}

int plan(const PlannerModels& models, const PlannerConfig& cfg, const SequenceContext& ctx,
         std::vector<std::pair<int, double>>* values_out) {
    cfg.validate();
    std::vector<int> cands = candidates(models, ctx, cfg.candidates, cfg.n_actions);
    int best_action = -1;
    double best_value = 0.0;
    if (values_out) values_out->clear();
    for (int a : cands) {
        ImaginedTrajectory traj = imagine(models, cfg, ctx, a);
        if (values_out) values_out->emplace_back(a, traj.value);
        if (best_action < 0 || traj.value > best_value ||
            (traj.value == best_value && a < best_action)) {
            best_action = a;
            best_value = traj.value;
        }
    }
    return best_action;
}

EpisodeResult run_episode(const PlannerModels& models, const PlannerConfig& cfg,
                          const grid::TaskSpec& raw, const data::StateCodec& codec,
                          std::ostream* rollout_dump) {
    cfg.validate();
    grid::TaskSpec spec = raw.resolved();
    grid::GridEnvState env = grid::make_task(spec);

    SequenceContext ctx;
    ctx.task_id = spec.task_id;
    double target = cfg.target_return;
    ctx.rtg.push_back(target);
    ctx.states.push_back(codec.encode(env));

    EpisodeResult result;
    while (!env.done) {
        SequenceContext view = tail(ctx, cfg.context_k);
        EpisodeStepRecord rec;
        rec.t = env.step_count;
        rec.rtg_token = target;

        int action;
        if (cfg.mode == Mode::SwitchPlan) {
            action = plan(models, cfg, view, &rec.candidate_values);
        } else {
            action = greedy_action(models, view);
        }
        rec.action = action;

        grid::StepOutcome out = grid::step(env, static_cast<grid::Action>(action), spec);
        rec.reward = out.reward;
        result.episode_return += out.reward;
        target -= out.reward; // R_{t+1} = R_t - r_t
        env = std::move(out.state);

        ctx.actions.push_back(action);
        ctx.states.push_back(codec.encode(env));
        ctx.rtg.push_back(target);

        if (rollout_dump) {
            *rollout_dump << rec.t << " action=" << rec.action << " rtg=" << rec.rtg_token
                          << " reward=" << rec.reward;
            for (const auto& [a, v] : rec.candidate_values)
                *rollout_dump << " cand" << a << "=" << v;
            *rollout_dump << "\n";
        }
        result.steps.push_back(std::move(rec));
    }
    result.goal_reached = env.goal_reached;
    result.length = env.step_count;
    return result;
}

PlannerModels wrap_models(model::SequenceModel* action, model::SequenceModel* dynamics,
                          model::SequenceModel* value, int context_k, bool zero_rtg) {
    PlannerModels pm;
    auto to_sequence = [](const SequenceContext& ctx, int k, bool include_last_action) {
        SequenceContext v = tail(ctx, k);
        data::TokenSequence seq;
        seq.task_id = v.task_id;
        seq.t_begin = 0;
        for (int t = 0; t < v.steps(); ++t) {
            data::TokenGroup gp;
            gp.rtg = v.rtg[static_cast<size_t>(t)];
            gp.state = v.states[static_cast<size_t>(t)];
            bool has_action = t < static_cast<int>(v.actions.size());
            gp.action = has_action ? v.actions[static_cast<size_t>(t)] : -1;
            if (!include_last_action && t == v.steps() - 1) gp.action = -1;
            seq.groups.push_back(std::move(gp));
        }
        return seq;
    };

    if (action) {
        pm.action_scores = [action, context_k, zero_rtg, to_sequence](const SequenceContext& ctx) {
            return action->action_logits(to_sequence(ctx, context_k, false), zero_rtg);
        };
    }
    if (dynamics) {
        pm.next_state = [dynamics, context_k, to_sequence](const SequenceContext& ctx) {
            return dynamics->predict_next_state(to_sequence(ctx, context_k, true));
        };
    }
    if (value) {
        int w = value->config().rtg_window;
        pm.value = [value, w, to_sequence](const SequenceContext& ctx) {
            return value->predict_value(to_sequence(ctx, w, true));
        };
    }
    return pm;
}

} // namespace stt::plan
