#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stt/gridworld.hpp"

namespace stt::data {

struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DatasetVersionError : DatasetError {
    using DatasetError::DatasetError;
};
struct DatasetTruncatedError : DatasetError {
    using DatasetError::DatasetError;
};
struct DatasetChecksumError : DatasetError {
    using DatasetError::DatasetError;
};

// Fixed-width symbolic state encoding shared by every task in a suite:
// (agent_x, agent_y, agent_dir, carrying, door states, key cell indices).
// Key components store the key's current cell (or the "off grid" value when
// carried), which keeps the encoding invertible under drop actions.
struct StateCodec {
    int max_w = 0, max_h = 0;
    int door_slots = 0, key_slots = 0;

    static StateCodec for_suite(const std::vector<grid::TaskSpec>& specs);

    int components() const { return 4 + door_slots + key_slots; }
    std::vector<int> vocab_sizes() const;
    int key_off_grid() const { return max_w * max_h; }

    std::vector<uint16_t> encode(const grid::GridEnvState& s) const;
    // Rebuilds the full simulator state on top of the task's generated
    // layout; inverse of encode for states reachable in that task.
    grid::GridEnvState decode(const std::vector<uint16_t>& enc, const grid::TaskSpec& spec) const;

    bool operator==(const StateCodec&) const = default;
};

struct TrajStep {
    std::vector<uint16_t> state;
    uint8_t action = 0;
    double reward = 0.0;

    bool operator==(const TrajStep&) const = default;
};

struct Trajectory {
    int task_id = 0;
    std::vector<TrajStep> steps;
    std::vector<uint16_t> final_state;  // state after the last action
    std::vector<double> returns_to_go;  // suffix sums, same length as steps

    int length() const { return static_cast<int>(steps.size()); }
    double episode_return() const { return returns_to_go.empty() ? 0.0 : returns_to_go[0]; }
    bool operator==(const Trajectory&) const = default;
};

struct Dataset {
    std::vector<grid::TaskSpec> specs;
    StateCodec codec;
    std::vector<Trajectory> episodes;
    double gamma = 1.0;

    int64_t total_steps() const {
        int64_t n = 0;
        for (const auto& e : episodes) n += e.length();
        return n;
    }
    const grid::TaskSpec* spec_for(int task_id) const {
        for (const auto& s : specs)
            if (s.task_id == task_id) return &s;
        return nullptr;
    }
};

// Undiscounted by default: rtg[t] = r[t] + gamma * rtg[t+1].
std::vector<double> compute_rtg(const std::vector<double>& rewards, double gamma = 1.0);

struct CollectConfig {
    int episodes_per_task = 0;      // used when timesteps_per_task == 0
    int64_t timesteps_per_task = 0; // when > 0, collect episodes until the budget is met
    std::vector<double> epsilon_schedule{0.0, 0.3, 1.0};
    uint64_t seed = 0;
    double gamma = 1.0;
};

Dataset collect(const std::vector<grid::TaskSpec>& specs, const CollectConfig& cfg);

// One timestep group of the flattened trajectory representation
// (task id, return-to-go, state, action).
struct TokenGroup {
    double rtg = 0.0;
    std::vector<uint16_t> state;
    int action = -1; // -1 when the trailing action is omitted
};

struct TokenSequence {
    int task_id = 0;
    std::vector<TokenGroup> groups;
    int t_begin = 0; // absolute timestep of groups[0]

    int token_count(bool with_rtg) const;
};

// Last min(K, t_end+1) timestep groups ending at t_end. When
// `include_final_action` is false the final group omits its action so the
// sequence can serve as a prediction query.
TokenSequence window(const Trajectory& traj, int t_end, int K, bool include_final_action = true);

// Episode-level split, deterministic in `seed`; no episode straddles the
// boundary.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double fraction, uint64_t seed);

void save(const Dataset& dataset, const std::string& path);
Dataset load(const std::string& path);

} // namespace stt::data
