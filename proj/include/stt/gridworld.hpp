#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stt/rng.hpp"

namespace stt::grid {

enum class Layout : uint8_t { Empty = 0, FourRooms, DoorKey, KeyCorridor, MultiRoom };
enum class RewardMode : uint8_t { Sparse = 0, Shaped };

enum class Action : int {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
    Pickup = 3,
    Drop = 4,
    Toggle = 5,
    Done = 6,
};
constexpr int kNumActions = 7;

enum class Cell : uint8_t { Floor = 0, Wall, DoorLocked, DoorClosed, DoorOpen, Key, Goal };

inline bool is_door(Cell c) { return c == Cell::DoorLocked || c == Cell::DoorClosed || c == Cell::DoorOpen; }

Layout layout_from_name(const std::string& name);
std::string layout_name(Layout l);

struct TaskSpec {
    int task_id = 0;
    Layout layout = Layout::Empty;
    int width = 5;
    int height = 5;
    int max_steps = 0; // 0 -> defaulted to 4 * area by validate()
    RewardMode reward_mode = RewardMode::Sparse;
    bool binary_reward = false; // flat 1.0 success reward instead of 1 - 0.9*steps/max
    uint64_t seed = 0;

    TaskSpec resolved() const; // fills defaults and checks invariants
    TaskSpec with_seed(uint64_t s) const {
        TaskSpec t = *this;
        t.seed = s;
        return t;
    }
};

struct GridEnvState {
    int width = 0, height = 0;
    std::vector<Cell> cells; // row-major [y * width + x]
    int agent_x = 0, agent_y = 0;
    int agent_dir = 0; // 0 east, 1 south, 2 west, 3 north
    bool carrying_key = false;
    int step_count = 0;
    bool done = false;
    bool goal_reached = false;

    // Fixed layout bookkeeping (set at generation, never mutated by steps).
    std::vector<int> door_cells; // stable generation order
    int key_home = -1;           // original key cell index, -1 when the layout has none
    int goal_cell = -1;
    std::vector<uint16_t> goal_dist; // static cell distance field (walls block, doors pass)
    double shaping_scale = 0.0;      // eta for shaped reward; 25 / initial distance

    Cell at(int x, int y) const { return cells[static_cast<size_t>(y) * width + x]; }
    void set(int x, int y, Cell c) { cells[static_cast<size_t>(y) * width + x] = c; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    int cell_index(int x, int y) const { return y * width + x; }

    bool operator==(const GridEnvState&) const = default;
};

struct StepOutcome {
    GridEnvState state;
    double reward = 0.0;
    bool done = false;
};

// Deterministic initial state for the task. Regenerates with an incremented
// sub-seed when a layout comes out unsolvable; throws after 100 attempts.
GridEnvState make_task(const TaskSpec& spec);

// One transition. Stepping a finished episode is a contract violation.
StepOutcome step(const GridEnvState& state, Action action, const TaskSpec& spec);

// Shortest solving action sequence via breadth-first search over the full
// simulator state (doors, keys and pickups included). Empty optional when
// the goal cannot be reached from `state`.
std::optional<std::vector<Action>> solve_bfs(const GridEnvState& state, const TaskSpec& spec);

// epsilon-greedy expert: with probability 1-epsilon the next action of a
// shortest solving plan, otherwise (or when no plan exists) uniform random.
Action scripted_policy(const GridEnvState& state, const TaskSpec& spec, double epsilon, Rng& rng);

// Door / key slot counts per layout family (drives the dataset encoding).
int door_slot_count(Layout l);
int key_slot_count(Layout l);

} // namespace stt::grid
