#include "stt/gridworld.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <stdexcept>

namespace stt::grid {

namespace {

constexpr int kDx[4] = {1, 0, -1, 0};
constexpr int kDy[4] = {0, 1, 0, -1};

bool walkable(Cell c) { return c == Cell::Floor || c == Cell::Goal || c == Cell::DoorOpen; }

int random_floor_cell(const GridEnvState& s, Rng& rng, const std::vector<int>& exclude) {
    std::vector<int> floors;
    for (int y = 1; y < s.height - 1; ++y)
        for (int x = 1; x < s.width - 1; ++x) {
            int idx = s.cell_index(x, y);
            if (s.at(x, y) == Cell::Floor &&
                std::find(exclude.begin(), exclude.end(), idx) == exclude.end())
                floors.push_back(idx);
        }
    if (floors.empty()) throw std::runtime_error("gridworld: no free floor cell available");
    return floors[static_cast<size_t>(rng.below(static_cast<int>(floors.size())))];
}

GridEnvState blank_grid(const TaskSpec& spec) {
    GridEnvState s;
    s.width = spec.width;
    s.height = spec.height;
    s.cells.assign(static_cast<size_t>(spec.width) * spec.height, Cell::Floor);
    for (int x = 0; x < spec.width; ++x) {
        s.set(x, 0, Cell::Wall);
        s.set(x, spec.height - 1, Cell::Wall);
    }
    for (int y = 0; y < spec.height; ++y) {
        s.set(0, y, Cell::Wall);
        s.set(spec.width - 1, y, Cell::Wall);
    }
    return s;
}

void generate_empty(GridEnvState& s, Rng&) {
    s.agent_x = 1;
    s.agent_y = 1;
    s.agent_dir = 0;
    s.goal_cell = s.cell_index(s.width - 2, s.height - 2);
    s.set(s.width - 2, s.height - 2, Cell::Goal);
}

void generate_four_rooms(GridEnvState& s, Rng& rng) {
    int mx = s.width / 2, my = s.height / 2;
    for (int x = 1; x < s.width - 1; ++x) s.set(x, my, Cell::Wall);
    for (int y = 1; y < s.height - 1; ++y) s.set(mx, y, Cell::Wall);
    // one opening per wall segment
    s.set(1 + rng.below(mx - 1), my, Cell::Floor);
    s.set(mx + 1 + rng.below(s.width - mx - 2), my, Cell::Floor);
    s.set(mx, 1 + rng.below(my - 1), Cell::Floor);
    s.set(mx, my + 1 + rng.below(s.height - my - 2), Cell::Floor);

    int goal = random_floor_cell(s, rng, {});
    s.goal_cell = goal;
    s.cells[static_cast<size_t>(goal)] = Cell::Goal;
    int agent = random_floor_cell(s, rng, {goal});
    s.agent_x = agent % s.width;
    s.agent_y = agent / s.width;
    s.agent_dir = rng.below(4);
}

void generate_door_key(GridEnvState& s, Rng& rng) {
    int split = 2 + rng.below(s.width - 4); // wall column in [2, width-3]
    for (int y = 1; y < s.height - 1; ++y) s.set(split, y, Cell::Wall);
    int door_y = 1 + rng.below(s.height - 2);
    s.set(split, door_y, Cell::DoorLocked);
    s.door_cells.push_back(s.cell_index(split, door_y));

    s.goal_cell = s.cell_index(s.width - 2, s.height - 2);
    s.set(s.width - 2, s.height - 2, Cell::Goal);

    // key and agent on the left side
    std::vector<int> left_floors;
    for (int y = 1; y < s.height - 1; ++y)
        for (int x = 1; x < split; ++x)
            if (s.at(x, y) == Cell::Floor) left_floors.push_back(s.cell_index(x, y));
    if (left_floors.size() < 2) throw std::runtime_error("gridworld: door-key split too tight");
    int key = left_floors[static_cast<size_t>(rng.below(static_cast<int>(left_floors.size())))];
    s.key_home = key;
    s.cells[static_cast<size_t>(key)] = Cell::Key;
    int agent;
    do {
        agent = left_floors[static_cast<size_t>(rng.below(static_cast<int>(left_floors.size())))];
    } while (agent == key);
    s.agent_x = agent % s.width;
    s.agent_y = agent / s.width;
    s.agent_dir = rng.below(4);
}

void generate_key_corridor(GridEnvState& s, Rng& rng) {
    // locked room on the right, a closed door splitting the left area, the
    // key behind that closed door
    int split = s.width - 4;
    for (int y = 1; y < s.height - 1; ++y) s.set(split, y, Cell::Wall);
    int locked_y = 1 + rng.below(s.height - 2);
    s.set(split, locked_y, Cell::DoorLocked);
    s.door_cells.push_back(s.cell_index(split, locked_y));

    int my = s.height / 2;
    for (int x = 1; x < split; ++x) s.set(x, my, Cell::Wall);
    int closed_x = 1 + rng.below(split - 1);
    s.set(closed_x, my, Cell::DoorClosed);
    s.door_cells.push_back(s.cell_index(closed_x, my));

    s.goal_cell = s.cell_index(s.width - 2, s.height - 2);
    s.set(s.width - 2, s.height - 2, Cell::Goal);

    // key below the closed door, agent above it
    std::vector<int> lower, upper;
    for (int y = 1; y < s.height - 1; ++y)
        for (int x = 1; x < split; ++x)
            if (s.at(x, y) == Cell::Floor) (y > my ? lower : upper).push_back(s.cell_index(x, y));
    if (lower.empty() || upper.empty()) throw std::runtime_error("gridworld: key-corridor too tight");
    int key = lower[static_cast<size_t>(rng.below(static_cast<int>(lower.size())))];
    s.key_home = key;
    s.cells[static_cast<size_t>(key)] = Cell::Key;
    int agent = upper[static_cast<size_t>(rng.below(static_cast<int>(upper.size())))];
    s.agent_x = agent % s.width;
    s.agent_y = agent / s.width;
    s.agent_dir = rng.below(4);
}

void generate_multi_room(GridEnvState& s, Rng& rng) {
    // three rooms in a row, connected by closed doors
    int w1 = std::max(2, (s.width - 1) / 3);
    int w2 = std::max(2, 2 * (s.width - 1) / 3 - 1);
    int c1 = w1, c2 = std::min(s.width - 3, std::max(w2, c1 + 2));
    for (int y = 1; y < s.height - 1; ++y) {
        s.set(c1, y, Cell::Wall);
        s.set(c2, y, Cell::Wall);
    }
    int d1 = 1 + rng.below(s.height - 2);
    int d2 = 1 + rng.below(s.height - 2);
    s.set(c1, d1, Cell::DoorClosed);
    s.door_cells.push_back(s.cell_index(c1, d1));
    s.set(c2, d2, Cell::DoorClosed);
    s.door_cells.push_back(s.cell_index(c2, d2));

    s.goal_cell = s.cell_index(s.width - 2, s.height - 2);
    s.set(s.width - 2, s.height - 2, Cell::Goal);

    std::vector<int> first_room;
    for (int y = 1; y < s.height - 1; ++y)
        for (int x = 1; x < c1; ++x)
            if (s.at(x, y) == Cell::Floor) first_room.push_back(s.cell_index(x, y));
    int agent = first_room[static_cast<size_t>(rng.below(static_cast<int>(first_room.size())))];
    s.agent_x = agent % s.width;
    s.agent_y = agent / s.width;
    s.agent_dir = rng.below(4);
}

// Static distance-to-goal over cells; walls block, doors count as passable.
std::vector<uint16_t> goal_distance_field(const GridEnvState& s) {
    constexpr uint16_t kInf = 0xffff;
    std::vector<uint16_t> dist(s.cells.size(), kInf);
    std::deque<int> queue;
    dist[static_cast<size_t>(s.goal_cell)] = 0;
    queue.push_back(s.goal_cell);
    while (!queue.empty()) {
        int idx = queue.front();
        queue.pop_front();
        int x = idx % s.width, y = idx / s.width;
        for (int d = 0; d < 4; ++d) {
            int nx = x + kDx[d], ny = y + kDy[d];
            if (!s.in_bounds(nx, ny)) continue;
            int nidx = s.cell_index(nx, ny);
            if (s.cells[static_cast<size_t>(nidx)] == Cell::Wall) continue;
            if (dist[static_cast<size_t>(nidx)] != kInf) continue;
            dist[static_cast<size_t>(nidx)] = static_cast<uint16_t>(dist[static_cast<size_t>(idx)] + 1);
            queue.push_back(nidx);
        }
    }
    return dist;
}

GridEnvState generate(const TaskSpec& spec, uint64_t seed) {
    GridEnvState s = blank_grid(spec);
    Rng rng(mix_seed(seed, 0x6772696d));
    switch (spec.layout) {
        case Layout::Empty: generate_empty(s, rng); break;
        case Layout::FourRooms: generate_four_rooms(s, rng); break;
        case Layout::DoorKey: generate_door_key(s, rng); break;
        case Layout::KeyCorridor: generate_key_corridor(s, rng); break;
        case Layout::MultiRoom: generate_multi_room(s, rng); break;
    }
    s.goal_dist = goal_distance_field(s);
    int start = s.cell_index(s.agent_x, s.agent_y);
    uint16_t d0 = s.goal_dist[static_cast<size_t>(start)];
    s.shaping_scale = (spec.reward_mode == RewardMode::Shaped && d0 > 0 && d0 != 0xffff)
                          ? 25.0 / static_cast<double>(d0)
                          : 0.0;
    return s;
}

// Compact full-state key for breadth-first search.
uint64_t bfs_key(const GridEnvState& s) {
    uint64_t k = static_cast<uint64_t>(s.agent_x);
    k = k * 32 + static_cast<uint64_t>(s.agent_y);
    k = k * 4 + static_cast<uint64_t>(s.agent_dir);
    k = k * 2 + (s.carrying_key ? 1 : 0);
    for (int dc : s.door_cells) k = k * 4 + static_cast<uint64_t>(s.cells[static_cast<size_t>(dc)]) - static_cast<uint64_t>(Cell::DoorLocked);
    if (s.key_home >= 0) {
        // the solver never drops keys, so "on grid" is a single bit
        bool on_grid = false;
        for (Cell c : s.cells)
            if (c == Cell::Key) on_grid = true;
        k = k * 2 + (on_grid ? 1 : 0);
    }
    return k;
}

} // namespace

Layout layout_from_name(const std::string& name) {
    if (name == "empty") return Layout::Empty;
    if (name == "fourrooms") return Layout::FourRooms;
    if (name == "doorkey") return Layout::DoorKey;
    if (name == "keycorridor") return Layout::KeyCorridor;
    if (name == "multiroom") return Layout::MultiRoom;
    throw std::invalid_argument("unknown layout '" + name + "'");
}

std::string layout_name(Layout l) {
    switch (l) {
        case Layout::Empty: return "empty";
        case Layout::FourRooms: return "fourrooms";
        case Layout::DoorKey: return "doorkey";
        case Layout::KeyCorridor: return "keycorridor";
        case Layout::MultiRoom: return "multiroom";
    }
    return "?";
}

int door_slot_count(Layout l) {
    switch (l) {
        case Layout::Empty:
        case Layout::FourRooms: return 0;
        case Layout::DoorKey: return 1;
        case Layout::KeyCorridor:
        case Layout::MultiRoom: return 2;
    }
    return 0;
}

int key_slot_count(Layout l) {
    return (l == Layout::DoorKey || l == Layout::KeyCorridor) ? 1 : 0;
}

TaskSpec TaskSpec::resolved() const {
    TaskSpec t = *this;
    if (t.max_steps == 0) t.max_steps = 4 * t.width * t.height;
    if (t.width < 5 || t.height < 5) throw std::invalid_argument("task: grid dimensions must be >= 5");
    if ((t.layout == Layout::FourRooms || t.layout == Layout::KeyCorridor) &&
        (t.width < 7 || t.height < 7))
        throw std::invalid_argument("task: layout needs at least a 7x7 grid");
    if (t.layout == Layout::MultiRoom && t.width < 8)
        throw std::invalid_argument("task: multiroom needs width >= 8");
    if (t.max_steps < t.width * t.height)
        throw std::invalid_argument("task: max_steps must be at least the grid area");
    if (t.task_id < 0) throw std::invalid_argument("task: negative task id");
    return t;
}

GridEnvState make_task(const TaskSpec& raw) {
    TaskSpec spec = raw.resolved();
    for (int attempt = 0; attempt < 100; ++attempt) {
        GridEnvState s = generate(spec, mix_seed(spec.seed, static_cast<uint64_t>(attempt)));
        if (solve_bfs(s, spec).has_value()) return s;
    }
    throw std::runtime_error("gridworld: no solvable layout after 100 attempts");
}

StepOutcome step(const GridEnvState& state, Action action, const TaskSpec& raw) {
    if (state.done) throw std::logic_error("gridworld: step on a finished episode");
    TaskSpec spec = raw.resolved();

    StepOutcome out;
    out.state = state;
    GridEnvState& s = out.state;

    int before_dist = s.goal_dist[static_cast<size_t>(s.cell_index(s.agent_x, s.agent_y))];

    int fx = s.agent_x + kDx[s.agent_dir];
    int fy = s.agent_y + kDy[s.agent_dir];
    Cell front = s.in_bounds(fx, fy) ? s.at(fx, fy) : Cell::Wall;

    bool reached_goal = false;
    switch (action) {
        case Action::TurnLeft: s.agent_dir = (s.agent_dir + 3) % 4; break;
        case Action::TurnRight: s.agent_dir = (s.agent_dir + 1) % 4; break;
        case Action::Forward:
            if (walkable(front)) {
                s.agent_x = fx;
                s.agent_y = fy;
                if (front == Cell::Goal) reached_goal = true;
            }
            break;
        case Action::Pickup:
            if (front == Cell::Key && !s.carrying_key) {
                s.carrying_key = true;
                s.set(fx, fy, Cell::Floor);
            }
            break;
        case Action::Drop:
            if (s.carrying_key && front == Cell::Floor) {
                s.carrying_key = false;
                s.set(fx, fy, Cell::Key);
            }
            break;
        case Action::Toggle:
            if (front == Cell::DoorClosed)
                s.set(fx, fy, Cell::DoorOpen);
            else if (front == Cell::DoorOpen)
                s.set(fx, fy, Cell::DoorClosed);
            else if (front == Cell::DoorLocked && s.carrying_key)
                s.set(fx, fy, Cell::DoorOpen);
            break;
        case Action::Done: break;
    }

    s.step_count += 1;
    if (reached_goal) s.goal_reached = true;
    s.done = reached_goal || s.step_count >= spec.max_steps;

    if (spec.reward_mode == RewardMode::Sparse) {
        if (reached_goal)
            out.reward = spec.binary_reward
                             ? 1.0
                             : 1.0 - 0.9 * static_cast<double>(s.step_count) / spec.max_steps;
    } else {
        int after_dist = s.goal_dist[static_cast<size_t>(s.cell_index(s.agent_x, s.agent_y))];
        out.reward = s.shaping_scale * static_cast<double>(before_dist - after_dist);
    }
    out.done = s.done;
    return out;
}

std::optional<std::vector<Action>> solve_bfs(const GridEnvState& state, const TaskSpec& raw) {
    if (state.done) return std::nullopt;
    TaskSpec spec = raw.resolved();
    // Drop and Done never shorten a plan; excluding them keeps the search
    // space to (pose, carrying, door states, key presence).
    static const Action kPlanActions[] = {Action::TurnLeft, Action::TurnRight, Action::Forward,
                                          Action::Pickup, Action::Toggle};
    struct NodeInfo {
        int parent;
        Action act;
    };
    std::map<uint64_t, NodeInfo> seen;
    std::deque<std::pair<GridEnvState, int>> queue; // state, node id
    std::vector<NodeInfo> nodes;

    GridEnvState start = state;
    // step-budget bookkeeping must not prune the search
    start.step_count = 0;
    seen.emplace(bfs_key(start), NodeInfo{-1, Action::Done});
    nodes.push_back(NodeInfo{-1, Action::Done});
    queue.emplace_back(start, 0);

    while (!queue.empty()) {
        auto [cur, node_id] = queue.front();
        queue.pop_front();
        for (Action a : kPlanActions) {
            TaskSpec unbounded = spec;
            unbounded.max_steps = std::max(spec.max_steps, cur.step_count + 2);
            StepOutcome next = step(cur, a, unbounded);
            if (next.state.goal_reached) {
                std::vector<Action> plan{a};
                int p = node_id;
                while (p > 0) {
                    plan.push_back(nodes[static_cast<size_t>(p)].act);
                    p = nodes[static_cast<size_t>(p)].parent;
                }
                std::reverse(plan.begin(), plan.end());
                return plan;
            }
            uint64_t key = bfs_key(next.state);
            if (seen.count(key)) continue;
            NodeInfo info{node_id, a};
            seen.emplace(key, info);
            nodes.push_back(info);
            next.state.done = false; // search continues past the step budget
            queue.emplace_back(std::move(next.state), static_cast<int>(nodes.size()) - 1);
        }
    }
    return std::nullopt;
}

Action scripted_policy(const GridEnvState& state, const TaskSpec& spec, double epsilon, Rng& rng) {
    if (epsilon > 0.0 && rng.uniform() < epsilon) return static_cast<Action>(rng.below(kNumActions));
    auto plan = solve_bfs(state, spec);
    if (!plan || plan->empty()) return static_cast<Action>(rng.below(kNumActions));
    return (*plan)[0];
}

} // namespace stt::grid
