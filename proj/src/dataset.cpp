#include "stt/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stt::data {

using grid::Cell;
using grid::GridEnvState;
using grid::TaskSpec;

StateCodec StateCodec::for_suite(const std::vector<TaskSpec>& specs) {
    if (specs.empty()) throw std::invalid_argument("codec: empty task suite");
    StateCodec c;
    for (const auto& raw : specs) {
        TaskSpec s = raw.resolved();
        c.max_w = std::max(c.max_w, s.width);
        c.max_h = std::max(c.max_h, s.height);
        c.door_slots = std::max(c.door_slots, grid::door_slot_count(s.layout));
        c.key_slots = std::max(c.key_slots, grid::key_slot_count(s.layout));
    }
    return c;
}

std::vector<int> StateCodec::vocab_sizes() const {
    std::vector<int> v{max_w, max_h, 4, 2};
    for (int i = 0; i < door_slots; ++i) v.push_back(3); // locked / closed / open
    for (int i = 0; i < key_slots; ++i) v.push_back(key_off_grid() + 1);
    return v;
}

std::vector<uint16_t> StateCodec::encode(const GridEnvState& s) const {
    std::vector<uint16_t> enc;
    enc.reserve(static_cast<size_t>(components()));
    enc.push_back(static_cast<uint16_t>(s.agent_x));
    enc.push_back(static_cast<uint16_t>(s.agent_y));
    enc.push_back(static_cast<uint16_t>(s.agent_dir));
    enc.push_back(s.carrying_key ? 1 : 0);
    for (int i = 0; i < door_slots; ++i) {
        uint16_t v = 0;
        if (i < static_cast<int>(s.door_cells.size())) {
            Cell c = s.cells[static_cast<size_t>(s.door_cells[static_cast<size_t>(i)])];
            v = static_cast<uint16_t>(static_cast<int>(c) - static_cast<int>(Cell::DoorLocked));
        }
        enc.push_back(v);
    }
    for (int i = 0; i < key_slots; ++i) {
        uint16_t v = static_cast<uint16_t>(key_off_grid());
        if (i == 0 && s.key_home >= 0) {
            for (int y = 0; y < s.height; ++y)
                for (int x = 0; x < s.width; ++x)
                    if (s.at(x, y) == Cell::Key) v = static_cast<uint16_t>(y * max_w + x);
        }
        enc.push_back(v);
    }
    return enc;
}

GridEnvState StateCodec::decode(const std::vector<uint16_t>& enc, const TaskSpec& spec) const {
    if (static_cast<int>(enc.size()) != components())
        throw std::invalid_argument("codec: encoded state has wrong component count");
    GridEnvState s = grid::make_task(spec);
    s.agent_x = enc[0];
    s.agent_y = enc[1];
    s.agent_dir = enc[2];
    s.carrying_key = enc[3] != 0;
    for (int i = 0; i < door_slots && i < static_cast<int>(s.door_cells.size()); ++i) {
        Cell c = static_cast<Cell>(static_cast<int>(Cell::DoorLocked) + enc[static_cast<size_t>(4 + i)]);
        s.cells[static_cast<size_t>(s.door_cells[static_cast<size_t>(i)])] = c;
    }
    if (key_slots > 0 && s.key_home >= 0) {
        // clear the generated key, then place per encoding
        for (auto& c : s.cells)
            if (c == Cell::Key) c = Cell::Floor;
        uint16_t loc = enc[static_cast<size_t>(4 + door_slots)];
        if (loc != key_off_grid()) {
            int x = loc % max_w, y = loc / max_w;
            if (!s.in_bounds(x, y)) throw std::invalid_argument("codec: key cell out of bounds");
            s.set(x, y, Cell::Key);
        }
    }
    if (!s.in_bounds(s.agent_x, s.agent_y)) throw std::invalid_argument("codec: agent out of bounds");
    return s;
}

std::vector<double> compute_rtg(const std::vector<double>& rewards, double gamma) {
    std::vector<double> rtg(rewards.size(), 0.0);
    double acc = 0.0;
    for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
        if (!std::isfinite(rewards[static_cast<size_t>(t)]))
            throw std::invalid_argument("compute_rtg: non-finite reward");
        acc = rewards[static_cast<size_t>(t)] + gamma * acc;
        rtg[static_cast<size_t>(t)] = acc;
    }
    return rtg;
}

Dataset collect(const std::vector<TaskSpec>& specs, const CollectConfig& cfg) {
    if (specs.empty()) throw std::invalid_argument("collect: empty task suite");
    if (cfg.epsilon_schedule.empty()) throw std::invalid_argument("collect: empty epsilon schedule");
    Dataset ds;
    ds.gamma = cfg.gamma;
    ds.codec = StateCodec::for_suite(specs);
    for (const auto& raw : specs) ds.specs.push_back(raw.resolved());

    for (const auto& spec : ds.specs) {
        int64_t steps_taken = 0;
        int episode = 0;
        while (true) {
            if (cfg.timesteps_per_task > 0) {
                if (steps_taken >= cfg.timesteps_per_task) break;
            } else if (episode >= cfg.episodes_per_task) {
                break;
            }
            double eps = cfg.epsilon_schedule[static_cast<size_t>(episode) % cfg.epsilon_schedule.size()];
            Rng rng(mix_seed(mix_seed(cfg.seed, static_cast<uint64_t>(spec.task_id)),
                             static_cast<uint64_t>(episode)));
            GridEnvState state = grid::make_task(spec);
            Trajectory traj;
            traj.task_id = spec.task_id;
            std::vector<double> rewards;
            while (!state.done) {
                grid::Action a = grid::scripted_policy(state, spec, eps, rng);
                grid::StepOutcome out = grid::step(state, a, spec);
                traj.steps.push_back(
                    TrajStep{ds.codec.encode(state), static_cast<uint8_t>(a), out.reward});
                rewards.push_back(out.reward);
                state = std::move(out.state);
            }
            traj.final_state = ds.codec.encode(state);
            traj.returns_to_go = compute_rtg(rewards, cfg.gamma);
            steps_taken += traj.length();
            ds.episodes.push_back(std::move(traj));
            ++episode;
        }
    }
    return ds;
}

int TokenSequence::token_count(bool with_rtg) const {
    int per_group = with_rtg ? 4 : 3;
    int n = static_cast<int>(groups.size()) * per_group;
    if (!groups.empty() && groups.back().action < 0) n -= 1;
    return n;
}

TokenSequence window(const Trajectory& traj, int t_end, int K, bool include_final_action) {
    if (t_end < 0 || t_end >= traj.length()) throw std::out_of_range("window: t_end outside trajectory");
    if (K < 1) throw std::invalid_argument("window: K must be positive");
    TokenSequence seq;
    seq.task_id = traj.task_id;
    int t0 = std::max(0, t_end - K + 1);
    seq.t_begin = t0;
    for (int t = t0; t <= t_end; ++t) {
        const TrajStep& st = traj.steps[static_cast<size_t>(t)];
        TokenGroup gp;
        gp.rtg = traj.returns_to_go[static_cast<size_t>(t)];
        gp.state = st.state;
        gp.action = (t == t_end && !include_final_action) ? -1 : static_cast<int>(st.action);
        seq.groups.push_back(std::move(gp));
    }
    return seq;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double fraction, uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split: fraction must be in (0,1)");
    int n = static_cast<int>(dataset.episodes.size());
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(mix_seed(seed, 0x73706c69));
    for (int i = n - 1; i > 0; --i) std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.below(i + 1))]);

    int n_train = static_cast<int>(std::llround(fraction * n));
    n_train = std::clamp(n_train, 0, n);
    Dataset train, val;
    train.specs = val.specs = dataset.specs;
    train.codec = val.codec = dataset.codec;
    train.gamma = val.gamma = dataset.gamma;
    for (int i = 0; i < n; ++i) {
        const Trajectory& e = dataset.episodes[static_cast<size_t>(order[static_cast<size_t>(i)])];
        (i < n_train ? train : val).episodes.push_back(e);
    }
    return {std::move(train), std::move(val)};
}

namespace {

constexpr char kMagic[8] = {'S', 'T', 'T', 'D', 'A', 'T', 'A', '1'};
constexpr uint32_t kVersion = 1;

class Writer {
public:
    void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(uint16_t v) {
        for (int i = 0; i < 2; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        uint64_t u;
        std::memcpy(&u, &v, 8);
        u64(u);
    }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}
    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>(data_[pos_++]);
    }
    uint16_t u16() {
        uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(u8()) << (8 * i);
        return v;
    }
    uint32_t u32() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
        return v;
    }
    uint64_t u64() {
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(u8()) << (8 * i);
        return v;
    }
    double f64() {
        uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    size_t pos() const { return pos_; }
    const std::string& data() const { return data_; }

private:
    void need(size_t n) {
        if (pos_ + n > data_.size())
            throw DatasetTruncatedError("dataset: truncated file " + path_);
    }
    std::string data_;
    std::string path_;
    size_t pos_ = 0;
};

void write_spec(Writer& w, const TaskSpec& s) {
    w.u32(static_cast<uint32_t>(s.task_id));
    w.u8(static_cast<uint8_t>(s.layout));
    w.u16(static_cast<uint16_t>(s.width));
    w.u16(static_cast<uint16_t>(s.height));
    w.u32(static_cast<uint32_t>(s.max_steps));
    w.u8(static_cast<uint8_t>(s.reward_mode));
    w.u8(s.binary_reward ? 1 : 0);
    w.u64(s.seed);
}

TaskSpec read_spec(Reader& r) {
    TaskSpec s;
    s.task_id = static_cast<int>(r.u32());
    s.layout = static_cast<grid::Layout>(r.u8());
    s.width = r.u16();
    s.height = r.u16();
    s.max_steps = static_cast<int>(r.u32());
    s.reward_mode = static_cast<grid::RewardMode>(r.u8());
    s.binary_reward = r.u8() != 0;
    s.seed = r.u64();
    return s;
}

} // namespace

void save(const Dataset& ds, const std::string& path) {
    Writer w;
    w.u32(kVersion);
    w.f64(ds.gamma);
    w.u32(static_cast<uint32_t>(ds.specs.size()));
    for (const auto& s : ds.specs) write_spec(w, s);
    w.u16(static_cast<uint16_t>(ds.codec.max_w));
    w.u16(static_cast<uint16_t>(ds.codec.max_h));
    w.u8(static_cast<uint8_t>(ds.codec.door_slots));
    w.u8(static_cast<uint8_t>(ds.codec.key_slots));
    w.u32(static_cast<uint32_t>(ds.episodes.size()));
    int n_comp = ds.codec.components();
    for (const auto& e : ds.episodes) {
        w.u32(static_cast<uint32_t>(e.task_id));
        w.u32(static_cast<uint32_t>(e.steps.size()));
        for (const auto& st : e.steps) {
            for (int c = 0; c < n_comp; ++c) w.u16(st.state[static_cast<size_t>(c)]);
            w.u8(st.action);
            w.f64(st.reward);
        }
        for (int c = 0; c < n_comp; ++c) w.u16(e.final_state[static_cast<size_t>(c)]);
    }

    uint32_t crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(w.bytes().data()), static_cast<uInt>(w.bytes().size())));

    std::ofstream os(path, std::ios::binary);
    if (!os) throw DatasetError("dataset: cannot open " + path + " for writing");
    os.write(kMagic, 8);
    Writer head;
    head.u64(w.bytes().size());
    os.write(head.bytes().data(), 8);
    os.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    Writer tail;
    tail.u32(crc);
    os.write(tail.bytes().data(), 4);
    if (!os) throw DatasetError("dataset: write failed for " + path);
}

Dataset load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DatasetError("dataset: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    std::string raw = ss.str();
    if (raw.size() < 8 || std::memcmp(raw.data(), kMagic, 8) != 0)
        throw DatasetError("dataset: " + path + " is not a dataset file");
    if (raw.size() < 16) throw DatasetTruncatedError("dataset: truncated file " + path);

    Reader head(raw.substr(8, 8), path);
    uint64_t body_len = head.u64();
    if (raw.size() < 16 + body_len + 4) throw DatasetTruncatedError("dataset: truncated file " + path);

    std::string body = raw.substr(16, body_len);
    Reader tail(raw.substr(16 + body_len, 4), path);
    uint32_t stored_crc = tail.u32();
    uint32_t crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
    if (crc != stored_crc) throw DatasetChecksumError("dataset: checksum failure in " + path);

    Reader r(std::move(body), path);
    uint32_t version = r.u32();
    if (version != kVersion)
        throw DatasetVersionError("dataset: version mismatch in " + path + " (found " +
                                  std::to_string(version) + ", expected " + std::to_string(kVersion) + ")");
    Dataset ds;
    ds.gamma = r.f64();
    uint32_t n_specs = r.u32();
    for (uint32_t i = 0; i < n_specs; ++i) ds.specs.push_back(read_spec(r));
    ds.codec.max_w = r.u16();
    ds.codec.max_h = r.u16();
    ds.codec.door_slots = r.u8();
    ds.codec.key_slots = r.u8();
    uint32_t n_eps = r.u32();
    int n_comp = ds.codec.components();
    for (uint32_t i = 0; i < n_eps; ++i) {
        Trajectory e;
        e.task_id = static_cast<int>(r.u32());
        uint32_t n_steps = r.u32();
        std::vector<double> rewards;
        for (uint32_t t = 0; t < n_steps; ++t) {
            TrajStep st;
            st.state.resize(static_cast<size_t>(n_comp));
            for (int c = 0; c < n_comp; ++c) st.state[static_cast<size_t>(c)] = r.u16();
            st.action = r.u8();
            st.reward = r.f64();
            rewards.push_back(st.reward);
            e.steps.push_back(std::move(st));
        }
        e.final_state.resize(static_cast<size_t>(n_comp));
        for (int c = 0; c < n_comp; ++c) e.final_state[static_cast<size_t>(c)] = r.u16();
        e.returns_to_go = compute_rtg(rewards, ds.gamma);
        ds.episodes.push_back(std::move(e));
    }
    return ds;
}

} // namespace stt::data
