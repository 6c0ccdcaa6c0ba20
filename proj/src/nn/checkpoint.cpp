#include "stt/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace stt::nn {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'T', 'C', 'K', 'P', 'T', '1'};

static_assert(sizeof(double) == 8, "f64 storage assumed");

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw CheckpointError("checkpoint: unexpected end of file");
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void write_f64(std::ostream& os, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw CheckpointError("checkpoint: unexpected end of file");
    uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw CheckpointError("checkpoint: unexpected end of file");
    return s;
}

std::string encode_config(const std::map<std::string, std::string>& config) {
    std::ostringstream os;
    for (const auto& [k, v] : config) os << k << "=" << v << "\n";
    return os.str();
}

std::map<std::string, std::string> decode_config(const std::string& blob) {
    std::map<std::string, std::string> config;
    std::istringstream is(blob);
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq != std::string::npos) config[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return config;
}

void read_header(std::istream& is, const std::string& path) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw CheckpointError("checkpoint: bad magic in " + path);
}

} // namespace

void save_checkpoint(const std::string& path, const std::map<std::string, std::string>& config,
                     const std::vector<const Param*>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 8);
    write_string(os, encode_config(config));
    write_u32(os, static_cast<uint32_t>(params.size()));
    for (const Param* p : params) {
        write_string(os, p->name);
        write_u32(os, static_cast<uint32_t>(p->value.shape.size()));
        for (int e : p->value.shape) write_u32(os, static_cast<uint32_t>(e));
        for (double v : p->value.data) write_f64(os, v);
    }
    if (!os) throw CheckpointError("checkpoint: write failed for " + path);
}

std::map<std::string, std::string> load_checkpoint(const std::string& path,
                                                   const std::vector<Param*>& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("checkpoint: cannot open " + path);
    read_header(is, path);
    auto config = decode_config(read_string(is));
    uint32_t n = read_u32(is);
    if (n != params.size())
        throw CheckpointError("checkpoint: parameter count mismatch in " + path + " (" +
                              std::to_string(n) + " stored, " + std::to_string(params.size()) +
                              " expected)");
    std::map<std::string, Param*> by_name;
    for (Param* p : params) by_name[p->name] = p;
    for (uint32_t k = 0; k < n; ++k) {
        std::string name = read_string(is);
        uint32_t rank = read_u32(is);
        std::vector<int> shape(rank);
        for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(read_u32(is));
        auto it = by_name.find(name);
        if (it == by_name.end()) throw CheckpointError("checkpoint: unknown parameter '" + name + "'");
        Param* p = it->second;
        if (p->value.shape != shape)
            throw CheckpointError("checkpoint: shape mismatch for '" + name + "': stored " +
                                  Tensor(shape).shape_str() + ", expected " + p->value.shape_str());
        for (int64_t i = 0; i < p->value.size(); ++i) p->value[i] = read_f64(is);
    }
    return config;
}

std::map<std::string, std::string> read_checkpoint_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("checkpoint: cannot open " + path);
    read_header(is, path);
    return decode_config(read_string(is));
}

} // namespace stt::nn
