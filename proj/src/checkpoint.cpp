#include "dufold/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "dufold/binio.hpp"
#include "dufold/errors.hpp"

namespace dufold {

namespace {

constexpr char kMagic[4] = {'D', 'U', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

void write_tensor(std::ostream& os, const NamedTensor& nt) {
    io::write_str(os, nt.name);
    io::write_tensor(os, nt.tensor);
}

NamedTensor read_tensor(std::istream& is) {
    NamedTensor nt;
    nt.name = io::read_str(is);
    nt.tensor = io::read_tensor(is);
    return nt;
}

void write_table(std::ostream& os, const std::vector<NamedTensor>& table) {
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(table.size()));
    for (const auto& nt : table) write_tensor(os, nt);
}

std::vector<NamedTensor> read_table(std::istream& is) {
    const std::uint32_t n = io::read_le<std::uint32_t>(is);
    std::vector<NamedTensor> table;
    table.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) table.push_back(read_tensor(is));
    return table;
}

}  // namespace

const Tensor* CheckpointData::find(const std::vector<NamedTensor>& table,
                                   const std::string& name) const {
    for (const auto& nt : table)
        if (nt.name == name) return &nt.tensor;
    return nullptr;
}

void save_checkpoint(const std::string& path, const CheckpointData& data) {
    std::ostringstream body(std::ios::binary);
    body.write(kMagic, 4);
    io::write_le<std::uint16_t>(body, kVersion);
    io::write_le<std::uint64_t>(body, data.config_fingerprint);
    io::write_le<std::uint64_t>(body, data.step);
    const std::uint8_t flags = (data.optimizer.empty() ? 0 : 1) | (data.ema.empty() ? 0 : 2);
    io::write_le<std::uint8_t>(body, flags);
    write_table(body, data.params);
    if (!data.optimizer.empty()) write_table(body, data.optimizer);
    if (!data.ema.empty()) write_table(body, data.ema);

    const std::string bytes = body.str();
    const std::uint32_t crc =
        io::crc32(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    io::write_le<std::uint32_t>(f, crc);
    if (!f) throw DataError("failed writing checkpoint " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string bytes = ss.str();
    if (bytes.size() < 4 + 2 + 8 + 8 + 1 + 4) throw IntegrityError("checkpoint: truncated file");

    const std::string body = bytes.substr(0, bytes.size() - 4);
    std::istringstream tail(bytes.substr(bytes.size() - 4), std::ios::binary);
    const std::uint32_t stored_crc = io::read_le<std::uint32_t>(tail);
    const std::uint32_t crc =
        io::crc32(reinterpret_cast<const unsigned char*>(body.data()), body.size());
    if (crc != stored_crc) throw IntegrityError("checkpoint: CRC32 mismatch (corrupt file)");

    std::istringstream is(body, std::ios::binary);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IntegrityError("checkpoint: bad magic bytes");
    const std::uint16_t version = io::read_le<std::uint16_t>(is);
    if (version != kVersion)
        throw IntegrityError("checkpoint: unsupported format version " + std::to_string(version) +
                             " (expected " + std::to_string(kVersion) + ")");
    CheckpointData data;
    data.config_fingerprint = io::read_le<std::uint64_t>(is);
    data.step = io::read_le<std::uint64_t>(is);
    const std::uint8_t flags = io::read_le<std::uint8_t>(is);
    data.params = read_table(is);
    if (flags & 1) data.optimizer = read_table(is);
    if (flags & 2) data.ema = read_table(is);
    return data;
}

CheckpointData snapshot_training(std::uint64_t config_fingerprint,
                                 const std::vector<ad::Param*>& params, const TrainState* state) {
    CheckpointData data;
    data.config_fingerprint = config_fingerprint;
    for (const ad::Param* p : params) data.params.push_back({p->name, p->value});
    if (state && state->initialized()) {
        data.step = static_cast<std::uint64_t>(state->step);
        for (std::size_t i = 0; i < params.size(); ++i) {
            data.optimizer.push_back({"adam.m." + params[i]->name, state->slots[i].m});
            data.optimizer.push_back({"adam.v." + params[i]->name, state->slots[i].v});
        }
        Tensor rng_state = Tensor::zeros({2});
        // u64 bit patterns carried verbatim in the f64 payload
        const std::uint64_t sc[2] = {state->rng.seed(), state->rng.counter()};
        std::memcpy(rng_state.data(), sc, sizeof sc);
        data.optimizer.push_back({"rng", rng_state});
        for (std::size_t i = 0; i < params.size(); ++i)
            data.ema.push_back({params[i]->name, state->ema[i]});
    }
    return data;
}

void restore_params(const CheckpointData& data, const std::vector<ad::Param*>& params,
                    bool prefer_ema) {
    for (ad::Param* p : params) {
        const Tensor* t = nullptr;
        if (prefer_ema && !data.ema.empty()) t = data.find(data.ema, p->name);
        if (!t) t = data.find(data.params, p->name);
        if (!t) throw IntegrityError("checkpoint: missing tensor '" + p->name + "'");
        check_same_layout(*t, p->value, "restore_params");
        p->value = *t;
        p->zero_grad();
    }
}

void restore_training(const CheckpointData& data, const std::vector<ad::Param*>& params,
                      TrainState& state) {
    if (data.optimizer.empty()) throw IntegrityError("checkpoint: no optimizer state stored");
    if (state.slots.size() != params.size())
        throw ContractError("restore_training: state not initialized for this param list");
    state.step = static_cast<std::int64_t>(data.step);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor* m = data.find(data.optimizer, "adam.m." + params[i]->name);
        const Tensor* v = data.find(data.optimizer, "adam.v." + params[i]->name);
        if (!m || !v)
            throw IntegrityError("checkpoint: missing optimizer moments for '" + params[i]->name + "'");
        state.slots[i].m = *m;
        state.slots[i].v = *v;
        const Tensor* e = data.find(data.ema, params[i]->name);
        if (e) state.ema[i] = *e;
    }
    if (const Tensor* rng_state = data.find(data.optimizer, "rng")) {
        std::uint64_t sc[2];
        std::memcpy(sc, rng_state->data(), sizeof sc);
        Rng r(sc[0]);
        while (r.counter() < sc[1]) r.next_u64();
        state.rng = r;
    }
}

}  // namespace dufold
