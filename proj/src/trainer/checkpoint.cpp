#include "actvocab/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "actvocab/dataset.hpp"

namespace actvocab {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'C', 'T', 'V', 'O', 'C', 'A', 'B'};

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* what) {
        T value;
        std::memcpy(&value, take(sizeof(T), what), sizeof(T));
        return value;
    }

    const char* take(std::size_t n, const char* what) {
        if (n > bytes_.size() - pos_)
            throw CheckpointError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                                  std::to_string(pos_) + " of " + std::to_string(bytes_.size()));
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        hash ^= p[i];
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::map<std::string, std::vector<double>> checkpoint_arrays(const Checkpoint& ckpt) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& p : ckpt.model.named_parameters()) out[p.name].assign(p.tensor.data().begin(), p.tensor.data().end());
    for (const auto& [name, m] : ckpt.moments) {
        out[name + ".adam_m"] = m.m;
        out[name + ".adam_v"] = m.v;
    }
    return out;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& [_, h] : ckpt.model.heads()) heads.push_back(to_json(h.domain()));

    struct Entry {
        std::string name;
        grad::Shape shape;
        std::span<const double> values;
    };
    std::vector<Entry> entries;
    for (const auto& p : ckpt.model.named_parameters()) entries.push_back({p.name, p.tensor.shape(), p.tensor.data()});
    for (const auto& [name, m] : ckpt.moments) {
        if (m.m.size() != m.v.size())
            throw CheckpointError("optimizer moments for '" + name + "' have mismatched lengths");
        entries.push_back({name + ".adam_m", {m.m.size()}, m.m});
        entries.push_back({name + ".adam_v", {m.v.size()}, m.v});
    }

    nlohmann::json directory = nlohmann::json::array();
    for (const auto& e : entries) directory.push_back({{"name", e.name}, {"shape", e.shape}});

    const nlohmann::json meta = {{"model_config", to_json(ckpt.model.config())},
                                 {"heads", heads},
                                 {"arrays", directory},
                                 {"step", ckpt.step},
                                 {"rng", {{"seed", ckpt.rng.seed}, {"next_step", ckpt.rng.next_step}}},
                                 {"train_config", ckpt.train_config},
                                 {"notes", ckpt.notes}};
    const std::string meta_text = meta.dump();

    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, meta_text.size());
    out += meta_text;
    for (const auto& e : entries)
        out.append(reinterpret_cast<const char*>(e.values.data()), e.values.size() * sizeof(double));
    put<std::uint64_t>(out, fnv1a64(out.data(), out.size()));
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    if (std::memcmp(in.take(sizeof(kMagic), "magic"), kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError("not a checkpoint file (bad magic)");
    const auto version = in.get<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    const auto meta_len = in.get<std::uint64_t>("metadata length");
    if (meta_len > in.remaining()) throw CheckpointError("checkpoint truncated inside metadata");
    const char* meta_ptr = in.take(meta_len, "metadata");

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_ptr, meta_ptr + meta_len);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
    }

    try {
        std::map<std::string, std::pair<grad::Shape, std::vector<double>>> arrays;
        std::vector<std::string> order;
        for (const auto& entry : meta.at("arrays")) {
            const auto name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<grad::Shape>();
            const std::size_t n = grad::numel(shape);
            if (n > in.remaining() / sizeof(double))
                throw CheckpointError("checkpoint truncated inside array '" + name + "'");
            std::vector<double> values(n);
            std::memcpy(values.data(), in.take(n * sizeof(double), name.c_str()), n * sizeof(double));
            arrays[name] = {shape, std::move(values)};
            order.push_back(name);
        }
        const std::size_t payload_end = in.pos();
        const auto stored = in.get<std::uint64_t>("checksum");
        if (in.remaining() != 0)
            throw CheckpointError("checkpoint has " + std::to_string(in.remaining()) + " trailing bytes");
        if (stored != fnv1a64(bytes.data(), payload_end)) throw CheckpointError("checkpoint checksum mismatch");

        Checkpoint ckpt{Model::init(model_config_from_json(meta.at("model_config")))};
        for (const auto& h : meta.at("heads")) ckpt.model.add_head(domain_spec_from_json(h), 0);

        std::map<std::string, std::pair<grad::Shape, std::vector<double>>> params;
        for (const auto& p : ckpt.model.named_parameters()) {
            auto it = arrays.find(p.name);
            if (it == arrays.end()) throw CheckpointError("checkpoint lacks parameter '" + p.name + "'");
            params.insert(arrays.extract(it));
        }
        ckpt.model.load_values(params);
        for (auto& [name, value] : arrays) {
            auto split = [&](const char* suffix) -> std::optional<std::string> {
                const std::string s = suffix;
                if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0)
                    return name.substr(0, name.size() - s.size());
                return std::nullopt;
            };
            if (auto base = split(".adam_m")) ckpt.moments[*base].m = std::move(value.second);
            else if (auto base_v = split(".adam_v")) ckpt.moments[*base_v].v = std::move(value.second);
            else throw CheckpointError("checkpoint array '" + name + "' does not belong to the model");
        }
        for (const auto& [name, m] : ckpt.moments)
            if (m.m.size() != m.v.size()) throw CheckpointError("incomplete optimizer moments for '" + name + "'");

        ckpt.step = meta.at("step").get<std::uint64_t>();
        ckpt.rng.seed = meta.at("rng").at("seed").get<std::uint64_t>();
        ckpt.rng.next_step = meta.at("rng").at("next_step").get<std::uint64_t>();
        ckpt.train_config = meta.value("train_config", nlohmann::json::object());
        ckpt.notes = meta.value("notes", nlohmann::json::object());
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint metadata is malformed: ") + e.what());
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("checkpoint does not describe a valid model: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    sim::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::string bytes;
    try {
        bytes = sim::read_file(path);
    } catch (const std::exception& e) {
        throw CheckpointError(e.what());
    }
    return decode_checkpoint(bytes);
}

}  // namespace actvocab
