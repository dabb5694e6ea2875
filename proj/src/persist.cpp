#include "lindistill/persist.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "lindistill/errors.hpp"

namespace lindistill {

namespace {

constexpr std::string_view kCkptMagic = "LDCKPT01";
constexpr const char* kManifest = "manifest.jsonl";

struct TableEntry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
    std::uint64_t nbytes;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, std::int64_t step,
                     const std::string& metadata, const std::vector<std::pair<std::string, Tensor>>& state) {
    std::vector<std::pair<std::string, const Tensor*>> all;
    for (const auto& [name, t] : model.parameters()) all.emplace_back(name, &t);
    for (const auto& [name, t] : state) {
        if (name.rfind("state.", 0) != 0) throw std::invalid_argument("state tensor names must start with 'state.'");
        all.emplace_back(name, &t);
    }

    io::Writer w;
    w.bytes(kCkptMagic);
    w.u32(kCheckpointVersion);
    w.i64(step);
    w.str(model.spec().to_text());
    w.str(metadata);
    w.u32(static_cast<std::uint32_t>(all.size()));
    std::uint64_t offset = 0;
    for (const auto& [name, t] : all) {
        w.str(name);
        w.u8(static_cast<std::uint8_t>(DType::f64));
        w.u32(static_cast<std::uint32_t>(t->rank()));
        for (auto d : t->shape()) w.u64(d);
        const std::uint64_t nbytes = 8 * t->numel();
        w.u64(offset);
        w.u64(nbytes);
        offset += nbytes;
    }
    w.u64(offset);
    for (const auto& [name, t] : all) {
        for (double v : t->values()) w.f64(v);
    }
    io::write_file_atomic(path.string(), w.data());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path.string());
    const std::string where = " in '" + path.string() + "'";
    io::Reader r(bytes);
    try {
        if (r.remaining() < kCkptMagic.size() || r.bytes(kCkptMagic.size()) != kCkptMagic) {
            throw FormatError("corrupt header: bad magic");
        }
        const auto version = r.u32();
        if (version != kCheckpointVersion) {
            throw FormatError("unknown checkpoint version " + std::to_string(version));
        }
        Checkpoint ck;
        ck.step = r.i64();
        const ModelSpec spec = ModelSpec::parse(r.str());
        ck.metadata = r.str();
        const auto count = r.u32();
        std::vector<TableEntry> table;
        for (std::uint32_t i = 0; i < count; ++i) {
            TableEntry e;
            e.name = r.str();
            if (r.u8() != static_cast<std::uint8_t>(DType::f64)) throw FormatError("unsupported dtype for " + e.name);
            const auto rank = r.u32();
            if (rank > 8) throw FormatError("corrupt header: implausible rank for " + e.name);
            for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(r.u64());
            e.offset = r.u64();
            e.nbytes = r.u64();
            if (e.nbytes != 8 * shape_numel(e.shape)) throw FormatError("corrupt header: size mismatch for " + e.name);
            table.push_back(std::move(e));
        }
        const auto payload_bytes = r.u64();
        if (payload_bytes != r.remaining()) throw FormatError("corrupt header: payload truncated or padded");
        const std::size_t base = r.position();

        // The spec determines the expected parameter table.
        const Model reference = init_model(spec, 0);
        std::map<std::string, Shape> expected;
        for (const auto& [name, t] : reference.parameters()) expected[name] = t.shape();

        Model model(spec);
        std::size_t found = 0;
        for (const auto& e : table) {
            if (e.offset + e.nbytes > payload_bytes) throw FormatError("corrupt header: tensor beyond payload");
            r.seek(base + e.offset);
            std::vector<double> values(shape_numel(e.shape));
            for (double& v : values) v = r.f64();
            const bool is_state = e.name.rfind("state.", 0) == 0;
            if (is_state) {
                ck.state.emplace_back(e.name, Tensor::from_values(e.shape, std::move(values)));
                continue;
            }
            auto it = expected.find(e.name);
            if (it == expected.end()) throw FormatError("tensor '" + e.name + "' is not part of the model spec");
            if (it->second != e.shape) {
                throw FormatError("shape mismatch for '" + e.name + "': file " + shape_str(e.shape) + ", spec " +
                                  shape_str(it->second));
            }
            model.add_param(e.name, Tensor::from_values(e.shape, std::move(values), true));
            ++found;
        }
        if (found != expected.size()) throw FormatError("checkpoint is missing model parameters");
        // Re-order to the canonical parameter order.
        Model ordered(spec);
        for (const auto& [name, t] : reference.parameters()) ordered.add_param(name, model.param(name));
        ck.model = std::move(ordered);
        return ck;
    } catch (const FormatError& e) {
        throw FormatError(e.what() + where);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid embedded model spec: ") + e.what() + where);
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("corrupt checkpoint: ") + e.what() + where);
    }
}

Model load_model(const std::filesystem::path& path) { return load_checkpoint(path).model; }

std::string content_hash(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016" PRIx64, h);
    return buf;
}

std::string file_hash(const std::filesystem::path& path) { return content_hash(io::read_file(path.string())); }

std::vector<std::int64_t> waypoint_steps(std::int64_t total, std::int64_t interval) {
    if (interval < 1) throw ConfigError("waypoint interval must be >= 1");
    std::vector<std::int64_t> steps;
    for (std::int64_t s = interval; s <= total; s += interval) steps.push_back(s);
    if (total > 0 && (steps.empty() || steps.back() != total)) steps.push_back(total);
    return steps;
}

WaypointStore WaypointStore::open(const std::filesystem::path& dir) {
    std::ifstream in(dir / kManifest);
    if (!in) throw MissingArtifact("no waypoint manifest in '" + dir.string() + "'");
    WaypointStore store;
    store.dir_ = dir;
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("malformed waypoint manifest line: " + std::string(e.what()));
        }
        if (!header) {
            if (j.value("manifest", "") != "waypoints") throw FormatError("not a waypoint manifest");
            store.interval_ = j.at("interval").get<std::int64_t>();
            header = true;
            continue;
        }
        WaypointEntry e;
        e.index = j.at("index").get<std::size_t>();
        e.teacher_step = j.at("teacher_step").get<std::int64_t>();
        e.file = j.at("file").get<std::string>();
        e.hash = j.at("hash").get<std::string>();
        if (e.index != store.entries_.size() + 1) throw FormatError("waypoint indices are not contiguous from 1");
        store.entries_.push_back(std::move(e));
    }
    if (!header) throw FormatError("empty waypoint manifest");
    return store;
}

WaypointStore WaypointStore::create(const std::filesystem::path& dir, std::int64_t interval) {
    if (interval < 1) throw ConfigError("waypoint interval must be >= 1");
    if (std::filesystem::exists(dir / kManifest)) {
        WaypointStore store = open(dir);
        if (store.interval_ != interval) {
            throw ConfigError("existing waypoint store uses interval " + std::to_string(store.interval_));
        }
        return store;
    }
    std::filesystem::create_directories(dir);
    nlohmann::json header = {{"manifest", "waypoints"}, {"version", 1}, {"interval", interval}};
    io::write_file_atomic((dir / kManifest).string(), header.dump() + "\n");
    WaypointStore store;
    store.dir_ = dir;
    store.interval_ = interval;
    return store;
}

const WaypointEntry& WaypointStore::entry(std::size_t index) const {
    if (index < 1 || index > entries_.size()) throw std::out_of_range("waypoint index out of range");
    return entries_[index - 1];
}

Model WaypointStore::load(std::size_t index) const { return load_model(dir_ / entry(index).file); }

std::optional<std::int64_t> WaypointStore::last_teacher_step() const {
    if (entries_.empty()) return std::nullopt;
    return entries_.back().teacher_step;
}

void WaypointStore::append(const Model& teacher, std::int64_t teacher_step) {
    WaypointEntry e;
    e.index = entries_.size() + 1;
    e.teacher_step = teacher_step;
    char name[40];
    std::snprintf(name, sizeof name, "waypoint_%04zu.ckpt", e.index);
    e.file = name;
    save_checkpoint(dir_ / e.file, teacher, teacher_step);
    e.hash = file_hash(dir_ / e.file);
    nlohmann::json line = {{"index", e.index}, {"teacher_step", teacher_step}, {"file", e.file}, {"hash", e.hash}};
    const std::string manifest = io::read_file((dir_ / kManifest).string()) + line.dump() + "\n";
    io::write_file_atomic((dir_ / kManifest).string(), manifest);
    entries_.push_back(std::move(e));
}

bool WaypointStore::verify() const {
    for (const auto& e : entries_) {
        if (!std::filesystem::exists(dir_ / e.file) || file_hash(dir_ / e.file) != e.hash) return false;
    }
    return true;
}

}  // namespace lindistill
