#include "mfnet/transfer.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace mfnet {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'M', 'F', 'N', 'C'};
constexpr uint32_t kVersion = 1;

enum DtypeCode : uint8_t { kF32 = 0, kF64 = 1 };

struct Writer {
    std::ofstream out;

    explicit Writer(const std::string& path) : out(path, std::ios::binary | std::ios::trunc) {
        if (!out) throw IoError("cannot open '" + path + "' for writing");
    }
    void bytes(const void* p, size_t n) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u32(uint32_t v) {
        uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v >> 16),
                        static_cast<uint8_t>(v >> 24)};
        bytes(b, 4);
    }
    void u64(uint64_t v) {
        uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
        bytes(b, 8);
    }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor(const std::string& name, const Tensor& t) {
        str(name);
        bool f32_mode = active_precision() == Precision::fp32;
        u8(f32_mode ? kF32 : kF64);
        u8(static_cast<uint8_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) u64(static_cast<uint64_t>(t.dim(i)));
        if (f32_mode)
            for (int64_t i = 0; i < t.size(); ++i) f32(static_cast<float>(t[i]));
        else
            for (int64_t i = 0; i < t.size(); ++i) f64(t[i]);
    }
};

struct Reader {
    std::vector<uint8_t> data;
    size_t pos = 0;

    explicit Reader(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open '" + path + "' for reading");
        data.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    void need(size_t n, const char* field) {
        if (data.size() - pos < n)
            throw FormatError(std::string("checkpoint truncated while reading ") + field);
    }
    uint8_t u8(const char* field) {
        need(1, field);
        return data[pos++];
    }
    uint32_t u32(const char* field) {
        need(4, field);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos++]) << (8 * i);
        return v;
    }
    uint64_t u64(const char* field) {
        need(8, field);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[pos++]) << (8 * i);
        return v;
    }
    double f64(const char* field) {
        uint64_t bits = u64(field);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    float f32(const char* field) {
        uint32_t bits = u32(field);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(const char* field) {
        uint32_t n = u32(field);
        need(n, field);
        std::string s(reinterpret_cast<const char*>(data.data() + pos), n);
        pos += n;
        return s;
    }
    std::pair<std::string, Tensor> tensor() {
        std::string name = str("tensor name");
        uint8_t dtype = u8("tensor dtype");
        if (dtype != kF32 && dtype != kF64)
            throw FormatError("tensor '" + name + "' has unknown dtype code " + std::to_string(dtype));
        uint8_t rank = u8("tensor rank");
        if (rank < 1 || rank > 8) throw FormatError("tensor '" + name + "' has implausible rank");
        std::vector<int64_t> shape;
        int64_t count = 1;
        for (int i = 0; i < rank; ++i) {
            uint64_t d = u64("tensor dims");
            if (d < 1 || d > (1ull << 32)) throw FormatError("tensor '" + name + "' has bad dimension");
            shape.push_back(static_cast<int64_t>(d));
            count *= static_cast<int64_t>(d);
        }
        std::vector<double> values(static_cast<size_t>(count));
        if (dtype == kF32)
            for (int64_t i = 0; i < count; ++i) values[static_cast<size_t>(i)] = f32("tensor payload");
        else
            for (int64_t i = 0; i < count; ++i) values[static_cast<size_t>(i)] = f64("tensor payload");
        Tensor t;
        t = Tensor(shape);
        std::copy(values.begin(), values.end(), t.data());
        return {std::move(name), std::move(t)};
    }
};

json meta_to_json(const CheckpointMeta& m) {
    json metrics = json::parse(m.metrics_json.empty() ? "{}" : m.metrics_json, nullptr, false);
    if (metrics.is_discarded()) metrics = json::object();
    return json{{"epoch", m.epoch},
                {"n_classes", m.n_classes},
                {"input_side", m.scale.input_side},
                {"width_multiplier", m.scale.width_multiplier},
                {"blocks_per_stage", m.scale.blocks_per_stage},
                {"batch_norm", m.batch_norm},
                {"dropout_keep", m.dropout_keep},
                {"class_names", m.class_names},
                {"channel_mean", m.channel_mean},
                {"metrics", std::move(metrics)}};
}

CheckpointMeta meta_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError("checkpoint metadata is not valid JSON");
    CheckpointMeta m;
    m.epoch = j.value("epoch", int64_t{0});
    m.n_classes = j.value("n_classes", 0);
    m.scale.input_side = j.value("input_side", 32);
    m.scale.width_multiplier = j.value("width_multiplier", 1.0);
    m.scale.blocks_per_stage = j.value("blocks_per_stage", 1);
    m.batch_norm = j.value("batch_norm", true);
    m.dropout_keep = j.value("dropout_keep", 1.0);
    if (j.contains("class_names")) m.class_names = j["class_names"].get<std::vector<std::string>>();
    if (j.contains("channel_mean")) {
        auto v = j["channel_mean"].get<std::vector<double>>();
        for (size_t i = 0; i < 3 && i < v.size(); ++i) m.channel_mean[i] = v[i];
    }
    m.metrics_json = j.value("metrics", json::object()).dump();
    return m;
}

void write_optimizer(Writer& w, const OptimizerState& s) {
    w.u8(static_cast<uint8_t>(s.kind));
    w.u64(static_cast<uint64_t>(s.step));
    w.f64(s.sgd_momentum);
    w.f64(s.rms_decay);
    w.f64(s.rms_epsilon);
    w.f64(s.beta1);
    w.f64(s.beta2);
    w.f64(s.adam_epsilon);
    w.u32(static_cast<uint32_t>(s.m1.size()));
    for (const auto& [name, t] : s.m1) w.tensor(name, t);
    w.u32(static_cast<uint32_t>(s.m2.size()));
    for (const auto& [name, t] : s.m2) w.tensor(name, t);
}

OptimizerState read_optimizer(Reader& r) {
    OptimizerState s;
    uint8_t kind = r.u8("optimizer kind");
    if (kind > 2) throw FormatError("unknown optimizer kind code " + std::to_string(kind));
    s.kind = static_cast<OptimizerKind>(kind);
    s.step = static_cast<int64_t>(r.u64("optimizer step"));
    s.sgd_momentum = r.f64("optimizer momentum");
    s.rms_decay = r.f64("optimizer rms_decay");
    s.rms_epsilon = r.f64("optimizer rms_epsilon");
    s.beta1 = r.f64("optimizer beta1");
    s.beta2 = r.f64("optimizer beta2");
    s.adam_epsilon = r.f64("optimizer adam_epsilon");
    uint32_t n1 = r.u32("optimizer m1 count");
    for (uint32_t i = 0; i < n1; ++i) s.m1.insert(r.tensor());
    uint32_t n2 = r.u32("optimizer m2 count");
    for (uint32_t i = 0; i < n2; ++i) s.m2.insert(r.tensor());
    return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    Writer w(path);
    w.bytes(kMagic, 4);
    w.u32(ckpt.version);
    w.str(ckpt.arch);
    w.str(meta_to_json(ckpt.meta).dump());
    w.u32(static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) w.tensor(name, t);
    w.u32(static_cast<uint32_t>(ckpt.trainable.size()));
    for (const auto& [name, flag] : ckpt.trainable) {
        w.str(name);
        w.u8(flag ? 1 : 0);
    }
    w.u8(ckpt.optimizer ? 1 : 0);
    if (ckpt.optimizer) write_optimizer(w, *ckpt.optimizer);
    w.out.flush();
    if (!w.out) throw IoError("write failure on '" + path + "'");
}

void save_checkpoint(const NetworkSpec& net, const OptimizerState* optimizer, const CheckpointMeta& meta,
                     const std::string& path) {
    Checkpoint ckpt;
    ckpt.arch = net.arch;
    ckpt.meta = meta;
    for (const auto& [name, p] : net.params()) {
        ckpt.tensors.emplace(name, p.value);
        ckpt.trainable.emplace(name, p.trainable);
    }
    if (optimizer) ckpt.optimizer = *optimizer;
    save_checkpoint(ckpt, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    r.need(4, "magic");
    if (std::memcmp(r.data.data(), kMagic, 4) != 0)
        throw FormatError("'" + path + "' is not a checkpoint: bad magic");
    r.pos = 4;
    Checkpoint ckpt;
    ckpt.version = r.u32("version");
    if (ckpt.version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(ckpt.version) + ", expected " +
                          std::to_string(kVersion));
    ckpt.arch = r.str("architecture");
    ckpt.meta = meta_from_json(r.str("metadata"));
    uint32_t count = r.u32("tensor count");
    for (uint32_t i = 0; i < count; ++i) {
        auto [name, t] = r.tensor();
        if (!ckpt.tensors.emplace(std::move(name), std::move(t)).second)
            throw FormatError("duplicate tensor name in checkpoint");
    }
    uint32_t flags = r.u32("trainable flag count");
    for (uint32_t i = 0; i < flags; ++i) {
        std::string name = r.str("trainable name");
        ckpt.trainable[name] = r.u8("trainable flag") != 0;
    }
    if (r.u8("optimizer presence") != 0) ckpt.optimizer = read_optimizer(r);
    return ckpt;
}

NetworkSpec network_from_checkpoint(const Checkpoint& ckpt, const BuildOptions& extra) {
    BuildOptions opts = extra;
    opts.batch_norm = ckpt.meta.batch_norm;
    opts.dropout_keep = ckpt.meta.dropout_keep;
    NetworkSpec net = build_network(arch_from_string(ckpt.arch), ckpt.meta.scale, ckpt.meta.n_classes, opts);
    for (auto& [name, p] : net.params()) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end())
            throw FormatError("checkpoint lacks tensor '" + name + "' required by architecture");
        if (it->second.shape() != p.value.shape())
            throw FormatError("checkpoint tensor '" + name + "' has shape " +
                              shape_to_string(it->second.shape()) + ", expected " +
                              shape_to_string(p.value.shape()));
        p.value = it->second;
    }
    return net;
}

LoadReport load_pretrained(NetworkSpec& net, const Checkpoint& ckpt, bool strict) {
    LoadReport report;
    for (auto& [name, p] : net.params()) {
        auto it = ckpt.tensors.find(name);
        bool is_head = name.rfind("head.", 0) == 0;
        if (it != ckpt.tensors.end() && it->second.shape() == p.value.shape()) {
            p.value = it->second;
            report.loaded.push_back(name);
        } else {
            if (strict && !is_head) {
                std::string detail = it == ckpt.tensors.end()
                                         ? "missing from checkpoint"
                                         : "shape " + shape_to_string(it->second.shape()) + " vs expected " +
                                               shape_to_string(p.value.shape());
                throw DimensionError("strict pretrained load failed for '" + name + "': " + detail);
            }
            report.reinitialized.push_back(name);  // keeps its fresh initialization
        }
    }
    for (const auto& [name, t] : ckpt.tensors)
        if (!net.has_param(name)) report.skipped.push_back(name);
    return report;
}

FreezeVariant freeze_variant_from_string(const std::string& name) {
    if (name == "all_layers") return FreezeVariant::all_layers;
    if (name == "half_layers") return FreezeVariant::half_layers;
    if (name == "last_layer") return FreezeVariant::last_layer;
    if (name == "none_frozen") return FreezeVariant::none_frozen;
    throw ArgumentError("unknown freeze variant '" + name + "'");
}

std::string to_string(FreezeVariant v) {
    switch (v) {
        case FreezeVariant::all_layers: return "all_layers";
        case FreezeVariant::half_layers: return "half_layers";
        case FreezeVariant::last_layer: return "last_layer";
        case FreezeVariant::none_frozen: return "none_frozen";
    }
    return "?";
}

bool is_statistic_param(const std::string& name) {
    auto ends_with = [&](const char* suffix) {
        size_t n = std::strlen(suffix);
        return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
    };
    return ends_with(".running_mean") || ends_with(".running_var");
}

int64_t apply_freeze_policy(NetworkSpec& net, const FreezePolicy& policy) {
    auto matches_any = [](const std::string& name, const std::vector<std::string>& prefixes) {
        for (const std::string& p : prefixes)
            if (name.rfind(p, 0) == 0) return true;
        return false;
    };

    std::vector<std::string> trainable_prefixes;
    switch (policy.variant) {
        case FreezeVariant::all_layers:
        case FreezeVariant::none_frozen: break;  // everything trainable
        case FreezeVariant::half_layers:
            if (net.half_trainable_prefixes.empty())
                throw StateError("network does not declare a half-layers partition");
            trainable_prefixes = net.half_trainable_prefixes;
            break;
        case FreezeVariant::last_layer: trainable_prefixes = {"head"}; break;
    }

    for (const std::string& prefix : policy.freeze_prefixes) {
        bool any = false;
        for (const auto& [name, p] : net.params())
            if (name.rfind(prefix, 0) == 0) {
                any = true;
                break;
            }
        if (!any) throw ArgumentError("freeze prefix '" + prefix + "' matches no parameter");
    }

    int64_t frozen = 0;
    bool limit_to_prefixes =
        policy.variant == FreezeVariant::half_layers || policy.variant == FreezeVariant::last_layer;
    for (auto& [name, p] : net.params()) {
        if (is_statistic_param(name)) {
            p.trainable = false;
            continue;
        }
        bool trainable = !limit_to_prefixes || matches_any(name, trainable_prefixes);
        if (matches_any(name, policy.freeze_prefixes)) trainable = false;
        p.trainable = trainable;
        if (!trainable) ++frozen;
    }
    return frozen;
}

std::vector<std::string> frozen_parameter_names(const NetworkSpec& net) {
    std::vector<std::string> out;
    for (const auto& [name, p] : net.params())
        if (!p.trainable && !is_statistic_param(name)) out.push_back(name);
    return out;
}

}  // namespace mfnet
