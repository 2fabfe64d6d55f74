// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/checkpoint.hpp"

#include "rigsplat/io.hpp"

#include <bit>
#include <cstring>
#include <map>
#include <sstream>

namespace rigsplat {

namespace {

constexpr char kMagic[4] = {'S', 'A', 'R', 'M'};

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(const std::string& s) { buf_ += s; }
    void vec(const Eigen::Ref<const Eigen::VectorXd>& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
    }
    [[nodiscard]] std::string& str() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(std::uint64_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    [[nodiscard]] bool done() const { return pos_ == data_.size(); }
    void need(std::uint64_t n) const {
        if (n > data_.size() - pos_) throw FormatError("checkpoint: truncated " + what_);
    }

private:
    const std::string& data_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::string gaussians_payload(const GaussianSet& set) {
    Writer w;
    w.u64(set.generation);
    w.u64(set.size());
    for (const auto& g : set.gaussians) {
        w.vec(g.mean);
        w.vec(g.log_scale);
        w.vec(g.rotation);
        w.f64(g.opacity_logit);
        w.u8(g.color ? 1 : 0);
        w.vec(g.color.value_or(Vec3::Zero()));
    }
    return std::move(w.str());
}

GaussianSet gaussians_from(const std::string& payload) {
    Reader r(payload, "gaussians");
    GaussianSet set;
    set.generation = r.u64();
    const auto n = r.u64();
    r.need(n * (11 * 8 + 1 + 3 * 8));
    set.gaussians.resize(n);
    for (auto& g : set.gaussians) {
        for (int a = 0; a < 3; ++a) g.mean[a] = r.f64();
        for (int a = 0; a < 3; ++a) g.log_scale[a] = r.f64();
        for (int a = 0; a < 4; ++a) g.rotation[a] = r.f64();
        g.opacity_logit = r.f64();
        const bool has = r.u8() != 0;
        Vec3 c;
        for (int a = 0; a < 3; ++a) c[a] = r.f64();
        if (has) g.color = c;
    }
    if (!r.done()) throw FormatError("checkpoint: trailing bytes in gaussians");
    return set;
}

std::string mlp_payload(const Mlp& net) {
    Writer w;
    const auto& params = net.parameters();
    w.u64(params.size());
    for (const auto& p : params) {
        w.u64(static_cast<std::uint64_t>(p.numel()));
        for (double v : p.values()) w.f64(v);
    }
    return std::move(w.str());
}

void mlp_from(const std::string& payload, Mlp& net, const char* what) {
    Reader r(payload, what);
    auto& params = net.parameters();
    if (r.u64() != params.size()) throw FormatError(std::string("checkpoint: ") + what + " layer count mismatch");
    for (auto& p : params) {
        if (r.u64() != static_cast<std::uint64_t>(p.numel()))
            throw FormatError(std::string("checkpoint: ") + what + " tensor size mismatch");
        for (double& v : p.values()) v = r.f64();
    }
    if (!r.done()) throw FormatError(std::string("checkpoint: trailing bytes in ") + what);
}

std::string corrections_payload(const std::vector<FrameCorrection>& cs) {
    Writer w;
    w.u64(cs.size());
    for (const auto& c : cs) {
        const auto flat = c.flatten();
        w.u64(flat.size());
        for (double v : flat) w.f64(v);
    }
    return std::move(w.str());
}

std::vector<FrameCorrection> corrections_from(const std::string& payload, int num_joints) {
    Reader r(payload, "corrections");
    std::vector<FrameCorrection> out(r.u64(), FrameCorrection::zero(num_joints));
    for (auto& c : out) {
        const auto n = r.u64();
        r.need(n * 8);
        std::vector<double> flat(n);
        for (auto& v : flat) v = r.f64();
        try {
            c.unflatten(flat);
        } catch (const std::invalid_argument&) {
            throw FormatError("checkpoint: frame correction size does not match the template");
        }
    }
    if (!r.done()) throw FormatError("checkpoint: trailing bytes in corrections");
    return out;
}

}  // namespace

Checkpoint checkpoint_from_state(const TrainState& state) {
    Checkpoint c;
    c.config = state.config;
    c.tmpl = state.model.tmpl;
    c.gaussians = state.model.gaussians;
    c.deform = state.model.deform.clone();
    c.color = state.model.color.clone();
    c.corrections = state.corrections;
    std::ostringstream rng;
    rng << state.rng;
    c.rng_state = rng.str();
    return c;
}

AvatarModel model_from_checkpoint(const Checkpoint& ckpt) {
    AvatarModel m;
    m.tmpl = ckpt.tmpl;
    m.gaussians = ckpt.gaussians;
    m.deform = ckpt.deform.clone();
    m.color = ckpt.color.clone();
    m.use_color_field = ckpt.config.use_color_field;
    m.rebuild_skin({ckpt.config.knn_k, ckpt.config.sigma});
    return m;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    const std::vector<std::pair<std::string, std::string>> sections = {
        {"config", config_to_json(ckpt.config)},
        {"template", template_to_json(ckpt.tmpl)},
        {"gaussians", gaussians_payload(ckpt.gaussians)},
        {"deform_mlp", mlp_payload(ckpt.deform.net())},
        {"color_mlp", mlp_payload(ckpt.color.net())},
        {"corrections", corrections_payload(ckpt.corrections)},
        {"rng", ckpt.rng_state},
    };
    Writer w;
    w.bytes(std::string(kMagic, 4));
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(sections.size()));
    for (const auto& [name, payload] : sections) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
        w.u64(payload.size());
        w.bytes(payload);
    }
    return std::move(w.str());
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    Reader r(bytes, "header");
    if (r.bytes(4) != std::string(kMagic, 4)) throw FormatError("checkpoint: bad magic (not a checkpoint file)");
    const auto version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    std::map<std::string, std::string> sections;
    const auto count = r.u32();
    for (std::uint32_t s = 0; s < count; ++s) {
        const auto name = r.bytes(r.u32());
        sections[name] = r.bytes(r.u64());
    }
    auto section = [&](const char* name) -> const std::string& {
        const auto it = sections.find(name);
        if (it == sections.end()) throw FormatError(std::string("checkpoint: missing section '") + name + "'");
        return it->second;
    };

    Checkpoint c;
    c.config = config_from_json(section("config"));
    c.tmpl = template_from_json(section("template"));
    c.gaussians = gaussians_from(section("gaussians"));
    c.deform = DeformMlp({c.config.pose_mlp_variant, c.config.deform_hidden_layers, c.config.deform_width,
                          c.config.deform_frequencies},
                         c.tmpl.num_joints(), 0);
    mlp_from(section("deform_mlp"), c.deform.net(), "deform_mlp");
    c.color = ColorMlp({c.config.color_hidden_layers, c.config.color_width, c.config.color_frequencies}, 0);
    mlp_from(section("color_mlp"), c.color.net(), "color_mlp");
    c.corrections = corrections_from(section("corrections"), c.tmpl.num_joints());
    c.rng_state = section("rng");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    atomic_write(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace rigsplat
