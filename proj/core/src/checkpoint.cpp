#include "spft/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace spft {

namespace {

constexpr std::array<char, 4> kCheckpointMagic{'S', 'P', 'F', 'T'};
constexpr std::array<char, 4> kFisherMagic{'S', 'P', 'F', 'I'};

enum class LayerTag : std::uint32_t { Conv = 1, FullyConnected = 2, ReLU = 3, MaxPool = 4, GlobalAvgPool = 5, Head = 6 };

class Writer {
public:
    void bytes(const char* p, std::size_t n) { out_.append(p, n); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    Reader(const std::string& in, const char* what) : in_(in), what_(what) {}
    void need(std::size_t n) const {
        if (pos_ + n > in_.size()) throw FormatError(std::string(what_) + ": truncated");
    }
    void magic(const std::array<char, 4>& m) {
        need(4);
        if (std::memcmp(in_.data() + pos_, m.data(), 4) != 0) throw FormatError(std::string(what_) + ": bad magic");
        pos_ += 4;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    [[nodiscard]] std::size_t remaining() const { return in_.size() - pos_; }

private:
    const std::string& in_;
    const char* what_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Network& net) {
    Writer w;
    w.bytes(kCheckpointMagic.data(), 4);
    w.u32(kCheckpointVersion);
    const Shape3& in = net.input_shape();
    w.u32(static_cast<std::uint32_t>(in.channels));
    w.u32(static_cast<std::uint32_t>(in.height));
    w.u32(static_cast<std::uint32_t>(in.width));
    w.u32(static_cast<std::uint32_t>(net.layers().size()));
    for (const LayerSpec& spec : net.layers()) {
        std::array<std::uint32_t, 5> f{};
        LayerTag tag{};
        if (const auto* c = std::get_if<Conv2D>(&spec)) {
            tag = LayerTag::Conv;
            f = {static_cast<std::uint32_t>(c->out_channels), static_cast<std::uint32_t>(c->kernel_h),
                 static_cast<std::uint32_t>(c->kernel_w), static_cast<std::uint32_t>(c->stride),
                 static_cast<std::uint32_t>(c->padding)};
        } else if (const auto* fc = std::get_if<FullyConnected>(&spec)) {
            tag = LayerTag::FullyConnected;
            f[0] = static_cast<std::uint32_t>(fc->out_dim);
        } else if (std::holds_alternative<ReLU>(spec)) {
            tag = LayerTag::ReLU;
        } else if (const auto* m = std::get_if<MaxPool>(&spec)) {
            tag = LayerTag::MaxPool;
            f[0] = static_cast<std::uint32_t>(m->k);
            f[1] = static_cast<std::uint32_t>(m->stride);
        } else if (std::holds_alternative<GlobalAvgPool>(spec)) {
            tag = LayerTag::GlobalAvgPool;
        } else {
            tag = LayerTag::Head;
            f[0] = static_cast<std::uint32_t>(std::get<SoftmaxHead>(spec).num_classes);
        }
        w.u32(static_cast<std::uint32_t>(tag));
        for (std::uint32_t v : f) w.u32(v);
    }
    const auto& values = net.params().values;
    w.u64(values.size());
    for (double v : values) w.f64(v);
    return w.take();
}

Network decode_checkpoint(const std::string& bytes) {
    Reader r(bytes, "checkpoint");
    r.magic(kCheckpointMagic);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    Shape3 in;
    in.channels = r.u32();
    in.height = r.u32();
    in.width = r.u32();
    const std::uint32_t count = r.u32();
    std::vector<LayerSpec> layers;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t tag = r.u32();
        std::array<int, 5> f{};
        for (int& v : f) v = static_cast<int>(r.u32());
        switch (static_cast<LayerTag>(tag)) {
            case LayerTag::Conv: layers.emplace_back(Conv2D{f[0], f[1], f[2], f[3], f[4]}); break;
            case LayerTag::FullyConnected: layers.emplace_back(FullyConnected{f[0]}); break;
            case LayerTag::ReLU: layers.emplace_back(ReLU{}); break;
            case LayerTag::MaxPool: layers.emplace_back(MaxPool{f[0], f[1]}); break;
            case LayerTag::GlobalAvgPool: layers.emplace_back(GlobalAvgPool{}); break;
            case LayerTag::Head: layers.emplace_back(SoftmaxHead{f[0]}); break;
            default: throw FormatError("checkpoint: unknown layer tag " + std::to_string(tag));
        }
    }
    Network net(in, std::move(layers));
    const std::uint64_t n = r.u64();
    if (n != net.params().size()) throw FormatError("checkpoint: parameter count does not match layer table");
    for (double& v : net.params().values) v = r.f64();
    if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
    return net;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(net));
}

Network load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::filesystem::path fisher_sidecar_path(const std::filesystem::path& checkpoint) {
    std::filesystem::path p = checkpoint;
    p += ".fisher";
    return p;
}

std::string encode_fisher(const FisherSidecar& sidecar) {
    Writer w;
    w.bytes(kFisherMagic.data(), 4);
    w.u32(sidecar.sample_count);
    for (double v : sidecar.values) w.f64(v);
    return w.take();
}

FisherSidecar decode_fisher(const std::string& bytes) {
    Reader r(bytes, "fisher sidecar");
    r.magic(kFisherMagic);
    FisherSidecar out;
    out.sample_count = r.u32();
    if (r.remaining() % 8 != 0) throw FormatError("fisher sidecar: truncated");
    out.values.resize(r.remaining() / 8);
    for (double& v : out.values) v = r.f64();
    return out;
}

void save_fisher(const FisherSidecar& sidecar, const std::filesystem::path& path) {
    write_file_atomic(path, encode_fisher(sidecar));
}

FisherSidecar load_fisher(const std::filesystem::path& path) { return decode_fisher(read_file(path)); }

}  // namespace spft
