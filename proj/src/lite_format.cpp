#include "plite/lite_format.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace plite {

namespace {

constexpr char kMagic[4] = {'P', 'L', 'I', 'T'};

class Writer {
public:
    void u8(uint8_t v) { bytes_.push_back(v); }
    void u16(uint16_t v) {
        bytes_.push_back(static_cast<uint8_t>(v));
        bytes_.push_back(static_cast<uint8_t>(v >> 8));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
    void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
    void str(const std::string& s) {
        if (s.size() > 0xffff) throw Error("string too long to serialize");
        u16(static_cast<uint16_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    void raw(const void* p, size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    std::vector<uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(const std::vector<uint8_t>& bytes) : bytes_(bytes) {}

    size_t offset() const { return pos_; }
    size_t remaining() const { return bytes_.size() - pos_; }

    uint8_t u8() {
        need(1, "u8");
        return bytes_[pos_++];
    }
    uint16_t u16() {
        need(2, "u16");
        const uint16_t v = static_cast<uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    uint32_t u32() {
        need(4, "u32");
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    uint64_t u64() {
        need(8, "u64");
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str() {
        const uint16_t n = u16();
        need(n, "string body");
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void raw(void* dst, size_t n, const char* what) {
        need(n, what);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

private:
    void need(size_t n, const char* what) const {
        if (pos_ + n > bytes_.size()) {
            throw ParseError(std::string("truncated file while reading ") + what, pos_);
        }
    }

    const std::vector<uint8_t>& bytes_;
    size_t pos_ = 0;
};

void write_shape(Writer& w, const std::vector<int>& shape) {
    if (shape.size() > 0xff) throw Error("tensor rank too large to serialize");
    w.u8(static_cast<uint8_t>(shape.size()));
    for (int d : shape) w.u32(static_cast<uint32_t>(d));
}

std::vector<int> read_shape(Reader& r) {
    const uint8_t nd = r.u8();
    std::vector<int> shape(nd);
    for (uint8_t i = 0; i < nd; ++i) {
        const uint32_t d = r.u32();
        if (d == 0 || d > 0x7fffffffu) r.fail("bad tensor dimension " + std::to_string(d));
        shape[i] = static_cast<int>(d);
    }
    return shape;
}

std::vector<uint32_t> layer_attrs(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::Conv2D:
            return {static_cast<uint32_t>(l.out_channels), static_cast<uint32_t>(l.kernel_h),
                    static_cast<uint32_t>(l.kernel_w), static_cast<uint32_t>(l.stride),
                    static_cast<uint32_t>(l.padding)};
        case LayerKind::MaxPool2D:
            return {static_cast<uint32_t>(l.pool), static_cast<uint32_t>(l.stride)};
        case LayerKind::Dense:
            return {static_cast<uint32_t>(l.units)};
        default:
            return {};
    }
}

LayerSpec layer_from_record(Reader& r, uint8_t kind_tag, const std::vector<uint32_t>& attrs) {
    switch (kind_tag) {
        case static_cast<uint8_t>(LayerKind::Conv2D):
            if (attrs.size() != 5) r.fail("Conv2D wants 5 attributes");
            return LayerSpec::conv2d(static_cast<int>(attrs[0]), static_cast<int>(attrs[1]),
                                     static_cast<int>(attrs[2]), static_cast<int>(attrs[3]),
                                     static_cast<int>(attrs[4]));
        case static_cast<uint8_t>(LayerKind::MaxPool2D):
            if (attrs.size() != 2) r.fail("MaxPool2D wants 2 attributes");
            return LayerSpec::maxpool2d(static_cast<int>(attrs[0]), static_cast<int>(attrs[1]));
        case static_cast<uint8_t>(LayerKind::Flatten):
            if (!attrs.empty()) r.fail("Flatten wants no attributes");
            return LayerSpec::flatten();
        case static_cast<uint8_t>(LayerKind::Dense):
            if (attrs.size() != 1) r.fail("Dense wants 1 attribute");
            return LayerSpec::dense(static_cast<int>(attrs[0]));
        case static_cast<uint8_t>(LayerKind::ReLU):
            if (!attrs.empty()) r.fail("ReLU wants no attributes");
            return LayerSpec::relu();
        case static_cast<uint8_t>(LayerKind::Softmax):
            if (!attrs.empty()) r.fail("Softmax wants no attributes");
            return LayerSpec::softmax();
        default:
            r.fail("unknown layer kind tag " + std::to_string(kind_tag));
    }
}

// Header and structure shared by the float and quantized encodings.
template <typename ModelT>
void write_structure(Writer& w, const ModelT& m, bool quantized) {
    if (m.layers.empty()) throw Error("cannot export a model with no layers");
    w.raw(kMagic, 4);
    w.u16(kLiteVersion);
    w.u16(quantized ? kLiteFlagQuantized : 0);
    write_shape(w, m.input_shape);
    if (m.class_names.size() > 0xffff) throw Error("too many classes");
    w.u16(static_cast<uint16_t>(m.class_names.size()));
    for (const std::string& c : m.class_names) w.str(c);
    w.str(m.meta.name);
    w.u64(m.meta.seed);
    w.u32(static_cast<uint32_t>(m.meta.epochs));
    w.u16(static_cast<uint16_t>(m.layers.size()));
    for (const LayerSpec& l : m.layers) {
        w.u8(static_cast<uint8_t>(l.kind));
        const std::vector<uint32_t> attrs = layer_attrs(l);
        w.u8(static_cast<uint8_t>(attrs.size()));
        for (uint32_t a : attrs) w.u32(a);
    }
}

struct Structure {
    bool quantized = false;
    std::vector<int> input_shape;
    std::vector<std::string> class_names;
    ModelMeta meta;
    std::vector<LayerSpec> layers;
};

Structure read_structure(Reader& r) {
    char magic[4];
    r.raw(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw ParseError("bad magic; not a .plite file", 0);
    }
    const uint16_t version = r.u16();
    if (version != kLiteVersion) {
        throw ParseError("unsupported .plite version " + std::to_string(version), 4);
    }
    const uint16_t flags = r.u16();
    if (flags & ~kLiteFlagQuantized) r.fail("unknown flag bits set");

    Structure s;
    s.quantized = (flags & kLiteFlagQuantized) != 0;
    s.input_shape = read_shape(r);
    const uint16_t n_classes = r.u16();
    for (uint16_t i = 0; i < n_classes; ++i) s.class_names.push_back(r.str());
    s.meta.name = r.str();
    s.meta.seed = r.u64();
    s.meta.epochs = static_cast<int>(r.u32());
    const uint16_t n_layers = r.u16();
    if (n_layers == 0) r.fail("model has no layers");
    for (uint16_t i = 0; i < n_layers; ++i) {
        const uint8_t kind = r.u8();
        const uint8_t n_attrs = r.u8();
        std::vector<uint32_t> attrs(n_attrs);
        for (uint8_t a = 0; a < n_attrs; ++a) attrs[a] = r.u32();
        s.layers.push_back(layer_from_record(r, kind, attrs));
    }
    return s;
}

void write_float_tensor(Writer& w, const Tensor& t) {
    write_shape(w, t.shape());
    w.raw(t.data().data(), t.data().size() * sizeof(float));
}

Tensor read_float_tensor(Reader& r) {
    const std::vector<int> shape = read_shape(r);
    const int64_t n = Tensor::shape_product(shape);
    std::vector<float> data(static_cast<size_t>(n));
    r.raw(data.data(), data.size() * sizeof(float), "fp32 tensor data");
    // fp32 values are stored as little-endian u32 bit patterns
    if constexpr (std::endian::native != std::endian::little) {
        for (float& v : data) {
            uint32_t u = std::bit_cast<uint32_t>(v);
            u = __builtin_bswap32(u);
            v = std::bit_cast<float>(u);
        }
    }
    return Tensor(shape, std::move(data));
}

}  // namespace

std::vector<uint8_t> serialize(const Model& model) {
    infer_shapes(model);
    Writer w;
    write_structure(w, model, /*quantized=*/false);
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (!model.layers[i].has_params()) continue;
        const LayerParams& p = model.params[i];
        if (p.weights.empty()) {
            throw Error("cannot export: layer " + std::to_string(i) + " has no parameters");
        }
        if constexpr (std::endian::native != std::endian::little) {
            throw Error("big-endian export not implemented for fp32 blocks");
        }
        write_float_tensor(w, p.weights);
        write_float_tensor(w, p.bias);
    }
    return w.take();
}

std::vector<uint8_t> serialize(const QuantModel& model) {
    if (!model.calibrated) throw Error("cannot export an uncalibrated quantized model");
    Writer w;
    write_structure(w, model, /*quantized=*/true);
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (!model.layers[i].has_params()) continue;
        const QuantLayerParams& p = model.params[i];
        if (p.weights.empty()) {
            throw Error("cannot export: layer " + std::to_string(i) + " has no parameters");
        }
        write_shape(w, p.weights.shape);
        w.f32(p.weights.scale);
        w.i32(p.weights.zero_point);
        w.raw(p.weights.data.data(), p.weights.data.size());
        w.u8(1);
        w.u32(static_cast<uint32_t>(p.bias_q.size()));
        w.f32(p.bias_scale);
        for (int32_t b : p.bias_q) w.i32(b);
    }
    w.u16(static_cast<uint16_t>(model.edges.size()));
    for (const QuantEdge& e : model.edges) {
        w.f32(e.scale);
        w.i32(e.zero_point);
    }
    return w.take();
}

AnyModel parse(const std::vector<uint8_t>& bytes) {
    Reader r(bytes);
    const Structure s = read_structure(r);

    if (!s.quantized) {
        Model m;
        m.layers = s.layers;
        m.input_shape = s.input_shape;
        m.class_names = s.class_names;
        m.meta = s.meta;
        m.params.resize(m.layers.size());
        for (size_t i = 0; i < m.layers.size(); ++i) {
            if (!m.layers[i].has_params()) continue;
            m.params[i].weights = read_float_tensor(r);
            m.params[i].bias = read_float_tensor(r);
        }
        if (r.remaining() != 0) r.fail("trailing bytes after model");
        try {
            infer_shapes(m);
        } catch (const Error& e) {
            r.fail(std::string("inconsistent model: ") + e.what());
        }
        return m;
    }

    QuantModel m;
    m.layers = s.layers;
    m.input_shape = s.input_shape;
    m.class_names = s.class_names;
    m.meta = s.meta;
    m.params.resize(m.layers.size());
    for (size_t i = 0; i < m.layers.size(); ++i) {
        if (!m.layers[i].has_params()) continue;
        QuantLayerParams& p = m.params[i];
        p.weights.shape = read_shape(r);
        p.weights.scale = r.f32();
        p.weights.zero_point = r.i32();
        if (!(p.weights.scale > 0.0f)) r.fail("non-positive weight scale");
        const int64_t n = Tensor::shape_product(p.weights.shape);
        p.weights.data.resize(static_cast<size_t>(n));
        r.raw(p.weights.data.data(), p.weights.data.size(), "int8 tensor data");
        const uint8_t bias_rank = r.u8();
        if (bias_rank != 1) r.fail("bias tensor must be rank 1");
        const uint32_t bn = r.u32();
        p.bias_scale = r.f32();
        p.bias_q.resize(bn);
        for (uint32_t j = 0; j < bn; ++j) p.bias_q[j] = r.i32();
    }
    const uint16_t n_edges = r.u16();
    if (n_edges != m.layers.size() + 1) {
        r.fail("edge count " + std::to_string(n_edges) + " does not match layer count");
    }
    m.edges.resize(n_edges);
    for (uint16_t e = 0; e < n_edges; ++e) {
        m.edges[e].scale = r.f32();
        m.edges[e].zero_point = r.i32();
        if (!(m.edges[e].scale > 0.0f)) r.fail("non-positive edge scale");
    }
    m.calibrated = true;
    if (r.remaining() != 0) r.fail("trailing bytes after model");
    return m;
}

namespace {

uint64_t write_file(const std::vector<uint8_t>& bytes, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path);
    return bytes.size();
}

}  // namespace

uint64_t export_lite(const Model& model, const std::string& path) {
    return write_file(serialize(model), path);
}

uint64_t export_lite(const QuantModel& model, const std::string& path) {
    return write_file(serialize(model), path);
}

uint64_t export_lite(const AnyModel& model, const std::string& path) {
    return std::visit([&](const auto& m) { return export_lite(m, path); }, model);
}

AnyModel import_lite(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(bytes);
}

uint64_t model_size(const std::string& path) {
    std::error_code ec;
    const uint64_t n = std::filesystem::file_size(path, ec);
    if (ec) throw IoError("cannot stat " + path + ": " + ec.message());
    return n;
}

bool is_quantized(const AnyModel& m) { return std::holds_alternative<QuantModel>(m); }

const ModelMeta& meta_of(const AnyModel& m) {
    return std::visit([](const auto& x) -> const ModelMeta& { return x.meta; }, m);
}

const std::vector<std::string>& class_names_of(const AnyModel& m) {
    return std::visit([](const auto& x) -> const std::vector<std::string>& { return x.class_names; }, m);
}

}  // namespace plite
