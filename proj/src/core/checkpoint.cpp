#include "core/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fscs {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'O', 'I'};

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& is) {
    uint32_t u = get_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace

void write_named_tensors(const std::string& path, const CheckpointHeader& header,
                         const std::vector<std::pair<std::string, Tensor<float>>>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    put_u32(os, header.version);
    put_u32(os, header.block_side);
    put_f32(os, header.ratio);
    put_u32(os, header.channels);
    put_u32(os, header.phases);
    put_u32(os, static_cast<uint32_t>(header.variant));
    put_u32(os, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) put_u32(os, static_cast<uint32_t>(t.dim(i)));
        for (int64_t i = 0, e = t.numel(); i < e; ++i) put_f32(os, t[i]);
    }
    if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

NamedTensorFile read_named_tensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: '" + path + "' is not a checkpoint file");
    NamedTensorFile f;
    f.header.version = get_u32(is);
    if (f.header.version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported format version " +
                                 std::to_string(f.header.version));
    f.header.block_side = get_u32(is);
    f.header.ratio = get_f32(is);
    f.header.channels = get_u32(is);
    f.header.phases = get_u32(is);
    uint32_t mode = get_u32(is);
    if (mode > 2) throw std::runtime_error("checkpoint: bad mode field");
    f.header.variant = static_cast<Variant>(mode);
    uint32_t count = get_u32(is);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("checkpoint: truncated tensor name");
        uint32_t rank = get_u32(is);
        if (rank > 8) throw std::runtime_error("checkpoint: implausible tensor rank");
        Shape shape(rank);
        for (uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<int64_t>(get_u32(is));
        Tensor<float> t(shape);
        for (int64_t j = 0, e = t.numel(); j < e; ++j) t[j] = get_f32(is);
        f.tensors.emplace(std::move(name), std::move(t));
    }
    return f;
}

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& m) {
    CheckpointHeader h;
    h.block_side = static_cast<uint32_t>(m.sampling.block_side);
    h.ratio = static_cast<float>(m.sampling.ratio);
    h.channels = static_cast<uint32_t>(m.channels);
    h.phases = static_cast<uint32_t>(m.phases.size());
    h.variant = m.variant;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;
    for_each_param(m, std::function<void(const std::string&, const Tensor<T>&)>(
                          [&tensors](const std::string& name, const Tensor<T>& t) {
                              tensors.emplace_back(name, t.template cast<float>());
                          }));
    write_named_tensors(path, h, tensors);
}

Model<float> load_checkpoint(const std::string& path) {
    NamedTensorFile f = read_named_tensors(path);
    ModelDesc desc;
    desc.ratio = static_cast<double>(f.header.ratio);
    desc.block_side = f.header.block_side;
    desc.channels = f.header.channels;
    desc.phases = f.header.phases;
    desc.variant = f.header.variant;
    Model<float> m = make_model<float>(desc, /*seed=*/0);
    for_each_param(m, std::function<void(const std::string&, Tensor<float>&)>(
                          [&f, &path](const std::string& name, Tensor<float>& t) {
                              auto it = f.tensors.find(name);
                              if (it == f.tensors.end())
                                  throw std::runtime_error("checkpoint: '" + path +
                                                           "' is missing tensor '" + name + "'");
                              if (it->second.shape() != t.shape())
                                  throw std::runtime_error(
                                      "checkpoint: tensor '" + name + "' has shape " +
                                      shape_str(it->second.shape()) + ", expected " +
                                      shape_str(t.shape()));
                              t = std::move(it->second);
                          }));
    return m;
}

template void save_checkpoint<float>(const std::string&, const Model<float>&);
template void save_checkpoint<double>(const std::string&, const Model<double>&);

}  // namespace fscs
