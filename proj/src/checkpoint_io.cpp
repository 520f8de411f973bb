#include "diae/checkpoint_io.hpp"

#include <cstring>
#include <fstream>

namespace diae {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    require(bool(is), "checkpoint: truncated file");
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
           (uint32_t(b[3]) << 24);
}

} // namespace

void save_checkpoint(const std::string& path, const std::string& config_text,
                     const ParamStore<float>& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(os.good(), "checkpoint: cannot write " + path);
    os.write("DIAE", 4);
    put_u32(os, kCheckpointVersion);
    put_u32(os, uint32_t(config_text.size()));
    os.write(config_text.data(), std::streamsize(config_text.size()));
    for (size_t i = 0; i < tensors.size(); ++i) {
        const std::string& name = tensors.name(i);
        const Tensor<float>& t = tensors.tensor(i);
        put_u32(os, uint32_t(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
        put_u32(os, uint32_t(t.shape.size()));
        for (int e : t.shape) put_u32(os, uint32_t(e));
        // raw little-endian floats (this build targets LE hosts)
        os.write(reinterpret_cast<const char*>(t.ptr()),
                 std::streamsize(t.numel() * sizeof(float)));
    }
    require(os.good(), "checkpoint: write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    require(bool(is) && std::memcmp(magic, "DIAE", 4) == 0,
            "checkpoint: bad magic in " + path);
    const uint32_t version = get_u32(is);
    require(version == kCheckpointVersion,
            "checkpoint: unsupported version " + std::to_string(version));
    const uint32_t cfg_len = get_u32(is);
    CheckpointData out;
    out.config_text.resize(cfg_len);
    is.read(out.config_text.data(), cfg_len);
    require(bool(is), "checkpoint: truncated config blob");
    while (true) {
        const int peek = is.peek();
        if (peek == EOF) break;
        const uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const uint32_t rank = get_u32(is);
        require(rank <= 8, "checkpoint: implausible rank");
        Shape shape;
        for (uint32_t r = 0; r < rank; ++r) shape.push_back(int(get_u32(is)));
        Tensor<float> t(shape);
        is.read(reinterpret_cast<char*>(t.ptr()),
                std::streamsize(t.numel() * sizeof(float)));
        require(bool(is), "checkpoint: truncated tensor " + name);
        out.tensors.add(std::move(name), std::move(t));
    }
    return out;
}

} // namespace diae
