#include "xaln/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts are unsupported");

namespace xaln {

namespace {

template <class T>
std::vector<std::byte> to_bytes(const TensorT<T>& t) {
    std::vector<std::byte> out(static_cast<std::size_t>(t.numel()) * sizeof(T));
    std::memcpy(out.data(), t.data(), out.size());
    return out;
}

void append_u32(std::string& s, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    s.append(buf, 4);
}

void append_u64(std::string& s, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    s.append(buf, 8);
}

}  // namespace

void TensorFile::add(const std::string& name, const Tensor& t) {
    entries_.push_back({name, "f32", t.shape, to_bytes(t)});
}

void TensorFile::add(const std::string& name, const Tensor64& t) {
    entries_.push_back({name, "f64", t.shape, to_bytes(t)});
}

bool TensorFile::contains(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return true;
    }
    return false;
}

const TensorFile::Entry& TensorFile::entry(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return e;
    }
    throw IoError("tensor '" + name + "' not present in file");
}

Tensor TensorFile::get_f32(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype != "f32") {
        throw IoError("tensor '" + name + "' has dtype " + e.dtype + ", expected f32");
    }
    Tensor t = Tensor::zeros(e.shape);
    std::memcpy(t.data(), e.data.data(), e.data.size());
    return t;
}

Tensor64 TensorFile::get_f64(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype != "f64") {
        throw IoError("tensor '" + name + "' has dtype " + e.dtype + ", expected f64");
    }
    Tensor64 t = Tensor64::zeros(e.shape);
    std::memcpy(t.data(), e.data.data(), e.data.size());
    return t;
}

void TensorFile::save(const std::filesystem::path& path) const {
    nlohmann::json header;
    header["kind"] = kind;
    header["meta"] = meta;
    auto tensors = nlohmann::json::array();
    for (const auto& e : entries_) {
        tensors.push_back({{"name", e.name}, {"dtype", e.dtype}, {"shape", e.shape}});
    }
    header["tensors"] = tensors;
    std::string hdr = header.dump();

    std::string blob;
    blob.reserve(16 + hdr.size());
    blob += "XALN";
    append_u32(blob, kFormatVersion);
    append_u64(blob, hdr.size());
    blob += hdr;

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        for (const auto& e : entries_) {
            out.write(reinterpret_cast<const char*>(e.data.data()),
                      static_cast<std::streamsize>(e.data.size()));
        }
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

TensorFile TensorFile::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "XALN", 4) != 0) {
        throw CorruptFileError(path.string() + ": bad magic");
    }
    std::uint32_t version = 0;
    std::uint64_t hdr_len = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&hdr_len), 8);
    if (!in) throw CorruptFileError(path.string() + ": truncated preamble");
    if (version != kFormatVersion) {
        throw CorruptFileError(path.string() + ": unsupported format version " +
                               std::to_string(version));
    }
    std::string hdr(hdr_len, '\0');
    in.read(hdr.data(), static_cast<std::streamsize>(hdr_len));
    if (!in) throw CorruptFileError(path.string() + ": truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hdr);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError(path.string() + ": header is not valid JSON (" +
                               e.what() + ")");
    }

    TensorFile f;
    f.kind = header.value("kind", "");
    f.meta = header.value("meta", nlohmann::json::object());
    for (const auto& t : header.value("tensors", nlohmann::json::array())) {
        Entry e;
        e.name = t.at("name").get<std::string>();
        e.dtype = t.at("dtype").get<std::string>();
        e.shape = t.at("shape").get<Shape>();
        if (e.dtype != "f32" && e.dtype != "f64") {
            throw CorruptFileError(path.string() + ": unknown dtype " + e.dtype);
        }
        std::size_t bytes = static_cast<std::size_t>(shape_numel(e.shape)) *
                            (e.dtype == "f32" ? 4 : 8);
        e.data.resize(bytes);
        in.read(reinterpret_cast<char*>(e.data.data()),
                static_cast<std::streamsize>(bytes));
        if (!in) {
            throw CorruptFileError(path.string() + ": truncated payload for tensor '" +
                                   e.name + "'");
        }
        f.entries_.push_back(std::move(e));
    }
    return f;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace xaln
