#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "xaln/tensor.hpp"

namespace xaln {

struct CorruptFileError : Error {
    explicit CorruptFileError(const std::string& d) : Error("corrupt-file", d) {}
};

// Single binary container used for patches, embedding tables and checkpoints:
//   bytes 0..3   magic "XALN"
//   u32 LE       format version (currently 1)
//   u64 LE       header length in bytes
//   header       JSON: {"kind": ..., "meta": {...}, "tensors": [{name,dtype,shape}...]}
//   payload      raw little-endian tensor values, in header order
class TensorFile {
public:
    static constexpr std::uint32_t kFormatVersion = 1;

    std::string kind;
    nlohmann::json meta = nlohmann::json::object();

    struct Entry {
        std::string name;
        std::string dtype;  // "f32" or "f64"
        Shape shape;
        std::vector<std::byte> data;
    };

    void add(const std::string& name, const Tensor& t);
    void add(const std::string& name, const Tensor64& t);

    bool contains(const std::string& name) const;
    const Entry& entry(const std::string& name) const;
    Tensor get_f32(const std::string& name) const;
    Tensor64 get_f64(const std::string& name) const;

    const std::vector<Entry>& entries() const { return entries_; }

    // Writes atomically (temp file + rename).
    void save(const std::filesystem::path& path) const;
    static TensorFile load(const std::filesystem::path& path);

private:
    std::vector<Entry> entries_;
};

// Atomic text-file write used for JSON sidecars and logs written in one shot.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// 64-bit FNV-1a of a string, hex-encoded; used for config digests.
std::string fnv1a_hex(const std::string& s);

}  // namespace xaln
