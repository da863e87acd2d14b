#include "moecarve/safetensors.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace moecarve {

namespace {

using nlohmann::json;

constexpr std::size_t kF32Bytes = 4;

[[noreturn]] void fail(TensorFileErrorKind kind, const std::string& message) {
    throw TensorFileError(kind, message);
}

struct Placement {
    std::string name;
    std::size_t begin = 0;
    std::size_t end = 0;
};

} // namespace

const char* tensor_file_error_kind_name(TensorFileErrorKind kind) {
    switch (kind) {
        case TensorFileErrorKind::io: return "io";
        case TensorFileErrorKind::malformed_header: return "malformed_header";
        case TensorFileErrorKind::unknown_dtype: return "unknown_dtype";
        case TensorFileErrorKind::offset_overlap: return "offset_overlap";
        case TensorFileErrorKind::truncated: return "truncated";
    }
    return "unknown";
}

std::size_t Tensor::element_count() const {
    std::size_t count = 1;
    for (std::size_t dim : shape) {
        count *= dim;
    }
    return count;
}

TensorFile load_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(TensorFileErrorKind::io, "cannot open " + path + " for reading");
    }
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        fail(TensorFileErrorKind::io, "read failure on " + path);
    }
    if (raw.size() < 8) {
        fail(TensorFileErrorKind::truncated,
             path + ": only " + std::to_string(raw.size()) + " bytes, no header length prefix");
    }
    std::uint64_t header_len = 0;
    for (std::size_t i = 0; i < 8; ++i) {
        header_len |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[i])) << (8 * i);
    }
    if (header_len > raw.size() - 8) {
        fail(TensorFileErrorKind::truncated,
             path + ": header claims " + std::to_string(header_len) + " bytes but only " +
                 std::to_string(raw.size() - 8) + " follow the prefix");
    }

    json header;
    try {
        header = json::parse(raw.begin() + 8, raw.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::parse_error& e) {
        fail(TensorFileErrorKind::malformed_header, path + ": header is not valid JSON: " + e.what());
    }
    if (!header.is_object()) {
        fail(TensorFileErrorKind::malformed_header, path + ": header must be a JSON object");
    }

    const char* buffer = raw.data() + 8 + header_len;
    const std::size_t buffer_size = raw.size() - 8 - header_len;

    TensorFile tf;
    std::vector<Placement> placements;
    for (const auto& [name, entry] : header.items()) {
        if (name == "__metadata__") {
            if (!entry.is_object()) {
                fail(TensorFileErrorKind::malformed_header, path + ": __metadata__ must be an object");
            }
            for (const auto& [key, value] : entry.items()) {
                if (!value.is_string()) {
                    fail(TensorFileErrorKind::malformed_header,
                         path + ": __metadata__ value for '" + key + "' must be a string");
                }
                tf.metadata[key] = value.get<std::string>();
            }
            continue;
        }
        if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
            !entry.contains("data_offsets")) {
            fail(TensorFileErrorKind::malformed_header,
                 path + ": tensor '" + name + "' needs dtype, shape and data_offsets");
        }
        if (!entry["dtype"].is_string() || entry["dtype"].get<std::string>() != "F32") {
            fail(TensorFileErrorKind::unknown_dtype,
                 path + ": tensor '" + name + "' has unsupported dtype " + entry["dtype"].dump());
        }
        Tensor tensor;
        if (!entry["shape"].is_array()) {
            fail(TensorFileErrorKind::malformed_header,
                 path + ": tensor '" + name + "' shape must be an array");
        }
        for (const auto& dim : entry["shape"]) {
            if (!dim.is_number_unsigned()) {
                fail(TensorFileErrorKind::malformed_header,
                     path + ": tensor '" + name + "' shape must hold unsigned integers");
            }
            tensor.shape.push_back(dim.get<std::size_t>());
        }
        const auto& offsets = entry["data_offsets"];
        if (!offsets.is_array() || offsets.size() != 2 || !offsets[0].is_number_unsigned() ||
            !offsets[1].is_number_unsigned()) {
            fail(TensorFileErrorKind::malformed_header,
                 path + ": tensor '" + name + "' data_offsets must be [begin, end]");
        }
        const std::size_t begin = offsets[0].get<std::size_t>();
        const std::size_t end = offsets[1].get<std::size_t>();
        if (end < begin) {
            fail(TensorFileErrorKind::malformed_header,
                 path + ": tensor '" + name + "' has data_offsets end before begin");
        }
        if (end > buffer_size) {
            fail(TensorFileErrorKind::truncated,
                 path + ": tensor '" + name + "' ends at byte " + std::to_string(end) +
                     " but the buffer holds " + std::to_string(buffer_size));
        }
        if (end - begin != tensor.element_count() * kF32Bytes) {
            fail(TensorFileErrorKind::malformed_header,
                 path + ": tensor '" + name + "' spans " + std::to_string(end - begin) +
                     " bytes but its shape needs " +
                     std::to_string(tensor.element_count() * kF32Bytes));
        }
        tensor.data.resize(tensor.element_count());
        std::memcpy(tensor.data.data(), buffer + begin, end - begin);
        placements.push_back({name, begin, end});
        tf.tensors.emplace(name, std::move(tensor));
    }

    std::sort(placements.begin(), placements.end(),
              [](const Placement& a, const Placement& b) { return a.begin < b.begin; });
    for (std::size_t i = 1; i < placements.size(); ++i) {
        if (placements[i].begin < placements[i - 1].end) {
            fail(TensorFileErrorKind::offset_overlap,
                 path + ": tensors '" + placements[i - 1].name + "' and '" + placements[i].name +
                     "' overlap in the buffer");
        }
    }
    return tf;
}

void save_tensors(const TensorFile& tf, const std::string& path) {
    // std::map iteration is name-sorted, which fixes the layout.
    json header = json::object();
    if (!tf.metadata.empty()) {
        header["__metadata__"] = tf.metadata;
    }
    std::size_t offset = 0;
    for (const auto& [name, tensor] : tf.tensors) {
        const std::size_t bytes = tensor.element_count() * kF32Bytes;
        if (tensor.data.size() != tensor.element_count()) {
            throw std::invalid_argument("tensor '" + name + "' holds " +
                                        std::to_string(tensor.data.size()) +
                                        " values but its shape needs " +
                                        std::to_string(tensor.element_count()));
        }
        header[name] = {{"dtype", "F32"},
                        {"shape", tensor.shape},
                        {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    const std::string header_str = header.dump();

    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            fail(TensorFileErrorKind::io, "cannot open " + tmp.string() + " for writing");
        }
        const std::uint64_t header_len = header_str.size();
        char prefix[8];
        for (std::size_t i = 0; i < 8; ++i) {
            prefix[i] = static_cast<char>((header_len >> (8 * i)) & 0xff);
        }
        out.write(prefix, 8);
        out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
        for (const auto& [name, tensor] : tf.tensors) {
            out.write(reinterpret_cast<const char*>(tensor.data.data()),
                      static_cast<std::streamsize>(tensor.data.size() * kF32Bytes));
        }
        out.flush();
        if (!out) {
            fail(TensorFileErrorKind::io, "write failure on " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fail(TensorFileErrorKind::io,
             "cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
    }
}

} // namespace moecarve
