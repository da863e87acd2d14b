#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace moecarve {

enum class TensorFileErrorKind {
    io,               // unreadable/unwritable file
    malformed_header, // length prefix or JSON header does not parse/validate
    unknown_dtype,    // any dtype other than F32
    offset_overlap,   // two tensors claim the same buffer bytes
    truncated,        // header or data extends past the end of the file
};

const char* tensor_file_error_kind_name(TensorFileErrorKind kind);

class TensorFileError : public std::runtime_error {
public:
    TensorFileError(TensorFileErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    TensorFileErrorKind kind() const { return kind_; }
    const char* kind_name() const { return tensor_file_error_kind_name(kind_); }

private:
    TensorFileErrorKind kind_;
};

// One named tensor: row-major float32 data of the given shape.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    std::size_t element_count() const;
};

// In-memory form of a tensor file. Tensors are keyed by name; metadata is a
// free-form string map stored alongside them.
struct TensorFile {
    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::string> metadata;
};

// safetensors container: an 8-byte little-endian header byte length, a JSON
// header mapping each tensor name to {dtype, shape, data_offsets} (plus an
// optional __metadata__ string map), then the raw buffer. Only F32 is
// supported. Tensors are laid out in name order, so saving is deterministic
// and save/load round-trips bit-exactly.
TensorFile load_tensors(const std::string& path);

// Writes atomically: to a temporary file in the same directory, then renames
// over the target.
void save_tensors(const TensorFile& tf, const std::string& path);

} // namespace moecarve
