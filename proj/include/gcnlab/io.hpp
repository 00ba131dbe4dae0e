#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gcnlab/dataset.hpp"
#include "gcnlab/error.hpp"
#include "gcnlab/tensor.hpp"

// Binary containers. All integers little-endian, all floats raw IEEE f64.
// "GCNT" dataset, "GCNW" weight checkpoint, "GCNE" embedding, "GCNP"
// prediction matrix. Round-trips are bit-exact.

namespace gcnlab::io {

namespace detail {

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void get_bytes(std::istream& in, void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw IoError(std::string("truncated file while reading ") + what);
}

template <typename T>
void put_le(std::ostream& out, T v) {
    std::array<unsigned char, sizeof(T)> buf;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
    put_bytes(out, buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& in, const char* what) {
    std::array<unsigned char, sizeof(T)> buf;
    get_bytes(in, buf.data(), buf.size(), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

inline void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_le<std::uint64_t>(out, bits);
}

inline double get_f64(std::istream& in, const char* what) {
    std::uint64_t bits = get_le<std::uint64_t>(in, what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void put_f64_array(std::ostream& out, const std::vector<double>& v) {
    for (double x : v) put_f64(out, x);
}

inline void get_f64_array(std::istream& in, std::vector<double>& v, std::size_t n,
                          const char* what) {
    v.resize(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = get_f64(in, what);
}

inline void check_magic(std::istream& in, const char expect[4], const std::string& path) {
    char magic[4];
    get_bytes(in, magic, 4, "magic");
    if (std::memcmp(magic, expect, 4) != 0)
        throw IoError("bad magic in " + path + " (expected " +
                      std::string(expect, 4) + ")");
}

inline void check_version(std::istream& in, std::uint32_t expect, const std::string& path) {
    std::uint32_t v = get_le<std::uint32_t>(in, "version");
    if (v != expect)
        throw IoError("unsupported version " + std::to_string(v) + " in " + path);
}

} // namespace detail

inline constexpr std::uint32_t kFormatVersion = 1;

// ---------------------------------------------------------------- dataset

inline void save_dataset(const Dataset& d, const std::string& path) {
    d.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_dataset: cannot open " + path);
    using namespace detail;
    put_bytes(out, "GCNT", 4);
    put_le<std::uint32_t>(out, kFormatVersion);
    put_le<std::uint64_t>(out, d.graph.num_nodes);
    put_le<std::uint64_t>(out, d.graph.num_edges());
    put_le<std::uint64_t>(out, d.features.cols);
    put_le<std::uint64_t>(out, d.num_classes);
    put_le<std::uint64_t>(out, d.graph.edge_feature_dim);
    put_le<std::uint8_t>(out, d.graph.edge_weights.empty() ? 0 : 1);
    for (std::size_t v : d.graph.row_offsets) put_le<std::uint64_t>(out, v);
    for (NodeId v : d.graph.col_indices) put_le<std::uint64_t>(out, v);
    put_f64_array(out, d.graph.edge_weights);
    put_f64_array(out, d.graph.edge_features);
    put_f64_array(out, d.features.data);
    for (std::int64_t y : d.labels) put_le<std::int64_t>(out, y);
    for (const auto* split : {&d.train_idx, &d.valid_idx, &d.test_idx}) {
        put_le<std::uint64_t>(out, split->size());
        for (NodeId v : *split) put_le<std::uint64_t>(out, v);
    }
    if (!out) throw IoError("save_dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_dataset: cannot open " + path);
    using namespace detail;
    check_magic(in, "GCNT", path);
    check_version(in, kFormatVersion, path);
    Dataset d;
    std::uint64_t n = get_le<std::uint64_t>(in, "num_nodes");
    std::uint64_t m = get_le<std::uint64_t>(in, "num_edges");
    std::uint64_t fd = get_le<std::uint64_t>(in, "feature_dim");
    d.num_classes = get_le<std::uint64_t>(in, "num_classes");
    std::uint64_t efd = get_le<std::uint64_t>(in, "edge_feature_dim");
    bool has_w = get_le<std::uint8_t>(in, "edge_weight_flag") != 0;

    d.graph.num_nodes = n;
    d.graph.edge_feature_dim = efd;
    d.graph.row_offsets.resize(n + 1);
    for (auto& v : d.graph.row_offsets) v = get_le<std::uint64_t>(in, "row_offsets");
    d.graph.col_indices.resize(m);
    for (auto& v : d.graph.col_indices)
        v = static_cast<NodeId>(get_le<std::uint64_t>(in, "col_indices"));
    if (has_w) get_f64_array(in, d.graph.edge_weights, m, "edge_weights");
    if (efd > 0) get_f64_array(in, d.graph.edge_features, m * efd, "edge_features");
    d.features = Tensor(n, fd);
    get_f64_array(in, d.features.data, n * fd, "features");
    d.labels.resize(n);
    for (auto& y : d.labels) y = get_le<std::int64_t>(in, "labels");
    for (auto* split : {&d.train_idx, &d.valid_idx, &d.test_idx}) {
        std::uint64_t len = get_le<std::uint64_t>(in, "split length");
        split->resize(len);
        for (auto& v : *split) v = static_cast<NodeId>(get_le<std::uint64_t>(in, "split"));
    }
    d.validate();
    return d;
}

// ----------------------------------------------------- named f64 records
// Shared record shape for checkpoints: (name, rows, cols, data).

struct NamedTensor {
    std::string name;
    Tensor value;
};

inline void save_records(const std::vector<NamedTensor>& records, const char magic[4],
                         const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_records: cannot open " + path);
    using namespace detail;
    put_bytes(out, magic, 4);
    put_le<std::uint32_t>(out, kFormatVersion);
    put_le<std::uint64_t>(out, records.size());
    for (const auto& r : records) {
        put_le<std::uint64_t>(out, r.name.size());
        put_bytes(out, r.name.data(), r.name.size());
        put_le<std::uint64_t>(out, r.value.rows);
        put_le<std::uint64_t>(out, r.value.cols);
        put_f64_array(out, r.value.data);
    }
    if (!out) throw IoError("save_records: write failed for " + path);
}

inline std::vector<NamedTensor> load_records(const char magic[4], const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_records: cannot open " + path);
    using namespace detail;
    check_magic(in, magic, path);
    check_version(in, kFormatVersion, path);
    std::uint64_t count = get_le<std::uint64_t>(in, "record count");
    std::vector<NamedTensor> records(count);
    for (auto& r : records) {
        std::uint64_t len = get_le<std::uint64_t>(in, "name length");
        r.name.resize(len);
        get_bytes(in, r.name.data(), len, "name");
        std::uint64_t rows = get_le<std::uint64_t>(in, "rows");
        std::uint64_t cols = get_le<std::uint64_t>(in, "cols");
        r.value = Tensor(rows, cols);
        get_f64_array(in, r.value.data, rows * cols, "record data");
    }
    return records;
}

inline void save_checkpoint(const std::vector<NamedTensor>& records, const std::string& path) {
    save_records(records, "GCNW", path);
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
    return load_records("GCNW", path);
}

// ------------------------------------------- embedding / prediction matrix
// One n x d matrix plus a free-form provenance string.

struct MatrixFile {
    Tensor matrix;
    std::string provenance;
};

namespace detail {
inline void save_matrix_file(const MatrixFile& f, const char magic[4],
                             const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_matrix_file: cannot open " + path);
    put_bytes(out, magic, 4);
    put_le<std::uint32_t>(out, kFormatVersion);
    put_le<std::uint64_t>(out, f.matrix.rows);
    put_le<std::uint64_t>(out, f.matrix.cols);
    put_f64_array(out, f.matrix.data);
    put_le<std::uint64_t>(out, f.provenance.size());
    put_bytes(out, f.provenance.data(), f.provenance.size());
    if (!out) throw IoError("save_matrix_file: write failed for " + path);
}

inline MatrixFile load_matrix_file(const char magic[4], const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_matrix_file: cannot open " + path);
    check_magic(in, magic, path);
    check_version(in, kFormatVersion, path);
    MatrixFile f;
    std::uint64_t rows = get_le<std::uint64_t>(in, "rows");
    std::uint64_t cols = get_le<std::uint64_t>(in, "cols");
    f.matrix = Tensor(rows, cols);
    get_f64_array(in, f.matrix.data, rows * cols, "matrix");
    std::uint64_t len = get_le<std::uint64_t>(in, "provenance length");
    f.provenance.resize(len);
    get_bytes(in, f.provenance.data(), len, "provenance");
    return f;
}
} // namespace detail

inline void save_embedding(const MatrixFile& f, const std::string& path) {
    detail::save_matrix_file(f, "GCNE", path);
}
inline MatrixFile load_embedding(const std::string& path) {
    return detail::load_matrix_file("GCNE", path);
}
inline void save_predictions(const MatrixFile& f, const std::string& path) {
    detail::save_matrix_file(f, "GCNP", path);
}
inline MatrixFile load_predictions(const std::string& path) {
    return detail::load_matrix_file("GCNP", path);
}

} // namespace gcnlab::io
