#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "oodkit/error.hpp"
#include "oodkit/matrix.hpp"

namespace oodkit {

// FVEC layout: "FVEC" | u32 version | u32 rows | u32 cols | rows*cols f32,
// everything little-endian, payload row-major.
inline constexpr std::array<char, 4> kFvecMagic{'F', 'V', 'E', 'C'};
inline constexpr std::uint32_t kFvecVersion = 1;
inline constexpr std::size_t kFvecHeaderBytes = 16;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

inline std::uint32_t get_u32(std::string_view in, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    }
    return v;
}

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "': file not found or unreadable");
    }
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        lines.push_back(std::move(line));
    }
    return lines;
}

} // namespace detail

/// Shortest text form that parses back to the identical double; "inf"/"-inf"
/// for infinities.
inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline double parse_double(std::string_view text) {
    text = detail::trim(text);
    if (!text.empty() && text.front() == '+') {
        text.remove_prefix(1);
    }
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ParseError("not a number: '" + std::string(text) + "'");
    }
    return v;
}

inline long long parse_integer(std::string_view text) {
    text = detail::trim(text);
    long long v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
        throw ParseError("not an integer: '" + std::string(text) + "'");
    }
    return v;
}

/// Writes to a sibling temp file and renames over the target, so readers never
/// observe a half-written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open '" + tmp.string() + "' for writing");
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            throw IoError("write failed for '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move temp file onto '" + path.string() + "'");
    }
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "': file not found or unreadable");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------- FVEC

template <class Tag>
std::string encode_fvec(const Matrix<Tag>& m) {
    constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
    if (m.rows() > kMax || m.cols() > kMax) {
        throw DataError("matrix too large for FVEC header");
    }
    std::string out;
    out.reserve(kFvecHeaderBytes + m.data().size() * 4);
    out.append(kFvecMagic.data(), kFvecMagic.size());
    detail::put_u32(out, kFvecVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) {
        const auto f = static_cast<float>(v);
        if (!std::isfinite(f)) {
            throw DataError("value " + format_double(v) + " does not fit in a finite float32");
        }
        detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    return out;
}

template <class Tag>
Matrix<Tag> decode_fvec(std::string_view bytes, const std::string& origin = "<memory>") {
    if (bytes.size() < kFvecHeaderBytes) {
        throw FormatError("'" + origin + "' is shorter than the 16-byte FVEC header");
    }
    if (bytes.substr(0, 4) != std::string_view(kFvecMagic.data(), 4)) {
        throw FormatError("'" + origin + "' has bad magic (expected FVEC)");
    }
    const auto version = detail::get_u32(bytes, 4);
    if (version != kFvecVersion) {
        throw FormatError("'" + origin + "' has unsupported FVEC version " + std::to_string(version));
    }
    const std::size_t rows = detail::get_u32(bytes, 8);
    const std::size_t cols = detail::get_u32(bytes, 12);
    if (cols == 0) {
        throw FormatError("'" + origin + "' declares zero columns");
    }
    const std::size_t want = rows * cols * 4;
    const std::size_t have = bytes.size() - kFvecHeaderBytes;
    if (have < want) {
        throw TruncationError("'" + origin + "' payload has " + std::to_string(have) + " bytes, header promises " +
                              std::to_string(want));
    }
    if (have > want) {
        throw FormatError("'" + origin + "' has " + std::to_string(have - want) + " trailing bytes");
    }
    std::vector<double> data(rows * cols);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const float f = std::bit_cast<float>(detail::get_u32(bytes, kFvecHeaderBytes + 4 * i));
        if (!std::isfinite(f)) {
            throw DataError("'" + origin + "' has non-finite value at index " + std::to_string(i));
        }
        data[i] = static_cast<double>(f);
    }
    return Matrix<Tag>(rows, cols, std::move(data));
}

template <class Tag>
void write_fvec(const Matrix<Tag>& m, const std::filesystem::path& path) {
    write_file_atomic(path, encode_fvec(m));
}

template <class Tag = FeatureTag>
Matrix<Tag> read_fvec(const std::filesystem::path& path) {
    return decode_fvec<Tag>(read_file_bytes(path), path.string());
}

// ---------------------------------------------------------------- CSV

/// Matrix CSV: header `v0,v1,...`, one row per sample.
template <class Tag>
std::string encode_matrix_csv(const Matrix<Tag>& m) {
    std::string out;
    for (std::size_t c = 0; c < m.cols(); ++c) {
        out += (c ? ",v" : "v") + std::to_string(c);
    }
    out += '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) {
                out += ',';
            }
            out += format_double(m(r, c));
        }
        out += '\n';
    }
    return out;
}

template <class Tag>
void write_matrix_csv(const Matrix<Tag>& m, const std::filesystem::path& path) {
    write_file_atomic(path, encode_matrix_csv(m));
}

template <class Tag = FeatureTag>
Matrix<Tag> read_matrix_csv(const std::filesystem::path& path) {
    const auto lines = detail::read_lines(path);
    if (lines.empty() || detail::trim(lines.front()).empty()) {
        throw FormatError("'" + path.string() + "' is missing the v0,v1,... header");
    }
    const std::size_t cols = detail::split(lines.front(), ',').size();
    std::vector<double> data;
    std::size_t rows = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (detail::trim(lines[i]).empty()) {
            continue;
        }
        const auto fields = detail::split(lines[i], ',');
        if (fields.size() != cols) {
            throw FormatError("'" + path.string() + "' line " + std::to_string(i + 1) + " has " +
                              std::to_string(fields.size()) + " fields, expected " + std::to_string(cols));
        }
        for (auto f : fields) {
            data.push_back(parse_double(f));
        }
        ++rows;
    }
    return Matrix<Tag>(rows, cols, std::move(data));
}

inline std::string encode_labels_csv(const LabelVector& labels) {
    std::string out = "id,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out += std::to_string(i) + ',' + std::to_string(labels[i]) + '\n';
    }
    return out;
}

inline void write_labels_csv(const LabelVector& labels, const std::filesystem::path& path) {
    write_file_atomic(path, encode_labels_csv(labels));
}

inline LabelVector parse_labels_csv(const std::vector<std::string>& lines, const std::string& origin) {
    if (lines.empty() || detail::split(lines.front(), ',') != std::vector<std::string_view>{"id", "label"}) {
        throw FormatError("'" + origin + "' must start with header 'id,label'");
    }
    std::vector<std::size_t> labels;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (detail::trim(lines[i]).empty()) {
            continue;
        }
        const auto fields = detail::split(lines[i], ',');
        if (fields.size() != 2) {
            throw ParseError("'" + origin + "' line " + std::to_string(i + 1) + " needs exactly id,label");
        }
        const auto label = parse_integer(fields[1]);
        if (label < 0) {
            throw DomainError("'" + origin + "' line " + std::to_string(i + 1) + " has negative label " +
                              std::to_string(label));
        }
        labels.push_back(static_cast<std::size_t>(label));
    }
    return LabelVector(std::move(labels));
}

inline LabelVector read_labels_csv(const std::filesystem::path& path) {
    return parse_labels_csv(detail::read_lines(path), path.string());
}

// ---------------------------------------------------------------- key=value

using KeyValues = std::map<std::string, std::string>;

/// Plain `key=value` lines; blank lines and `#` comments are ignored.
inline KeyValues parse_key_values(const std::vector<std::string>& lines, const std::string& origin) {
    KeyValues kv;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line = detail::trim(lines[i]);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ParseError("'" + origin + "' line " + std::to_string(i + 1) + " is not key=value");
        }
        kv[std::string(detail::trim(line.substr(0, eq)))] = std::string(detail::trim(line.substr(eq + 1)));
    }
    return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
    return parse_key_values(detail::read_lines(path), path.string());
}

inline std::string encode_key_values(const std::vector<std::pair<std::string, std::string>>& entries) {
    std::string out;
    for (const auto& [k, v] : entries) {
        out += k + '=' + v + '\n';
    }
    return out;
}

} // namespace oodkit
