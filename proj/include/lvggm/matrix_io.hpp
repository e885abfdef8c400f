#pragma once

// Matrix files shared by every command:
//  - CSV: rectangular, no header, decimal floats (written with 17 significant digits)
//  - binary: "LVMM", u64 rows, u64 cols (little endian), then rows*cols
//    little-endian IEEE-754 doubles in row-major order.

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lvggm/linalg.hpp"

namespace lvggm::io {

inline constexpr std::array<char, 4> kMagic{'L', 'V', 'M', 'M'};

static_assert(std::endian::native == std::endian::little, "binary matrix I/O assumes a little-endian host");

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline double parse_cell(std::string_view cell, std::size_t row, std::size_t col)
{
    cell = trim(cell);
    if (!cell.empty() && cell.front() == '+')
        cell.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size())
        throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(col) +
                         ": cannot parse '" + std::string(cell) + "' as a number");
    if (!std::isfinite(v))
        throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(col) + ": non-finite value");
    return v;
}

} // namespace detail

/// Parses CSV text into a dense matrix. Row/column numbers in errors are 1-based
/// line numbers of the input.
inline Matrix parse_csv(std::istream& in, bool skip_header = false)
{
    std::vector<double> values;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::size_t line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (skip_header && line_no == 1)
            continue;
        if (detail::trim(line).empty())
            continue;
        std::size_t count = 0;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            const auto cell = rest.substr(0, comma);
            values.push_back(detail::parse_cell(cell, line_no, count + 1));
            ++count;
            if (comma == std::string_view::npos)
                break;
            rest.remove_prefix(comma + 1);
        }
        if (rows == 0)
            cols = count;
        else if (count != cols)
            throw ParseError("row " + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                             " columns, found " + std::to_string(count));
        ++rows;
    }
    if (rows == 0)
        throw ParseError("empty matrix file: no data rows");
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            m(static_cast<Index>(i), static_cast<Index>(j)) = values[i * cols + j];
    return m;
}

inline void write_csv(std::ostream& out, const Matrix& m)
{
    char buf[64];
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            const auto res = std::to_chars(buf, buf + sizeof buf, m(i, j), std::chars_format::general, 17);
            if (j)
                out.put(',');
            out.write(buf, res.ptr - buf);
        }
        out.put('\n');
    }
}

inline void write_binary(std::ostream& out, const Matrix& m)
{
    out.write(kMagic.data(), kMagic.size());
    const std::uint64_t dims[2] = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size()));
}

inline Matrix read_binary(std::istream& in)
{
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic)
        throw ParseError("binary matrix: missing LVMM magic bytes");
    std::uint64_t dims[2] = {0, 0};
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in)
        throw ParseError("binary matrix: truncated header");
    if (dims[0] > (1ull << 32) || dims[1] > (1ull << 32))
        throw ParseError("binary matrix: implausible dimensions");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(static_cast<Index>(dims[0]),
                                                                              static_cast<Index>(dims[1]));
    in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size()));
    if (!in)
        throw ParseError("binary matrix: truncated payload, expected " + std::to_string(dims[0] * dims[1]) +
                         " values");
    return rm;
}

enum class Format { csv, binary };

/// Binary when the path ends in ".mat" or ".bin", CSV otherwise.
inline Format format_for_path(const std::filesystem::path& path)
{
    const auto ext = path.extension().string();
    return (ext == ".mat" || ext == ".bin") ? Format::binary : Format::csv;
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m, Format fmt)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    if (fmt == Format::binary)
        write_binary(out, m);
    else
        write_csv(out, m);
    out.flush();
    if (!out)
        throw IoError("failed writing '" + path.string() + "'");
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m)
{
    write_matrix(path, m, format_for_path(path));
}

/// Reads a matrix file, detecting the binary format from its magic bytes.
inline Matrix read_matrix(const std::filesystem::path& path, bool skip_header = false)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path.string() + "' for reading");
    std::array<char, 4> head{};
    in.read(head.data(), head.size());
    const bool binary = in.gcount() == 4 && head == kMagic;
    in.clear();
    in.seekg(0);
    if (binary)
        return read_binary(in);
    return parse_csv(in, skip_header);
}

inline SymMatrix read_sym_matrix(const std::filesystem::path& path)
{
    Matrix m = read_matrix(path);
    if (m.rows() != m.cols())
        throw ArgumentError("'" + path.string() + "' is " + lvggm::detail::dims(m) + ", expected a square matrix");
    return SymMatrix(std::move(m));
}

} // namespace lvggm::io
