#include "dstf/npy.hpp"

#include "dstf/errors.hpp"

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dstf::npy {
namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename T>
T load_le(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

std::string header_value(const std::string& header, const std::string& key) {
    const auto pos = header.find("'" + key + "'");
    if (pos == std::string::npos) throw DataError("npy header lacks '" + key + "'");
    auto colon = header.find(':', pos);
    if (colon == std::string::npos) throw DataError("npy header malformed near '" + key + "'");
    auto start = header.find_first_not_of(' ', colon + 1);
    if (header[start] == '(') {
        return header.substr(start, header.find(')', start) - start + 1);
    }
    if (header[start] == '\'') {
        return header.substr(start + 1, header.find('\'', start + 1) - start - 1);
    }
    auto end = header.find_first_of(",}", start);
    return header.substr(start, end - start);
}

std::vector<std::size_t> parse_shape(const std::string& tuple) {
    std::vector<std::size_t> shape;
    std::size_t i = 1;
    while (i < tuple.size()) {
        while (i < tuple.size() && (tuple[i] == ' ' || tuple[i] == ',')) ++i;
        if (i >= tuple.size() || tuple[i] == ')') break;
        std::size_t j = i;
        while (j < tuple.size() && std::isdigit(static_cast<unsigned char>(tuple[j])) != 0) ++j;
        if (j == i) throw DataError("npy shape malformed: " + tuple);
        shape.push_back(std::stoull(tuple.substr(i, j - i)));
        i = j;
    }
    return shape;
}

std::string make_header(const std::string& descr, std::span<const std::size_t> shape) {
    std::string dict = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': (";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        dict += std::to_string(shape[i]);
        if (shape.size() == 1 || i + 1 < shape.size()) dict += ",";
        if (i + 1 < shape.size()) dict += " ";
    }
    dict += "), }";
    // magic(6) + version(2) + len(2) + dict + '\n' padded to a multiple of 64
    std::size_t total = 10 + dict.size() + 1;
    const std::size_t pad = (64 - total % 64) % 64;
    dict.append(pad, ' ');
    dict += '\n';
    std::string out("\x93NUMPY\x01\x00", 8);
    const auto len = static_cast<std::uint16_t>(dict.size());
    out.push_back(static_cast<char>(len & 0xFF));
    out.push_back(static_cast<char>(len >> 8));
    out += dict;
    return out;
}

template <typename T>
void write_raw(const std::filesystem::path& path, const std::string& descr, std::span<const std::size_t> shape,
               std::span<const T> data) {
    std::size_t expect = 1;
    for (auto s : shape) expect *= s;
    if (expect != data.size()) throw std::invalid_argument("npy write: shape does not match data size");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    const auto header = make_header(descr, shape);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (!out) throw DataError("short write to " + path.string());
}

struct ZipEntry {
    std::string name;
    std::uint16_t method = 0;
    std::uint64_t compressed = 0;
    std::uint64_t uncompressed = 0;
    std::uint64_t local_offset = 0;
};

std::vector<ZipEntry> zip_directory(const std::string& zip) {
    if (zip.size() < 22) throw DataError("npz archive too small");
    std::size_t eocd = std::string::npos;
    for (std::size_t i = zip.size() - 22 + 1; i-- > 0;) {
        if (load_le<std::uint32_t>(zip.data() + i) == 0x06054b50U) {
            eocd = i;
            break;
        }
        if (zip.size() - i > 22 + 65535) break;
    }
    if (eocd == std::string::npos) throw DataError("npz: end of central directory not found");
    std::uint64_t entries = load_le<std::uint16_t>(zip.data() + eocd + 10);
    std::uint64_t cd_offset = load_le<std::uint32_t>(zip.data() + eocd + 16);
    if (cd_offset == 0xFFFFFFFFU || entries == 0xFFFFU) {
        // zip64 end of central directory locator precedes the EOCD record
        if (eocd < 20 || load_le<std::uint32_t>(zip.data() + eocd - 20) != 0x07064b50U) {
            throw DataError("npz: zip64 locator missing");
        }
        const auto z64 = load_le<std::uint64_t>(zip.data() + eocd - 20 + 8);
        if (load_le<std::uint32_t>(zip.data() + z64) != 0x06064b50U) throw DataError("npz: zip64 record missing");
        entries = load_le<std::uint64_t>(zip.data() + z64 + 32);
        cd_offset = load_le<std::uint64_t>(zip.data() + z64 + 48);
    }
    std::vector<ZipEntry> out;
    std::size_t p = cd_offset;
    for (std::uint64_t e = 0; e < entries; ++e) {
        if (p + 46 > zip.size() || load_le<std::uint32_t>(zip.data() + p) != 0x02014b50U) {
            throw DataError("npz: corrupt central directory");
        }
        ZipEntry entry;
        entry.method = load_le<std::uint16_t>(zip.data() + p + 10);
        entry.compressed = load_le<std::uint32_t>(zip.data() + p + 20);
        entry.uncompressed = load_le<std::uint32_t>(zip.data() + p + 24);
        const auto name_len = load_le<std::uint16_t>(zip.data() + p + 28);
        const auto extra_len = load_le<std::uint16_t>(zip.data() + p + 30);
        const auto comment_len = load_le<std::uint16_t>(zip.data() + p + 32);
        entry.local_offset = load_le<std::uint32_t>(zip.data() + p + 42);
        entry.name = zip.substr(p + 46, name_len);
        std::size_t x = p + 46 + name_len;
        const std::size_t x_end = x + extra_len;
        while (x + 4 <= x_end) {
            const auto id = load_le<std::uint16_t>(zip.data() + x);
            const auto size = load_le<std::uint16_t>(zip.data() + x + 2);
            if (id == 0x0001) {
                std::size_t q = x + 4;
                if (entry.uncompressed == 0xFFFFFFFFU) { entry.uncompressed = load_le<std::uint64_t>(zip.data() + q); q += 8; }
                if (entry.compressed == 0xFFFFFFFFU) { entry.compressed = load_le<std::uint64_t>(zip.data() + q); q += 8; }
                if (entry.local_offset == 0xFFFFFFFFU) { entry.local_offset = load_le<std::uint64_t>(zip.data() + q); }
            }
            x += 4 + size;
        }
        out.push_back(entry);
        p += 46 + name_len + extra_len + comment_len;
    }
    return out;
}

std::string zip_extract(const std::string& zip, const ZipEntry& entry) {
    const std::size_t p = entry.local_offset;
    if (p + 30 > zip.size() || load_le<std::uint32_t>(zip.data() + p) != 0x04034b50U) {
        throw DataError("npz: bad local header for " + entry.name);
    }
    const auto name_len = load_le<std::uint16_t>(zip.data() + p + 26);
    const auto extra_len = load_le<std::uint16_t>(zip.data() + p + 28);
    const std::size_t data_start = p + 30 + name_len + extra_len;
    if (data_start + entry.compressed > zip.size()) throw DataError("npz: truncated member " + entry.name);
    if (entry.method == 0) return zip.substr(data_start, entry.compressed);
    if (entry.method != 8) throw DataError("npz: unsupported compression method for " + entry.name);

    std::string out(entry.uncompressed, '\0');
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw DataError("npz: inflateInit failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(zip.data() + data_start));
    zs.avail_in = static_cast<uInt>(entry.compressed);
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END) throw DataError("npz: inflate failed for " + entry.name);
    return out;
}

}  // namespace

std::size_t Array::size() const {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

Array parse(const std::string& bytes) {
    if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0) throw DataError("not an .npy payload");
    const auto major = static_cast<unsigned char>(bytes[6]);
    std::size_t header_len = 0;
    std::size_t offset = 0;
    if (major == 1) {
        header_len = load_le<std::uint16_t>(bytes.data() + 8);
        offset = 10;
    } else {
        header_len = load_le<std::uint32_t>(bytes.data() + 8);
        offset = 12;
    }
    if (offset + header_len > bytes.size()) throw DataError("npy header truncated");
    const std::string header = bytes.substr(offset, header_len);
    const std::string descr = header_value(header, "descr");
    if (header_value(header, "fortran_order") != "False") throw DataError("npy: Fortran order unsupported");
    Array arr;
    arr.shape = parse_shape(header_value(header, "shape"));
    const std::size_t n = arr.size();
    const char* data = bytes.data() + offset + header_len;
    const std::size_t avail = bytes.size() - offset - header_len;
    arr.data.resize(n);
    auto convert = [&]<typename T>(T /*tag*/) {
        if (avail < n * sizeof(T)) throw DataError("npy payload truncated");
        for (std::size_t i = 0; i < n; ++i) arr.data[i] = static_cast<double>(load_le<T>(data + i * sizeof(T)));
    };
    if (descr == "<f4") {
        convert(float{});
    } else if (descr == "<f8") {
        convert(double{});
    } else if (descr == "<i4") {
        convert(std::int32_t{});
    } else if (descr == "<i8") {
        convert(std::int64_t{});
    } else if (descr == "|u1" || descr == "<u1") {
        convert(std::uint8_t{});
    } else {
        throw DataError("npy: unsupported dtype " + descr);
    }
    return arr;
}

Array read(const std::filesystem::path& path) { return parse(slurp(path)); }

std::vector<std::string> npz_members(const std::filesystem::path& path) {
    std::vector<std::string> names;
    for (const auto& e : zip_directory(slurp(path))) names.push_back(e.name);
    return names;
}

Array read_npz_member(const std::filesystem::path& path, const std::string& name) {
    const std::string zip = slurp(path);
    for (const auto& e : zip_directory(zip)) {
        if (e.name == name + ".npy" || e.name == name) return parse(zip_extract(zip, e));
    }
    throw DataError("npz " + path.string() + " has no member '" + name + "'");
}

void write_f32(const std::filesystem::path& path, std::span<const std::size_t> shape, std::span<const float> data) {
    write_raw<float>(path, "<f4", shape, data);
}

void write_f64(const std::filesystem::path& path, std::span<const std::size_t> shape, std::span<const double> data) {
    write_raw<double>(path, "<f8", shape, data);
}

}  // namespace dstf::npy
