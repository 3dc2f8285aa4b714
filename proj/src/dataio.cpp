#include "pwt/dataio.hpp"

#include <cstdio>
#include <fstream>

namespace pwt::data {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t at) {
    return (static_cast<std::uint32_t>(buf[at]) << 24) | (static_cast<std::uint32_t>(buf[at + 1]) << 16) |
           (static_cast<std::uint32_t>(buf[at + 2]) << 8) | static_cast<std::uint32_t>(buf[at + 3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>((v >> 24) & 0xff), static_cast<char>((v >> 16) & 0xff),
                 static_cast<char>((v >> 8) & 0xff), static_cast<char>(v & 0xff)};
    out.write(b, 4);
}

void check_payload(const std::filesystem::path& path, std::size_t have, std::size_t expect) {
    if (have < expect)
        throw std::runtime_error(path.string() + ": truncated file, expected " + std::to_string(expect) +
                                 " payload bytes, found " + std::to_string(have));
    if (have > expect)
        throw std::runtime_error(path.string() + ": unexpected trailing bytes, expected " + std::to_string(expect) +
                                 " payload bytes, found " + std::to_string(have));
}

}  // namespace

RawImages load_idx_images(const std::filesystem::path& path) {
    auto buf = read_all(path);
    if (buf.size() < 16)
        throw std::runtime_error(path.string() + ": truncated file, header needs 16 bytes, found " +
                                 std::to_string(buf.size()));
    std::uint32_t magic = read_be32(buf, 0);
    if (magic != kIdxImagesMagic) {
        char hex[16];
        std::snprintf(hex, sizeof(hex), "0x%08x", magic);
        throw std::runtime_error(path.string() + ": bad magic " + hex + " for an IDX image file");
    }
    RawImages r;
    r.count = read_be32(buf, 4);
    r.rows = read_be32(buf, 8);
    r.cols = read_be32(buf, 12);
    check_payload(path, buf.size() - 16, r.count * r.rows * r.cols);
    r.pixels.assign(buf.begin() + 16, buf.end());
    return r;
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
    auto buf = read_all(path);
    if (buf.size() < 8)
        throw std::runtime_error(path.string() + ": truncated file, header needs 8 bytes, found " +
                                 std::to_string(buf.size()));
    std::uint32_t magic = read_be32(buf, 0);
    if (magic != kIdxLabelsMagic) {
        char hex[16];
        std::snprintf(hex, sizeof(hex), "0x%08x", magic);
        throw std::runtime_error(path.string() + ": bad magic " + hex + " for an IDX label file");
    }
    std::size_t count = read_be32(buf, 4);
    check_payload(path, buf.size() - 8, count);
    return std::vector<std::uint8_t>(buf.begin() + 8, buf.end());
}

void write_idx_images(const std::filesystem::path& path, const RawImages& images) {
    if (images.pixels.size() != images.count * images.rows * images.cols)
        throw std::invalid_argument("write_idx_images: pixel buffer does not match declared dimensions");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_be32(out, kIdxImagesMagic);
    write_be32(out, static_cast<std::uint32_t>(images.count));
    write_be32(out, static_cast<std::uint32_t>(images.rows));
    write_be32(out, static_cast<std::uint32_t>(images.cols));
    out.write(reinterpret_cast<const char*>(images.pixels.data()),
              static_cast<std::streamsize>(images.pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_be32(out, kIdxLabelsMagic);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

RawCifar load_cifar_file(const std::filesystem::path& path, CifarFormat format) {
    auto buf = read_all(path);
    const std::size_t record = format == CifarFormat::Cifar10 ? 3073 : 3074;
    if (buf.empty() || buf.size() % record != 0)
        throw std::runtime_error(path.string() + ": file length " + std::to_string(buf.size()) +
                                 " is not a multiple of the record size " + std::to_string(record));
    RawCifar r;
    r.count = buf.size() / record;
    r.pixels.reserve(r.count * 3072);
    r.labels.reserve(r.count);
    for (std::size_t i = 0; i < r.count; ++i) {
        const std::uint8_t* rec = buf.data() + i * record;
        // CIFAR-100 records carry the coarse label first; keep the fine one.
        r.labels.push_back(format == CifarFormat::Cifar10 ? rec[0] : rec[1]);
        const std::uint8_t* px = rec + (format == CifarFormat::Cifar10 ? 1 : 2);
        r.pixels.insert(r.pixels.end(), px, px + 3072);
    }
    return r;
}

}  // namespace pwt::data
