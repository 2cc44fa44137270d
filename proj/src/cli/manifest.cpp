#include "dstf/cli/manifest.hpp"

#include "dstf/checkpoint.hpp"
#include "dstf/errors.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#ifndef DSTF_VERSION
#define DSTF_VERSION "unknown"
#endif

namespace dstf::cli {

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
            throw std::runtime_error("SHA-256 initialisation failed");
        }
    }
    void update(const char* data, std::size_t size) { EVP_DigestUpdate(ctx_.get(), data, size); }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_.get(), digest.data(), &len);
        std::ostringstream os;
        for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
        return os.str();
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

void feed_file(Sha256& h, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read '" + path.string() + "'");
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
    Sha256 h;
    feed_file(h, path);
    return h.hex();
}

std::string dataset_checksum(const std::filesystem::path& dir) {
    Sha256 h;
    for (const char* name : {"meta.json", "readings.npy", "timestamps.txt"}) {
        const auto path = dir / name;
        if (!std::filesystem::exists(path)) throw DataError("dataset file missing: " + path.string());
        h.update(name, std::char_traits<char>::length(name));
        feed_file(h, path);
    }
    return h.hex();
}

std::string code_version() { return DSTF_VERSION; }

std::string utc_now() {
    const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
    return format_timestamp(now) + "Z";
}

void RunManifest::write(const std::filesystem::path& path) const {
    const nlohmann::json doc{{"command", command},   {"config", config},
                             {"dataset_checksum", dataset_checksum}, {"seed", seed},
                             {"code_version", code_version}, {"started", started},
                             {"finished", finished}, {"results", results}};
    write_file_atomic(path, doc.dump(2) + "\n");
}

RunManifest RunManifest::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read manifest '" + path.string() + "'");
    const auto doc = nlohmann::json::parse(in);
    RunManifest m;
    m.command = doc.at("command").get<std::string>();
    m.config = doc.at("config");
    m.dataset_checksum = doc.at("dataset_checksum").get<std::string>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.code_version = doc.at("code_version").get<std::string>();
    m.started = doc.at("started").get<std::string>();
    m.finished = doc.value("finished", "");
    m.results = doc.value("results", nlohmann::json::object());
    return m;
}

}  // namespace dstf::cli
