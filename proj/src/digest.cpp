#include "dial/digest.hpp"

#include "dial/common.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <regex>
#include <sstream>

namespace dial {

std::string sha256_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
        throw Error("sha256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string file_sha256_hex(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::filesystem::path write_once_with_digest(const std::filesystem::path& dir, std::string_view stem,
                                             std::string_view ext, std::string_view contents) {
    std::filesystem::create_directories(dir);
    const std::string digest = sha256_hex(contents).substr(0, 12);
    auto path = dir / (std::string(stem) + "." + digest + "." + std::string(ext));
    if (std::filesystem::exists(path)) {
        if (read_file(path) != contents) throw Error("refusing to overwrite " + path.string());
        return path;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("short write to " + path.string());
    return path;
}

void verify_digest_suffix(const std::filesystem::path& path) {
    static const std::regex pattern(R"(^.+\.([0-9a-f]{12})\.[A-Za-z0-9]+$)");
    std::smatch m;
    const std::string name = path.filename().string();
    if (!std::regex_match(name, m, pattern)) return;
    const std::string actual = file_sha256_hex(path).substr(0, 12);
    if (actual != m[1].str()) {
        throw Error("digest mismatch for " + path.string() + ": name says " + m[1].str() +
                    ", content hashes to " + actual);
    }
}

} // namespace dial
