#include <openssl/evp.h>

#include <sstream>

#include "orl/experiment.hpp"

namespace orl::exp {

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 computation failed");
    static const char* const hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string render_manifest(const std::string& preset, std::uint64_t seed, const std::string& config_hash,
                            const std::map<std::string, std::string>& files) {
    std::ostringstream out;
    out << "manifest_version = 1\n";
    out << "tool_version = " << ORL_VERSION << '\n';
    out << "preset = " << preset << '\n';
    out << "seed = " << seed << '\n';
    out << "config_hash = " << config_hash << '\n';
    for (const auto& [name, hash] : files) out << "file." << name << " = " << hash << '\n';
    return out.str();
}

}  // namespace orl::exp
