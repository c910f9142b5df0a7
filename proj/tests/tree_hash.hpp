#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>

// Relative path -> FNV-1a 64 checksum of the file bytes, for every regular file under root.
inline std::map<std::string, std::uint64_t> tree_checksums(const std::filesystem::path& root)
{
    std::map<std::string, std::uint64_t> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream f(e.path(), std::ios::binary);
        std::uint64_t h = 1469598103934665603ull;
        for (std::istreambuf_iterator<char> it(f), end; it != end; ++it) {
            h ^= static_cast<unsigned char>(*it);
            h *= 1099511628211ull;
        }
        out[std::filesystem::relative(e.path(), root).generic_string()] = h;
    }
    return out;
}
