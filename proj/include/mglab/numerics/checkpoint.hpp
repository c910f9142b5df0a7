#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mglab/numerics/mt1.hpp"
#include "mglab/numerics/params.hpp"

namespace mglab {

// A parameter directory holds one MT1 file per tensor plus manifest.json
// recording names, dims, trainable flags and any caller metadata.

inline std::filesystem::path param_file(const std::filesystem::path& dir, const std::string& name)
{
    return dir / (name + ".mt1");
}

template <typename T>
void save_params(const std::filesystem::path& dir, const ParamSet<T>& params, const nlohmann::json& meta = {})
{
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "mglab-params/1";
    manifest["meta"] = meta.is_null() ? nlohmann::json::object() : meta;
    auto& list = manifest["tensors"] = nlohmann::json::array();
    for (const auto& [name, e] : params.entries()) {
        mt1::save(param_file(dir, name), e.value);
        list.push_back({{"name", name}, {"dims", e.value.dims()}, {"trainable", e.trainable}});
    }
    std::ofstream f(dir / "manifest.json");
    if (!f) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    f << manifest.dump(2) << '\n';
}

inline nlohmann::json read_manifest(const std::filesystem::path& dir)
{
    std::ifstream f(dir / "manifest.json");
    if (!f) throw std::runtime_error("no checkpoint manifest in " + dir.string());
    auto j = nlohmann::json::parse(f);
    if (j.value("format", "") != "mglab-params/1")
        throw std::runtime_error("unrecognized checkpoint format in " + dir.string());
    return j;
}

template <typename T>
ParamSet<T> load_params(const std::filesystem::path& dir)
{
    auto manifest = read_manifest(dir);
    ParamSet<T> p;
    for (const auto& t : manifest.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        auto value = mt1::load<T>(param_file(dir, name));
        if (value.dims() != t.at("dims").get<Dims>())
            throw std::runtime_error("checkpoint tensor '" + name + "' has dims " + dims_string(value.dims())
                                     + ", manifest says otherwise");
        p.add(name, std::move(value), t.at("trainable").get<bool>());
    }
    return p;
}

}  // namespace mglab
