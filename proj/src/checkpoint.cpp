#include "strata/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace strata {

static_assert(std::endian::native == std::endian::little, "blob format assumes a little-endian host");

namespace {

constexpr const char* kFormat = "strata-checkpoint/1";

std::vector<std::pair<std::string, torch::Tensor>> all_tensors(const torch::nn::Module& module)
{
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& item : module.named_parameters(true))
        out.emplace_back(item.key(), item.value());
    for (const auto& item : module.named_buffers(true))
        out.emplace_back(item.key(), item.value());
    return out;
}

torch::Tensor as_float32(const torch::Tensor& t)
{
    return t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
}

std::vector<int64_t> shape_of(const torch::Tensor& t)
{
    return {t.sizes().begin(), t.sizes().end()};
}

} // namespace

std::string sha256_hex(std::string_view bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1
        || EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1
        || EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

std::string parameter_hash(const torch::nn::Module& module)
{
    std::string buf;
    for (const auto& [name, tensor] : all_tensors(module)) {
        const auto t = as_float32(tensor);
        buf += name;
        buf.push_back('\0');
        for (auto s : t.sizes())
            buf += std::to_string(s) + ",";
        buf.append(static_cast<const char*>(t.data_ptr()), static_cast<std::size_t>(t.numel()) * sizeof(float));
    }
    return sha256_hex(buf);
}

void save_checkpoint(const torch::nn::Module& module, const std::filesystem::path& dir,
                     const nlohmann::json& extra)
{
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = extra;
    manifest["format"] = kFormat;
    auto tensors = nlohmann::json::array();
    for (const auto& [name, tensor] : all_tensors(module)) {
        const auto t = as_float32(tensor);
        const std::string file = name + ".bin";
        std::ofstream f(dir / file, std::ios::binary);
        if (!f)
            throw std::runtime_error("cannot write " + (dir / file).string());
        f.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
        tensors.push_back({{"name", name}, {"shape", shape_of(t)}, {"dtype", "float32"}, {"file", file}});
    }
    manifest["tensors"] = tensors;
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

nlohmann::json read_manifest(const std::filesystem::path& dir)
{
    std::ifstream f(dir / "manifest.json");
    if (!f)
        throw std::runtime_error("no checkpoint manifest in " + dir.string());
    auto manifest = nlohmann::json::parse(f);
    if (manifest.value("format", "") != kFormat)
        throw std::runtime_error("unrecognised checkpoint format in " + dir.string());
    return manifest;
}

nlohmann::json load_checkpoint(torch::nn::Module& module, const std::filesystem::path& dir)
{
    auto manifest = read_manifest(dir);
    std::map<std::string, nlohmann::json> entries;
    for (const auto& e : manifest.at("tensors"))
        entries[e.at("name").get<std::string>()] = e;

    torch::NoGradGuard no_grad;
    for (auto& [name, tensor] : all_tensors(module)) {
        auto it = entries.find(name);
        if (it == entries.end())
            throw std::runtime_error("checkpoint " + dir.string() + " lacks tensor " + name);
        const auto shape = it->second.at("shape").get<std::vector<int64_t>>();
        if (shape != shape_of(tensor))
            throw std::runtime_error("shape mismatch for " + name + " in " + dir.string());
        std::ifstream f(dir / it->second.at("file").get<std::string>(), std::ios::binary);
        auto buf = torch::empty(shape, torch::kFloat32);
        f.read(static_cast<char*>(buf.data_ptr()), static_cast<std::streamsize>(buf.numel() * sizeof(float)));
        if (f.gcount() != static_cast<std::streamsize>(buf.numel() * sizeof(float)))
            throw std::runtime_error("truncated blob for " + name);
        tensor.copy_(buf.to(tensor.dtype()));
    }
    return manifest;
}

} // namespace strata
