#include "ssmdg/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace ssmdg::train {

using nlohmann::json;
using diff::Real;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

double get_f64(std::istream& in) {
    double v = 0.0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("checkpoint: params.bin truncated");
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const model::Model& model,
                     const prototypes::PrototypeBank& bank, std::size_t step) {
    std::filesystem::create_directories(dir);
    std::ofstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("checkpoint: cannot write " + (dir / "params.bin").string());

    json params = json::array();
    std::size_t offset = 0;
    for (const auto& p : model.parameters()) {
        params.push_back({{"name", p.name()}, {"shape", p.shape()}, {"offset", offset}});
        for (Real v : p.data()) put_f64(bin, static_cast<double>(v));
        offset += p.size();
    }
    const auto values = bank.flat_values();
    const auto flags = bank.flat_flags();
    for (Real v : values) put_f64(bin, static_cast<double>(v));
    bin.write(reinterpret_cast<const char*>(flags.data()), static_cast<std::streamsize>(flags.size()));

    const auto& cfg = model.config();
    json manifest{
        {"format_version", kCheckpointVersion},
        {"step", step},
        {"model",
         {{"num_modalities", cfg.num_modalities},
          {"input_dims", cfg.input_dims},
          {"feature_dims", cfg.feature_dims},
          {"encoder_hidden", cfg.encoder_hidden},
          {"translator_hidden", cfg.translator_hidden},
          {"num_classes", cfg.num_classes},
          {"init_seed", cfg.init_seed}}},
        {"parameters", params},
        {"bank",
         {{"feature_dims", bank.dims()},
          {"num_classes", bank.num_classes()},
          {"num_domains", bank.num_domains()},
          {"alpha", bank.alpha()},
          {"values_offset", offset},
          {"value_count", values.size()},
          {"flag_count", flags.size()}}},
    };
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("checkpoint: missing manifest.json in " + dir.string());
    const json manifest = json::parse(mf);
    if (manifest.at("format_version").get<int>() != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported format version");
    }
    const auto& m = manifest.at("model");
    model::ModelConfig cfg;
    cfg.num_modalities = m.at("num_modalities").get<std::size_t>();
    cfg.input_dims = m.at("input_dims").get<std::vector<std::size_t>>();
    cfg.feature_dims = m.at("feature_dims").get<std::vector<std::size_t>>();
    cfg.encoder_hidden = m.at("encoder_hidden").get<std::size_t>();
    cfg.translator_hidden = m.at("translator_hidden").get<std::size_t>();
    cfg.num_classes = m.at("num_classes").get<std::size_t>();
    cfg.init_seed = m.at("init_seed").get<std::uint64_t>();
    model::Model model(cfg);

    const auto& b = manifest.at("bank");
    prototypes::PrototypeBank bank(b.at("feature_dims").get<std::vector<std::size_t>>(),
                                   b.at("num_classes").get<std::size_t>(), b.at("num_domains").get<std::size_t>(),
                                   b.at("alpha").get<double>());

    std::ifstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("checkpoint: missing params.bin in " + dir.string());
    for (const auto& entry : manifest.at("parameters")) {
        const auto name = entry.at("name").get<std::string>();
        if (!model.parameters().contains(name)) throw std::runtime_error("checkpoint: unknown parameter " + name);
        auto& p = model.parameters().at(name);
        if (entry.at("shape").get<diff::Shape>() != p.shape()) {
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        }
        for (auto& v : p.mutable_data()) v = static_cast<Real>(get_f64(bin));
    }
    std::vector<Real> values(b.at("value_count").get<std::size_t>());
    for (auto& v : values) v = static_cast<Real>(get_f64(bin));
    std::vector<std::uint8_t> flags(b.at("flag_count").get<std::size_t>());
    bin.read(reinterpret_cast<char*>(flags.data()), static_cast<std::streamsize>(flags.size()));
    if (!bin) throw std::runtime_error("checkpoint: params.bin truncated");
    bank.load_flat(values, flags);
    return {std::move(model), std::move(bank), manifest.at("step").get<std::size_t>()};
}

}  // namespace ssmdg::train
