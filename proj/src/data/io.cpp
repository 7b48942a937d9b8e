#include "ssmdg/data/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "ssmdg/util/strict_json.hpp"

namespace ssmdg::data {

void to_json(nlohmann::json& j, const TaskSpec& spec) {
    j = nlohmann::json{
        {"num_modalities", spec.num_modalities},
        {"num_classes", spec.num_classes},
        {"num_domains", spec.num_domains},
        {"input_dims", spec.input_dims},
        {"latent_dim", spec.latent_dim},
        {"class_separation", spec.class_separation},
        {"domain_shift_scale", spec.domain_shift_scale},
        {"modality_correlation", spec.modality_correlation},
        {"noise_sigma", spec.noise_sigma},
        {"seed", spec.seed},
    };
}

void from_json(const nlohmann::json& j, TaskSpec& spec) {
    std::vector<std::string> errors;
    util::JsonReader r(j, "$", errors);
    r.field("num_modalities", spec.num_modalities);
    r.field("num_classes", spec.num_classes);
    r.field("num_domains", spec.num_domains);
    r.field("input_dims", spec.input_dims);
    r.field("latent_dim", spec.latent_dim);
    r.field("class_separation", spec.class_separation);
    r.field("domain_shift_scale", spec.domain_shift_scale);
    r.field("modality_correlation", spec.modality_correlation);
    r.field("noise_sigma", spec.noise_sigma);
    r.field("seed", spec.seed);
    r.finish();
    if (!errors.empty()) throw util::SchemaError(std::move(errors));
}

// Friend of DomainDataset so the importer can restore hidden labels.
struct DatasetFileAccess {
    static const std::vector<std::size_t>& hidden(const DomainDataset& d) { return d.hidden_labels_; }
};

namespace {

constexpr std::array<char, 8> kMagic{'S', 'S', 'M', 'D', 'G', 'D', 'S', '1'};
constexpr std::uint32_t kVersion = 1;

class LeWriter {
public:
    explicit LeWriter(std::ostream& out) : out_(out) {}

    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        std::array<unsigned char, sizeof(T)> bytes;
        std::memcpy(bytes.data(), &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
        out_.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
    }

private:
    std::ostream& out_;
};

class LeReader {
public:
    explicit LeReader(std::istream& in) : in_(in) {}

    template <typename T>
    T get() {
        std::array<unsigned char, sizeof(T)> bytes;
        in_.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
        if (!in_) throw std::runtime_error("dataset file truncated");
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
        T value;
        std::memcpy(&value, bytes.data(), sizeof(T));
        return value;
    }

private:
    std::istream& in_;
};

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
    auto p = stem;
    p += ext;
    return p;
}

}  // namespace

void export_datasets(const std::filesystem::path& stem, const TaskSpec& spec,
                     const std::vector<DomainDataset>& domains) {
    std::ofstream bin(with_ext(stem, ".bin"), std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open " + with_ext(stem, ".bin").string());
    LeWriter w(bin);
    bin.write(kMagic.data(), kMagic.size());
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.num_modalities));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.num_classes));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(domains.size()));
    for (auto d : spec.input_dims) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (const auto& ds : domains) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.n_labeled()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.n_unlabeled()));
    }
    auto write_sample = [&](const Sample& s) {
        w.put<std::uint64_t>(s.id);
        for (const auto& x : s.inputs)
            for (double v : x) w.put<double>(v);
    };
    for (const auto& ds : domains) {
        for (const auto& s : ds.labeled()) write_sample(s);
        for (const auto& s : ds.unlabeled()) write_sample(s);
        for (auto y : ds.labels()) w.put<std::int32_t>(static_cast<std::int32_t>(y));
        for (auto y : DatasetFileAccess::hidden(ds)) w.put<std::int32_t>(static_cast<std::int32_t>(y));
    }
    if (!bin) throw std::runtime_error("write failed for " + with_ext(stem, ".bin").string());

    std::ofstream side(with_ext(stem, ".json"));
    side << nlohmann::json(spec).dump(2) << '\n';
}

DatasetBundle import_datasets(const std::filesystem::path& stem) {
    DatasetBundle bundle;
    {
        std::ifstream side(with_ext(stem, ".json"));
        if (!side) throw std::runtime_error("cannot open " + with_ext(stem, ".json").string());
        bundle.spec = nlohmann::json::parse(side).get<TaskSpec>();
    }
    std::ifstream bin(with_ext(stem, ".bin"), std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open " + with_ext(stem, ".bin").string());
    std::array<char, 8> magic{};
    bin.read(magic.data(), magic.size());
    if (magic != kMagic) throw std::runtime_error("not a dataset file (bad magic)");
    LeReader r(bin);
    if (r.get<std::uint32_t>() != kVersion) throw std::runtime_error("unsupported dataset format version");
    const auto m = r.get<std::uint32_t>();
    const auto c = r.get<std::uint32_t>();
    const auto k = r.get<std::uint32_t>();
    if (m != bundle.spec.num_modalities || c != bundle.spec.num_classes) {
        throw std::runtime_error("dataset header disagrees with JSON sidecar");
    }
    std::vector<std::size_t> dims(m);
    for (auto& d : dims) d = r.get<std::uint32_t>();
    if (dims != bundle.spec.input_dims) throw std::runtime_error("dataset dims disagree with JSON sidecar");
    std::vector<std::pair<std::size_t, std::size_t>> counts(k);
    for (auto& [nl, nu] : counts) {
        nl = r.get<std::uint32_t>();
        nu = r.get<std::uint32_t>();
    }
    auto read_sample = [&]() {
        Sample s;
        s.id = r.get<std::uint64_t>();
        s.domain = static_cast<std::size_t>(s.id >> 32);
        s.inputs.resize(m);
        for (std::size_t mm = 0; mm < m; ++mm) {
            s.inputs[mm].resize(dims[mm]);
            for (auto& v : s.inputs[mm]) v = r.get<double>();
        }
        return s;
    };
    for (std::uint32_t kk = 0; kk < k; ++kk) {
        const auto [nl, nu] = counts[kk];
        std::vector<Sample> labeled, unlabeled;
        std::vector<std::size_t> labels, hidden;
        for (std::size_t i = 0; i < nl; ++i) labeled.push_back(read_sample());
        for (std::size_t i = 0; i < nu; ++i) unlabeled.push_back(read_sample());
        for (std::size_t i = 0; i < nl; ++i) labels.push_back(static_cast<std::size_t>(r.get<std::int32_t>()));
        for (std::size_t i = 0; i < nu; ++i) hidden.push_back(static_cast<std::size_t>(r.get<std::int32_t>()));
        const std::size_t domain = labeled.empty() ? (unlabeled.empty() ? kk : unlabeled.front().domain)
                                                   : labeled.front().domain;
        bundle.domains.emplace_back(domain, std::move(labeled), std::move(labels), std::move(unlabeled),
                                    std::move(hidden));
    }
    return bundle;
}

}  // namespace ssmdg::data
