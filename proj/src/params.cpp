#include "recsm/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace recsm {

namespace {
constexpr char kMagic[] = "RECSMCKPT1";

template <typename T>
void write_pod(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("checkpoint: truncated file");
    return v;
}
}  // namespace

int ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    ParamEntry e;
    e.name = name;
    e.grad = Tensor::zeros(init.shape());
    e.adam_m = Tensor::zeros(init.shape());
    e.adam_v = Tensor::zeros(init.shape());
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    const int id = static_cast<int>(entries_.size()) - 1;
    index_[name] = id;
    return id;
}

int ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

std::int64_t ParamStore::scalar_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& e : entries_) e.grad.fill(0.0);
}

Graph::Var Binder::operator()(int pid) {
    auto it = cache_.find(pid);
    if (it != cache_.end()) return it->second;
    ParamEntry& e = ps_.entry(pid);
    Graph::Var v = g_.param(e.value, &e.grad);
    cache_[pid] = v;
    return v;
}

Tensor he_normal(std::mt19937_64& rng, std::vector<int> shape, int fan_in) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / std::max(1, fan_in)));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

void save_params(const std::string& path, const ParamStore& store, const std::string& manifest_json) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open for writing: " + path);
    os.write(kMagic, sizeof(kMagic) - 1);
    write_pod<std::uint64_t>(os, manifest_json.size());
    os.write(manifest_json.data(), static_cast<std::streamsize>(manifest_json.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(store.count()));
    for (int i = 0; i < store.count(); ++i) {
        const ParamEntry& e = store.entry(i);
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(e.value.rank()));
        for (int d = 0; d < e.value.rank(); ++d) write_pod<std::int32_t>(os, e.value.dim(d));
        for (std::int64_t j = 0; j < e.value.size(); ++j)
            write_pod<float>(os, static_cast<float>(e.value[j]));
    }
    if (!os) throw IoError("checkpoint: write failed: " + path);
}

std::string load_params(const std::string& path, ParamStore& store) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open: " + path);
    char magic[sizeof(kMagic) - 1];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw FormatError("checkpoint: bad magic");
    const auto mlen = read_pod<std::uint64_t>(is);
    std::string manifest(mlen, '\0');
    is.read(manifest.data(), static_cast<std::streamsize>(mlen));
    const auto n = read_pod<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto nlen = read_pod<std::uint32_t>(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        const auto rank = read_pod<std::uint32_t>(is);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = read_pod<std::int32_t>(is);
        const std::int64_t count = shape_numel(shape);
        const int id = store.find(name);
        if (id < 0) throw FormatError("checkpoint: parameter not in model: " + name);
        ParamEntry& e = store.entry(id);
        if (e.value.shape() != shape)
            throw FormatError("checkpoint: shape mismatch for " + name);
        for (std::int64_t j = 0; j < count; ++j) e.value[j] = read_pod<float>(is);
    }
    return manifest;
}

}  // namespace recsm
