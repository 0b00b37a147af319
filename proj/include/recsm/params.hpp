#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "recsm/graph.hpp"
#include "recsm/tensor.hpp"

namespace recsm {

struct ParamEntry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
};

// Flat registry of named parameter tensors. Modules hold integer ids;
// shared modules (DOM, backbone for left/right) hold the same ids.
class ParamStore {
public:
    int add(const std::string& name, Tensor init);
    int find(const std::string& name) const;  // -1 if absent

    ParamEntry& entry(int id) { return entries_[static_cast<size_t>(id)]; }
    const ParamEntry& entry(int id) const { return entries_[static_cast<size_t>(id)]; }
    int count() const { return static_cast<int>(entries_.size()); }

    std::int64_t scalar_count() const;
    void zero_grads();

private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, int> index_;
};

// Caches one graph leaf per parameter so shared weights bind to a single
// node and gradient paths sum there.
class Binder {
public:
    Binder(Graph& g, ParamStore& ps) : g_(g), ps_(ps) {}
    Graph::Var operator()(int pid);
    ParamStore& store() { return ps_; }
    Graph& graph() { return g_; }

private:
    Graph& g_;
    ParamStore& ps_;
    std::unordered_map<int, Graph::Var> cache_;
};

// He-normal initialization for convolution kernels; zero biases.
Tensor he_normal(std::mt19937_64& rng, std::vector<int> shape, int fan_in);

// Checkpoint: magic, JSON manifest, then per parameter the hierarchical
// name, shape and a little-endian float32 blob.
void save_params(const std::string& path, const ParamStore& store, const std::string& manifest_json);
std::string load_params(const std::string& path, ParamStore& store);  // returns the manifest

}  // namespace recsm
