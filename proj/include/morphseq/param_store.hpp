#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "morphseq/tensor.hpp"

namespace morphseq {

// Named trainable tensors with insertion-ordered iteration (checkpoint
// determinism). Gradient buffers are allocated on first use; a parameter
// that never received a gradient keeps an empty buffer, which adam_update
// reports as an error.
class ParamStore {
   public:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor grad;  // empty until first touched
    };

    Tensor& add(const std::string& name, Tensor init);
    bool contains(const std::string& name) const;
    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    // allocates a zero gradient buffer on first access
    Tensor& grad(const std::string& name);
    bool has_grad(const std::string& name) const;

    void zero_grads();
    std::size_t size() const { return entries_.size(); }
    std::size_t total_values() const;

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    // Checkpoint format: magic "MSQ1", then per parameter in store order:
    // u64 name length, name bytes, u64 rank, u64 dims, f64 values, all
    // little-endian. Round-trips bit-exactly.
    void save(const std::string& path) const;
    static ParamStore load(const std::string& path);

   private:
    Entry& find(const std::string& name);
    const Entry& find(const std::string& name) const;

    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace morphseq
