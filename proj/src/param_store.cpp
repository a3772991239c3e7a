#include "morphseq/param_store.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace morphseq {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, std::move(init), Tensor{}});
    return entries_.back().value;
}

bool ParamStore::contains(const std::string& name) const {
    return index_.count(name) != 0;
}

ParamStore::Entry& ParamStore::find(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    return entries_[it->second];
}

const ParamStore::Entry& ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    return entries_[it->second];
}

Tensor& ParamStore::value(const std::string& name) {
    return find(name).value;
}

const Tensor& ParamStore::value(const std::string& name) const {
    return find(name).value;
}

Tensor& ParamStore::grad(const std::string& name) {
    Entry& e = find(name);
    if (e.grad.empty()) e.grad = Tensor::zeros(e.value.shape);
    return e.grad;
}

bool ParamStore::has_grad(const std::string& name) const {
    return !find(name).grad.empty();
}

void ParamStore::zero_grads() {
    for (Entry& e : entries_) {
        if (!e.grad.empty()) e.grad.fill(0.0);
    }
}

std::size_t ParamStore::total_values() const {
    std::size_t n = 0;
    for (const Entry& e : entries_) n += e.value.numel();
    return n;
}

namespace {

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(os, bits);
}

double read_f64(std::istream& is) {
    std::uint64_t bits = read_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

constexpr char kMagic[4] = {'M', 'S', 'Q', '1'};

}  // namespace

void ParamStore::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    for (const Entry& e : entries_) {
        write_u64(os, e.name.size());
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_u64(os, e.value.rank());
        for (std::size_t d : e.value.shape) write_u64(os, d);
        for (double v : e.value.data) write_f64(os, v);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

ParamStore ParamStore::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("checkpoint: '" + path + "' is not an MSQ1 file");
    }
    ParamStore ps;
    while (true) {
        is.peek();
        if (is.eof()) break;
        const std::uint64_t name_len = read_u64(is);
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        const std::uint64_t rank = read_u64(is);
        Tensor t;
        t.shape.resize(rank);
        std::size_t numel = 1;
        for (std::uint64_t i = 0; i < rank; ++i) {
            t.shape[i] = static_cast<std::size_t>(read_u64(is));
            numel *= t.shape[i];
        }
        t.data.resize(numel);
        for (std::size_t i = 0; i < numel; ++i) t.data[i] = read_f64(is);
        if (!is) throw std::runtime_error("checkpoint: truncated file");
        ps.add(name, std::move(t));
    }
    return ps;
}

}  // namespace morphseq
