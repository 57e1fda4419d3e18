#include "dannet/trainer/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "dannet/core/error.hpp"

namespace dannet::trainer {
namespace fs = std::filesystem;
namespace {

constexpr std::array<char, 8> kMagic = {'D', 'A', 'N', 'N', 'E', 'T', 'C', 'K'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  template <typename T>
  void array(const std::vector<T>& v) {
    pod<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(T)));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, const fs::path& path) : in_(in), path_(path) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    std::string s(length(), '\0');
    in_.read(s.data(), static_cast<std::streamsize>(s.size()));
    check();
    return s;
  }
  template <typename T>
  std::vector<T> array() {
    std::vector<T> v(length());
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
    check();
    return v;
  }

 private:
  std::uint64_t length() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ull << 34)) throw DataError("checkpoint " + path_.string() + " is corrupt");
    return n;
  }
  void check() {
    if (!in_) throw DataError("checkpoint " + path_.string() + " is truncated");
  }
  std::ifstream& in_;
  const fs::path& path_;
};

}  // namespace

void save_checkpoint(const Checkpoint& ck, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    Writer w(out);
    out.write(kMagic.data(), kMagic.size());
    w.pod(Checkpoint::kVersion);
    w.pod<std::uint64_t>(ck.tensors.size());
    for (const auto& [name, t] : ck.tensors) {
      w.str(name);
      const Shape s = t.shape();
      for (int d : {s.n, s.c, s.h, s.w}) w.pod<std::int32_t>(d);
      w.array(t.storage());
    }
    w.pod<std::uint64_t>(ck.integers.size());
    for (const auto& [name, v] : ck.integers) {
      w.str(name);
      w.pod(v);
    }
    w.pod<std::uint64_t>(ck.vectors.size());
    for (const auto& [name, v] : ck.vectors) {
      w.str(name);
      w.array(v);
    }
    w.pod<std::uint64_t>(ck.strings.size());
    for (const auto& [name, v] : ck.strings) {
      w.str(name);
      w.str(v);
    }
    out.flush();
    if (!out) throw DataError("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DataError(path.string() + " is not a checkpoint");
  Reader r(in, path);
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw DataError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  Checkpoint ck;
  for (auto n = r.pod<std::uint64_t>(); n > 0; --n) {
    std::string name = r.str();
    Shape s;
    s.n = r.pod<std::int32_t>();
    s.c = r.pod<std::int32_t>();
    s.h = r.pod<std::int32_t>();
    s.w = r.pod<std::int32_t>();
    ck.tensors.emplace(std::move(name), Tensor(s, r.array<float>()));
  }
  for (auto n = r.pod<std::uint64_t>(); n > 0; --n) {
    std::string name = r.str();
    ck.integers[name] = r.pod<std::int64_t>();
  }
  for (auto n = r.pod<std::uint64_t>(); n > 0; --n) {
    std::string name = r.str();
    ck.vectors[name] = r.array<double>();
  }
  for (auto n = r.pod<std::uint64_t>(); n > 0; --n) {
    std::string name = r.str();
    ck.strings[name] = r.str();
  }
  return ck;
}

void store_buffers(Checkpoint& ck, const std::vector<nn::NamedBuffer>& buffers) {
  for (const auto& b : buffers) ck.tensors[b.name] = *b.tensor;
}

void restore_buffers(const Checkpoint& ck, const std::vector<nn::NamedBuffer>& buffers) {
  for (const auto& b : buffers) {
    auto it = ck.tensors.find(b.name);
    if (it == ck.tensors.end()) throw DataError("checkpoint lacks '" + b.name + "'");
    if (!(it->second.shape() == b.tensor->shape())) {
      throw DataError("checkpoint entry '" + b.name + "' has shape " + it->second.shape().str() +
                      ", expected " + b.tensor->shape().str());
    }
    *b.tensor = it->second;
  }
}

void store_module(Checkpoint& ck, nn::Module& m) {
  for (const auto& p : m.parameters()) ck.tensors[p.name] = p.var.value();
  store_buffers(ck, m.buffers());
}

void restore_module(const Checkpoint& ck, nn::Module& m) {
  std::vector<nn::NamedBuffer> slots;
  for (const auto& p : m.parameters()) slots.push_back({p.name, &p.var.mutable_value()});
  restore_buffers(ck, slots);
  restore_buffers(ck, m.buffers());
}

}  // namespace dannet::trainer
