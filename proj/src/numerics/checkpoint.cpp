#include "mcm/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace mcm {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'F', 'M', 'W', '1'};

void put_u32(std::vector<char>& out, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

  void take(void* dst, size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw std::runtime_error("checkpoint truncated at byte offset " +
                               std::to_string(pos_));
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  uint32_t u32() {
    uint32_t v;
    take(&v, 4);
    return v;
  }
  size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<char>& bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::vector<char> encode_checkpoint(const std::vector<NamedTensor>& params) {
  std::vector<char> out(kMagic, kMagic + 4);
  put_u32(out, static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(out, static_cast<uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put_u32(out, static_cast<uint32_t>(p.tensor.rank()));
    for (int64_t d : p.tensor.shape()) put_u32(out, static_cast<uint32_t>(d));
    const char* raw = reinterpret_cast<const char*>(p.tensor.ptr());
    out.insert(out.end(), raw, raw + sizeof(double) * p.tensor.numel());
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<char>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic at byte offset 0");
  }
  const uint32_t count = r.u32();
  std::vector<NamedTensor> params;
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor p;
    p.name.resize(r.u32());
    r.take(p.name.data(), p.name.size());
    const uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) {
      const size_t at = r.pos();
      d = r.u32();
      if (d == 0) {
        throw std::runtime_error("checkpoint: zero dimension at byte offset " +
                                 std::to_string(at));
      }
    }
    p.tensor = Tensor(shape);
    r.take(p.tensor.ptr(), sizeof(double) * p.tensor.numel());
    params.push_back(std::move(p));
  }
  if (!r.done()) {
    throw std::runtime_error("checkpoint: trailing bytes at offset " +
                             std::to_string(r.pos()));
  }
  return params;
}

std::vector<NamedTensor> snapshot(const ParameterStore& store) {
  std::vector<NamedTensor> out;
  for (const auto& p : store.items()) out.push_back({p.name, p.var.value()});
  return out;
}

void save_checkpoint(const std::filesystem::path& path,
                     const ParameterStore& store) {
  const auto bytes = encode_checkpoint(snapshot(store));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void assign_parameters(const std::vector<NamedTensor>& values,
                       ParameterStore& store) {
  for (auto& p : store.items()) {
    const NamedTensor* found = nullptr;
    for (const auto& v : values) {
      if (v.name == p.name) found = &v;
    }
    if (found == nullptr) {
      throw std::runtime_error("checkpoint lacks parameter '" + p.name + "'");
    }
    if (found->tensor.shape() != p.var.shape()) {
      throw std::runtime_error("checkpoint parameter '" + p.name + "' has shape " +
                               shape_to_string(found->tensor.shape()) +
                               ", network expects " +
                               shape_to_string(p.var.shape()));
    }
    p.var.mutable_value() = found->tensor;
  }
}

void load_checkpoint(const std::filesystem::path& path, ParameterStore& store) {
  assign_parameters(read_checkpoint(path), store);
}

}  // namespace mcm
