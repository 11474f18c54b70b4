#include "nova/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace nova {

namespace {

void put_u16(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2))
    throw DataError("checkpoint: truncated file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw DataError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void write_f32_payload(std::ostream& out, const float* data, std::size_t n) {
  static_assert(sizeof(float) == 4);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, data + i, 4);
    put_u32(out, bits);
  }
}

void read_f32_payload(std::istream& in, float* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = get_u32(in);
    std::memcpy(data + i, &bits, 4);
  }
}

void write_tensor_record(std::ostream& out, const std::string& name,
                         const Tensor<float>& t) {
  if (name.size() > 0xffff) throw ContractError("tensor name too long");
  put_u16(out, static_cast<std::uint16_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  out.put(static_cast<char>(0));  // dtype f32
  if (t.rank() > 0xff) throw ContractError("tensor rank too large");
  out.put(static_cast<char>(t.rank()));
  for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  write_f32_payload(out, t.data(), t.size());
}

std::pair<std::string, Tensor<float>> read_tensor_record(std::istream& in) {
  std::uint16_t name_len = get_u16(in);
  std::string name(name_len, '\0');
  if (!in.read(name.data(), name_len))
    throw DataError("checkpoint: truncated tensor name");
  int dtype = in.get();
  if (dtype != 0) throw DataError("checkpoint: unsupported dtype");
  int rank = in.get();
  if (rank < 0) throw DataError("checkpoint: truncated tensor header");
  Shape shape(static_cast<std::size_t>(rank));
  for (auto& d : shape) d = get_u32(in);
  Tensor<float> t = Tensor<float>::zeros(shape);
  read_f32_payload(in, t.data(), t.size());
  return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const ParamSet<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot open " + path + " for write");
  out.write("NOVA", 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(config_json.size()));
  out.write(config_json.data(),
            static_cast<std::streamsize>(config_json.size()));
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params)
    write_tensor_record(out, name, tensor);
  if (!out) throw DataError("checkpoint: write failure on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "NOVA", 4) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " +
                    std::to_string(version));
  std::uint32_t cfg_len = get_u32(in);
  Checkpoint ck;
  ck.config_json.resize(cfg_len);
  if (!in.read(ck.config_json.data(), cfg_len))
    throw DataError("checkpoint: truncated config");
  std::uint32_t count = get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, tensor] = read_tensor_record(in);
    ck.tensors.emplace(std::move(name), std::move(tensor));
  }
  return ck;
}

void write_nvt(const std::string& path, const std::string& name,
               const Tensor<float>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("nvt: cannot open " + path + " for write");
  write_tensor_record(out, name, t);
  if (!out) throw DataError("nvt: write failure on " + path);
}

Tensor<float> read_nvt(const std::string& path, std::string* name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("nvt: cannot open " + path);
  auto [n, t] = read_tensor_record(in);
  if (name) *name = n;
  return t;
}

void write_ppm(const std::string& path, const Tensor<float>& frame) {
  if (frame.rank() != 3) throw ShapeError("ppm: [H x W x c] expected");
  std::size_t H = frame.dim(0), W = frame.dim(1), c = frame.dim(2);
  if (c != 1 && c != 3) throw ShapeError("ppm: 1 or 3 channels expected");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("ppm: cannot open " + path + " for write");
  out << "P6\n" << W << " " << H << "\n255\n";
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch) {
        float v = frame.data()[(y * W + x) * c + (c == 3 ? ch : 0)];
        v = std::min(1.0f, std::max(0.0f, v));
        out.put(static_cast<char>(
            static_cast<unsigned char>(std::lround(255.0f * v))));
      }
  if (!out) throw DataError("ppm: write failure on " + path);
}

}  // namespace nova
