#include "mfpn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mfpn/common.hpp"

namespace mfpn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace {

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& is, const std::string& path) {
  uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
    fail_data("checkpoint " + path + ": truncated");
  return v;
}
uint64_t read_u64(std::istream& is, const std::string& path) {
  uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
    fail_data("checkpoint " + path + ": truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const TensorMap& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail_data("checkpoint " + path + ": cannot open for writing");
  os.write("MFPN", 4);
  write_u32(os, kCheckpointVersion);
  for (const auto& [name, t] : entries) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(t.rank()));
    for (size_t d : t.shape()) write_u64(os, d);
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) fail_data("checkpoint " + path + ": write failed");
}

TensorMap load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail_data("checkpoint " + path + ": cannot open");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "MFPN", 4) != 0)
    fail_data("checkpoint " + path + ": bad magic");
  const uint32_t version = read_u32(is, path);
  if (version != kCheckpointVersion)
    fail_data("checkpoint " + path + ": version " + std::to_string(version) +
              ", expected " + std::to_string(kCheckpointVersion));
  TensorMap out;
  while (true) {
    uint32_t name_len = 0;
    if (!is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len))) break;  // clean EOF
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) fail_data("checkpoint " + path + ": truncated name");
    const uint32_t rank = read_u32(is, path);
    Shape shape(rank);
    size_t count = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      shape[i] = read_u64(is, path);
      count *= shape[i];
    }
    std::vector<double> values(count);
    if (!is.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(count * sizeof(double))))
      fail_data("checkpoint " + path + ": truncated payload for entry " + name);
    out.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

}  // namespace mfpn
