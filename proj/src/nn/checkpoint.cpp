#include "ocskill/nn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "ocskill/errors.hpp"

namespace ocskill::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

bool get_u32(std::istream& in, std::uint32_t& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return static_cast<bool>(in);
}

std::uint32_t need_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!get_u32(in, v)) throw IoError(std::string("truncated checkpoint while reading ") + what);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParameterSet& params) {
  out.write(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  for (const auto& [name, p] : params.entries()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (int d : p.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing checkpoint");
}

ParameterSet read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) throw IoError("not an NNC1 checkpoint");
  const std::uint32_t version = need_u32(in, "version");
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));

  ParameterSet params;
  std::uint32_t name_len = 0;
  while (get_u32(in, name_len)) {
    if (name_len > (1u << 16)) throw IoError("implausible parameter name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rank = need_u32(in, "rank");
    if (rank > 8) throw IoError("implausible tensor rank in checkpoint");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(need_u32(in, "dims"));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw IoError("truncated payload for parameter " + name);
    params.add(name, std::move(t));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("missing checkpoint: " + path.string());
  return read_checkpoint(in);
}

void merge_prefixed(ParameterSet& dst, const ParameterSet& src, const std::string& prefix) {
  for (const auto& [name, p] : src.entries()) dst.add(prefix + name, p.value);
}

ParameterSet extract_prefixed(const ParameterSet& src, const std::string& prefix) {
  ParameterSet out;
  for (const auto& [name, p] : src.entries()) {
    if (name.rfind(prefix, 0) == 0) out.add(name.substr(prefix.size()), p.value);
  }
  return out;
}

}  // namespace ocskill::nn
