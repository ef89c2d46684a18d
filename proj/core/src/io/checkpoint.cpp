#include "mas/io/checkpoint.hpp"

#include <fstream>

#include "mas/io/binary.hpp"

namespace mas::io {

namespace {

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const char* what) {
  const auto n = get_u32(is, what);
  if (n > (1u << 24)) throw FormatError(std::string("checkpoint: implausible string length in ") + what);
  std::string s(n, '\0');
  read_exact(is, s.data(), n, what);
  return s;
}

Metadata read_header(std::istream& is) {
  expect_magic(is, "MASC", "checkpoint");
  const auto version = get_u32(is, "checkpoint version");
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Metadata meta;
  const auto n = get_u32(is, "checkpoint metadata count");
  for (std::uint32_t i = 0; i < n; ++i) {
    auto key = get_string(is, "metadata key");
    meta[key] = get_string(is, "metadata value");
  }
  return meta;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Metadata& meta, const nn::ParamStore& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os.write("MASC", 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_string(os, k);
    put_string(os, v);
  }
  put_u32(os, static_cast<std::uint32_t>(params.params().size()));
  for (const auto& p : params.params()) {
    put_string(os, p.name);
    put_u32(os, static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto e : p.tensor.shape()) put_u64(os, e);
    for (double v : p.tensor.values()) put_f64(os, v);
  }
  if (!os) throw FormatError("checkpoint: write failed for " + path.string());
}

Metadata read_checkpoint_metadata(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  return read_header(is);
}

Metadata load_checkpoint(const std::filesystem::path& path, nn::ParamStore& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  Metadata meta = read_header(is);
  const auto n = get_u32(is, "blob count");
  if (n != params.params().size()) {
    throw FormatError("checkpoint/config mismatch: file has " + std::to_string(n) + " parameters, model expects " +
                      std::to_string(params.params().size()));
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = get_string(is, "blob name");
    if (!params.contains(name)) throw FormatError("checkpoint/config mismatch: unexpected parameter '" + name + "'");
    auto tensor = params.get(name);
    const auto rank = get_u32(is, "blob rank");
    ndgrad::Shape shape(rank);
    for (auto& e : shape) e = get_u64(is, "blob extent");
    if (shape != tensor.shape()) {
      throw FormatError("checkpoint/config mismatch: '" + name + "' has shape " + ndgrad::to_string(shape) +
                        ", model expects " + ndgrad::to_string(tensor.shape()));
    }
    for (auto& v : tensor.mutable_values()) v = get_f64(is, "blob values");
  }
  return meta;
}

}  // namespace mas::io
