#include "srl/checkpoint.hpp"

#include <fstream>

#include "srl/binio.hpp"

namespace srl::checkpoint {

namespace {
constexpr char kMagic[] = "SRLC1";
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save(const std::string& path, const ad::ParameterSet& params, const std::string& digest) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 5);
  binio::write_u32(os, kVersion);
  binio::write_string(os, digest);
  binio::write_u64(os, params.size());
  std::uint64_t offset = 0;
  for (const ad::Parameter& p : params) {
    binio::write_string(os, p.name);
    binio::write_u32(os, static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t d : p.shape) binio::write_u64(os, d);
    binio::write_u64(os, offset);
    offset += p.size() * sizeof(double);
  }
  for (const ad::Parameter& p : params) {
    for (double x : *p.value) binio::write_f64(os, x);
  }
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

Loaded load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  binio::expect_magic(is, kMagic, "checkpoint " + path);
  const std::uint32_t version = binio::read_u32(is);
  if (version != kVersion) {
    throw IoError("checkpoint " + path + ": unsupported version " + std::to_string(version));
  }
  Loaded out;
  out.digest = binio::read_string(is);
  const std::uint64_t count = binio::read_u64(is);
  out.params.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    ad::Parameter p;
    p.name = binio::read_string(is);
    const std::uint32_t ndim = binio::read_u32(is);
    p.shape.resize(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) p.shape[d] = binio::read_u64(is);
    binio::read_u64(is);  // offset, implied by manifest order
    const std::size_t n = ad::shape_size(p.shape);
    p.value = std::make_shared<ad::Buffer>(n, 0.0);
    p.grad = std::make_shared<ad::Buffer>(n, 0.0);
    out.params.push_back(std::move(p));
  }
  for (ad::Parameter& p : out.params) {
    for (double& x : *p.value) x = binio::read_f64(is);
  }
  if (!is) throw IoError("checkpoint " + path + ": truncated");
  return out;
}

void restore_into(ad::ParameterSet& params, const Loaded& loaded) {
  if (!ad::manifest_matches(params, loaded.params)) {
    throw ShapeError("checkpoint restore: parameter manifest mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    *params[i].value = *loaded.params[i].value;
    params[i].zero_grad();
  }
}

}  // namespace srl::checkpoint
