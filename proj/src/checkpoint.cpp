#include "marksweep/checkpoint.hpp"

#include <openssl/sha.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "marksweep/error.hpp"

namespace marksweep {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'W', 'E', 'E', 'P', '0', '1'};
constexpr std::size_t kHashBytes = SHA256_DIGEST_LENGTH;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_floats(std::string& out, const std::vector<float>& v) {
  const std::size_t off = out.size();
  out.resize(off + v.size() * sizeof(float));
  std::memcpy(out.data() + off, v.data(), v.size() * sizeof(float));
}

std::vector<float> get_floats(const std::string& buf, std::size_t& pos, std::size_t count) {
  require(pos + count * sizeof(float) <= buf.size(), ErrorCode::kCheckpoint, "checkpoint truncated in data block");
  std::vector<float> v(count);
  std::memcpy(v.data(), buf.data() + pos, count * sizeof(float));
  pos += count * sizeof(float);
  return v;
}

std::string hex(const unsigned char* d, std::size_t n) {
  static const char* k = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    s.push_back(k[d[i] >> 4]);
    s.push_back(k[d[i] & 15]);
  }
  return s;
}

}  // namespace

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char md[kHashBytes];
  SHA256(static_cast<const unsigned char*>(data), size, md);
  return hex(md, kHashBytes);
}

std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kFileNotFound, "cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(buf.data(), buf.size());
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::size_t n = ckpt.params.values.size();
  require(n == ckpt.params.manifest.total, ErrorCode::kCheckpoint, "parameter vector does not match manifest");
  const bool has_optim = !ckpt.optim.m.empty();
  require(!has_optim || (ckpt.optim.m.size() == n && ckpt.optim.v.size() == n), ErrorCode::kCheckpoint,
          "optimizer state does not match parameter count");
  nlohmann::json manifest = {
      {"format", "MSWEEP01"},
      {"arch", ckpt.params.arch.to_json()},
      {"params", ckpt.params.manifest.to_json()},
      {"param_count", n},
      {"optim",
       {{"present", has_optim},
        {"step", ckpt.optim.step},
        {"beta1", ckpt.optim.beta1},
        {"beta2", ckpt.optim.beta2},
        {"eps", ckpt.optim.eps}}},
      {"step", ckpt.step},
      {"config", ckpt.config},
      {"metrics", ckpt.metrics}};
  const std::string text = manifest.dump();
  std::string buf(kMagic, sizeof kMagic);
  const std::uint32_t len = static_cast<std::uint32_t>(text.size());
  buf.append(reinterpret_cast<const char*>(&len), 4);
  buf += text;
  put_floats(buf, ckpt.params.values);
  if (has_optim) {
    put_floats(buf, ckpt.optim.m);
    put_floats(buf, ckpt.optim.v);
  }
  unsigned char md[kHashBytes];
  SHA256(reinterpret_cast<const unsigned char*>(buf.data()), buf.size(), md);
  buf.append(reinterpret_cast<const char*>(md), kHashBytes);

  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + tmp);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  require(!ec, ErrorCode::kIo, "cannot move checkpoint into place at " + path);
}

Checkpoint load_checkpoint(const std::string& path, const Architecture* expected) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kFileNotFound, "checkpoint not found: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(buf.size() >= sizeof kMagic + 4 + kHashBytes, ErrorCode::kCheckpoint, "checkpoint truncated: " + path);
  require(std::memcmp(buf.data(), kMagic, sizeof kMagic) == 0, ErrorCode::kCheckpoint,
          "not a checkpoint (bad magic): " + path);
  const std::size_t body = buf.size() - kHashBytes;
  unsigned char md[kHashBytes];
  SHA256(reinterpret_cast<const unsigned char*>(buf.data()), body, md);
  require(std::memcmp(md, buf.data() + body, kHashBytes) == 0, ErrorCode::kCheckpoint,
          "checkpoint integrity hash mismatch: " + path);

  std::uint32_t len = 0;
  std::memcpy(&len, buf.data() + sizeof kMagic, 4);
  std::size_t pos = sizeof kMagic + 4;
  require(pos + len <= body, ErrorCode::kCheckpoint, "checkpoint manifest length exceeds file");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                                     buf.begin() + static_cast<std::ptrdiff_t>(pos + len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCheckpoint, std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  pos += len;

  Checkpoint ck;
  try {
    Architecture arch = Architecture::from_json(manifest.at("arch"));
    if (expected && !(arch == *expected))
      fail(ErrorCode::kCheckpoint, "checkpoint architecture " + arch.to_json().dump() +
                                       " does not match model architecture " + expected->to_json().dump());
    ck.params.arch = arch;
    ck.params.manifest = build_manifest(arch);
    require(manifest.at("params") == ck.params.manifest.to_json(), ErrorCode::kCheckpoint,
            "checkpoint parameter manifest does not match its architecture");
    const std::size_t n = manifest.at("param_count").get<std::size_t>();
    require(n == ck.params.manifest.total, ErrorCode::kCheckpoint, "checkpoint parameter count mismatch");
    const auto& opt = manifest.at("optim");
    const bool has_optim = opt.at("present").get<bool>();
    const std::size_t blocks = has_optim ? 3 : 1;
    require(body - pos == blocks * n * sizeof(float), ErrorCode::kCheckpoint,
            "checkpoint data block length does not match manifest");
    ck.params.values = get_floats(buf, pos, n);
    ck.optim.beta1 = opt.at("beta1").get<double>();
    ck.optim.beta2 = opt.at("beta2").get<double>();
    ck.optim.eps = opt.at("eps").get<double>();
    ck.optim.step = opt.at("step").get<std::int64_t>();
    if (has_optim) {
      ck.optim.m = get_floats(buf, pos, n);
      ck.optim.v = get_floats(buf, pos, n);
    } else {
      ck.optim.m.clear();
      ck.optim.v.clear();
    }
    ck.step = manifest.at("step").get<std::int64_t>();
    ck.config = manifest.at("config");
    ck.metrics = manifest.at("metrics");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCheckpoint, std::string("checkpoint manifest malformed: ") + e.what());
  }
  return ck;
}

}  // namespace marksweep
