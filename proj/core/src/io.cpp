#include "star/io.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "star/error.hpp"

namespace star::io {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'T', 'A', 'R', 'A', 'R', 'T', '1'};

bool has_gz_suffix(const std::filesystem::path& path) {
  return path.extension() == ".gz";
}

std::string read_gz(const std::filesystem::path& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) {
    throw IoError("cannot open '" + path.string() + "'");
  }
  std::unique_ptr<gzFile_s, int (*)(gzFile)> guard(file, gzclose);
  std::string out;
  std::array<char, 1 << 16> buf{};
  while (true) {
    const int n = gzread(file, buf.data(), static_cast<unsigned>(buf.size()));
    if (n < 0) {
      int code = 0;
      throw IoError("gzip read failed for '" + path.string() +
                    "': " + gzerror(file, &code));
    }
    if (n == 0) break;
    out.append(buf.data(), static_cast<std::size_t>(n));
  }
  return out;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("file not found: '" + path.string() + "'");
  }
  if (has_gz_suffix(path)) return read_gz(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string canonical_dump(const nlohmann::json& value) {
  // nlohmann::json (not ordered_json) stores objects in std::map, so keys are
  // already sorted.
  return nlohmann::json(value).dump();
}

std::string fingerprint(const nlohmann::json& config) {
  return sha256_hex(canonical_dump(config)).substr(0, 16);
}

void write_artifact(const std::filesystem::path& path, nlohmann::json header,
                    std::span<const std::byte> payload) {
  const std::string_view raw(reinterpret_cast<const char*>(payload.data()), payload.size());
  header["payload_bytes"] = payload.size();
  header["checksum"] = sha256_hex(raw);
  const std::string head = header.dump();

  std::string out;
  out.reserve(kMagic.size() + 8 + head.size() + payload.size());
  out.append(kMagic.data(), kMagic.size());
  put_u64(out, head.size());
  out.append(head);
  out.append(raw);
  write_file(path, out);
}

Artifact read_artifact(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  const std::string where = " in '" + path.string() + "'";
  if (raw.size() < kMagic.size() + 8 ||
      std::memcmp(raw.data(), kMagic.data(), kMagic.size()) != 0) {
    throw IoError("bad artifact magic" + where);
  }
  const std::uint64_t head_len = get_u64(raw.data() + kMagic.size());
  const std::size_t head_at = kMagic.size() + 8;
  if (head_len > raw.size() - head_at) throw IoError("truncated artifact header" + where);

  Artifact art;
  try {
    art.header = nlohmann::json::parse(raw.substr(head_at, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt artifact header" + where + ": " + e.what());
  }
  const std::size_t body_at = head_at + head_len;
  const std::string_view body(raw.data() + body_at, raw.size() - body_at);
  if (body.size() != art.header.value("payload_bytes", std::uint64_t{0})) {
    throw IoError("artifact payload size mismatch" + where);
  }
  if (sha256_hex(body) != art.header.value("checksum", std::string{})) {
    throw IoError("artifact checksum mismatch" + where);
  }
  art.payload.resize(body.size());
  std::memcpy(art.payload.data(), body.data(), body.size());
  return art;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

}  // namespace star::io
