#include "ctxrec/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ctxrec/error.hpp"

namespace ctxrec {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'X', 'R', 'C', 'K', 'P', 'T'};

std::uint32_t crc32_of(const char* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffu));
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string get_string(std::uint64_t length) {
    need(length);
    std::string s = bytes_.substr(pos_, length);
    pos_ += length;
    return s;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > remaining()) {
      throw DataError("checkpoint is truncated");
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, checkpoint.version);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.kind.size()));
  out += checkpoint.kind;
  put_le<std::uint64_t>(out, checkpoint.config_json.size());
  out += checkpoint.config_json;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& t : checkpoint.tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_le<std::uint64_t>(out, t.value.rows());
    put_le<std::uint64_t>(out, t.value.cols());
    for (double v : t.value.values()) {
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  put_le<std::uint32_t>(out, crc32_of(out.data(), out.size()));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  const std::size_t body = bytes.size() - 4;
  Reader trailer(bytes);
  (void)trailer.get_string(body);
  const auto stored = trailer.get<std::uint32_t>();
  if (stored != crc32_of(bytes.data(), body)) {
    throw DataError("checkpoint checksum mismatch");
  }

  const std::string payload = bytes.substr(0, body);
  Reader in(payload);
  (void)in.get_string(sizeof(kMagic));
  Checkpoint ck;
  ck.version = in.get<std::uint32_t>();
  if (ck.version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(ck.version));
  }
  ck.kind = in.get_string(in.get<std::uint32_t>());
  ck.config_json = in.get_string(in.get<std::uint64_t>());
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = in.get_string(in.get<std::uint32_t>());
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    if (cols != 0 && rows > in.remaining() / 8 / cols) {
      throw DataError("checkpoint is truncated");
    }
    Vector values(rows * cols);
    for (double& v : values) {
      v = std::bit_cast<double>(in.get<std::uint64_t>());
    }
    t.value = Matrix(rows, cols, std::move(values));
    ck.tensors.push_back(std::move(t));
  }
  if (in.remaining() != 0) {
    throw DataError("trailing bytes after checkpoint tensors");
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot write checkpoint '" + path.string() + "'");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw DataError("failed writing checkpoint '" + path.string() + "'");
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open checkpoint '" + path.string() + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

std::uint32_t checkpoint_checksum(const Checkpoint& checkpoint) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::uint32_t crc = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    crc |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[bytes.size() - 4 + i]))
           << (8 * i);
  }
  return crc;
}

std::string crc32_hex(const std::string& bytes) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", crc32_of(bytes.data(), bytes.size()));
  return buf;
}

}  // namespace ctxrec
