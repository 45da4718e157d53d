#include "dlm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dlm/error.hpp"

namespace dlm {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'L', 'M', 'C', 'K', 'P', 'T', '\0'};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::uint64_t n) {
    need(n);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Archive::add(std::string name, Matrix value) {
  if (contains(name)) throw ContractError("archive already holds '" + name + "'");
  arrays.emplace_back(std::move(name), std::move(value));
}

const Matrix& Archive::get(std::string_view name) const {
  for (const auto& [n, m] : arrays) {
    if (n == name) return m;
  }
  throw FormatError("checkpoint has no array '" + std::string(name) + "'");
}

bool Archive::contains(std::string_view name) const {
  for (const auto& entry : arrays) {
    if (entry.first == name) return true;
  }
  return false;
}

std::string encode_archive(const Archive& archive) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.kind.size()));
  out += archive.kind;
  const std::string meta = archive.meta.dump();
  put<std::uint64_t>(out, meta.size());
  out += meta;
  put<std::uint64_t>(out, archive.arrays.size());
  for (const auto& [name, m] : archive.arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  put<std::uint64_t>(out, fnv1a(out));
  return out;
}

Archive decode_archive(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - sizeof(std::uint64_t));
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body.size(), sizeof(stored));

  Reader r(body);
  r.take(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  if (fnv1a(body) != stored) throw FormatError("checkpoint checksum mismatch (corrupted or truncated file)");

  Archive a;
  a.kind = std::string(r.take(r.get<std::uint32_t>()));
  const std::string_view meta = r.take(r.get<std::uint64_t>());
  try {
    a.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(r.take(r.get<std::uint32_t>()));
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (cols != 0 && rows > (body.size() / sizeof(double)) / cols) throw FormatError("checkpoint array too large");
    const std::string_view raw = r.take(rows * cols * sizeof(double));
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    std::memcpy(m.data(), raw.data(), raw.size());
    a.arrays.emplace_back(std::move(name), std::move(m));
  }
  if (r.position() != body.size()) throw FormatError("checkpoint has trailing bytes");
  return a;
}

void save_archive(const Archive& archive, const std::string& path) {
  const std::string bytes = encode_archive(archive);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

Archive load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_archive(ss.str());
  } catch (const FormatError& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
}

}  // namespace dlm
