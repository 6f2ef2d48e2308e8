#include "chardec/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "chardec/error.hpp"

namespace chardec {

namespace {

constexpr std::uint16_t kFormatVersion = 1;
constexpr std::uint16_t kDtypeF32 = 1;
constexpr std::uint16_t kDtypeF64 = 2;

class ByteWriter {
 public:
  void u16(std::uint16_t v) {
    bytes_.push_back(static_cast<std::uint8_t>(v));
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void magic(const char (&m)[5]) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(m[i]));
  }
  void raw(const void* data, std::size_t len) {
    const std::uint8_t* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + len);
  }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::string path, std::vector<std::uint8_t> bytes)
      : path_(std::move(path)), bytes_(std::move(bytes)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(path_ + ": byte offset " + std::to_string(pos_) + ": " + msg);
  }

  void need(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size()) fail(std::string("truncated ") + what);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int32_t i32(const char* what) { return static_cast<std::int32_t>(u32(what)); }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  void magic(const char (&m)[5]) {
    need(4, "magic");
    for (int i = 0; i < 4; ++i) {
      if (bytes_[pos_ + i] != static_cast<std::uint8_t>(m[i])) {
        fail(std::string("expected magic '") + m + "'");
      }
    }
    pos_ += 4;
  }
  void version() {
    const std::uint16_t v = u16("version");
    if (v != kFormatVersion) {
      pos_ -= 2;
      fail("unsupported format version " + std::to_string(v));
    }
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void done() {
    if (pos_ != bytes_.size()) fail("trailing bytes after payload");
  }

 private:
  std::string path_;
  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

ByteReader open_reader(const std::string& path) {
  return ByteReader(path, read_file_bytes(path));
}

int checked_extent(std::uint32_t v, const std::string& path, const char* what) {
  if (v == 0 || v > (1u << 24)) {
    throw DataError(path + ": " + what + " extent " + std::to_string(v) + " out of range");
  }
  return static_cast<int>(v);
}

// disk order [T][Z][Y][X] (x fastest) <-> memory order [T][X][Y][Z]
template <typename WriteElem>
void transpose_out(int x, int y, int z, int t, WriteElem&& put) {
  for (int tt = 0; tt < t; ++tt) {
    for (int zz = 0; zz < z; ++zz) {
      for (int yy = 0; yy < y; ++yy) {
        for (int xx = 0; xx < x; ++xx) {
          put(((static_cast<std::int64_t>(tt) * x + xx) * y + yy) * z + zz);
        }
      }
    }
  }
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError(path + ": read failed");
  return bytes;
}

void write_file_atomic(const std::string& path, const void* data, std::size_t len) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(tmp + ": cannot open for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!out) throw DataError(tmp + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError(path + ": rename failed: " + ec.message());
}

void write_bvol(const std::string& path, const VolumeSeries& v) {
  v.validate();
  ByteWriter w;
  w.magic("BVOL");
  w.u16(kFormatVersion);
  w.u16(kDtypeF32);
  w.u32(static_cast<std::uint32_t>(v.x));
  w.u32(static_cast<std::uint32_t>(v.y));
  w.u32(static_cast<std::uint32_t>(v.z));
  w.u32(static_cast<std::uint32_t>(v.t));
  w.u32(static_cast<std::uint32_t>(std::lround(v.tr_s * 1000.0)));
  transpose_out(v.x, v.y, v.z, v.t,
                [&](std::int64_t i) { w.f32(static_cast<float>(v.data[static_cast<std::size_t>(i)])); });
  write_file_atomic(path, w.bytes().data(), w.bytes().size());
}

VolumeSeries read_bvol(const std::string& path) {
  ByteReader r = open_reader(path);
  r.magic("BVOL");
  r.version();
  const std::uint16_t dtype = r.u16("dtype");
  if (dtype != kDtypeF32) {
    throw DataError(path + ": unsupported volume dtype " + std::to_string(dtype));
  }
  VolumeSeries v;
  v.x = checked_extent(r.u32("x extent"), path, "x");
  v.y = checked_extent(r.u32("y extent"), path, "y");
  v.z = checked_extent(r.u32("z extent"), path, "z");
  v.t = checked_extent(r.u32("t extent"), path, "t");
  v.tr_s = static_cast<double>(r.u32("TR")) / 1000.0;
  v.data.resize(static_cast<std::size_t>(v.voxels() * v.t));
  transpose_out(v.x, v.y, v.z, v.t,
                [&](std::int64_t i) { v.data[static_cast<std::size_t>(i)] = r.f32("payload"); });
  r.done();
  v.validate();
  return v;
}

void write_atlas(const std::string& path, const AtlasVolume& a) {
  a.validate();
  ByteWriter w;
  w.magic("ATLS");
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(a.x));
  w.u32(static_cast<std::uint32_t>(a.y));
  w.u32(static_cast<std::uint32_t>(a.z));
  w.u32(static_cast<std::uint32_t>(a.regions));
  transpose_out(a.x, a.y, a.z, 1,
                [&](std::int64_t i) { w.i32(a.labels[static_cast<std::size_t>(i)]); });
  write_file_atomic(path, w.bytes().data(), w.bytes().size());
}

AtlasVolume read_atlas(const std::string& path) {
  ByteReader r = open_reader(path);
  r.magic("ATLS");
  r.version();
  AtlasVolume a;
  a.x = checked_extent(r.u32("x extent"), path, "x");
  a.y = checked_extent(r.u32("y extent"), path, "y");
  a.z = checked_extent(r.u32("z extent"), path, "z");
  a.regions = checked_extent(r.u32("regions"), path, "regions");
  a.labels.resize(static_cast<std::size_t>(a.voxels()));
  transpose_out(a.x, a.y, a.z, 1,
                [&](std::int64_t i) { a.labels[static_cast<std::size_t>(i)] = r.i32("labels"); });
  r.done();
  a.validate();
  return a;
}

void write_embeddings(const std::string& path, const EmbeddingTable& t) {
  if (t.vocab < 1 || t.dim < 1 ||
      t.rows.size() != static_cast<std::size_t>(t.vocab) * static_cast<std::size_t>(t.dim)) {
    throw ShapeError("embeddings: table shape is inconsistent");
  }
  ByteWriter w;
  w.magic("EMBT");
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(t.vocab));
  w.u32(static_cast<std::uint32_t>(t.dim));
  for (double v : t.rows) w.f32(static_cast<float>(v));
  write_file_atomic(path, w.bytes().data(), w.bytes().size());
}

EmbeddingTable read_embeddings(const std::string& path) {
  ByteReader r = open_reader(path);
  r.magic("EMBT");
  r.version();
  EmbeddingTable t;
  t.vocab = checked_extent(r.u32("vocab"), path, "vocab");
  t.dim = checked_extent(r.u32("dim"), path, "dim");
  t.rows.resize(static_cast<std::size_t>(t.vocab) * static_cast<std::size_t>(t.dim));
  for (double& v : t.rows) v = r.f32("rows");
  r.done();
  return t;
}

void write_checkpoint(const std::string& path,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  ByteWriter w;
  w.magic("CKPT");
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u16(kDtypeF64);
    w.u32(static_cast<std::uint32_t>(tensor->rank()));
    for (int i = 0; i < tensor->rank(); ++i) w.u32(static_cast<std::uint32_t>(tensor->dim(i)));
    for (std::int64_t i = 0; i < tensor->size(); ++i) w.f64((*tensor)[i]);
  }
  write_file_atomic(path, w.bytes().data(), w.bytes().size());
}

std::map<std::string, Tensor> read_checkpoint(const std::string& path) {
  ByteReader r = open_reader(path);
  r.magic("CKPT");
  r.version();
  const std::uint32_t count = r.u32("tensor count");
  std::map<std::string, Tensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = r.u32("name length");
    if (name_len > 4096) r.fail("tensor name too long");
    const std::string name = r.str(name_len, "tensor name");
    const std::uint16_t dtype = r.u16("dtype");
    if (dtype != kDtypeF64) r.fail("unsupported tensor dtype " + std::to_string(dtype));
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) r.fail("tensor rank too large");
    std::vector<int> dims(rank);
    std::int64_t size = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      dims[i] = checked_extent(r.u32("dims"), path, "tensor dim");
      size *= dims[i];
    }
    Tensor t(dims);
    for (std::int64_t i = 0; i < size; ++i) t[i] = r.f64("tensor payload");
    if (!out.emplace(name, std::move(t)).second) r.fail("duplicate tensor name " + name);
  }
  r.done();
  return out;
}

void write_vocab(const std::string& path, const std::vector<std::string>& chars) {
  std::ostringstream out;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (chars[i].empty() || chars[i].find('\t') != std::string::npos ||
        chars[i].find('\n') != std::string::npos) {
      throw DataError("vocab: entry " + std::to_string(i) + " is empty or has separators");
    }
    out << chars[i] << '\t' << i << '\n';
  }
  const std::string s = out.str();
  write_file_atomic(path, s.data(), s.size());
}

std::vector<std::string> read_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open for reading");
  std::vector<std::string> chars;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError(path + ": line " + std::to_string(lineno) + ": expected <char>\\t<id>");
    }
    std::size_t used = 0;
    int id = -1;
    try {
      id = std::stoi(line.substr(tab + 1), &used);
    } catch (const std::exception&) {
      throw DataError(path + ": line " + std::to_string(lineno) + ": bad id");
    }
    if (id != static_cast<int>(chars.size())) {
      throw DataError(path + ": line " + std::to_string(lineno) + ": ids must be 0..V-1 in order");
    }
    chars.push_back(line.substr(0, tab));
  }
  if (chars.empty()) throw DataError(path + ": empty vocab");
  return chars;
}

void write_transcript(const std::string& path, const Transcript& t) {
  std::ostringstream out;
  out.precision(17);
  for (const TranscriptEntry& e : t.entries) {
    out << e.char_id << '\t' << e.onset_s << '\t' << e.offset_s << '\n';
  }
  const std::string s = out.str();
  write_file_atomic(path, s.data(), s.size());
}

Transcript read_transcript(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open for reading");
  Transcript t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    TranscriptEntry e;
    if (!(row >> e.char_id >> e.onset_s >> e.offset_s)) {
      throw DataError(path + ": line " + std::to_string(lineno) +
                      ": expected <char_id> <onset> <offset>");
    }
    t.entries.push_back(e);
  }
  return t;
}

std::string file_digest(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace chardec
