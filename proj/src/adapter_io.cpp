#include "lorafuse/adapter_io.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "lorafuse/error.hpp"

namespace lorafuse {

namespace {

constexpr char kMagic[4] = {'L', 'C', 'R', 'A'};
constexpr std::uint16_t kVersion = 1;

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) {
      c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    }
    table[i] = c;
  }
  return table;
}

struct Writer {
  std::vector<std::uint8_t> bytes;

  void u16(std::uint16_t v) {
    bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
    bytes.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      bytes.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      bytes.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
  const std::string& path;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) {
      throw FormatError("adapter file truncated: " + path);
    }
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(bytes[pos]) |
                      static_cast<std::uint16_t>(bytes[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    }
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    }
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
  static const auto table = make_crc_table();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) {
    c = table[(c ^ data[i]) & 0xff] ^ (c >> 8);
  }
  return c ^ 0xFFFFFFFFu;
}

PruneMap identity_map(const std::string& layer_name, std::size_t d_out,
                      std::size_t d_in) {
  LayerPrune lp;
  lp.layer_name = layer_name;
  lp.retained_rows.resize(d_out);
  lp.retained_cols.resize(d_in);
  std::iota(lp.retained_rows.begin(), lp.retained_rows.end(), 0);
  std::iota(lp.retained_cols.begin(), lp.retained_cols.end(), 0);
  PruneMap map;
  map.layers.push_back(std::move(lp));
  map.params_before = d_out * d_in;
  map.params_after = d_out * d_in;
  return map;
}

void write_adapter(const std::string& path, const LoraAdapter& adapter,
                   const PruneMap& map, std::size_t d_out, std::size_t d_in,
                   std::uint64_t seed) {
  validate_adapter(adapter);
  const LayerPrune& lp = map.find(adapter.layer_name);
  if (adapter.B.rows() != lp.retained_rows.size() ||
      adapter.A.cols() != lp.retained_cols.size()) {
    throw ParamError("write_adapter: factors do not match the prune map of '" +
                     adapter.layer_name + "'");
  }
  if (adapter.layer_name.size() > 0xffff) {
    throw ParamError("write_adapter: layer name too long");
  }
  for (std::size_t idx : lp.retained_rows) {
    if (idx >= d_out) throw ParamError("write_adapter: row index out of range");
  }
  for (std::size_t idx : lp.retained_cols) {
    if (idx >= d_in) throw ParamError("write_adapter: col index out of range");
  }

  Writer w;
  w.bytes.insert(w.bytes.end(), kMagic, kMagic + 4);
  w.u16(kVersion);
  w.u16(static_cast<std::uint16_t>(adapter.layer_name.size()));
  for (char c : adapter.layer_name) {
    w.bytes.push_back(static_cast<std::uint8_t>(c));
  }
  w.u32(static_cast<std::uint32_t>(d_out));
  w.u32(static_cast<std::uint32_t>(d_in));
  w.u32(static_cast<std::uint32_t>(adapter.rank));
  w.f64(adapter.alpha);
  w.u64(seed);
  w.u32(static_cast<std::uint32_t>(lp.retained_rows.size()));
  for (std::size_t idx : lp.retained_rows) {
    w.u32(static_cast<std::uint32_t>(idx));
  }
  w.u32(static_cast<std::uint32_t>(lp.retained_cols.size()));
  for (std::size_t idx : lp.retained_cols) {
    w.u32(static_cast<std::uint32_t>(idx));
  }
  for (double v : adapter.B.data()) w.f64(v);
  for (double v : adapter.A.data()) w.f64(v);
  w.u32(crc32(w.bytes.data(), w.bytes.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out.write(reinterpret_cast<const char*>(w.bytes.data()),
              static_cast<std::streamsize>(w.bytes.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + tmp + " -> " + path);
}

AdapterFile read_adapter(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open adapter file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());

  if (bytes.size() < 8) throw FormatError("adapter file truncated: " + path);
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw FormatError("bad magic in " + path + ": expected \"LCRA\"");
  }
  // Checksum first; nothing is constructed from an unverified payload.
  const std::uint32_t stored =
      static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
      static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8 |
      static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16 |
      static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24;
  if (crc32(bytes.data(), bytes.size() - 4) != stored) {
    throw IntegrityError("checksum mismatch in " + path);
  }

  Reader r{bytes, 4, path};
  const std::uint16_t version = r.u16();
  if (version != kVersion) {
    throw FormatError("unsupported adapter format version " +
                      std::to_string(version) + " in " + path);
  }
  const std::uint16_t name_len = r.u16();
  r.need(name_len);
  std::string name(reinterpret_cast<const char*>(bytes.data() + r.pos),
                   name_len);
  r.pos += name_len;

  AdapterFile file;
  file.d_out = r.u32();
  file.d_in = r.u32();
  const std::uint32_t rank = r.u32();
  const double alpha = r.f64();
  file.seed = r.u64();

  LayerPrune lp;
  lp.layer_name = name;
  const std::uint32_t n_rows = r.u32();
  lp.retained_rows.reserve(n_rows);
  for (std::uint32_t i = 0; i < n_rows; ++i) lp.retained_rows.push_back(r.u32());
  const std::uint32_t n_cols = r.u32();
  lp.retained_cols.reserve(n_cols);
  for (std::uint32_t i = 0; i < n_cols; ++i) lp.retained_cols.push_back(r.u32());

  std::vector<double> b_data(static_cast<std::size_t>(n_rows) * rank);
  for (double& v : b_data) v = r.f64();
  std::vector<double> a_data(static_cast<std::size_t>(rank) * n_cols);
  for (double& v : a_data) v = r.f64();
  if (r.pos + 4 != bytes.size()) {
    throw FormatError("adapter file has trailing bytes: " + path);
  }

  file.adapter.layer_name = name;
  file.adapter.rank = rank;
  file.adapter.alpha = alpha;
  file.adapter.B = DenseMatrix(n_rows, rank, std::move(b_data));
  file.adapter.A = DenseMatrix(rank, n_cols, std::move(a_data));
  validate_adapter(file.adapter);

  file.map.layers.push_back(std::move(lp));
  file.map.params_before = file.d_out * file.d_in;
  file.map.params_after =
      static_cast<std::size_t>(n_rows) * static_cast<std::size_t>(n_cols);
  return file;
}

}  // namespace lorafuse
