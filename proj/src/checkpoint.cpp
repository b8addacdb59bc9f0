#include "icodiff/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "icodiff/binary_io.hpp"
#include "icodiff/errors.hpp"

namespace icodiff {
namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxManifest = 1u << 24;

std::string join(const std::vector<int>& v, char sep) {
  if (v.empty()) return "-";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

std::string shape_text(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

std::string exact(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

int parse_int(const std::string& key, const std::string& text) {
  int v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size())
    throw FormatError("checkpoint meta '" + key + "': expected an integer, got '" + text + "'");
  return v;
}

std::vector<int> parse_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  if (text == "-") return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string::npos ? text.size() : comma;
    out.push_back(parse_int(key, text.substr(start, end - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::string checkpoint_manifest(const Checkpoint& ckpt) {
  const auto& c = ckpt.params.config();
  std::ostringstream os;
  os << "meta in_channels " << c.in_channels << '\n'
     << "meta out_channels " << c.out_channels << '\n'
     << "meta base_order " << c.base_order << '\n'
     << "meta min_order " << c.min_order << '\n'
     << "meta widths " << join(c.widths, ',') << '\n'
     << "meta blocks_per_level " << c.blocks_per_level << '\n'
     << "meta attention_orders " << join(c.attention_orders, ',') << '\n'
     << "meta embed_dim " << c.embed_dim << '\n'
     << "meta no_mask " << (c.use_mask ? 0 : 1) << '\n'
     << "meta steps " << ckpt.steps << '\n'
     << "meta cosine_offset " << exact(ckpt.cosine_offset) << '\n'
     << "meta epochs " << ckpt.epochs << '\n';
  for (const auto& a : ckpt.params.arrays()) os << "array " << a.name << " f32 " << shape_text(a.shape) << '\n';
  return os.str();
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string manifest = checkpoint_manifest(ckpt);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  io::write_magic(os, "ICKP");
  io::write_u32(os, kVersion);
  io::write_u64(os, manifest.size());
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (const auto& a : ckpt.params.arrays())
    for (Eigen::Index i = 0; i < a.value.size(); ++i) io::write_f32(os, static_cast<float>(a.value.data()[i]));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  io::expect_magic(is, "ICKP");
  if (const auto v = io::read_u32(is); v != kVersion) throw FormatError("unsupported ICKP version " + std::to_string(v));
  const auto len = io::read_u64(is);
  if (len > kMaxManifest) throw FormatError("ICKP manifest too large");
  std::string manifest(len, '\0');
  if (!is.read(manifest.data(), static_cast<std::streamsize>(len))) throw FormatError("truncated ICKP manifest");

  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, std::string>> arrays;  // name, shape text
  std::istringstream ms(manifest);
  std::string line;
  int lineno = 0;
  while (std::getline(ms, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string kind, a, b, c, extra;
    ls >> kind >> a >> b;
    if (kind == "meta" && !b.empty() && !(ls >> extra)) {
      meta[a] = b;
    } else if (kind == "array" && (ls >> c) && b == "f32" && !(ls >> extra)) {
      arrays.emplace_back(a, c);
    } else {
      throw FormatError("ICKP manifest line " + std::to_string(lineno) + " is malformed: " + line);
    }
  }

  auto need = [&](const std::string& key) -> const std::string& {
    const auto it = meta.find(key);
    if (it == meta.end()) throw FormatError("checkpoint meta '" + key + "' missing");
    return it->second;
  };
  DenoiserConfig cfg;
  cfg.in_channels = parse_int("in_channels", need("in_channels"));
  cfg.out_channels = parse_int("out_channels", need("out_channels"));
  cfg.base_order = parse_int("base_order", need("base_order"));
  cfg.min_order = parse_int("min_order", need("min_order"));
  cfg.widths = parse_list("widths", need("widths"));
  cfg.blocks_per_level = parse_int("blocks_per_level", need("blocks_per_level"));
  cfg.attention_orders = parse_list("attention_orders", need("attention_orders"));
  cfg.embed_dim = parse_int("embed_dim", need("embed_dim"));
  cfg.use_mask = parse_int("no_mask", need("no_mask")) == 0;

  Checkpoint ckpt;
  try {
    ckpt.params = DenoiserParams(cfg);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint architecture is invalid: ") + e.what());
  }
  ckpt.steps = parse_int("steps", need("steps"));
  try {
    ckpt.cosine_offset = std::stod(need("cosine_offset"));
  } catch (const std::logic_error&) {
    throw FormatError("checkpoint meta 'cosine_offset' is not a number");
  }
  ckpt.epochs = parse_int("epochs", need("epochs"));

  auto& dst = ckpt.params.arrays();
  if (arrays.size() != dst.size())
    throw FormatError("checkpoint lists " + std::to_string(arrays.size()) + " arrays, architecture needs " +
                      std::to_string(dst.size()));
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (arrays[i].first != dst[i].name || arrays[i].second != shape_text(dst[i].shape))
      throw FormatError("checkpoint array " + std::to_string(i) + " is " + arrays[i].first + " " + arrays[i].second +
                        ", expected " + dst[i].name + " " + shape_text(dst[i].shape));
    for (Eigen::Index k = 0; k < dst[i].value.size(); ++k) dst[i].value.data()[k] = io::read_f32(is);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after ICKP blob");
  if (!ckpt.params.all_finite()) throw FormatError("checkpoint holds non-finite parameters");
  return ckpt;
}

}  // namespace icodiff
