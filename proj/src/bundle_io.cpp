#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "cacmda/nets.hpp"

namespace cacmda {

namespace {

constexpr char kMagic[4] = {'O', 'M', 'M', 'B'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("bundle file truncated");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string config_snapshot(const ModelBundle& b) {
  std::ostringstream os;
  os << "enc.in_channels=" << b.enc_cfg.in_channels << "\n"
     << "enc.height=" << b.enc_cfg.height << "\n"
     << "enc.width=" << b.enc_cfg.width << "\n"
     << "enc.ch1=" << b.enc_cfg.ch1 << "\n"
     << "enc.ch2=" << b.enc_cfg.ch2 << "\n"
     << "enc.ch3=" << b.enc_cfg.ch3 << "\n"
     << "enc.embed_dim=" << b.enc_cfg.embed_dim << "\n"
     << "attr.n_attr=" << b.attr_cfg.n_attr << "\n"
     << "attr.hidden=" << b.attr_cfg.hidden << "\n"
     << "attr.embed_dim=" << b.attr_cfg.embed_dim << "\n"
     << "dec.hidden1=" << b.dec_cfg.hidden1 << "\n"
     << "dec.hidden2=" << b.dec_cfg.hidden2 << "\n"
     << "seed=" << b.seed << "\n";
  return os.str();
}

std::map<std::string, std::string> parse_snapshot(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("malformed bundle config line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::uint32_t get_u32(const std::map<std::string, std::string>& kv,
                      const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end())
    throw std::runtime_error("bundle config missing key: " + key);
  return static_cast<std::uint32_t>(std::stoul(it->second));
}

}  // namespace

void save_bundle(const ModelBundle& b, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot write bundle: " + path.string());
  out.write(kMagic, 4);
  write_u32(out, ModelBundle::kVersion);
  const std::string cfg = config_snapshot(b);
  write_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  ModelParams params = b.params;  // non-const view for tensor_refs
  auto refs = tensor_refs(params);
  write_u32(out, static_cast<std::uint32_t>(refs.size()));
  for (const auto& t : refs) {
    write_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) write_u32(out, d);
    for (double v : *t.data) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      write_u32(out, bits);
    }
  }
  if (!out) throw std::runtime_error("bundle write failed: " + path.string());
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open bundle: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad bundle magic in " + path.string());
  const std::uint32_t version = read_u32(in);
  if (version != ModelBundle::kVersion)
    throw std::runtime_error("unsupported bundle version " +
                             std::to_string(version));
  const std::uint32_t cfg_len = read_u32(in);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  if (!in) throw std::runtime_error("bundle config truncated");
  const auto kv = parse_snapshot(cfg_text);

  EncoderConfig enc;
  enc.in_channels = get_u32(kv, "enc.in_channels");
  enc.height = get_u32(kv, "enc.height");
  enc.width = get_u32(kv, "enc.width");
  enc.ch1 = get_u32(kv, "enc.ch1");
  enc.ch2 = get_u32(kv, "enc.ch2");
  enc.ch3 = get_u32(kv, "enc.ch3");
  enc.embed_dim = get_u32(kv, "enc.embed_dim");
  AttrConfig attr;
  attr.n_attr = get_u32(kv, "attr.n_attr");
  attr.hidden = get_u32(kv, "attr.hidden");
  attr.embed_dim = get_u32(kv, "attr.embed_dim");
  DecoderConfig dec;
  dec.hidden1 = get_u32(kv, "dec.hidden1");
  dec.hidden2 = get_u32(kv, "dec.hidden2");
  const std::uint64_t seed = std::stoull(kv.at("seed"));

  ModelBundle b = init_bundle(enc, attr, dec, seed);
  auto refs = tensor_refs(b.params);
  const std::uint32_t n_tensors = read_u32(in);
  if (n_tensors != refs.size())
    throw std::runtime_error("bundle tensor count mismatch");
  for (auto& t : refs) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in || name != t.name)
      throw std::runtime_error("bundle tensor name mismatch: expected " +
                               t.name + ", got " + name);
    const std::uint32_t ndims = read_u32(in);
    if (ndims != t.dims.size())
      throw std::runtime_error("bundle tensor rank mismatch for " + t.name);
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
      const std::uint32_t dim = read_u32(in);
      if (dim != t.dims[d])
        throw std::runtime_error("bundle tensor dim mismatch for " + t.name);
      count *= dim;
    }
    if (count != t.data->size())
      throw std::runtime_error("bundle tensor size mismatch for " + t.name);
    for (double& v : *t.data) {
      const std::uint32_t bits = read_u32(in);
      float f;
      std::memcpy(&f, &bits, 4);
      v = static_cast<double>(f);
    }
  }
  return b;
}

}  // namespace cacmda
