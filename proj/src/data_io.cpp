#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cacmda/data.hpp"

namespace cacmda {

namespace {

constexpr char kTileMagic[4] = {'O', 'M', 'T', 'L'};
constexpr std::uint32_t kTileVersion = 1;

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
  if (!in) throw std::runtime_error("tile file truncated");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

bool valid_iso_date(const std::string& d) {
  if (d.size() != 10 || d[4] != '-' || d[7] != '-') return false;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
    if (!std::isdigit(static_cast<unsigned char>(d[i]))) return false;
  return true;
}

double parse_double(const std::string& s, const std::string& what,
                    std::size_t row) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("manifest row " + std::to_string(row) +
                             ": bad numeric field '" + what + "': " + s);
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void Dataset::rebuild_index() {
  env_index.clear();
  for (std::size_t i = 0; i < samples.size(); ++i)
    env_index[samples[i].env].push_back(i);
}

std::vector<EnvironmentId> Dataset::environments() const {
  std::vector<EnvironmentId> out;
  out.reserve(env_index.size());
  for (const auto& [env, _] : env_index) out.push_back(env);
  return out;
}

const SiteId& Dataset::site(const std::string& code) const {
  for (const auto& s : sites)
    if (s.code == code) return s;
  throw std::out_of_range("unknown site code: " + code);
}

std::size_t Dataset::attribute_column(const std::string& name) const {
  auto it =
      std::find(attribute_schema.begin(), attribute_schema.end(), name);
  if (it == attribute_schema.end())
    throw std::out_of_range("unknown attribute: " + name);
  return static_cast<std::size_t>(it - attribute_schema.begin());
}

ImageTile read_tile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open tile file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kTileMagic, 4) != 0)
    throw std::runtime_error("bad tile magic in " + path.string());
  std::uint32_t version = read_u32(in);
  if (version != kTileVersion)
    throw std::runtime_error("unsupported tile version " +
                             std::to_string(version) + " in " + path.string());
  ImageTile t;
  t.channels = read_u32(in);
  t.height = read_u32(in);
  t.width = read_u32(in);
  if (t.channels == 0 || t.height == 0 || t.width == 0)
    throw std::runtime_error("zero tile dimension in " + path.string());
  t.values.resize(t.size());
  static_assert(sizeof(float) == 4);
  in.read(reinterpret_cast<char*>(t.values.data()),
          static_cast<std::streamsize>(t.values.size() * 4));
  if (!in)
    throw std::runtime_error("tile payload shorter than declared dims in " +
                             path.string());
  char extra;
  if (in.read(&extra, 1))
    throw std::runtime_error("tile payload longer than declared dims in " +
                             path.string());
  return t;
}

void write_tile(const ImageTile& tile, const std::filesystem::path& path) {
  if (tile.values.size() != tile.size())
    throw std::invalid_argument("tile value count does not match dims");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot write tile file: " + path.string());
  out.write(kTileMagic, 4);
  write_u32(out, kTileVersion);
  write_u32(out, tile.channels);
  write_u32(out, tile.height);
  write_u32(out, tile.width);
  out.write(reinterpret_cast<const char*>(tile.values.data()),
            static_cast<std::streamsize>(tile.values.size() * 4));
  if (!out) throw std::runtime_error("tile write failed: " + path.string());
}

Dataset load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in)
    throw std::runtime_error("cannot open manifest: " + manifest_path.string());
  const auto base = manifest_path.parent_path();

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty manifest: " + manifest_path.string());
  auto header = split_csv_line(line);
  const std::vector<std::string> fixed = {"sample_id", "site_code", "site_name",
                                          "lat",       "lon",       "year",
                                          "date",      "tile_path", "om"};
  if (header.size() < fixed.size())
    throw std::runtime_error("manifest header too short");
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (header[i] != fixed[i])
      throw std::runtime_error("manifest header column " + std::to_string(i) +
                               " expected '" + fixed[i] + "', got '" +
                               header[i] + "'");

  Dataset ds;
  ds.attribute_schema.assign(header.begin() + fixed.size(), header.end());

  std::set<std::string> seen_ids;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw std::runtime_error("manifest row " + std::to_string(row) + ": " +
                               std::to_string(f.size()) + " fields, expected " +
                               std::to_string(header.size()));
    Sample s;
    s.id = f[0];
    if (!seen_ids.insert(s.id).second)
      throw std::runtime_error("manifest row " + std::to_string(row) +
                               ": duplicate sample id '" + s.id + "'");
    s.env.site_code = f[1];
    const std::string site_name = f[2];
    const double lat = parse_double(f[3], "lat", row);
    const double lon = parse_double(f[4], "lon", row);
    if (lat < -90 || lat > 90 || lon < -180 || lon > 180)
      throw std::runtime_error("manifest row " + std::to_string(row) +
                               ": coordinates out of range");
    s.env.year = static_cast<int>(parse_double(f[5], "year", row));
    s.date = f[6];
    if (!valid_iso_date(s.date))
      throw std::runtime_error("manifest row " + std::to_string(row) +
                               ": date not ISO-8601: " + s.date);
    const auto tile_path = base / f[7];
    try {
      s.tile = read_tile(tile_path);
    } catch (const std::exception& e) {
      throw std::runtime_error("manifest row " + std::to_string(row) + " (" +
                               tile_path.string() + "): " + e.what());
    }
    s.om = parse_double(f[8], "om", row);
    s.attrs.reserve(ds.attribute_schema.size());
    for (std::size_t i = 9; i < f.size(); ++i)
      s.attrs.push_back(parse_double(f[i], header[i], row));

    bool known = false;
    for (auto& site : ds.sites)
      if (site.code == s.env.site_code) {
        known = true;
        break;
      }
    if (!known) ds.sites.push_back({s.env.site_code, site_name, lat, lon});
    ds.samples.push_back(std::move(s));
  }

  if (!ds.samples.empty()) {
    const auto& t0 = ds.samples.front().tile;
    for (const auto& s : ds.samples)
      if (s.tile.channels != t0.channels || s.tile.height != t0.height ||
          s.tile.width != t0.width)
        throw std::runtime_error("sample '" + s.id +
                                 "' tile dims differ from first sample");
  }
  std::sort(ds.sites.begin(), ds.sites.end(),
            [](const SiteId& a, const SiteId& b) { return a.code < b.code; });
  ds.rebuild_index();
  return ds;
}

void write_manifest(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "tiles");
  std::ofstream out(dir / "manifest.csv", std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot write manifest in " + dir.string());
  out << "sample_id,site_code,site_name,lat,lon,year,date,tile_path,om";
  for (const auto& a : ds.attribute_schema) out << "," << a;
  out << "\n";
  for (const auto& s : ds.samples) {
    const auto& site = ds.site(s.env.site_code);
    const std::string rel = "tiles/" + s.id + ".omtl";
    write_tile(s.tile, dir / rel);
    out << s.id << "," << site.code << "," << site.name << "," << fmt(site.lat)
        << "," << fmt(site.lon) << "," << s.env.year << "," << s.date << ","
        << rel << "," << fmt(s.om);
    for (double a : s.attrs) out << "," << fmt(a);
    out << "\n";
  }
}

std::vector<SiteId> load_sites(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sites file: " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      split_csv_line(line) !=
          std::vector<std::string>{"site_code", "name", "lat", "lon"})
    throw std::runtime_error("bad sites header in " + path.string());
  std::vector<SiteId> sites;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != 4)
      throw std::runtime_error("sites row " + std::to_string(row) +
                               ": expected 4 fields");
    sites.push_back({f[0], f[1], parse_double(f[2], "lat", row),
                     parse_double(f[3], "lon", row)});
  }
  return sites;
}

void write_sites(const std::vector<SiteId>& sites,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write sites file: " + path.string());
  out << "site_code,name,lat,lon\n";
  for (const auto& s : sites)
    out << s.code << "," << s.name << "," << fmt(s.lat) << "," << fmt(s.lon)
        << "\n";
}

}  // namespace cacmda
