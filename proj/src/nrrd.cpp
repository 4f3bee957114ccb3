#include "wemf/nrrd.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "wemf/error.hpp"

namespace wemf {

namespace {

void check_geometry(const std::array<int64_t, 3>& dims,
                    const std::array<double, 3>& spacing) {
  for (int a = 0; a < 3; ++a) {
    if (dims[static_cast<size_t>(a)] < 1)
      throw DataError("volume dims must be positive");
    if (!(spacing[static_cast<size_t>(a)] > 0.0))
      throw DataError("volume spacing must be positive");
  }
}

struct Header {
  std::string type;
  int64_t dimension = -1;
  std::array<int64_t, 3> sizes{};
  std::array<double, 3> spacing{};
  bool have_sizes = false, have_spacing = false;
  bool endian_little = false, have_endian = false;
  std::string encoding;
};

[[noreturn]] void unsupported(const std::string& field) {
  throw DataError("unsupported NRRD feature: " + field);
}

// "(a,0,0) (0,b,0) (0,0,c)" with zeros enforced off-diagonal.
void parse_space_directions(const std::string& value, Header& h) {
  std::string cleaned = value;
  for (char& ch : cleaned)
    if (ch == '(' || ch == ')' || ch == ',') ch = ' ';
  std::istringstream ss(cleaned);
  double m[9];
  for (double& v : m)
    if (!(ss >> v)) unsupported("space directions");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (r != c && m[r * 3 + c] != 0.0) unsupported("space directions");
  h.spacing = {m[0], m[4], m[8]};
  h.have_spacing = true;
}

Header parse_header(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty NRRD file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "NRRD0004") throw DataError("bad NRRD magic in " + path);

  Header h;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) break;  // header terminator; payload follows
    if (line[0] == '#') continue;
    const size_t colon = line.find(": ");
    if (colon == std::string::npos)
      throw DataError("malformed NRRD header line: " + line);
    const std::string key = line.substr(0, colon);
    const std::string value = line.substr(colon + 2);

    if (key == "type") {
      if (value != "short" && value != "uchar") unsupported("type " + value);
      h.type = value;
    } else if (key == "dimension") {
      h.dimension = std::stoll(value);
      if (h.dimension != 3) unsupported("dimension " + value);
    } else if (key == "sizes") {
      std::istringstream ss(value);
      if (!(ss >> h.sizes[0] >> h.sizes[1] >> h.sizes[2]))
        throw DataError("malformed NRRD sizes: " + value);
      int64_t extra;
      if (ss >> extra) unsupported("sizes with more than 3 entries");
      h.have_sizes = true;
    } else if (key == "spacings") {
      std::istringstream ss(value);
      if (!(ss >> h.spacing[0] >> h.spacing[1] >> h.spacing[2]))
        throw DataError("malformed NRRD spacings: " + value);
      h.have_spacing = true;
    } else if (key == "space directions") {
      parse_space_directions(value, h);
    } else if (key == "endian") {
      if (value != "little") unsupported("endian " + value);
      h.endian_little = true;
      h.have_endian = true;
    } else if (key == "encoding") {
      if (value != "raw") unsupported("encoding " + value);
      h.encoding = value;
    } else {
      unsupported(key);
    }
  }
  if (h.type.empty()) throw DataError("NRRD missing type field");
  if (h.dimension != 3) throw DataError("NRRD missing dimension field");
  if (!h.have_sizes) throw DataError("NRRD missing sizes field");
  if (!h.have_spacing)
    throw DataError("NRRD missing spacings or space directions");
  if (h.encoding.empty()) throw DataError("NRRD missing encoding field");
  if (h.type == "short" && !h.have_endian)
    throw DataError("NRRD missing endian field");
  return h;
}

std::string read_payload(std::istream& in) {
  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  return payload;
}

}  // namespace

void HounsfieldVolume::validate() const {
  check_geometry(dims, spacing_mm);
  if (static_cast<int64_t>(hu.size()) != voxels())
    throw DataError("HU payload size does not match dims");
  for (int16_t v : hu)
    if (v < -1024 || v > 3071)
      throw DataError("HU value outside [-1024, 3071]");
}

void LabelVolume::validate() const {
  check_geometry(dims, spacing_mm);
  if (static_cast<int64_t>(labels.size()) != voxels())
    throw DataError("label payload size does not match dims");
  for (uint8_t v : labels)
    if (v > 2) throw DataError("label value outside {0, 1, 2}");
}

NrrdVolume read_nrrd(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open NRRD file: " + path);
  Header h = parse_header(in, path);
  const std::string payload = read_payload(in);
  const int64_t voxels = h.sizes[0] * h.sizes[1] * h.sizes[2];
  const int64_t elem = h.type == "short" ? 2 : 1;
  if (static_cast<int64_t>(payload.size()) != voxels * elem)
    throw DataError("NRRD payload size mismatch in " + path);

  if (h.type == "short") {
    HounsfieldVolume vol;
    vol.dims = h.sizes;
    vol.spacing_mm = h.spacing;
    vol.hu.resize(static_cast<size_t>(voxels));
    for (int64_t i = 0; i < voxels; ++i) {
      const auto lo = static_cast<uint8_t>(payload[static_cast<size_t>(2 * i)]);
      const auto hi =
          static_cast<uint8_t>(payload[static_cast<size_t>(2 * i + 1)]);
      vol.hu[static_cast<size_t>(i)] =
          static_cast<int16_t>(static_cast<uint16_t>(lo) |
                               (static_cast<uint16_t>(hi) << 8));
    }
    return vol;
  }
  LabelVolume vol;
  vol.dims = h.sizes;
  vol.spacing_mm = h.spacing;
  vol.labels.assign(payload.begin(), payload.end());
  return vol;
}

HounsfieldVolume read_hu_nrrd(const std::string& path) {
  NrrdVolume v = read_nrrd(path);
  auto* hu = std::get_if<HounsfieldVolume>(&v);
  if (hu == nullptr)
    throw DataError("expected a short (HU) NRRD volume: " + path);
  hu->validate();
  return std::move(*hu);
}

LabelVolume read_label_nrrd(const std::string& path) {
  NrrdVolume v = read_nrrd(path);
  auto* lab = std::get_if<LabelVolume>(&v);
  if (lab == nullptr)
    throw DataError("expected a uchar (label) NRRD volume: " + path);
  lab->validate();
  return std::move(*lab);
}

namespace {

void write_header(std::ostream& out, const std::string& type,
                  const std::array<int64_t, 3>& dims,
                  const std::array<double, 3>& spacing, bool with_endian) {
  out << "NRRD0004\n";
  out << "type: " << type << "\n";
  out << "dimension: 3\n";
  out << "sizes: " << dims[0] << " " << dims[1] << " " << dims[2] << "\n";
  char buf[96];
  std::snprintf(buf, sizeof(buf), "spacings: %.17g %.17g %.17g", spacing[0],
                spacing[1], spacing[2]);
  out << buf << "\n";
  if (with_endian) out << "endian: little\n";
  out << "encoding: raw\n\n";
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace

void write_nrrd(const HounsfieldVolume& vol, const std::string& path) {
  vol.validate();
  std::ostringstream out;
  write_header(out, "short", vol.dims, vol.spacing_mm, true);
  for (int16_t v : vol.hu) {
    const auto u = static_cast<uint16_t>(v);
    out.put(static_cast<char>(u & 0xff));
    out.put(static_cast<char>((u >> 8) & 0xff));
  }
  write_file(path, out.str());
}

void write_nrrd(const LabelVolume& vol, const std::string& path) {
  vol.validate();
  std::ostringstream out;
  write_header(out, "uchar", vol.dims, vol.spacing_mm, false);
  for (uint8_t v : vol.labels) out.put(static_cast<char>(v));
  write_file(path, out.str());
}

void write_nrrd(const PreviewVolume& vol, const std::string& path) {
  check_geometry(vol.dims, vol.spacing_mm);
  if (static_cast<int64_t>(vol.values.size()) !=
      vol.dims[0] * vol.dims[1] * vol.dims[2])
    throw DataError("preview payload size does not match dims");
  std::ostringstream out;
  write_header(out, "uchar", vol.dims, vol.spacing_mm, false);
  for (uint8_t v : vol.values) out.put(static_cast<char>(v));
  write_file(path, out.str());
}

}  // namespace wemf
