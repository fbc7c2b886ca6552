#include "morphseg/volume_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace morphseg {

static_assert(std::endian::native == std::endian::little,
              "payloads are little-endian; big-endian hosts need a swap pass");

namespace {

bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

void read_payload(std::istream& in, Volume3D& vol, const std::string& path) {
  in.read(reinterpret_cast<char*>(vol.data.data()),
          static_cast<std::streamsize>(vol.size() * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != vol.size() * sizeof(float))
    throw IoError(path + ": payload size mismatch (expected " +
                  std::to_string(vol.size()) + " float32 values)");
  char extra;
  if (in.read(&extra, 1))
    throw IoError(path + ": payload size mismatch (trailing bytes)");
  for (size_t i = 0; i < vol.size(); ++i) {
    if (!std::isfinite(vol.data[i]))
      throw IoError(path + ": non-finite value at linear index " +
                    std::to_string(i));
  }
}

Volume3D load_nrrd(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open file");
  std::string magic;
  std::getline(in, magic);
  if (!magic.starts_with("NRRD0004"))
    throw IoError(path + ": bad magic, expected NRRD0004");

  std::string type, encoding, endian;
  int dimension = -1;
  long long sizes[3] = {-1, -1, -1};  // fastest first: n m k
  bool have_sizes = false;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) break;  // header/payload separator
    if (line[0] == '#') continue;
    auto colon = line.find(':');
    if (colon == std::string::npos)
      throw IoError(path + ": malformed header line '" + line + "'");
    std::string key = line.substr(0, colon);
    std::string val = line.substr(colon + 1);
    while (!val.empty() && val.front() == ' ') val.erase(val.begin());
    if (key == "type") {
      type = val;
    } else if (key == "dimension") {
      dimension = std::stoi(val);
    } else if (key == "sizes") {
      std::istringstream ss(val);
      if (!(ss >> sizes[0] >> sizes[1] >> sizes[2]))
        throw IoError(path + ": field 'sizes' needs three integers");
      have_sizes = true;
    } else if (key == "encoding") {
      encoding = val;
    } else if (key == "endian") {
      endian = val;
    }
    // other fields ignored
  }
  if (type != "float")
    throw IoError(path + ": field 'type' must be float, got '" + type + "'");
  if (dimension != 3)
    throw IoError(path + ": field 'dimension' must be 3");
  if (!have_sizes) throw IoError(path + ": field 'sizes' missing");
  if (encoding != "raw")
    throw IoError(path + ": field 'encoding' must be raw");
  if (endian != "little")
    throw IoError(path + ": field 'endian' must be little");
  for (long long s : sizes)
    if (s <= 0) throw IoError(path + ": field 'sizes' must be positive");

  Volume3D vol(static_cast<int>(sizes[2]), static_cast<int>(sizes[1]),
               static_cast<int>(sizes[0]));
  read_payload(in, vol, path);
  return vol;
}

std::string sidecar_path(const std::string& f32_path) {
  return f32_path.substr(0, f32_path.size() - 4) + ".json";
}

Volume3D load_raw(const std::string& path) {
  std::ifstream js(sidecar_path(path));
  if (!js) throw IoError(sidecar_path(path) + ": cannot open sidecar");
  nlohmann::json j;
  try {
    js >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(sidecar_path(path) + ": bad JSON: " + e.what());
  }
  if (!j.contains("shape") || !j["shape"].is_array() || j["shape"].size() != 3)
    throw IoError(sidecar_path(path) + ": field 'shape' must be [k,m,n]");
  auto sh = j["shape"];
  for (auto& v : sh)
    if (!v.is_number_integer() || v.get<long long>() <= 0)
      throw IoError(sidecar_path(path) + ": field 'shape' must be positive");
  Volume3D vol(sh[0].get<int>(), sh[1].get<int>(), sh[2].get<int>());
  if (j.contains("spacing_um")) {
    auto sp = j["spacing_um"];
    if (!sp.is_array() || sp.size() != 3)
      throw IoError(sidecar_path(path) + ": field 'spacing_um' must be [z,y,x]");
    vol.spacing_um = {sp[0].get<double>(), sp[1].get<double>(),
                      sp[2].get<double>()};
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open file");
  read_payload(in, vol, path);
  return vol;
}

}  // namespace

Volume3D load_volume(const std::string& path) {
  if (ends_with(path, ".nrrd")) return load_nrrd(path);
  if (ends_with(path, ".f32")) return load_raw(path);
  throw IoError(path + ": unknown extension (expected .nrrd or .f32)");
}

void save_volume(const Volume3D& vol, const std::string& path) {
  if (ends_with(path, ".nrrd")) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << "NRRD0004\n"
        << "type: float\n"
        << "dimension: 3\n"
        << "sizes: " << vol.n << " " << vol.m << " " << vol.k << "\n"
        << "encoding: raw\n"
        << "endian: little\n\n";
    out.write(reinterpret_cast<const char*>(vol.data.data()),
              static_cast<std::streamsize>(vol.size() * sizeof(float)));
    if (!out) throw IoError(path + ": write failed");
    return;
  }
  if (ends_with(path, ".f32")) {
    nlohmann::json j;
    j["shape"] = {vol.k, vol.m, vol.n};
    if (vol.spacing_um)
      j["spacing_um"] = {(*vol.spacing_um)[0], (*vol.spacing_um)[1],
                         (*vol.spacing_um)[2]};
    std::ofstream js(sidecar_path(path));
    if (!js) throw IoError(sidecar_path(path) + ": cannot open for writing");
    js << j.dump(2) << "\n";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(vol.data.data()),
              static_cast<std::streamsize>(vol.size() * sizeof(float)));
    if (!out) throw IoError(path + ": write failed");
    return;
  }
  throw IoError(path + ": unknown extension (expected .nrrd or .f32)");
}

}  // namespace morphseg
