#ifndef SUBPIX_IO_HPP
#define SUBPIX_IO_HPP

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "subpix/types.hpp"

namespace subpix {

// Hyperspectral cube held in band-sequential logical layout:
// data[band * rows * cols + row * cols + col].
struct HyperCube {
  int rows = 0;
  int cols = 0;
  int bands = 0;
  std::vector<double> data;
  std::optional<Eigen::VectorXd> band_centers;  // micrometers, when declared
  bool mask_applied = false;

  double at(int row, int col, int band) const {
    return data[static_cast<std::size_t>(band) * rows * cols +
                static_cast<std::size_t>(row) * cols + col];
  }
  double& at(int row, int col, int band) {
    return data[static_cast<std::size_t>(band) * rows * cols +
                static_cast<std::size_t>(row) * cols + col];
  }

  Eigen::VectorXd pixel(int row, int col) const {
    if (row < 0 || row >= rows || col < 0 || col >= cols)
      throw data_error("cube: pixel out of range");
    Eigen::VectorXd v(bands);
    for (int b = 0; b < bands; ++b) v[b] = at(row, col, b);
    return v;
  }
};

// Indices of discarded bands, 1-based in the original (pre-mask) numbering.
struct BandMask {
  std::set<int> dropped;

  // Water-absorption and low-SNR bands conventionally removed from the
  // 126-band Cooke City cube, leaving 116.
  static BandMask standard() {
    return BandMask{{1, 2, 3, 63, 64, 65, 66, 95, 96, 97}};
  }

  void validate(int total_bands) const {
    for (int i : dropped)
      if (i < 1 || i > total_bands)
        throw data_error("band mask: index " + std::to_string(i) +
                         " outside [1, " + std::to_string(total_bands) + "]");
  }

  std::vector<int> kept(int total_bands) const {
    validate(total_bands);
    std::vector<int> keep;
    keep.reserve(total_bands - dropped.size());
    for (int b = 1; b <= total_bands; ++b)
      if (!dropped.count(b)) keep.push_back(b - 1);  // to 0-based
    return keep;
  }
};

namespace detail {

inline std::string lower_trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline float float_from_le(const unsigned char* p) {
  const std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                          static_cast<std::uint32_t>(p[1]) << 8 |
                          static_cast<std::uint32_t>(p[2]) << 16 |
                          static_cast<std::uint32_t>(p[3]) << 24;
  return std::bit_cast<float>(u);
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',' || c == ' ' || c == '\t' || c == ';') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline bool parse_double(const std::string& s, double* out) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') return false;
  *out = v;
  return true;
}

}  // namespace detail

// Reads an ENVI-style cube: text header plus raw binary. Supported subset:
// 32-bit little-endian float, BSQ or BIL interleave.
inline HyperCube read_cube(const std::string& header_path,
                           const std::string& data_path) {
  std::ifstream hdr(header_path);
  if (!hdr) throw data_error("read_cube: cannot open header " + header_path);

  std::map<std::string, std::string> kv;
  std::string line;
  std::string wavelengths;
  bool in_wavelength = false;
  while (std::getline(hdr, line)) {
    if (in_wavelength) {
      wavelengths += line;
      if (line.find('}') != std::string::npos) in_wavelength = false;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = detail::lower_trim(line.substr(0, eq));
    std::string value = line.substr(eq + 1);
    if (key == "wavelength") {
      wavelengths = value;
      if (value.find('}') == std::string::npos) in_wavelength = true;
      continue;
    }
    kv[key] = detail::lower_trim(value);
  }

  auto require_int = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end())
      throw data_error(std::string("read_cube: header missing '") + key + "'");
    return std::stoi(it->second);
  };

  const int samples = require_int("samples");
  const int lines = require_int("lines");
  const int bands = require_int("bands");
  if (samples < 1 || lines < 1 || bands < 1)
    throw data_error("read_cube: non-positive dimensions");
  if (require_int("data type") != 4)
    throw data_error("read_cube: only data type 4 (float32) is supported");
  if (kv.count("byte order") && require_int("byte order") != 0)
    throw data_error("read_cube: only byte order 0 (little-endian) is supported");
  const std::string interleave = kv.count("interleave") ? kv["interleave"] : "bsq";
  if (interleave != "bsq" && interleave != "bil")
    throw data_error("read_cube: unsupported interleave '" + interleave + "'");
  const std::size_t offset =
      kv.count("header offset") ? std::stoul(kv["header offset"]) : 0;

  std::ifstream raw(data_path, std::ios::binary);
  if (!raw) throw data_error("read_cube: cannot open data " + data_path);
  raw.seekg(0, std::ios::end);
  const std::size_t file_size = static_cast<std::size_t>(raw.tellg());
  const std::size_t n_values =
      static_cast<std::size_t>(samples) * lines * bands;
  if (file_size != offset + 4 * n_values)
    throw data_error("read_cube: file size " + std::to_string(file_size) +
                     " does not match header (" +
                     std::to_string(offset + 4 * n_values) + " expected)");
  raw.seekg(static_cast<std::streamoff>(offset));
  std::vector<unsigned char> bytes(4 * n_values);
  raw.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!raw) throw data_error("read_cube: short read");

  HyperCube cube;
  cube.rows = lines;
  cube.cols = samples;
  cube.bands = bands;
  cube.data.resize(n_values);
  const unsigned char* p = bytes.data();
  if (interleave == "bsq") {
    for (std::size_t i = 0; i < n_values; ++i)
      cube.data[i] = detail::float_from_le(p + 4 * i);
  } else {  // bil: line-major, band, sample
    std::size_t i = 0;
    for (int row = 0; row < lines; ++row)
      for (int b = 0; b < bands; ++b)
        for (int col = 0; col < samples; ++col, ++i)
          cube.at(row, col, b) = detail::float_from_le(p + 4 * i);
  }

  if (!wavelengths.empty()) {
    std::string inner = wavelengths;
    std::replace(inner.begin(), inner.end(), '{', ' ');
    std::replace(inner.begin(), inner.end(), '}', ' ');
    std::replace(inner.begin(), inner.end(), ',', ' ');
    std::istringstream ws(inner);
    std::vector<double> centers;
    double v;
    while (ws >> v) centers.push_back(v);
    if (static_cast<int>(centers.size()) == bands)
      cube.band_centers =
          Eigen::Map<Eigen::VectorXd>(centers.data(), centers.size());
  }
  return cube;
}

inline Eigen::VectorXd apply_band_mask(const Eigen::VectorXd& spectrum,
                                       const BandMask& mask) {
  const auto keep = mask.kept(static_cast<int>(spectrum.size()));
  Eigen::VectorXd out(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) out[i] = spectrum[keep[i]];
  return out;
}

inline EndmemberLibrary apply_band_mask(const EndmemberLibrary& lib,
                                        const BandMask& mask) {
  const auto keep = mask.kept(lib.bands());
  Eigen::MatrixXd out(keep.size(), lib.count());
  for (std::size_t i = 0; i < keep.size(); ++i)
    out.row(i) = lib.signatures().row(keep[i]);
  return EndmemberLibrary(std::move(out), lib.names());
}

inline HyperCube apply_band_mask(const HyperCube& cube, const BandMask& mask) {
  if (cube.mask_applied) return cube;
  const auto keep = mask.kept(cube.bands);
  HyperCube out;
  out.rows = cube.rows;
  out.cols = cube.cols;
  out.bands = static_cast<int>(keep.size());
  out.data.resize(static_cast<std::size_t>(out.bands) * out.rows * out.cols);
  const std::size_t plane = static_cast<std::size_t>(cube.rows) * cube.cols;
  for (std::size_t i = 0; i < keep.size(); ++i)
    std::copy_n(cube.data.begin() + keep[i] * plane, plane,
                out.data.begin() + i * plane);
  if (cube.band_centers) {
    Eigen::VectorXd centers(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i)
      centers[i] = (*cube.band_centers)[keep[i]];
    out.band_centers = centers;
  }
  out.mask_applied = true;
  return out;
}

// Delimited-text spectral library: optional '# key = value' attribute lines,
// a header row (first column label, then endmember names), then one row per
// band: band index or wavelength followed by one reflectance per endmember.
// A 'scale' attribute multiplies all reflectances.
inline EndmemberLibrary read_spectral_library(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("read_spectral_library: cannot open " + path);

  double scale = 1.0;
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        const std::string key = detail::lower_trim(line.substr(1, eq - 1));
        if (key == "scale") {
          double v;
          if (!detail::parse_double(detail::lower_trim(line.substr(eq + 1)), &v))
            throw data_error("read_spectral_library: bad scale attribute");
          scale = v;
        }
      }
      continue;
    }
    header = detail::split_fields(line);
    break;
  }
  if (header.size() < 2)
    throw data_error("read_spectral_library: header must name at least one endmember");
  double dummy;
  for (std::size_t i = 1; i < header.size(); ++i)
    if (detail::parse_double(header[i], &dummy))
      throw data_error("read_spectral_library: header without names");
  const int r = static_cast<int>(header.size()) - 1;

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto fields = detail::split_fields(line);
    if (static_cast<int>(fields.size()) != r + 1)
      throw data_error("read_spectral_library: ragged row '" + line + "'");
    std::vector<double> vals(r);
    double band;
    if (!detail::parse_double(fields[0], &band))
      throw data_error("read_spectral_library: non-numeric band column");
    for (int i = 0; i < r; ++i)
      if (!detail::parse_double(fields[i + 1], &vals[i]))
        throw data_error("read_spectral_library: non-numeric entry '" +
                         fields[i + 1] + "'");
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw data_error("read_spectral_library: no data rows");

  Eigen::MatrixXd sig(rows.size(), r);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < r; ++j) sig(i, j) = rows[i][j] * scale;
  return EndmemberLibrary(std::move(sig),
                          std::vector<std::string>(header.begin() + 1,
                                                   header.end()));
}

// One detection record; the serialized form of a per-pixel result.
struct ResultRecord {
  int row = -1;
  int col = -1;
  double statistic = 0.0;
  std::optional<bool> decision;
  Eigen::VectorXd alpha;
  bool valid = true;
};

namespace detail {

inline std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_results_csv(const std::vector<ResultRecord>& records,
                              const std::string& path,
                              const std::string& comment = {}) {
  std::ofstream out(path);
  if (!out) throw data_error("write_results_csv: cannot open " + path);
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "row,col,statistic,decision,valid";
  const int r = records.empty() ? 0 : static_cast<int>(records[0].alpha.size());
  for (int i = 0; i < r; ++i) out << ",alpha_" << i;
  out << "\n";
  for (const auto& rec : records) {
    if (rec.alpha.size() != r)
      throw data_error("write_results_csv: inconsistent abundance sizes");
    out << rec.row << ',' << rec.col << ','
        << detail::format_g17(rec.statistic) << ','
        << (rec.decision ? (*rec.decision ? "1" : "0") : "na") << ','
        << (rec.valid ? 1 : 0);
    for (int i = 0; i < r; ++i) out << ',' << detail::format_g17(rec.alpha[i]);
    out << "\n";
  }
  if (!out) throw data_error("write_results_csv: write failed");
}

inline std::vector<ResultRecord> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("read_results_csv: cannot open " + path);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = detail::split_fields(line);
    break;
  }
  if (header.size() < 5 || header[0] != "row")
    throw data_error("read_results_csv: bad header");
  const int r = static_cast<int>(header.size()) - 5;

  std::vector<ResultRecord> out;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::split_fields(line);
    if (f.size() != header.size())
      throw data_error("read_results_csv: ragged row");
    ResultRecord rec;
    rec.row = std::stoi(f[0]);
    rec.col = std::stoi(f[1]);
    if (!detail::parse_double(f[2], &rec.statistic))
      throw data_error("read_results_csv: bad statistic");
    if (f[3] == "na")
      rec.decision.reset();
    else
      rec.decision = (f[3] == "1");
    rec.valid = (f[4] == "1");
    rec.alpha.resize(r);
    for (int i = 0; i < r; ++i)
      if (!detail::parse_double(f[5 + i], &rec.alpha[i]))
        throw data_error("read_results_csv: bad abundance");
    out.push_back(std::move(rec));
  }
  return out;
}

inline void write_results_json(const std::vector<ResultRecord>& records,
                               const nlohmann::json& meta,
                               const std::string& path) {
  nlohmann::json doc;
  doc["meta"] = meta;
  auto& arr = doc["records"] = nlohmann::json::array();
  for (const auto& rec : records) {
    nlohmann::json j;
    j["row"] = rec.row;
    j["col"] = rec.col;
    j["statistic"] = rec.statistic;
    if (rec.decision)
      j["decision"] = *rec.decision;
    else
      j["decision"] = nullptr;
    j["valid"] = rec.valid;
    j["alpha"] = std::vector<double>(rec.alpha.data(),
                                     rec.alpha.data() + rec.alpha.size());
    arr.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw data_error("write_results_json: cannot open " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw data_error("write_results_json: write failed");
}

inline std::pair<std::vector<ResultRecord>, nlohmann::json> read_results_json(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("read_results_json: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("read_results_json: ") + e.what());
  }
  std::vector<ResultRecord> records;
  for (const auto& j : doc.at("records")) {
    ResultRecord rec;
    rec.row = j.at("row").get<int>();
    rec.col = j.at("col").get<int>();
    rec.statistic = j.at("statistic").get<double>();
    if (!j.at("decision").is_null()) rec.decision = j.at("decision").get<bool>();
    rec.valid = j.at("valid").get<bool>();
    const auto a = j.at("alpha").get<std::vector<double>>();
    rec.alpha = Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
    records.push_back(std::move(rec));
  }
  return {std::move(records), doc.value("meta", nlohmann::json::object())};
}

}  // namespace subpix

#endif  // SUBPIX_IO_HPP
