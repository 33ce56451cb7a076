#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fsgap/error.hpp"

namespace fsgap::features {

inline constexpr int kGrsMin = 6;   // six categories scored 1..5
inline constexpr int kGrsMax = 30;

// One video as K snippets x L frames x d feature dims. Pre-averaged exports
// carry L = 1. Payload is row-major [snippet][frame][dim], held as float64
// even though files store float32.
struct VideoFeatures {
  std::string video_id;
  Eigen::Index num_snippets = 0;       // K
  Eigen::Index frames_per_snippet = 1; // L
  Eigen::Index dim = 0;                // d
  std::vector<double> data;            // K*L*d values
  std::optional<int> grs;

  double& at(Eigen::Index k, Eigen::Index l, Eigen::Index j) {
    return data[static_cast<std::size_t>((k * frames_per_snippet + l) * dim + j)];
  }
  double at(Eigen::Index k, Eigen::Index l, Eigen::Index j) const {
    return data[static_cast<std::size_t>((k * frames_per_snippet + l) * dim + j)];
  }

  // K x d view over a pre-averaged (L = 1) payload
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
  snippet_matrix() const {
    require(frames_per_snippet == 1, errc::invalid_argument,
            "snippet_matrix requires temporally averaged features (L = 1)");
    return {data.data(), num_snippets, dim};
  }

  bool finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

struct FeatureSet {
  std::string name;
  Eigen::Index dim = 0;
  std::vector<VideoFeatures> videos;

  Eigen::Index total_snippets() const {
    Eigen::Index n = 0;
    for (const auto& v : videos) n += v.num_snippets;
    return n;
  }
};

// Start frames of K non-overlapping length-L snippets spread evenly over a
// T-frame video: start_i = floor(i * (T - L) / (K - 1)). Guaranteed
// non-overlapping whenever T >= K * L, and the last snippet ends at T.
inline std::vector<std::int64_t> snippet_starts(std::int64_t total_frames,
                                                std::int64_t snippet_len,
                                                std::int64_t num_snippets) {
  require(num_snippets >= 1 && snippet_len >= 1, errc::invalid_argument,
          "snippet_starts: K and L must be positive");
  if (total_frames < num_snippets * snippet_len)
    raise(errc::infeasible_sampling,
          "snippet_starts: " + std::to_string(num_snippets) + " non-overlapping snippets of " +
              std::to_string(snippet_len) + " frames do not fit in " +
              std::to_string(total_frames) + " frames");
  std::vector<std::int64_t> starts(static_cast<std::size_t>(num_snippets));
  if (num_snippets == 1) {
    starts[0] = 0;
    return starts;
  }
  const std::int64_t span = total_frames - snippet_len;
  for (std::int64_t i = 0; i < num_snippets; ++i)
    starts[static_cast<std::size_t>(i)] = i * span / (num_snippets - 1);
  return starts;
}

// Mean over the frame dimension; K, d and grs are untouched.
inline VideoFeatures temporal_average(const VideoFeatures& v) {
  if (v.frames_per_snippet == 1) return v;
  VideoFeatures out;
  out.video_id = v.video_id;
  out.num_snippets = v.num_snippets;
  out.frames_per_snippet = 1;
  out.dim = v.dim;
  out.grs = v.grs;
  out.data.assign(static_cast<std::size_t>(v.num_snippets * v.dim), 0.0);
  const double inv_l = 1.0 / static_cast<double>(v.frames_per_snippet);
  for (Eigen::Index k = 0; k < v.num_snippets; ++k)
    for (Eigen::Index j = 0; j < v.dim; ++j) {
      double acc = 0.0;
      for (Eigen::Index l = 0; l < v.frames_per_snippet; ++l) acc += v.at(k, l, j);
      out.data[static_cast<std::size_t>(k * v.dim + j)] = acc * inv_l;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Binary feature file, little-endian:
//   magic "FSFB" | version u32 = 1 | num_snippets u32 | frames_per_snippet u32
//   | dim u32 | payload float32 x (K*L*d) in [snippet][frame][dim] order
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kMagic[4] = {'F', 'S', 'F', 'B'};
inline constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline void write_feature_file(const VideoFeatures& v, const std::filesystem::path& path) {
  require(v.num_snippets >= 1 && v.frames_per_snippet >= 1 && v.dim >= 1,
          errc::dimension_mismatch, "write_feature_file: empty shape");
  require(v.data.size() ==
              static_cast<std::size_t>(v.num_snippets * v.frames_per_snippet * v.dim),
          errc::dimension_mismatch, "write_feature_file: payload size does not match header");
  std::string buf;
  buf.reserve(20 + v.data.size() * 4);
  buf.append(detail::kMagic, 4);
  detail::put_u32(buf, detail::kVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(v.num_snippets));
  detail::put_u32(buf, static_cast<std::uint32_t>(v.frames_per_snippet));
  detail::put_u32(buf, static_cast<std::uint32_t>(v.dim));
  for (double x : v.data) {
    const float f = static_cast<float>(x);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::put_u32(buf, bits);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), errc::io_error, "write_feature_file: cannot open " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  require(out.good(), errc::io_error, "write_feature_file: short write to " + path.string());
}

inline VideoFeatures read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) raise(errc::missing_file, "read_feature_file: cannot open " + path.string());

  unsigned char header[20];
  in.read(reinterpret_cast<char*>(header), 20);
  if (in.gcount() < 20)
    raise(errc::truncated_payload, "read_feature_file: file shorter than header: " + path.string());
  if (std::memcmp(header, detail::kMagic, 4) != 0)
    raise(errc::bad_magic, "read_feature_file: bad magic in " + path.string());
  const std::uint32_t version = detail::get_u32(header + 4);
  if (version != detail::kVersion)
    raise(errc::unsupported_version,
          "read_feature_file: unsupported version " + std::to_string(version));
  const std::uint64_t K = detail::get_u32(header + 8);
  const std::uint64_t L = detail::get_u32(header + 12);
  const std::uint64_t d = detail::get_u32(header + 16);
  if (K == 0 || L == 0 || d == 0)
    raise(errc::dimension_mismatch, "read_feature_file: zero dimension in header");

  // Size the allocation from the header only after checking it against the
  // actual file length, so a corrupt header cannot trigger a huge allocation.
  const std::uint64_t count = K * L * d;
  require(count <= (std::uint64_t{1} << 31), errc::dimension_mismatch,
          "read_feature_file: header declares an implausibly large payload");
  in.seekg(0, std::ios::end);
  const std::uint64_t actual = static_cast<std::uint64_t>(in.tellg()) - 20;
  const std::uint64_t expected = count * 4;
  if (actual < expected)
    raise(errc::truncated_payload, "read_feature_file: payload has " + std::to_string(actual / 4) +
                                       " floats, header declares " + std::to_string(count));
  if (actual > expected)
    raise(errc::dimension_mismatch, "read_feature_file: " + std::to_string(actual - expected) +
                                        " trailing bytes after declared payload");
  in.seekg(20, std::ios::beg);

  std::vector<unsigned char> raw(expected);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected));
  if (static_cast<std::uint64_t>(in.gcount()) != expected)
    raise(errc::truncated_payload, "read_feature_file: short read from " + path.string());

  VideoFeatures v;
  v.video_id = path.stem().string();
  v.num_snippets = static_cast<Eigen::Index>(K);
  v.frames_per_snippet = static_cast<Eigen::Index>(L);
  v.dim = static_cast<Eigen::Index>(d);
  v.data.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t bits = detail::get_u32(raw.data() + i * 4);
    float f;
    std::memcpy(&f, &bits, 4);
    if (!std::isfinite(f))
      raise(errc::non_finite_payload, "read_feature_file: non-finite value in " + path.string());
    v.data[i] = static_cast<double>(f);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Manifest (JSON):
//   { "name": str, "dim": int, "videos": [ { "id": str, "file": rel-path,
//     "grs": int optional } ] }
// Feature file paths are resolved relative to the manifest location.
// ---------------------------------------------------------------------------

inline FeatureSet load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in.good()) raise(errc::missing_file, "load_manifest: cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    raise(errc::bad_manifest, "load_manifest: " + path.string() + ": " + e.what());
  }
  require(doc.is_object() && doc.contains("name") && doc.contains("dim") && doc.contains("videos"),
          errc::bad_manifest, "load_manifest: manifest needs name, dim and videos");

  FeatureSet set;
  const auto base = path.parent_path();
  try {
    set.name = doc.at("name").get<std::string>();
    set.dim = doc.at("dim").get<Eigen::Index>();
    require(set.dim >= 1, errc::bad_manifest, "load_manifest: dim must be positive");

    std::vector<std::string> seen_ids;
    for (const auto& entry : doc.at("videos")) {
      const auto id = entry.at("id").get<std::string>();
      for (const auto& other : seen_ids)
        if (other == id) raise(errc::duplicate_video_id, "load_manifest: duplicate video id " + id);
      seen_ids.push_back(id);

      auto video = read_feature_file(base / entry.at("file").get<std::string>());
      video.video_id = id;
      if (video.dim != set.dim)
        raise(errc::dim_mismatch_across_videos,
              "load_manifest: video " + id + " has dim " + std::to_string(video.dim) +
                  ", manifest declares " + std::to_string(set.dim));
      if (entry.contains("grs")) {
        const int grs = entry.at("grs").get<int>();
        if (grs < kGrsMin || grs > kGrsMax)
          raise(errc::grs_out_of_range, "load_manifest: grs " + std::to_string(grs) + " for " +
                                            id + " outside [" + std::to_string(kGrsMin) + ", " +
                                            std::to_string(kGrsMax) + "]");
        video.grs = grs;
      }
      set.videos.push_back(std::move(video));
    }
  } catch (const nlohmann::json::exception& e) {
    raise(errc::bad_manifest, "load_manifest: " + path.string() + ": " + e.what());
  }
  return set;
}

// Writes one feature file per video plus a manifest referencing them by
// relative path, the inverse of load_manifest.
inline std::filesystem::path save_feature_set(const FeatureSet& set,
                                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["name"] = set.name;
  manifest["dim"] = set.dim;
  manifest["videos"] = nlohmann::ordered_json::array();
  for (const auto& v : set.videos) {
    const std::string file = v.video_id + ".fsfb";
    write_feature_file(v, dir / file);
    nlohmann::ordered_json entry;
    entry["id"] = v.video_id;
    entry["file"] = file;
    if (v.grs) entry["grs"] = *v.grs;
    manifest["videos"].push_back(std::move(entry));
  }
  const auto path = dir / "manifest.json";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), errc::io_error, "save_feature_set: cannot open " + path.string());
  out << manifest.dump(2) << "\n";
  require(out.good(), errc::io_error, "save_feature_set: short write to " + path.string());
  return path;
}

// All snippet-level features of a set stacked into one (sum K_i) x d matrix.
// Videos still carrying per-frame features are averaged first.
inline Eigen::MatrixXd flatten_snippets(const FeatureSet& set) {
  Eigen::MatrixXd rows(set.total_snippets(), set.dim);
  Eigen::Index r = 0;
  for (const auto& video : set.videos) {
    const VideoFeatures avg = temporal_average(video);
    rows.middleRows(r, avg.num_snippets) = avg.snippet_matrix();
    r += avg.num_snippets;
  }
  return rows;
}

}  // namespace fsgap::features
