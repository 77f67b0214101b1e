#include "equipose/cloud_io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "equipose/common.hpp"

namespace equipose::io {
namespace {

constexpr std::uint32_t kMaskCoords = 1u;
constexpr std::uint32_t kMaskNormals = 2u;
constexpr std::uint32_t kMaskColors = 4u;
constexpr std::uint32_t kMaskFeatures = 8u;

void append_f32(std::string& out, const double* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const float f = static_cast<float>(src[i]);
    char buf[4];
    std::memcpy(buf, &f, 4);
    out.append(buf, 4);
  }
}

void append_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

std::uint32_t read_u32(std::istream& in) {
  char buf[4];
  in.read(buf, 4);
  EQP_REQUIRE(in.good(), "epc1: truncated header");
  std::uint32_t v;
  std::memcpy(&v, buf, 4);
  return v;
}

void read_f32_block(std::istream& in, double* dst, std::size_t n) {
  std::vector<char> buf(n * 4);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  EQP_REQUIRE(in.gcount() == static_cast<std::streamsize>(buf.size()),
              "epc1: truncated payload");
  for (std::size_t i = 0; i < n; ++i) {
    float f;
    std::memcpy(&f, buf.data() + i * 4, 4);
    dst[i] = static_cast<double>(f);
  }
}

}  // namespace

void atomic_write_text(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    EQP_REQUIRE(out.good(), "cannot open for writing: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    EQP_REQUIRE(out.good(), "write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

void save_ply(const geom::PointCloud& cloud, const std::string& path) {
  cloud.validate();
  std::ostringstream out;
  const std::size_t n = cloud.size();
  out << "ply\nformat ascii 1.0\nelement vertex " << n << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.normals)
    out << "property float nx\nproperty float ny\nproperty float nz\n";
  if (cloud.colors)
    out << "property float red\nproperty float green\nproperty float blue\n";
  out << "end_header\n";
  char buf[64];
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = cloud.coords.row(static_cast<Eigen::Index>(i));
    for (int j = 0; j < 3; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[j]);
      out << (j ? " " : "") << buf;
    }
    if (cloud.normals) {
      const auto nr = cloud.normals->row(static_cast<Eigen::Index>(i));
      for (int j = 0; j < 3; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", nr[j]);
        out << " " << buf;
      }
    }
    if (cloud.colors) {
      const auto cr = cloud.colors->row(static_cast<Eigen::Index>(i));
      for (int j = 0; j < 3; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", cr[j]);
        out << " " << buf;
      }
    }
    out << "\n";
  }
  atomic_write_text(path, out.str());
}

geom::PointCloud load_ply(const std::string& path) {
  std::ifstream in(path);
  EQP_REQUIRE(in.good(), "cannot open: " + path);
  std::string line;
  std::getline(in, line);
  EQP_REQUIRE(line == "ply", "ply: bad magic in " + path);
  std::size_t n = 0;
  std::vector<std::string> props;
  std::vector<std::string> types;
  bool ascii = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = (fmt == "ascii");
    } else if (tok == "element") {
      std::string what;
      ls >> what >> n;
      EQP_REQUIRE(what == "vertex", "ply: only vertex elements supported");
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      types.push_back(type);
      props.push_back(name);
    } else if (tok == "end_header") {
      break;
    }
  }
  EQP_REQUIRE(ascii, "ply: only ascii format supported");
  auto index_of = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < props.size(); ++i)
      if (props[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int ix = index_of("x"), iy = index_of("y"), iz = index_of("z");
  EQP_REQUIRE(ix >= 0 && iy >= 0 && iz >= 0, "ply: missing x/y/z properties");
  const int inx = index_of("nx"), iny = index_of("ny"), inz = index_of("nz");
  const int ir = index_of("red"), ig = index_of("green"), ib = index_of("blue");
  const bool has_n = inx >= 0 && iny >= 0 && inz >= 0;
  const bool has_c = ir >= 0 && ig >= 0 && ib >= 0;

  geom::PointCloud cloud;
  cloud.coords.resize(static_cast<Eigen::Index>(n), 3);
  if (has_n) {
    cloud.normals.emplace();
    cloud.normals->resize(static_cast<Eigen::Index>(n), 3);
  }
  if (has_c) {
    cloud.colors.emplace();
    cloud.colors->resize(static_cast<Eigen::Index>(n), 3);
  }
  std::vector<double> vals(props.size());
  for (std::size_t i = 0; i < n; ++i) {
    EQP_REQUIRE(static_cast<bool>(std::getline(in, line)), "ply: truncated vertex list");
    std::istringstream ls(line);
    for (std::size_t j = 0; j < props.size(); ++j) {
      EQP_REQUIRE(static_cast<bool>(ls >> vals[j]), "ply: malformed vertex row");
    }
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    cloud.coords.row(r) << vals[static_cast<std::size_t>(ix)],
        vals[static_cast<std::size_t>(iy)], vals[static_cast<std::size_t>(iz)];
    if (has_n)
      cloud.normals->row(r) << vals[static_cast<std::size_t>(inx)],
          vals[static_cast<std::size_t>(iny)], vals[static_cast<std::size_t>(inz)];
    if (has_c) {
      double scale = 1.0;
      if (types[static_cast<std::size_t>(ir)] == "uchar" ||
          types[static_cast<std::size_t>(ir)] == "uint8")
        scale = 1.0 / 255.0;
      cloud.colors->row(r) << vals[static_cast<std::size_t>(ir)] * scale,
          vals[static_cast<std::size_t>(ig)] * scale,
          vals[static_cast<std::size_t>(ib)] * scale;
    }
  }
  cloud.validate();
  return cloud;
}

void save_epc1(const geom::PointCloud& cloud, const std::string& path) {
  cloud.validate();
  std::string out;
  out.append("EPC1", 4);
  const std::uint32_t n = static_cast<std::uint32_t>(cloud.size());
  std::uint32_t mask = kMaskCoords;
  if (cloud.normals) mask |= kMaskNormals;
  if (cloud.colors) mask |= kMaskColors;
  if (cloud.features) mask |= kMaskFeatures;
  append_u32(out, n);
  append_u32(out, mask);
  if (cloud.features) append_u32(out, static_cast<std::uint32_t>(cloud.features->cols()));
  append_f32(out, cloud.coords.data(), cloud.coords.size());
  if (cloud.normals) append_f32(out, cloud.normals->data(), cloud.normals->size());
  if (cloud.colors) append_f32(out, cloud.colors->data(), cloud.colors->size());
  if (cloud.features) append_f32(out, cloud.features->data(), cloud.features->size());
  atomic_write_text(path, out);
}

geom::PointCloud load_epc1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EQP_REQUIRE(in.good(), "cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  EQP_REQUIRE(in.good() && std::memcmp(magic, "EPC1", 4) == 0,
              "epc1: bad magic in " + path);
  const std::uint32_t n = read_u32(in);
  const std::uint32_t mask = read_u32(in);
  EQP_REQUIRE(mask & kMaskCoords, "epc1: missing coordinate channel");
  std::uint32_t feat_width = 0;
  if (mask & kMaskFeatures) feat_width = read_u32(in);

  geom::PointCloud cloud;
  cloud.coords.resize(static_cast<Eigen::Index>(n), 3);
  read_f32_block(in, cloud.coords.data(), 3u * n);
  if (mask & kMaskNormals) {
    cloud.normals.emplace();
    cloud.normals->resize(static_cast<Eigen::Index>(n), 3);
    read_f32_block(in, cloud.normals->data(), 3u * n);
    // f32 rounding can push unit rows past the validation band; renormalize.
    for (Eigen::Index i = 0; i < cloud.normals->rows(); ++i)
      cloud.normals->row(i).normalize();
  }
  if (mask & kMaskColors) {
    cloud.colors.emplace();
    cloud.colors->resize(static_cast<Eigen::Index>(n), 3);
    read_f32_block(in, cloud.colors->data(), 3u * n);
  }
  if (mask & kMaskFeatures) {
    cloud.features.emplace();
    cloud.features->resize(static_cast<Eigen::Index>(n),
                           static_cast<Eigen::Index>(feat_width));
    read_f32_block(in, cloud.features->data(),
                   static_cast<std::size_t>(n) * feat_width);
  }
  cloud.validate();
  return cloud;
}

}  // namespace equipose::io
