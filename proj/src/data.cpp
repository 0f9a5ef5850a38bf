#include "mtln/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include "mtln/error.hpp"
#include "mtln/image_io.hpp"

namespace mtln {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_pi(double t) {
  double r = std::fmod(t, kPi);
  if (r < 0.0) r += kPi;
  if (r >= kPi) r -= kPi;
  return r;
}

// Angular distance on the circle, in [0, pi].
double angular_distance(double a, double b) {
  double d = std::fmod(std::abs(a - b), 2.0 * kPi);
  return d > kPi ? 2.0 * kPi - d : d;
}

Image gaussian_blur(const Image& img, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[i + radius];
  }
  for (auto& v : k) v /= total;
  Image tmp(img.height, img.width, 0.0f);
  Image out(img.height, img.width, 0.0f);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img(r, std::clamp(c + i, 0, img.width - 1));
      tmp(r, c) = static_cast<float>(acc);
    }
  }
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp(std::clamp(r + i, 0, img.height - 1), c);
      out(r, c) = static_cast<float>(acc);
    }
  }
  return out;
}

double sample_or_zero(const Image& img, int r, int c) { return img.contains(r, c) ? img(r, c) : 0.0; }

double bilinear_zero_fill(const Image& img, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double tx = x - fx;
  const double ty = y - fy;
  const double top = sample_or_zero(img, y0, x0) * (1.0 - tx) + sample_or_zero(img, y0, x0 + 1) * tx;
  const double bottom = sample_or_zero(img, y0 + 1, x0) * (1.0 - tx) + sample_or_zero(img, y0 + 1, x0 + 1) * tx;
  return top * (1.0 - ty) + bottom * ty;
}

std::string angle_tag(double degrees) {
  std::ostringstream os;
  os << "rot" << (degrees >= 0 ? "+" : "") << static_cast<int>(std::lround(degrees));
  return os.str();
}

Sample derived(const Sample& base, const std::string& transform) {
  Sample s;
  s.id = base.id + "_" + transform;
  s.pixel_size_mm = base.pixel_size_mm;
  s.provenance = base.provenance;
  s.lineage = lineage_base(base.lineage) + ":" + transform;
  return s;
}

[[noreturn]] void row_error(std::size_t line, const std::string& what) {
  throw FormatError("line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::string lineage_base(const std::string& lineage) {
  const auto pos = lineage.rfind(':');
  return pos == std::string::npos ? lineage : lineage.substr(0, pos);
}

std::string lineage_transform(const std::string& lineage) {
  const auto pos = lineage.rfind(':');
  return pos == std::string::npos ? std::string{} : lineage.substr(pos + 1);
}

void validate_sample(const Sample& sample) {
  if (!sample.image.same_extent(sample.mask)) throw InvalidArgument(sample.id + ": image and mask extents differ");
  if (!(sample.pixel_size_mm >= kMinPixelSizeMm && sample.pixel_size_mm <= kMaxPixelSizeMm)) {
    throw InvalidArgument(sample.id + ": pixel size outside [0.01, 1.0] mm");
  }
  if (!is_canonical(sample.ellipse)) throw InvalidArgument(sample.id + ": ellipse is not canonical");
  for (auto v : sample.mask.pixels) {
    if (v > 1) throw InvalidArgument(sample.id + ": mask is not binary");
  }
  if (rasterize_ellipse(sample.ellipse, sample.mask.height, sample.mask.width) != sample.mask) {
    throw InvalidArgument(sample.id + ": mask does not match its ellipse");
  }
}

std::vector<double> speckle_field(Rng& rng, std::size_t count, double looks) {
  std::gamma_distribution<double> gamma(looks, 1.0 / looks);
  std::vector<double> out(count);
  for (auto& v : out) v = gamma(rng);
  return out;
}

Sample generate_phantom(std::uint64_t seed, int height, int width, std::string id) {
  if (height < 64 || width < 64) throw InvalidArgument("generate_phantom: frame must be at least 64x64");
  Rng rng(seed);
  const double m = std::min(height, width);

  EllipseParams e;
  e.a = uniform(rng, 0.15 * m, 0.40 * m);
  const double max_ratio = std::min(2.5, e.a / (0.15 * m));
  e.b = e.a / uniform(rng, 1.0, max_ratio);
  e.theta = uniform(rng, 0.0, kPi);
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  const double ex = std::sqrt(e.a * e.a * c * c + e.b * e.b * s * s);
  const double ey = std::sqrt(e.a * e.a * s * s + e.b * e.b * c * c);
  e.cx = uniform(rng, ex + 1.0, width - 2.0 - ex);
  e.cy = uniform(rng, ey + 1.0, height - 2.0 - ey);
  e = canonicalize(e);

  const double background = uniform(rng, 0.18, 0.30);
  const double interior = background * uniform(rng, 0.55, 0.85);
  const double band_amp = uniform(rng, 0.45, 0.65);
  const double band_width = uniform(rng, 0.9, 1.6);
  struct Gap {
    double center;
    double half_width;
  };
  std::vector<Gap> gaps(1 + uniform_index(rng, 3));
  for (auto& g : gaps) g = {uniform(rng, 0.0, 2.0 * kPi), uniform(rng, 0.10, 0.30)};

  Image clean(height, width, 0.0f);
  const double ct = std::cos(e.theta);
  const double st = std::sin(e.theta);
  for (int r = 0; r < height; ++r) {
    for (int col = 0; col < width; ++col) {
      const double dx = col - e.cx;
      const double dy = r - e.cy;
      const double u = (dx * ct + dy * st) / e.a;
      const double v = (-dx * st + dy * ct) / e.b;
      const double rho = std::hypot(u, v);
      const double t = std::atan2(v, u);
      const double radius = std::hypot(e.a * std::cos(t), e.b * std::sin(t));
      const double delta = (rho - 1.0) * radius;  // approximate signed distance to the contour
      double gap = 0.0;
      for (const auto& g : gaps) {
        const double d = angular_distance(t, g.center);
        gap = std::max(gap, std::clamp(1.0 - (d - g.half_width) / 0.1, 0.0, 1.0));
      }
      const double inside = 1.0 / (1.0 + std::exp(delta / 0.7));
      const double band = std::exp(-(delta * delta) / (2.0 * band_width * band_width));
      clean(r, col) = static_cast<float>(background + (interior - background) * inside + band_amp * band * (1.0 - gap));
    }
  }
  const auto speckle = speckle_field(rng, clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) clean.pixels[i] = static_cast<float>(clean.pixels[i] * speckle[i]);
  Image image = gaussian_blur(clean, 1.0);
  for (auto& p : image.pixels) p = std::clamp(p, 0.0f, 1.0f);

  Sample sample;
  sample.id = id.empty() ? "phantom_" + std::to_string(seed) : std::move(id);
  sample.image = std::move(image);
  sample.ellipse = e;
  sample.mask = rasterize_ellipse(e, height, width);
  sample.pixel_size_mm = uniform(rng, 0.052, 0.326);
  sample.provenance = Provenance::kPhantom;
  sample.lineage = sample.id + ":orig";
  return sample;
}

Sample flip_horizontal(const Sample& sample) {
  Sample s = derived(sample, "hflip");
  const int w = sample.image.width;
  s.image = Image(sample.image.height, w, 0.0f);
  for (int r = 0; r < sample.image.height; ++r) {
    for (int c = 0; c < w; ++c) s.image(r, c) = sample.image(r, w - 1 - c);
  }
  s.ellipse = sample.ellipse;
  s.ellipse.cx = (w - 1) - sample.ellipse.cx;
  s.ellipse.theta = wrap_pi(kPi - sample.ellipse.theta);
  s.mask = rasterize_ellipse(s.ellipse, sample.image.height, w);
  return s;
}

Sample flip_vertical(const Sample& sample) {
  Sample s = derived(sample, "vflip");
  const int h = sample.image.height;
  s.image = Image(h, sample.image.width, 0.0f);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < sample.image.width; ++c) s.image(r, c) = sample.image(h - 1 - r, c);
  }
  s.ellipse = sample.ellipse;
  s.ellipse.cy = (h - 1) - sample.ellipse.cy;
  s.ellipse.theta = wrap_pi(kPi - sample.ellipse.theta);
  s.mask = rasterize_ellipse(s.ellipse, h, sample.image.width);
  return s;
}

Sample rotate_sample(const Sample& sample, double degrees) {
  Sample s = derived(sample, angle_tag(degrees));
  const int h = sample.image.height;
  const int w = sample.image.width;
  const double phi = degrees * kPi / 180.0;
  const double c = std::cos(phi);
  const double sn = std::sin(phi);
  const double ox = (w - 1) / 2.0;
  const double oy = (h - 1) / 2.0;
  s.image = Image(h, w, 0.0f);
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      const double dx = col - ox;
      const double dy = r - oy;
      const double x = ox + c * dx + sn * dy;
      const double y = oy - sn * dx + c * dy;
      s.image(r, col) = static_cast<float>(bilinear_zero_fill(sample.image, x, y));
    }
  }
  const double dx = sample.ellipse.cx - ox;
  const double dy = sample.ellipse.cy - oy;
  s.ellipse = sample.ellipse;
  s.ellipse.cx = ox + c * dx - sn * dy;
  s.ellipse.cy = oy + sn * dx + c * dy;
  s.ellipse.theta = wrap_pi(sample.ellipse.theta + phi);
  s.mask = rasterize_ellipse(s.ellipse, h, w);
  return s;
}

BinaryMask rotate_mask_nearest(const BinaryMask& mask, double degrees) {
  const double phi = degrees * kPi / 180.0;
  const double c = std::cos(phi);
  const double sn = std::sin(phi);
  const double ox = (mask.width - 1) / 2.0;
  const double oy = (mask.height - 1) / 2.0;
  BinaryMask out(mask.height, mask.width, 0);
  for (int r = 0; r < mask.height; ++r) {
    for (int col = 0; col < mask.width; ++col) {
      const double dx = col - ox;
      const double dy = r - oy;
      const int sc = static_cast<int>(std::lround(ox + c * dx + sn * dy));
      const int sr = static_cast<int>(std::lround(oy - sn * dx + c * dy));
      out(r, col) = mask.contains(sr, sc) ? mask(sr, sc) : 0;
    }
  }
  return out;
}

bool rotation_keeps_head(const Sample& sample, double degrees) {
  const BinaryMask& mask = sample.mask;
  const double phi = degrees * kPi / 180.0;
  const double c = std::cos(phi);
  const double sn = std::sin(phi);
  const double ox = (mask.width - 1) / 2.0;
  const double oy = (mask.height - 1) / 2.0;
  for (int r = 0; r < mask.height; ++r) {
    for (int col = 0; col < mask.width; ++col) {
      if (!mask(r, col)) continue;
      const double dx = col - ox;
      const double dy = r - oy;
      const double x = ox + c * dx - sn * dy;
      const double y = oy + sn * dx + c * dy;
      if (x < -0.5 || x >= mask.width - 0.5 || y < -0.5 || y >= mask.height - 0.5) return false;
    }
  }
  return true;
}

std::vector<Sample> augment_dataset(const std::vector<Sample>& samples, AugmentStats* stats) {
  AugmentStats local;
  std::vector<Sample> out;
  out.reserve(samples.size() * 9);
  for (const auto& base : samples) {
    if (lineage_transform(base.lineage) != "orig") {
      throw InvalidArgument("augment_dataset: '" + base.id + "' is not an original image");
    }
    ++local.bases;
    local.candidates += 9;
    out.push_back(base);
    out.push_back(flip_horizontal(base));
    out.push_back(flip_vertical(base));
    for (double angle : kAugmentAngles) {
      if (rotation_keeps_head(base, angle)) {
        out.push_back(rotate_sample(base, angle));
      } else {
        ++local.dropped;
      }
    }
  }
  if (stats) *stats = local;
  return out;
}

Sample resize_sample(const Sample& sample, int height, int width) {
  if (sample.image.height == height && sample.image.width == width) return sample;
  Sample s = sample;
  s.image = resize_bilinear(sample.image, height, width);
  const double sx = width > 1 ? static_cast<double>(width - 1) / (sample.image.width - 1) : 1.0;
  const double sy = height > 1 ? static_cast<double>(height - 1) / (sample.image.height - 1) : 1.0;
  s.ellipse = transform_ellipse(sample.ellipse, {sx, 0.0, 0.0, sy}, {0.0, 0.0}, {0.0, 0.0});
  s.mask = rasterize_ellipse(s.ellipse, height, width);
  return s;
}

void write_manifest(std::ostream& os, const DatasetManifest& manifest) {
  os << kManifestHeader << '\n';
  for (const auto& r : manifest.records) {
    os << r.id << ',' << r.filename << ',' << r.split << ',' << format_double(r.pixel_size_mm) << ','
       << format_double(r.ellipse.cx) << ',' << format_double(r.ellipse.cy) << ',' << format_double(r.ellipse.a)
       << ',' << format_double(r.ellipse.b) << ',' << format_double(r.ellipse.theta) << ',' << r.lineage << '\n';
  }
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_manifest(out, manifest);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) throw FormatError(path.string() + ": unexpected manifest header '" + line + "'");
  DatasetManifest manifest;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 10) row_error(line_no, "expected 10 fields, got " + std::to_string(f.size()));
    ManifestRecord r;
    r.id = f[0];
    r.filename = f[1];
    r.split = f[2];
    double vals[6];
    for (int i = 0; i < 6; ++i) {
      if (!parse_double(f[3 + i], vals[i])) row_error(line_no, "bad number '" + f[3 + i] + "'");
    }
    r.pixel_size_mm = vals[0];
    r.ellipse = {vals[1], vals[2], vals[3], vals[4], vals[5]};
    r.lineage = f[9];
    if (r.split != "train" && r.split != "val" && r.split != "test" && r.split != "none") {
      row_error(line_no, "unknown split '" + r.split + "'");
    }
    manifest.records.push_back(std::move(r));
  }
  return manifest;
}

SplitCounts split_counts(std::size_t bases) {
  SplitCounts c;
  c.test = bases / 4;
  const std::size_t train_pre = bases - c.test;
  c.val = train_pre / 10;
  c.train = train_pre - c.val;
  return c;
}

DatasetManifest split_dataset(DatasetManifest manifest, std::uint64_t seed) {
  std::set<std::string> unique;
  for (const auto& r : manifest.records) unique.insert(lineage_base(r.lineage));
  if (unique.size() < 10) {
    throw InvalidArgument("split_dataset: need at least 10 base images, got " + std::to_string(unique.size()));
  }
  std::vector<std::string> bases(unique.begin(), unique.end());
  Rng rng(derive_seed(seed, std::string_view("split")));
  shuffle_in_place(bases, rng);
  const SplitCounts counts = split_counts(bases.size());
  std::map<std::string, std::string> assignment;
  for (std::size_t i = 0; i < bases.size(); ++i) {
    assignment[bases[i]] = i < counts.test ? "test" : i < counts.test + counts.val ? "val" : "train";
  }
  for (auto& r : manifest.records) r.split = assignment.at(lineage_base(r.lineage));
  manifest.seed = seed;
  return manifest;
}

std::string mask_filename(const std::string& image_filename) {
  const std::filesystem::path p(image_filename);
  return (p.parent_path() / (p.stem().string() + "_mask.pgm")).string();
}

ManifestRecord save_sample(const Sample& sample, const std::filesystem::path& dir, const std::string& split) {
  ManifestRecord r;
  r.id = sample.id;
  r.filename = sample.id + ".pgm";
  r.split = split;
  r.pixel_size_mm = sample.pixel_size_mm;
  r.ellipse = sample.ellipse;
  r.lineage = sample.lineage;
  write_pgm(dir / r.filename, sample.image);
  write_mask_pgm(dir / mask_filename(r.filename), sample.mask);
  return r;
}

Sample load_sample(const ManifestRecord& record, const std::filesystem::path& dir) {
  Sample s;
  s.id = record.id;
  s.image = read_pgm(dir / record.filename);
  s.ellipse = canonicalize(record.ellipse);
  s.mask = rasterize_ellipse(s.ellipse, s.image.height, s.image.width);
  s.pixel_size_mm = record.pixel_size_mm;
  s.lineage = record.lineage;
  s.provenance = lineage_base(record.lineage).rfind("phantom", 0) == 0 ? Provenance::kPhantom : Provenance::kExternal;
  return s;
}

std::vector<Sample> load_split(const DatasetManifest& manifest, const std::filesystem::path& dir,
                               const std::string& split) {
  std::vector<Sample> out;
  for (const auto& r : manifest.records) {
    if (r.split == split) out.push_back(load_sample(r, dir));
  }
  return out;
}

ExternalLoadResult load_external(const std::filesystem::path& manifest_csv, const std::filesystem::path& image_dir) {
  std::ifstream in(manifest_csv, std::ios::binary);
  if (!in) throw IoError("cannot open '" + manifest_csv.string() + "'");
  std::string line;
  if (!std::getline(in, line)) row_error(1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool declares_size = false;
  if (line == std::string(kExternalHeader) + ",width,height") {
    declares_size = true;
  } else if (line != kExternalHeader) {
    row_error(1, "expected header '" + std::string(kExternalHeader) + "'");
  }
  const std::size_t expected_fields = declares_size ? 9 : 7;

  ExternalLoadResult result;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != expected_fields) {
      row_error(line_no, "expected " + std::to_string(expected_fields) + " fields, got " + std::to_string(f.size()));
    }
    if (f[0].empty()) row_error(line_no, "empty filename");
    double vals[8] = {};
    for (std::size_t i = 1; i < f.size(); ++i) {
      if (!parse_double(f[i], vals[i - 1])) row_error(line_no, "bad number '" + f[i] + "'");
    }
    const double pixel_size = vals[0];
    if (!(pixel_size >= kMinPixelSizeMm && pixel_size <= kMaxPixelSizeMm)) {
      row_error(line_no, "pixel size " + f[1] + " outside [0.01, 1.0] mm");
    }
    EllipseParams e{vals[1], vals[2], vals[3], vals[4], vals[5]};
    if (!(e.a > 0.0) || !(e.b > 0.0)) row_error(line_no, "ellipse axes must be positive");
    const EllipseParams canonical = canonicalize(e);
    if (!is_canonical(e)) {
      result.warnings.push_back("line " + std::to_string(line_no) + ": ellipse of '" + f[0] +
                                "' canonicalized (theta " + f[6] + " -> " + format_double(canonical.theta) + ")");
    }

    Sample s;
    s.image = read_pgm(image_dir / f[0]);
    if (declares_size) {
      const int w = static_cast<int>(vals[6]);
      const int h = static_cast<int>(vals[7]);
      if (s.image.width != w || s.image.height != h) {
        row_error(line_no, "image '" + f[0] + "' is " + std::to_string(s.image.width) + "x" +
                               std::to_string(s.image.height) + ", manifest declares " + f[7] + "x" + f[8]);
      }
    }
    s.id = std::filesystem::path(f[0]).stem().string();
    s.ellipse = canonical;
    s.mask = rasterize_ellipse(s.ellipse, s.image.height, s.image.width);
    s.pixel_size_mm = pixel_size;
    s.provenance = Provenance::kExternal;
    s.lineage = s.id + ":orig";
    result.samples.push_back(std::move(s));
  }
  return result;
}

}  // namespace mtln
