#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mtln/ellipse.hpp"
#include "mtln/grid.hpp"
#include "mtln/random.hpp"

namespace mtln {

enum class Provenance { kPhantom, kExternal };

/// One training/evaluation case. The ellipse is in pixel units of `image`.
struct Sample {
  std::string id;
  Image image;
  BinaryMask mask;
  EllipseParams ellipse;
  double pixel_size_mm = 0.1;
  Provenance provenance = Provenance::kPhantom;
  /// "<base-id>:<transform>", e.g. "phantom_00003:rot-40".
  std::string lineage;
};

inline constexpr double kMinPixelSizeMm = 0.01;
inline constexpr double kMaxPixelSizeMm = 1.0;

/// Base image id encoded in a lineage tag.
std::string lineage_base(const std::string& lineage);
/// Transform part of a lineage tag ("orig", "hflip", "vflip", "rot+20", ...).
std::string lineage_transform(const std::string& lineage);

/// Throws InvalidArgument if the sample breaks a type invariant: mask and
/// image extents agree, mask == rasterize(ellipse), pixel size within range.
void validate_sample(const Sample& sample);

// ---------------------------------------------------------------------------
// Synthetic phantoms

/// Mean-one multiplicative speckle: Gamma(looks, 1 / looks) intensities.
std::vector<double> speckle_field(Rng& rng, std::size_t count, double looks = 4.0);

/// A fetal-head-like ultrasound phantom. The ellipse has semi-axes between 15%
/// and 40% of min(H, W), axis ratio <= 2.5, uniform orientation, and lies
/// inside the frame. The image shows a bright skull band with 1-3 gaps, a
/// darker interior, speckle and blur. Deterministic in seed.
Sample generate_phantom(std::uint64_t seed, int height, int width, std::string id = {});

// ---------------------------------------------------------------------------
// Augmentation

Sample flip_horizontal(const Sample& sample);
Sample flip_vertical(const Sample& sample);

/// Rotates the content by `degrees` about the image center (positive from +x
/// towards +y). Images are resampled bilinearly with zero fill; the mask is
/// re-rasterized from the rotated ellipse.
Sample rotate_sample(const Sample& sample, double degrees);

/// Nearest-neighbour rotation of a mask, same convention as rotate_sample.
BinaryMask rotate_mask_nearest(const BinaryMask& mask, double degrees);

/// True iff every foreground pixel of the sample lands inside the frame after
/// rotating by `degrees`.
bool rotation_keeps_head(const Sample& sample, double degrees);

/// Rotation angles applied to every base image.
inline constexpr double kAugmentAngles[] = {-60.0, -40.0, -20.0, 20.0, 40.0, 60.0};

struct AugmentStats {
  std::size_t bases = 0;
  std::size_t candidates = 0;
  std::size_t dropped = 0;
};

/// Emits, per base sample: the original, both flips, and the six rotations;
/// rotations that push part of the head out of the frame are dropped. Inputs
/// must be originals (lineage transform "orig").
std::vector<Sample> augment_dataset(const std::vector<Sample>& samples, AugmentStats* stats = nullptr);

/// Image, mask and ellipse resampled to a new extent.
Sample resize_sample(const Sample& sample, int height, int width);

// ---------------------------------------------------------------------------
// Manifests and splits

struct ManifestRecord {
  std::string id;
  std::string filename;
  std::string split;  // "train", "val", "test", or "none"
  double pixel_size_mm = 0.1;
  EllipseParams ellipse;
  std::string lineage;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::uint64_t seed = 0;
};

inline constexpr const char* kManifestHeader = "id,filename,split,pixel_size_mm,cx,cy,a,b,theta,lineage";

void write_manifest(std::ostream& os, const DatasetManifest& manifest);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// Base-image counts per split: test = floor(0.25 N), val = floor(0.10 (N - test)).
SplitCounts split_counts(std::size_t bases);

/// Shuffles base images by seed and assigns 75% train / 25% test, then moves
/// 10% of train to val. Every variant of a base follows the base. Needs >= 10
/// base images.
DatasetManifest split_dataset(DatasetManifest manifest, std::uint64_t seed);

/// Mask file name stored next to an image: "x.pgm" -> "x_mask.pgm".
std::string mask_filename(const std::string& image_filename);

/// Writes image and mask PGMs into `dir` and returns the manifest record.
ManifestRecord save_sample(const Sample& sample, const std::filesystem::path& dir, const std::string& split = "none");

/// Loads one record's image from `dir` and rasterizes its mask.
Sample load_sample(const ManifestRecord& record, const std::filesystem::path& dir);

std::vector<Sample> load_split(const DatasetManifest& manifest, const std::filesystem::path& dir,
                               const std::string& split);

// ---------------------------------------------------------------------------
// External datasets

inline constexpr const char* kExternalHeader = "filename,pixel_size_mm,cx,cy,a,b,theta";

struct ExternalLoadResult {
  std::vector<Sample> samples;
  std::vector<std::string> warnings;
};

/// Reads `filename,pixel_size_mm,cx,cy,a,b,theta` rows (optionally followed by
/// `width,height` columns declaring each image's size) and the referenced P5
/// images from image_dir. Masks are rasterized from the ellipse.
ExternalLoadResult load_external(const std::filesystem::path& manifest_csv, const std::filesystem::path& image_dir);

}  // namespace mtln
