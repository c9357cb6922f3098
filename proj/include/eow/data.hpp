#pragma once

#include <array>
#include <optional>
#include <string>

#include "eow/array.hpp"

namespace eow {

struct Dataset {
    Array inputs;                 // [N x D]
    std::vector<int> labels;      // 0-based classes in [0, K)
    std::vector<double> density;  // exact p(x) per point (synthetic sets only)
    std::string name;
    int num_classes = 0;
    bool image01 = false;  // inputs live in [0,1] (corruptions clamp)

    int size() const { return inputs.rows(); }
    int dim() const { return inputs.cols(); }
};

// K isotropic Gaussians with means on a circle of radius 2, sigma 0.4, one
// class per component; the exact mixture density is stored per point.
Dataset gen_gaussian_mixture(std::uint64_t seed, int n, int k);
// Exact density of that mixture at an arbitrary 2-D point.
double gaussian_mixture_density(double x, double y, int k);

// Interleaved half-circles, K=2. noise is the per-coordinate Gaussian stddev.
Dataset gen_two_moons(std::uint64_t seed, int n, double noise);

// IDX (big-endian) image/label pair, u8 payloads; pixels scaled to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
// Writes the pair back out (pixels quantized u8). Used for fixtures and
// format round-trip checks.
void save_idx(const std::string& images_path, const std::string& labels_path,
              const Dataset& ds, int rows, int cols);

enum class CorruptionType { GaussianNoise, PixelDropout, Contrast };
CorruptionType corruption_from_name(const std::string& name);
const char* corruption_name(CorruptionType t);

// Severity runs 1..5. clamp01 clips the result to [0,1] (image data).
Array corrupt(const Array& inputs, CorruptionType type, int severity, std::uint64_t seed,
              bool clamp01);

// Disjoint, exhaustive, seeded-shuffle split. Fractions must be nonnegative;
// leftovers from rounding go to the train split.
std::array<Dataset, 3> split(const Dataset& ds, std::array<double, 3> fractions,
                             std::uint64_t seed);

// Keep the first n points (after an optional seeded shuffle).
Dataset subset(const Dataset& ds, int n, std::optional<std::uint64_t> shuffle_seed = {});

// Translate every input by a constant offset (makes OOD sets from in-dist
// generators). The density column is dropped.
Dataset translate(const Dataset& ds, const std::vector<double>& offset);

// CSV cache: x0,...,xD-1,label per row.
void save_csv(const std::string& path, const Dataset& ds);
Dataset load_csv(const std::string& path);

}  // namespace eow
