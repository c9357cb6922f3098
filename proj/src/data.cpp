#include "eow/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>

namespace eow {

namespace {

constexpr double kMixtureRadius = 2.0;
constexpr double kMixtureSigma = 0.4;

std::uint32_t read_be32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("idx: truncated " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

void write_be32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

double gaussian_mixture_density(double x, double y, int k) {
    const double two_pi = 2.0 * std::numbers::pi;
    const double var = kMixtureSigma * kMixtureSigma;
    double p = 0.0;
    for (int c = 0; c < k; ++c) {
        const double ang = two_pi * double(c) / double(k);
        const double dx = x - kMixtureRadius * std::cos(ang);
        const double dy = y - kMixtureRadius * std::sin(ang);
        p += std::exp(-(dx * dx + dy * dy) / (2.0 * var)) / (two_pi * var);
    }
    return p / double(k);
}

Dataset gen_gaussian_mixture(std::uint64_t seed, int n, int k) {
    if (k < 1 || n < k) throw std::runtime_error("gen_gaussian_mixture: need n >= k >= 1");
    Rng rng(seed);
    Dataset ds;
    ds.name = "gaussian_mixture";
    ds.num_classes = k;
    ds.inputs = Array({n, 2});
    ds.labels.resize(std::size_t(n));
    ds.density.resize(std::size_t(n));
    const double two_pi = 2.0 * std::numbers::pi;
    for (int i = 0; i < n; ++i) {
        const int c = i % k;  // round-robin keeps classes balanced for any n
        const double ang = two_pi * double(c) / double(k);
        const double x = kMixtureRadius * std::cos(ang) + kMixtureSigma * rng.normal();
        const double y = kMixtureRadius * std::sin(ang) + kMixtureSigma * rng.normal();
        ds.inputs.at(i, 0) = x;
        ds.inputs.at(i, 1) = y;
        ds.labels[std::size_t(i)] = c;
        ds.density[std::size_t(i)] = gaussian_mixture_density(x, y, k);
    }
    return ds;
}

Dataset gen_two_moons(std::uint64_t seed, int n, double noise) {
    Rng rng(seed);
    Dataset ds;
    ds.name = "two_moons";
    ds.num_classes = 2;
    ds.inputs = Array({n, 2});
    ds.labels.resize(std::size_t(n));
    const int n_outer = (n + 1) / 2;
    for (int i = 0; i < n; ++i) {
        const bool outer = i < n_outer;
        const double t = std::numbers::pi * rng.uniform();
        double x, y;
        if (outer) {
            x = std::cos(t);
            y = std::sin(t);
        } else {
            x = 1.0 - std::cos(t);
            y = 0.5 - std::sin(t);
        }
        ds.inputs.at(i, 0) = x + noise * rng.normal();
        ds.inputs.at(i, 1) = y + noise * rng.normal();
        ds.labels[std::size_t(i)] = outer ? 0 : 1;
    }
    return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw std::runtime_error("idx: cannot open " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw std::runtime_error("idx: cannot open " + labels_path);

    if (read_be32(imgs, "image magic") != 0x00000803u)
        throw std::runtime_error("idx: bad image magic in " + images_path);
    const int n = int(read_be32(imgs, "image count"));
    const int rows = int(read_be32(imgs, "image rows"));
    const int cols = int(read_be32(imgs, "image cols"));

    if (read_be32(labs, "label magic") != 0x00000801u)
        throw std::runtime_error("idx: bad label magic in " + labels_path);
    const int n_labels = int(read_be32(labs, "label count"));
    if (n != n_labels)
        throw std::runtime_error("idx: image/label count mismatch (" + std::to_string(n) + " vs " +
                                 std::to_string(n_labels) + ")");

    const std::size_t d = std::size_t(rows) * std::size_t(cols);
    std::vector<unsigned char> buf(d);
    Dataset ds;
    ds.name = "idx";
    ds.image01 = true;
    ds.inputs = Array({n, int(d)});
    ds.labels.resize(std::size_t(n));
    for (int i = 0; i < n; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), std::streamsize(d));
        if (!imgs) throw std::runtime_error("idx: truncated image data in " + images_path);
        double* row = ds.inputs.data() + std::size_t(i) * d;
        for (std::size_t j = 0; j < d; ++j) row[j] = double(buf[j]) / 255.0;
    }
    std::vector<unsigned char> lbuf(static_cast<std::size_t>(n));
    labs.read(reinterpret_cast<char*>(lbuf.data()), std::streamsize(n));
    if (!labs) throw std::runtime_error("idx: truncated label data in " + labels_path);
    int max_label = 0;
    for (int i = 0; i < n; ++i) {
        ds.labels[std::size_t(i)] = int(lbuf[std::size_t(i)]);
        max_label = std::max(max_label, ds.labels[std::size_t(i)]);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

void save_idx(const std::string& images_path, const std::string& labels_path, const Dataset& ds,
              int rows, int cols) {
    if (rows * cols != ds.dim()) throw std::runtime_error("save_idx: rows*cols != input dim");
    std::ofstream imgs(images_path, std::ios::binary | std::ios::trunc);
    std::ofstream labs(labels_path, std::ios::binary | std::ios::trunc);
    if (!imgs || !labs) throw std::runtime_error("save_idx: cannot open output files");
    write_be32(imgs, 0x00000803u);
    write_be32(imgs, std::uint32_t(ds.size()));
    write_be32(imgs, std::uint32_t(rows));
    write_be32(imgs, std::uint32_t(cols));
    std::vector<unsigned char> buf(std::size_t(ds.dim()));
    for (int i = 0; i < ds.size(); ++i) {
        const double* row = ds.inputs.data() + std::size_t(i) * ds.dim();
        for (int j = 0; j < ds.dim(); ++j)
            buf[std::size_t(j)] = static_cast<unsigned char>(
                std::lround(std::clamp(row[j], 0.0, 1.0) * 255.0));
        imgs.write(reinterpret_cast<const char*>(buf.data()), ds.dim());
    }
    write_be32(labs, 0x00000801u);
    write_be32(labs, std::uint32_t(ds.size()));
    for (int label : ds.labels) labs.put(char(static_cast<unsigned char>(label)));
    if (!imgs || !labs) throw std::runtime_error("save_idx: write failed");
}

CorruptionType corruption_from_name(const std::string& name) {
    if (name == "gaussian_noise") return CorruptionType::GaussianNoise;
    if (name == "pixel_dropout") return CorruptionType::PixelDropout;
    if (name == "contrast") return CorruptionType::Contrast;
    throw std::runtime_error("unknown corruption type: " + name);
}

const char* corruption_name(CorruptionType t) {
    switch (t) {
        case CorruptionType::GaussianNoise: return "gaussian_noise";
        case CorruptionType::PixelDropout: return "pixel_dropout";
        case CorruptionType::Contrast: return "contrast";
    }
    return "?";
}

Array corrupt(const Array& inputs, CorruptionType type, int severity, std::uint64_t seed,
              bool clamp01) {
    if (severity < 1 || severity > 5)
        throw std::runtime_error("corrupt: severity must be in 1..5, got " +
                                 std::to_string(severity));
    static constexpr double kNoise[5] = {0.04, 0.08, 0.12, 0.18, 0.26};
    static constexpr double kDropout[5] = {0.05, 0.10, 0.20, 0.30, 0.40};
    static constexpr double kContrast[5] = {0.20, 0.35, 0.50, 0.65, 0.80};

    Rng rng(seed);
    Array out = inputs;
    const int rows = out.rows(), cols = out.cols();
    switch (type) {
        case CorruptionType::GaussianNoise: {
            const double s = kNoise[severity - 1];
            for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] += s * rng.normal();
            break;
        }
        case CorruptionType::PixelDropout: {
            const double frac = kDropout[severity - 1];
            for (std::size_t i = 0; i < out.numel(); ++i)
                if (rng.uniform() < frac) out.data()[i] = 0.0;
            break;
        }
        case CorruptionType::Contrast: {
            const double w = kContrast[severity - 1];
            for (int r = 0; r < rows; ++r) {
                double* row = out.data() + std::size_t(r) * cols;
                double mean = 0.0;
                for (int j = 0; j < cols; ++j) mean += row[j];
                mean /= double(cols);
                for (int j = 0; j < cols; ++j) row[j] = (1.0 - w) * row[j] + w * mean;
            }
            break;
        }
    }
    if (clamp01)
        for (std::size_t i = 0; i < out.numel(); ++i)
            out.data()[i] = std::clamp(out.data()[i], 0.0, 1.0);
    return out;
}

namespace {

Dataset take_rows(const Dataset& ds, const std::vector<int>& idx) {
    Dataset out;
    out.name = ds.name;
    out.num_classes = ds.num_classes;
    out.image01 = ds.image01;
    out.inputs = Array({int(idx.size()), ds.dim()});
    out.labels.resize(idx.size());
    if (!ds.density.empty()) out.density.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const double* src = ds.inputs.data() + std::size_t(idx[r]) * ds.dim();
        std::copy(src, src + ds.dim(), out.inputs.data() + r * std::size_t(ds.dim()));
        out.labels[r] = ds.labels[std::size_t(idx[r])];
        if (!ds.density.empty()) out.density[r] = ds.density[std::size_t(idx[r])];
    }
    return out;
}

}  // namespace

std::array<Dataset, 3> split(const Dataset& ds, std::array<double, 3> fractions,
                             std::uint64_t seed) {
    double total = fractions[0] + fractions[1] + fractions[2];
    if (total <= 0.0) throw std::runtime_error("split: fractions must sum to a positive value");
    std::vector<int> order(std::size_t(ds.size()));
    for (int i = 0; i < ds.size(); ++i) order[std::size_t(i)] = i;
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);

    const int n = ds.size();
    int n_val = int(std::floor(double(n) * fractions[1] / total));
    int n_test = int(std::floor(double(n) * fractions[2] / total));
    int n_train = n - n_val - n_test;  // rounding leftovers stay in train

    auto cut = [&](int from, int count) {
        return std::vector<int>(order.begin() + from, order.begin() + from + count);
    };
    return {take_rows(ds, cut(0, n_train)), take_rows(ds, cut(n_train, n_val)),
            take_rows(ds, cut(n_train + n_val, n_test))};
}

Dataset subset(const Dataset& ds, int n, std::optional<std::uint64_t> shuffle_seed) {
    n = std::min(n, ds.size());
    std::vector<int> idx(std::size_t(ds.size()));
    for (int i = 0; i < ds.size(); ++i) idx[std::size_t(i)] = i;
    if (shuffle_seed) {
        Rng rng(*shuffle_seed);
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    }
    idx.resize(std::size_t(n));
    return take_rows(ds, idx);
}

Dataset translate(const Dataset& ds, const std::vector<double>& offset) {
    if (int(offset.size()) != ds.dim()) throw std::runtime_error("translate: offset dim mismatch");
    Dataset out = ds;
    out.density.clear();
    out.name = ds.name + "_translated";
    for (int r = 0; r < out.size(); ++r)
        for (int j = 0; j < out.dim(); ++j) out.inputs.at(r, j) += offset[std::size_t(j)];
    return out;
}

void save_csv(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("save_csv: cannot open " + path);
    char buf[32];
    for (int r = 0; r < ds.size(); ++r) {
        for (int j = 0; j < ds.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.inputs.at(r, j));
            os << buf << ',';
        }
        os << ds.labels[std::size_t(r)] << '\n';
    }
    if (!os) throw std::runtime_error("save_csv: write failed for " + path);
}

Dataset load_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_csv: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> fields;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) fields.push_back(std::stod(cell));
        if (fields.size() < 2) throw std::runtime_error("load_csv: malformed row in " + path);
        labels.push_back(int(std::lround(fields.back())));
        fields.pop_back();
        if (!rows.empty() && rows.front().size() != fields.size())
            throw std::runtime_error("load_csv: inconsistent row width in " + path);
        rows.push_back(std::move(fields));
    }
    if (rows.empty()) throw std::runtime_error("load_csv: empty dataset in " + path);
    Dataset ds;
    ds.name = "csv";
    const int n = int(rows.size()), d = int(rows.front().size());
    ds.inputs = Array({n, d});
    for (int r = 0; r < n; ++r)
        std::copy(rows[std::size_t(r)].begin(), rows[std::size_t(r)].end(),
                  ds.inputs.data() + std::size_t(r) * d);
    ds.labels = std::move(labels);
    int max_label = 0;
    for (int l : ds.labels) max_label = std::max(max_label, l);
    ds.num_classes = max_label + 1;
    return ds;
}

}  // namespace eow
