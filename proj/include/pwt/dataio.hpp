#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pwt/tensor.hpp"

// Dataset loading and batching. File loaders account for every record and
// never silently truncate. Normalization statistics are computed from the
// training split only and then applied to both splits.

namespace pwt::data {

// Byte-level contents of an image file in the big-endian IDX format.
struct RawImages {
    std::size_t count = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols
};

RawImages load_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const RawImages& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

enum class CifarFormat { Cifar10, Cifar100 };

// Record-per-image binary CIFAR contents; CIFAR-100 keeps the fine label.
struct RawCifar {
    std::size_t count = 0;
    std::vector<std::uint8_t> pixels;  // count * 3 * 32 * 32
    std::vector<std::uint8_t> labels;
};

RawCifar load_cifar_file(const std::filesystem::path& path, CifarFormat format);

template <typename T>
struct Dataset {
    Tensor<T> images;          // [n, C, H, W]
    std::vector<int> labels;   // [n]
    int num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t channels() const { return images.dim(1); }
    std::size_t side() const { return images.dim(2); }
};

// Loads an IDX image/label pair. Pixels land in [0,1]; normalization is a
// separate, explicit step.
template <typename T>
Dataset<T> load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    RawImages imgs = load_idx_images(images_path);
    std::vector<std::uint8_t> labels = load_idx_labels(labels_path);
    if (labels.size() != imgs.count)
        throw std::runtime_error("load_idx: " + images_path.string() + " holds " + std::to_string(imgs.count) +
                                 " images but " + labels_path.string() + " holds " + std::to_string(labels.size()) +
                                 " labels");
    Dataset<T> ds;
    ds.images = Tensor<T>({imgs.count, 1, imgs.rows, imgs.cols});
    for (std::size_t i = 0; i < imgs.pixels.size(); ++i)
        ds.images[i] = static_cast<T>(static_cast<double>(imgs.pixels[i]) / 255.0);
    ds.labels.reserve(labels.size());
    int max_label = 0;
    for (std::uint8_t l : labels) {
        ds.labels.push_back(static_cast<int>(l));
        max_label = std::max(max_label, static_cast<int>(l));
    }
    ds.num_classes = max_label + 1;
    return ds;
}

template <typename T>
Dataset<T> load_cifar(const std::vector<std::filesystem::path>& paths, CifarFormat format) {
    if (paths.empty()) throw std::invalid_argument("load_cifar: no input files");
    Dataset<T> ds;
    std::size_t total = 0;
    std::vector<RawCifar> parts;
    for (const auto& p : paths) {
        parts.push_back(load_cifar_file(p, format));
        total += parts.back().count;
    }
    ds.images = Tensor<T>({total, 3, 32, 32});
    ds.labels.reserve(total);
    std::size_t at = 0;
    for (const auto& part : parts) {
        for (std::size_t i = 0; i < part.pixels.size(); ++i)
            ds.images[at * 3 * 32 * 32 + i] = static_cast<T>(static_cast<double>(part.pixels[i]) / 255.0);
        for (std::uint8_t l : part.labels) ds.labels.push_back(static_cast<int>(l));
        at += part.count;
    }
    ds.num_classes = format == CifarFormat::Cifar10 ? 10 : 100;
    return ds;
}

// Class-conditional synthetic images: each class owns a smooth random
// texture template; samples add Gaussian pixel noise on top. Labels cycle
// through the classes, so the histogram is uniform within one image.
template <typename T>
Dataset<T> synthetic_blobs(int num_classes, std::size_t n, int image_side, std::uint64_t seed, int channels = 1) {
    if (num_classes <= 0 || n == 0 || image_side <= 0 || channels <= 0)
        throw std::invalid_argument("synthetic_blobs: parameters must be positive");

    Rng rng(mix_seed(seed, 0x626c6f62ull));
    const std::size_t side = static_cast<std::size_t>(image_side);
    const std::size_t plane = side * side;
    const std::size_t image = static_cast<std::size_t>(channels) * plane;

    // class templates: a few random cosine waves per channel
    std::vector<std::vector<double>> templates(static_cast<std::size_t>(num_classes),
                                               std::vector<double>(image, 0.0));
    const double two_pi = 6.283185307179586476925286766559;
    for (auto& tpl : templates) {
        for (int c = 0; c < channels; ++c) {
            for (int wave = 0; wave < 3; ++wave) {
                double fx = 1.0 + static_cast<double>(rng.bounded(3));
                double fy = 1.0 + static_cast<double>(rng.bounded(3));
                double phase = two_pi * rng.uniform();
                double amp = 0.6 + 0.4 * rng.uniform();
                for (std::size_t y = 0; y < side; ++y)
                    for (std::size_t x = 0; x < side; ++x)
                        tpl[static_cast<std::size_t>(c) * plane + y * side + x] +=
                            amp * std::cos(two_pi * (fx * static_cast<double>(x) + fy * static_cast<double>(y)) /
                                               static_cast<double>(side) +
                                           phase);
            }
        }
    }

    Dataset<T> ds;
    ds.num_classes = num_classes;
    ds.images = Tensor<T>({n, static_cast<std::size_t>(channels), side, side});
    ds.labels.resize(n);
    const double noise = 0.35;
    for (std::size_t i = 0; i < n; ++i) {
        int cls = static_cast<int>(i % static_cast<std::size_t>(num_classes));
        ds.labels[i] = cls;
        const auto& tpl = templates[static_cast<std::size_t>(cls)];
        for (std::size_t p = 0; p < image; ++p)
            ds.images[i * image + p] = static_cast<T>(tpl[p] + noise * rng.normal());
    }
    return ds;
}

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

template <typename T>
ChannelStats compute_channel_stats(const Dataset<T>& ds) {
    const std::size_t n = ds.images.dim(0), C = ds.images.dim(1), plane = ds.images.dim(2) * ds.images.dim(3);
    ChannelStats st;
    st.mean.assign(C, 0.0);
    st.stddev.assign(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const T* px = ds.images.data() + (i * C + c) * plane;
            for (std::size_t p = 0; p < plane; ++p) {
                double v = static_cast<double>(px[p]);
                sum += v;
                sq += v * v;
            }
        }
        double cnt = static_cast<double>(n * plane);
        double mean = sum / cnt;
        double var = sq / cnt - mean * mean;
        st.mean[c] = mean;
        st.stddev[c] = std::sqrt(std::max(var, 0.0));
    }
    return st;
}

template <typename T>
void normalize_with(Dataset<T>& ds, const ChannelStats& st) {
    const std::size_t n = ds.images.dim(0), C = ds.images.dim(1), plane = ds.images.dim(2) * ds.images.dim(3);
    if (st.mean.size() != C) throw std::invalid_argument("normalize_with: channel count mismatch");
    for (std::size_t c = 0; c < C; ++c) {
        double m = st.mean[c];
        double s = st.stddev[c] > 1e-12 ? st.stddev[c] : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            T* px = ds.images.data() + (i * C + c) * plane;
            for (std::size_t p = 0; p < plane; ++p)
                px[p] = static_cast<T>((static_cast<double>(px[p]) - m) / s);
        }
    }
}

// Deterministic shuffled batch indices for one epoch. The permutation is a
// pure function of (seed, epoch); the final short batch is kept.
inline std::vector<std::vector<std::uint32_t>> batch_plan(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                          int epoch) {
    if (batch_size == 0) throw std::invalid_argument("batch_plan: batch_size must be >= 1");
    std::vector<std::uint32_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
    Rng rng(mix_seed(seed, 0x73687566ull, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(perm);
    std::vector<std::vector<std::uint32_t>> plan;
    for (std::size_t at = 0; at < n; at += batch_size) {
        std::size_t end = std::min(n, at + batch_size);
        plan.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(at),
                          perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return plan;
}

template <typename T>
std::pair<Tensor<T>, std::vector<int>> gather_batch(const Dataset<T>& ds, const std::vector<std::uint32_t>& idx) {
    const std::size_t C = ds.images.dim(1), H = ds.images.dim(2), W = ds.images.dim(3);
    const std::size_t image = C * H * W;
    Tensor<T> batch({idx.size(), C, H, W});
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const T* src = ds.images.data() + static_cast<std::size_t>(idx[i]) * image;
        std::copy(src, src + image, batch.data() + i * image);
        labels[i] = ds.labels[idx[i]];
    }
    return {std::move(batch), std::move(labels)};
}

// Splits off the first `train_count` samples as the training set; the rest
// form the evaluation set.
template <typename T>
std::pair<Dataset<T>, Dataset<T>> split_dataset(const Dataset<T>& ds, std::size_t train_count) {
    if (train_count == 0 || train_count >= ds.size())
        throw std::invalid_argument("split_dataset: train_count must leave both splits non-empty");
    const std::size_t C = ds.images.dim(1), H = ds.images.dim(2), W = ds.images.dim(3);
    const std::size_t image = C * H * W;
    Dataset<T> train, test;
    train.num_classes = test.num_classes = ds.num_classes;
    train.images = Tensor<T>({train_count, C, H, W});
    test.images = Tensor<T>({ds.size() - train_count, C, H, W});
    std::copy(ds.images.data(), ds.images.data() + train_count * image, train.images.data());
    std::copy(ds.images.data() + train_count * image, ds.images.data() + ds.size() * image, test.images.data());
    train.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(train_count));
    test.labels.assign(ds.labels.begin() + static_cast<std::ptrdiff_t>(train_count), ds.labels.end());
    return {std::move(train), std::move(test)};
}

}  // namespace pwt::data
