#include "spft/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "spft/checkpoint.hpp"

namespace spft {

namespace {

std::uint32_t read_be32(const std::string& bytes, std::size_t pos, const char* what) {
    if (pos + 4 > bytes.size()) throw FormatError(std::string(what) + ": truncated");
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[pos + i]);
    return v;
}

std::string join(const std::vector<int>& v) {
    std::string out;
    for (int x : v) out += (out.empty() ? "" : ",") + std::to_string(x);
    return out;
}

std::vector<double> blob_image(std::mt19937_64& rng, Shape3 dims, std::size_t blobs) {
    std::vector<double> img(dims.size(), 0.0);
    std::uniform_real_distribution<double> ux(0.0, static_cast<double>(dims.width));
    std::uniform_real_distribution<double> uy(0.0, static_cast<double>(dims.height));
    std::uniform_real_distribution<double> usig(1.0, std::max(1.5, static_cast<double>(std::min(dims.height, dims.width)) / 4.0));
    std::normal_distribution<double> amp(0.0, 1.0);
    for (std::size_t b = 0; b < blobs; ++b) {
        const double cx = ux(rng), cy = uy(rng), sig = usig(rng);
        for (std::size_t c = 0; c < dims.channels; ++c) {
            const double a = amp(rng);
            for (std::size_t y = 0; y < dims.height; ++y) {
                for (std::size_t x = 0; x < dims.width; ++x) {
                    const double dx = static_cast<double>(x) + 0.5 - cx;
                    const double dy = static_cast<double>(y) + 0.5 - cy;
                    img[(c * dims.height + y) * dims.width + x] += a * std::exp(-(dx * dx + dy * dy) / (2.0 * sig * sig));
                }
            }
        }
    }
    double ss = 0.0;
    for (double v : img) ss += v * v;
    const double rms = std::sqrt(ss / static_cast<double>(img.size()));
    if (rms > 0.0)
        for (double& v : img) v /= rms;
    return img;
}

Dataset sample_from_prototypes(std::mt19937_64& rng, const std::vector<std::vector<double>>& protos, Shape3 dims,
                               std::size_t per_class, double noise, std::string id) {
    Dataset d;
    d.num_classes = static_cast<int>(protos.size());
    d.images = Tensor({per_class * protos.size(), dims.channels, dims.height, dims.width});
    d.labels.reserve(per_class * protos.size());
    std::normal_distribution<double> gauss(0.0, noise);
    std::size_t n = 0;
    for (std::size_t k = 0; k < protos.size(); ++k) {
        for (std::size_t i = 0; i < per_class; ++i, ++n) {
            auto dst = d.images.sample(n);
            for (std::size_t j = 0; j < dims.size(); ++j) dst[j] = protos[k][j] + gauss(rng);
            d.labels.push_back(static_cast<int>(k));
        }
    }
    d.id = std::move(id);
    return d;
}

}  // namespace

Shape3 Dataset::example_shape() const {
    if (images.rank() != 4) return {};
    return {images.dim(1), images.dim(2), images.dim(3)};
}

void Dataset::validate() const {
    if (images.rank() != 4) throw std::invalid_argument("dataset: images must be (N, C, H, W)");
    if (images.dim(0) != labels.size()) throw std::invalid_argument("dataset: image and label counts differ");
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw std::invalid_argument("dataset: label out of range");
    }
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
    const Shape3 s = example_shape();
    Tensor out({indices.size(), s.channels, s.height, s.width});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        auto src = images.sample(indices[i]);
        std::copy(src.begin(), src.end(), out.sample(i).begin());
    }
    return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(labels.at(i));
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset d;
    d.images = gather(indices);
    d.labels = gather_labels(indices);
    d.num_classes = num_classes;
    d.channel_means = channel_means;
    d.id = id;
    return d;
}

Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.example_shape() != b.example_shape() || a.num_classes != b.num_classes) {
        throw std::invalid_argument("concat: datasets differ in shape or class count");
    }
    Dataset d;
    const Shape3 s = a.example_shape();
    std::vector<double> data(a.images.storage());
    data.insert(data.end(), b.images.storage().begin(), b.images.storage().end());
    d.images = Tensor({a.size() + b.size(), s.channels, s.height, s.width}, std::move(data));
    d.labels = a.labels;
    d.labels.insert(d.labels.end(), b.labels.begin(), b.labels.end());
    d.num_classes = a.num_classes;
    d.channel_means = a.channel_means;
    d.id = a.id + "+" + b.id;
    return d;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const std::string img = read_file(images_path);
    const std::string lab = read_file(labels_path);
    if (read_be32(img, 0, "idx images") != 0x00000803u) throw FormatError("idx images: bad magic");
    if (read_be32(lab, 0, "idx labels") != 0x00000801u) throw FormatError("idx labels: bad magic");
    const std::size_t n = read_be32(img, 4, "idx images");
    const std::size_t h = read_be32(img, 8, "idx images");
    const std::size_t w = read_be32(img, 12, "idx images");
    const std::size_t nl = read_be32(lab, 4, "idx labels");
    if (img.size() < 16 + n * h * w) throw FormatError("idx images: truncated");
    if (lab.size() < 8 + nl) throw FormatError("idx labels: truncated");
    if (n != nl) {
        throw FormatError("idx: count mismatch (" + std::to_string(n) + " images, " + std::to_string(nl) + " labels)");
    }
    Dataset d;
    d.images = Tensor({n, 1, h, w});
    auto px = d.images.data();
    for (std::size_t i = 0; i < n * h * w; ++i) px[i] = static_cast<unsigned char>(img[16 + i]) / 255.0;
    d.labels.resize(n);
    int kmax = -1;
    for (std::size_t i = 0; i < n; ++i) {
        d.labels[i] = static_cast<unsigned char>(lab[8 + i]);
        kmax = std::max(kmax, d.labels[i]);
    }
    d.num_classes = kmax + 1;
    d.id = "idx:" + images_path.filename().string();
    return d;
}

TransferTaskPair make_split_transfer(const Dataset& dataset, const std::vector<int>& source_classes,
                                     const std::vector<int>& target_classes, std::size_t per_class_train,
                                     double val_fraction, std::uint64_t seed, double source_test_fraction) {
    if (source_classes.empty() || target_classes.empty()) throw std::invalid_argument("split: empty class list");
    const std::set<int> src(source_classes.begin(), source_classes.end());
    const std::set<int> tgt(target_classes.begin(), target_classes.end());
    if (src.size() != source_classes.size() || tgt.size() != target_classes.size()) {
        throw std::invalid_argument("split: duplicate class in list");
    }
    for (int c : tgt) {
        if (src.count(c)) throw std::invalid_argument("split: source and target class lists overlap");
    }
    if (val_fraction < 0.0 || val_fraction >= 1.0) throw std::invalid_argument("split: val_fraction must be in [0, 1)");
    if (source_test_fraction < 0.0 || source_test_fraction >= 1.0) {
        throw std::invalid_argument("split: source_test_fraction must be in [0, 1)");
    }
    std::mt19937_64 rng(seed);

    auto relabel = [&](std::vector<std::size_t> idx, const std::vector<int>& classes) {
        Dataset d = dataset.subset(idx);
        for (int& y : d.labels) {
            y = static_cast<int>(std::find(classes.begin(), classes.end(), y) - classes.begin());
        }
        d.num_classes = static_cast<int>(classes.size());
        return d;
    };

    TransferTaskPair pair;
    pair.per_class_train = per_class_train;

    std::vector<std::size_t> source_idx;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (src.count(dataset.labels[i])) source_idx.push_back(i);
    if (source_idx.empty()) throw std::invalid_argument("split: no examples of the source classes");
    std::shuffle(source_idx.begin(), source_idx.end(), rng);
    const auto n_src_test = static_cast<std::size_t>(std::llround(source_test_fraction * static_cast<double>(source_idx.size())));
    std::vector<std::size_t> src_test(source_idx.begin(), source_idx.begin() + static_cast<std::ptrdiff_t>(n_src_test));
    std::vector<std::size_t> src_train(source_idx.begin() + static_cast<std::ptrdiff_t>(n_src_test), source_idx.end());
    std::sort(src_test.begin(), src_test.end());
    std::sort(src_train.begin(), src_train.end());
    pair.source = relabel(src_train, source_classes);
    pair.source_test = relabel(src_test, source_classes);

    std::vector<std::size_t> train, val, test;
    for (int c : target_classes) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < dataset.size(); ++i)
            if (dataset.labels[i] == c) idx.push_back(i);
        if (idx.size() <= per_class_train) {
            throw std::invalid_argument("split: class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                                        " examples, needs more than " + std::to_string(per_class_train));
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t rest = idx.size() - per_class_train;
        const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(rest)));
        auto it = idx.begin();
        train.insert(train.end(), it, it + static_cast<std::ptrdiff_t>(per_class_train));
        it += static_cast<std::ptrdiff_t>(per_class_train);
        val.insert(val.end(), it, it + static_cast<std::ptrdiff_t>(n_val));
        it += static_cast<std::ptrdiff_t>(n_val);
        test.insert(test.end(), it, idx.end());
    }
    pair.target_train = relabel(train, target_classes);
    pair.target_val = relabel(val, target_classes);
    pair.target_test = relabel(test, target_classes);

    std::ostringstream tag;
    tag << dataset.id << "|src=" << join(source_classes) << "|tgt=" << join(target_classes)
        << "|n=" << per_class_train << "|seed=" << seed;
    for (Dataset* d : {&pair.source, &pair.source_test, &pair.target_train, &pair.target_val, &pair.target_test}) {
        d->id = tag.str();
    }
    pair.source.id += "|source";
    pair.source_test.id += "|source_test";
    pair.target_train.id += "|train";
    pair.target_val.id += "|val";
    pair.target_test.id += "|test";
    return pair;
}

SyntheticPrototypes synthetic_prototypes(std::uint64_t seed, Shape3 dims, int source_K, int target_K, double shift,
                                         const SyntheticOptions& opts) {
    if (shift < 0.0) throw std::invalid_argument("synthetic: shift must be nonnegative");
    if (source_K < 1 || target_K < 1 || dims.size() == 0) throw std::invalid_argument("synthetic: bad dimensions");
    std::mt19937_64 rng(seed);
    SyntheticPrototypes p;
    for (int k = 0; k < source_K; ++k) p.source.push_back(blob_image(rng, dims, opts.blobs));
    for (int k = 0; k < target_K; ++k) {
        std::vector<double> proto = p.source[static_cast<std::size_t>(k % source_K)];
        const std::vector<double> dir = blob_image(rng, dims, opts.blobs);
        for (std::size_t j = 0; j < proto.size(); ++j) proto[j] += shift * dir[j];
        p.target.push_back(std::move(proto));
    }
    return p;
}

TransferTaskPair generate_synthetic_pair(std::uint64_t seed, Shape3 dims, int source_K, int target_K, double shift,
                                         const SyntheticOptions& opts) {
    const SyntheticPrototypes protos = synthetic_prototypes(seed, dims, source_K, target_K, shift, opts);
    std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
    std::ostringstream id;
    id << "synthetic|seed=" << seed << "|dims=" << dims.channels << "x" << dims.height << "x" << dims.width
       << "|K=" << source_K << "->" << target_K << "|shift=" << shift << "|noise=" << opts.noise
       << "|blobs=" << opts.blobs;
    TransferTaskPair pair;
    pair.per_class_train = opts.per_class_train;
    pair.source = sample_from_prototypes(rng, protos.source, dims, opts.source_per_class, opts.noise, id.str() + "|source");
    pair.source_test =
        sample_from_prototypes(rng, protos.source, dims, opts.source_test_per_class, opts.noise, id.str() + "|source_test");
    pair.target_train = sample_from_prototypes(rng, protos.target, dims, opts.per_class_train, opts.noise, id.str() + "|train");
    pair.target_val = sample_from_prototypes(rng, protos.target, dims, opts.per_class_val, opts.noise, id.str() + "|val");
    pair.target_test = sample_from_prototypes(rng, protos.target, dims, opts.per_class_test, opts.noise, id.str() + "|test");
    return pair;
}

std::vector<double> compute_channel_means(const Dataset& train) {
    if (train.empty()) throw std::invalid_argument("channel means: empty dataset");
    const Shape3 s = train.example_shape();
    const std::size_t hw = s.height * s.width;
    std::vector<double> means(s.channels, 0.0);
    for (std::size_t n = 0; n < train.size(); ++n) {
        auto img = train.images.sample(n);
        for (std::size_t c = 0; c < s.channels; ++c) {
            double sum = 0.0;
            for (std::size_t j = 0; j < hw; ++j) sum += img[c * hw + j];
            means[c] += sum;
        }
    }
    for (double& m : means) m /= static_cast<double>(train.size() * hw);
    return means;
}

void apply_channel_means(Dataset& data, const std::vector<double>& means) {
    const Shape3 s = data.example_shape();
    if (means.size() != s.channels) throw std::invalid_argument("channel means: channel count mismatch");
    const std::size_t hw = s.height * s.width;
    for (std::size_t n = 0; n < data.size(); ++n) {
        auto img = data.images.sample(n);
        for (std::size_t c = 0; c < s.channels; ++c)
            for (std::size_t j = 0; j < hw; ++j) img[c * hw + j] -= means[c];
    }
    data.channel_means = means;
}

Dataset downsample2(const Dataset& data) {
    const Shape3 s = data.example_shape();
    const Shape3 o{s.channels, s.height / 2, s.width / 2};
    if (o.height == 0 || o.width == 0) throw std::invalid_argument("downsample2: image too small");
    Dataset d;
    d.images = Tensor({data.size(), o.channels, o.height, o.width});
    for (std::size_t n = 0; n < data.size(); ++n) {
        auto src = data.images.sample(n);
        auto dst = d.images.sample(n);
        for (std::size_t c = 0; c < o.channels; ++c)
            for (std::size_t y = 0; y < o.height; ++y)
                for (std::size_t x = 0; x < o.width; ++x) {
                    const std::size_t base = (c * s.height + 2 * y) * s.width + 2 * x;
                    dst[(c * o.height + y) * o.width + x] =
                        0.25 * (src[base] + src[base + 1] + src[base + s.width] + src[base + s.width + 1]);
                }
    }
    d.labels = data.labels;
    d.num_classes = data.num_classes;
    d.id = data.id + "|down2";
    return d;
}

void mirror_horizontal(std::span<double> image, Shape3 shape) {
    for (std::size_t c = 0; c < shape.channels; ++c)
        for (std::size_t y = 0; y < shape.height; ++y) {
            double* row = image.data() + (c * shape.height + y) * shape.width;
            std::reverse(row, row + shape.width);
        }
}

Tensor augment(const Tensor& batch, std::uint64_t seed, const AugmentOptions& opts) {
    if (opts.crop_pad < 0) throw std::invalid_argument("augment: crop_pad must be nonnegative");
    if (batch.rank() != 4) throw std::invalid_argument("augment: batch must be (B, C, H, W)");
    Tensor out = batch;
    const Shape3 s{batch.dim(1), batch.dim(2), batch.dim(3)};
    const auto pad = static_cast<std::ptrdiff_t>(opts.crop_pad);
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::bernoulli_distribution blur(std::clamp(opts.blur_prob, 0.0, 1.0));
    std::uniform_int_distribution<std::ptrdiff_t> offset(0, 2 * pad);
    std::vector<double> tmp(s.size());
    for (std::size_t b = 0; b < batch.dim(0); ++b) {
        auto img = out.sample(b);
        if (opts.mirror && coin(rng)) mirror_horizontal(img, s);
        if (pad > 0) {
            const std::ptrdiff_t dy = offset(rng) - pad;
            const std::ptrdiff_t dx = offset(rng) - pad;
            const auto H = static_cast<std::ptrdiff_t>(s.height), W = static_cast<std::ptrdiff_t>(s.width);
            for (std::size_t c = 0; c < s.channels; ++c)
                for (std::ptrdiff_t y = 0; y < H; ++y)
                    for (std::ptrdiff_t x = 0; x < W; ++x) {
                        const std::ptrdiff_t sy = y + dy, sx = x + dx;
                        const bool inside = sy >= 0 && sy < H && sx >= 0 && sx < W;
                        tmp[(c * s.height + static_cast<std::size_t>(y)) * s.width + static_cast<std::size_t>(x)] =
                            inside ? img[(c * s.height + static_cast<std::size_t>(sy)) * s.width + static_cast<std::size_t>(sx)]
                                   : 0.0;
                    }
            std::copy(tmp.begin(), tmp.end(), img.begin());
        }
        if (opts.blur_prob > 0.0 && blur(rng)) {
            const auto H = static_cast<std::ptrdiff_t>(s.height), W = static_cast<std::ptrdiff_t>(s.width);
            for (std::size_t c = 0; c < s.channels; ++c)
                for (std::ptrdiff_t y = 0; y < H; ++y)
                    for (std::ptrdiff_t x = 0; x < W; ++x) {
                        double sum = 0.0;
                        int cnt = 0;
                        for (std::ptrdiff_t u = -1; u <= 1; ++u)
                            for (std::ptrdiff_t v = -1; v <= 1; ++v) {
                                const std::ptrdiff_t yy = y + u, xx = x + v;
                                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                                sum += img[(c * s.height + static_cast<std::size_t>(yy)) * s.width + static_cast<std::size_t>(xx)];
                                ++cnt;
                            }
                        tmp[(c * s.height + static_cast<std::size_t>(y)) * s.width + static_cast<std::size_t>(x)] = sum / cnt;
                    }
            std::copy(tmp.begin(), tmp.end(), img.begin());
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> stratified_folds(const Dataset& data, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("folds: need at least 2 folds");
    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::size_t>> folds(k);
    for (int c = 0; c < data.num_classes; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < data.size(); ++i)
            if (data.labels[i] == c) idx.push_back(i);
        if (idx.size() < k) {
            throw std::invalid_argument("folds: class " + std::to_string(c) + " has fewer than " + std::to_string(k) +
                                        " examples (fold size < 1 per class)");
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < idx.size(); ++i) folds[i % k].push_back(idx[i]);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

}  // namespace spft
