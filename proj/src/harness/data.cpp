#include "curvstep/harness/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <numeric>

namespace curvstep::harness {

namespace {

std::vector<std::size_t> permutation(Rng& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

Split take(const Split& s, const std::vector<std::size_t>& rows, std::size_t from, std::size_t to) {
    Split out;
    const auto m = static_cast<Eigen::Index>(to - from);
    out.x.resize(m, s.x.cols());
    if (s.y.size() > 0) out.y.resize(m, s.y.cols());
    for (std::size_t i = from; i < to; ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        const auto k = static_cast<Eigen::Index>(i - from);
        out.x.row(k) = s.x.row(r);
        if (s.y.size() > 0) out.y.row(k) = s.y.row(r);
        if (!s.labels.empty()) out.labels.push_back(s.labels[rows[i]]);
    }
    return out;
}

void split_90_10(const Split& all, Rng& rng, Dataset& out) {
    const std::size_t n = all.size();
    const auto perm = permutation(rng, n);
    const std::size_t n_train = std::max<std::size_t>(1, n - n / 10);
    out.train = take(all, perm, 0, n_train);
    out.test = take(all, perm, n_train, n);
}

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IdxError(path, 0, "cannot open file");
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
    if (off + 4 > b.size()) throw IdxError(path, off, "truncated header");
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) | (std::uint32_t(b[off + 2]) << 8) |
           std::uint32_t(b[off + 3]);
}

void put_be32(std::ofstream& f, std::uint32_t v) {
    const char bytes[4] = {char(v >> 24), char((v >> 16) & 0xff), char((v >> 8) & 0xff), char(v & 0xff)};
    f.write(bytes, 4);
}

std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08X", v);
    return buf;
}

}  // namespace

Batch Dataset::gather(const Split& split, const std::vector<std::size_t>& rows) const {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), split.x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = split.x.row(static_cast<Eigen::Index>(rows[i]));
    if (loss == LossKind::ce) {
        std::vector<int> labels(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = split.labels[rows[i]];
        return Batch::ce(std::move(x), std::move(labels));
    }
    Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), split.y.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = split.y.row(static_cast<Eigen::Index>(rows[i]));
    return Batch::mse(std::move(x), std::move(y));
}

Batch Dataset::full(const Split& split) const {
    if (loss == LossKind::ce) return Batch::ce(split.x, split.labels);
    return Batch::mse(split.x, split.y);
}

Dataset gen_regression(std::size_t n, std::size_t d, double noise_std, std::uint64_t seed) {
    CURVSTEP_REQUIRE(n >= 1 && d >= 1, "gen_regression: n and d must be at least 1");
    CURVSTEP_REQUIRE(noise_std >= 0.0, "gen_regression: noise_std must be >= 0");
    Rng rng(seed);
    Rng feat = rng.split(), coef = rng.split(), noise = rng.split(), order = rng.split();
    Split all;
    all.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < all.x.rows(); ++i)
        for (Eigen::Index j = 0; j < all.x.cols(); ++j) all.x(i, j) = feat.normal();
    Eigen::VectorXd beta(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < beta.size(); ++j) beta(j) = coef.normal();
    all.y = all.x * beta;
    for (Eigen::Index i = 0; i < all.y.rows(); ++i) all.y(i, 0) += noise_std * noise.normal();
    Dataset out;
    out.loss = LossKind::mse;
    split_90_10(all, order, out);
    return out;
}

Dataset gen_classification(std::size_t n, std::size_t d, std::size_t classes, double separation, std::uint64_t seed) {
    CURVSTEP_REQUIRE(classes >= 2, "gen_classification: classes must be at least 2");
    CURVSTEP_REQUIRE(n >= classes && d >= 1, "gen_classification: need n >= classes and d >= 1");
    CURVSTEP_REQUIRE(separation >= 0.0, "gen_classification: separation must be >= 0");
    Rng rng(seed);
    Rng feat = rng.split(), order = rng.split();

    // Orthogonal axes give equal pairwise distances; with too few dims the
    // means sit on a circle with adjacent distance `separation`.
    const auto c = static_cast<Eigen::Index>(classes);
    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(c, static_cast<Eigen::Index>(d));
    if (d >= classes) {
        for (Eigen::Index k = 0; k < c; ++k) means(k, k) = separation / std::numbers::sqrt2;
    } else if (d >= 2) {
        const double r = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(classes)));
        for (Eigen::Index k = 0; k < c; ++k) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
            means(k, 0) = r * std::cos(a);
            means(k, 1) = r * std::sin(a);
        }
    } else {
        for (Eigen::Index k = 0; k < c; ++k) means(k, 0) = separation * static_cast<double>(k);
    }

    Split all;
    all.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    all.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i % classes);
        all.labels[i] = static_cast<int>(k);
        for (Eigen::Index j = 0; j < all.x.cols(); ++j)
            all.x(static_cast<Eigen::Index>(i), j) = means(k, j) + feat.normal();
    }
    Dataset out;
    out.loss = LossKind::ce;
    out.num_classes = classes;
    split_90_10(all, order, out);
    return out;
}

IdxError::IdxError(const std::string& file, std::size_t off, const std::string& what)
    : std::runtime_error("IDX parse error in " + file + " at offset " + std::to_string(off) + ": " + what), offset(off) {}

Split load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);

    const std::uint32_t im = be32(img, 0, images_path);
    if (im != kIdxImagesMagic)
        throw IdxError(images_path, 0, "bad magic " + hex32(im) + ", expected " + hex32(kIdxImagesMagic));
    const std::size_t count = be32(img, 4, images_path);
    const std::size_t rows = be32(img, 8, images_path);
    const std::size_t cols = be32(img, 12, images_path);
    const std::size_t need = 16 + count * rows * cols;
    if (img.size() < need)
        throw IdxError(images_path, img.size(),
                       "truncated pixel data: expected " + std::to_string(need) + " bytes, got " + std::to_string(img.size()));

    const std::uint32_t lm = be32(lab, 0, labels_path);
    if (lm != kIdxLabelsMagic)
        throw IdxError(labels_path, 0, "bad magic " + hex32(lm) + ", expected " + hex32(kIdxLabelsMagic));
    const std::size_t lcount = be32(lab, 4, labels_path);
    if (lcount != count)
        throw IdxError(labels_path, 4,
                       "count mismatch: " + std::to_string(lcount) + " labels for " + std::to_string(count) + " images");
    if (lab.size() < 8 + lcount)
        throw IdxError(labels_path, lab.size(),
                       "truncated label data: expected " + std::to_string(8 + lcount) + " bytes, got " + std::to_string(lab.size()));

    Split s;
    const std::size_t dim = rows * cols;
    s.x.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < dim; ++j)
            s.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = img[16 + i * dim + j] / 255.0;
    s.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) s.labels[i] = lab[8 + i];
    return s;
}

void write_idx(const std::string& images_path, const std::string& labels_path, std::size_t rows, std::size_t cols,
               const std::vector<std::uint8_t>& pixels, const std::vector<std::uint8_t>& labels) {
    CURVSTEP_REQUIRE(rows * cols > 0 && pixels.size() == labels.size() * rows * cols,
                     "write_idx: pixel count must equal labels * rows * cols");
    std::ofstream fi(images_path, std::ios::binary);
    std::ofstream fl(labels_path, std::ios::binary);
    if (!fi || !fl) throw std::runtime_error("write_idx: cannot open output files");
    put_be32(fi, kIdxImagesMagic);
    put_be32(fi, static_cast<std::uint32_t>(labels.size()));
    put_be32(fi, static_cast<std::uint32_t>(rows));
    put_be32(fi, static_cast<std::uint32_t>(cols));
    fi.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    put_be32(fl, kIdxLabelsMagic);
    put_be32(fl, static_cast<std::uint32_t>(labels.size()));
    fl.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

Dataset load_idx_dataset(const std::string& train_images, const std::string& train_labels,
                         const std::string& test_images, const std::string& test_labels) {
    Dataset d;
    d.loss = LossKind::ce;
    d.train = load_idx(train_images, train_labels);
    d.test = load_idx(test_images, test_labels);
    if (d.train.x.cols() != d.test.x.cols())
        throw IdxError(test_images, 8, "image size differs from the training file");
    int max_label = 1;
    for (int l : d.train.labels) max_label = std::max(max_label, l);
    for (int l : d.test.labels) max_label = std::max(max_label, l);
    d.num_classes = static_cast<std::size_t>(max_label) + 1;
    return d;
}

double accuracy(const Model& model, const ParamVector& w, const Split& split) {
    if (split.size() == 0) return std::numeric_limits<double>::quiet_NaN();
    const Eigen::MatrixXd z = forward(model, w, split.x);
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::Index arg = 0;
        z.row(i).maxCoeff(&arg);
        if (arg == split.labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(split.size());
}

double eval_metric(const Model& model, const ParamVector& w, const Dataset& data, const Split& split) {
    if (data.loss == LossKind::ce) return accuracy(model, w, split);
    return loss_value(model, w, data.full(split));
}

}  // namespace curvstep::harness
