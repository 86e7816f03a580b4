#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "curvstep/model.hpp"

namespace curvstep::harness {

/// Row-major examples: x is (n, d). Regression targets y are (n, 1);
/// classification uses labels and leaves y empty.
struct Split {
    Eigen::MatrixXd x;
    Eigen::MatrixXd y;
    std::vector<int> labels;

    std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
};

struct Dataset {
    LossKind loss = LossKind::mse;
    std::size_t num_classes = 0;  // 0 for regression
    Split train;
    Split test;

    std::size_t input_dim() const { return static_cast<std::size_t>(train.x.cols()); }
    std::size_t output_dim() const { return loss == LossKind::ce ? num_classes : 1; }

    Batch gather(const Split& split, const std::vector<std::size_t>& rows) const;
    Batch train_batch(const std::vector<std::size_t>& rows) const { return gather(train, rows); }
    Batch full(const Split& split) const;
};

/// y = X beta + eps with X, beta ~ N(0, 1) and eps ~ N(0, noise_std^2); 90/10 split.
Dataset gen_regression(std::size_t n, std::size_t d, double noise_std, std::uint64_t seed);

/// Unit-variance Gaussian blobs, one per class, with pairwise mean distance
/// `separation`; labels balanced (n / classes each, remainder to the first
/// classes); 90/10 split.
Dataset gen_classification(std::size_t n, std::size_t d, std::size_t classes, double separation, std::uint64_t seed);

class IdxError : public std::runtime_error {
public:
    IdxError(const std::string& file, std::size_t offset, const std::string& what);
    std::size_t offset;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Pixels scaled to [0, 1] and flattened row by row.
Split load_idx(const std::string& images_path, const std::string& labels_path);

/// u8 images (count * rows * cols bytes) and u8 labels.
void write_idx(const std::string& images_path, const std::string& labels_path, std::size_t rows, std::size_t cols,
               const std::vector<std::uint8_t>& pixels, const std::vector<std::uint8_t>& labels);

/// Classification dataset from local IDX files (e.g. Fashion-MNIST).
Dataset load_idx_dataset(const std::string& train_images, const std::string& train_labels,
                         const std::string& test_images, const std::string& test_labels);

/// Test accuracy for CE datasets; test loss (MSE convention) for regression.
double eval_metric(const Model& model, const ParamVector& w, const Dataset& data, const Split& split);
double accuracy(const Model& model, const ParamVector& w, const Split& split);

}  // namespace curvstep::harness
