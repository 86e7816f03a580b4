#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace curvstep {

/// Raised when a caller breaks an operation's precondition (shape, layout,
/// enum pairing). These indicate programming errors, not bad data.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

#define CURVSTEP_REQUIRE(cond, msg)                                              \
    do {                                                                         \
        if (!(cond)) throw ::curvstep::ContractError(std::string(msg));          \
    } while (0)

struct LayerShape {
    std::string name;
    std::vector<std::size_t> shape;

    std::size_t count() const;
    bool operator==(const LayerShape&) const = default;
};

/// Ordered list of named blocks. Shared between vectors so that layout
/// comparisons are usually a pointer check.
class Layout {
public:
    Layout() = default;
    explicit Layout(std::vector<LayerShape> layers);

    static std::shared_ptr<const Layout> flat(std::size_t n);

    const std::vector<LayerShape>& layers() const { return layers_; }
    std::size_t size() const { return size_; }
    /// Offset of layer `i` into the flat buffer.
    std::size_t offset(std::size_t i) const { return offsets_.at(i); }

    bool operator==(const Layout& other) const { return layers_ == other.layers_; }

private:
    std::vector<LayerShape> layers_;
    std::vector<std::size_t> offsets_;
    std::size_t size_ = 0;
};

using LayoutPtr = std::shared_ptr<const Layout>;

bool same_layout(const LayoutPtr& a, const LayoutPtr& b);

/// 64-byte aligned so vectorized kernels see the same alignment every run;
/// otherwise results can differ in the last bit between allocations.
using AlignedDoubles = std::vector<double, Eigen::aligned_allocator<double>>;

/// Flat f64 parameter vector with layer metadata.
class ParamVector {
public:
    ParamVector() : layout_(Layout::flat(0)) {}
    explicit ParamVector(LayoutPtr layout);
    ParamVector(LayoutPtr layout, std::vector<double> data);
    /// Convenience for flat vectors in tests and small examples.
    ParamVector(std::initializer_list<double> values);

    static ParamVector zeros_like(const ParamVector& other) { return ParamVector(other.layout_); }
    static ParamVector filled_like(const ParamVector& other, double value);

    std::size_t size() const { return data_.size(); }
    const LayoutPtr& layout() const { return layout_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    AlignedDoubles& raw() { return data_; }
    const AlignedDoubles& raw() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// View of the i-th layer block.
    std::span<double> block(std::size_t i);
    std::span<const double> block(std::size_t i) const;

    ParamVector& operator+=(const ParamVector& o);
    ParamVector& operator-=(const ParamVector& o);
    ParamVector& operator*=(double s);

    bool all_finite() const;

private:
    LayoutPtr layout_;
    AlignedDoubles data_;
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a, const ParamVector& b);
ParamVector operator*(double s, ParamVector a);

void require_same_layout(const ParamVector& a, const ParamVector& b);

double dot(const ParamVector& a, const ParamVector& b);
double global_norm(const ParamVector& a);
/// y += alpha * x
void axpy(double alpha, const ParamVector& x, ParamVector& y);
ParamVector hadamard(const ParamVector& a, const ParamVector& b);

/// Counter-based generator: output i of a stream is a pure function of
/// (seed, i), so streams replay exactly and splitting is O(1).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double normal();
    /// Child stream keyed on this stream's next output; advances the parent.
    Rng split();

    bool operator==(const Rng&) const = default;

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

std::vector<double> rademacher(Rng& rng, std::size_t n);
ParamVector rademacher_like(Rng& rng, const ParamVector& like);
ParamVector normal_like(Rng& rng, const ParamVector& like);

}  // namespace curvstep
