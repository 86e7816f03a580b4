#include "curvstep/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace curvstep {

std::size_t LayerShape::count() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Layout::Layout(std::vector<LayerShape> layers) : layers_(std::move(layers)) {
    offsets_.reserve(layers_.size());
    for (const auto& l : layers_) {
        offsets_.push_back(size_);
        size_ += l.count();
    }
}

LayoutPtr Layout::flat(std::size_t n) {
    return std::make_shared<const Layout>(std::vector<LayerShape>{{"flat", {n}}});
}

bool same_layout(const LayoutPtr& a, const LayoutPtr& b) {
    return a == b || (a && b && *a == *b);
}

ParamVector::ParamVector(LayoutPtr layout) : layout_(std::move(layout)), data_(layout_->size(), 0.0) {}

ParamVector::ParamVector(LayoutPtr layout, std::vector<double> data)
    : layout_(std::move(layout)), data_(data.begin(), data.end()) {
    CURVSTEP_REQUIRE(data_.size() == layout_->size(), "ParamVector: data length does not match layout");
}

ParamVector::ParamVector(std::initializer_list<double> values)
    : layout_(Layout::flat(values.size())), data_(values) {}

ParamVector ParamVector::filled_like(const ParamVector& other, double value) {
    ParamVector out(other.layout_);
    std::fill(out.data_.begin(), out.data_.end(), value);
    return out;
}

std::span<double> ParamVector::block(std::size_t i) {
    return std::span<double>(data_).subspan(layout_->offset(i), layout_->layers().at(i).count());
}

std::span<const double> ParamVector::block(std::size_t i) const {
    return std::span<const double>(data_).subspan(layout_->offset(i), layout_->layers().at(i).count());
}

ParamVector& ParamVector::operator+=(const ParamVector& o) {
    require_same_layout(*this, o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& o) {
    require_same_layout(*this, o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

ParamVector& ParamVector::operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
}

bool ParamVector::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
ParamVector operator*(double s, ParamVector a) { return a *= s; }

void require_same_layout(const ParamVector& a, const ParamVector& b) {
    CURVSTEP_REQUIRE(a.size() == b.size() && same_layout(a.layout(), b.layout()),
                     "layout mismatch between ParamVectors");
}

double dot(const ParamVector& a, const ParamVector& b) {
    require_same_layout(a, b);
    const double* x = a.data();
    const double* y = b.data();
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += x[i] * y[i];
    return s;
}

double global_norm(const ParamVector& a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, const ParamVector& x, ParamVector& y) {
    require_same_layout(x, y);
    const double* xs = x.data();
    double* ys = y.data();
    for (std::size_t i = 0; i < x.size(); ++i) ys[i] += alpha * xs[i];
}

ParamVector hadamard(const ParamVector& a, const ParamVector& b) {
    require_same_layout(a, b);
    ParamVector out = a;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] *= b[i];
    return out;
}

namespace {

// SplitMix64 finalizer; the stream is mix(seed + counter * gamma).
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
    const std::uint64_t out = mix64(seed_ + (counter_ + 1) * kGamma);
    ++counter_;
    return out;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    // Box-Muller; the second variate is discarded so each call consumes two words.
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split() {
    const std::uint64_t key = next_u64();
    return Rng(mix64(key ^ 0xD1B54A32D192ED03ULL), 0);
}

std::vector<double> rademacher(Rng& rng, std::size_t n) {
    CURVSTEP_REQUIRE(n >= 1, "rademacher: n must be at least 1");
    std::vector<double> out(n);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i % 64 == 0) bits = rng.next_u64();
        out[i] = (bits & 1ULL) ? 1.0 : -1.0;
        bits >>= 1;
    }
    return out;
}

ParamVector rademacher_like(Rng& rng, const ParamVector& like) {
    return ParamVector(like.layout(), rademacher(rng, like.size()));
}

ParamVector normal_like(Rng& rng, const ParamVector& like) {
    ParamVector out(like.layout());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.normal();
    return out;
}

}  // namespace curvstep
