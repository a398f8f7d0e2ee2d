#pragma once

#include <Eigen/Core>

#include <new>
#include <vector>

#include "lmk/image.hpp"

namespace lmk {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatRM>;
using ConstMatMap = Eigen::Map<const MatRM>;

// Fixed 64-byte alignment: Eigen's vectorized reductions peel unaligned
// heads, so results would otherwise depend on where the heap placed the
// buffer and bit-reproducibility across runs would be lost.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};
    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) {}
    T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, size_t) noexcept { ::operator delete(p, kAlign); }
    bool operator==(const AlignedAllocator&) const { return true; }
    bool operator!=(const AlignedAllocator&) const { return false; }
};

using AlignedFloats = std::vector<float, AlignedAllocator<float>>;

// Dense NHWC float tensor. Channel-last keeps each spatial location's
// descriptor contiguous, so grids flatten to (N*H*W) x C matrices for free.
struct Tensor {
    int n = 0, h = 0, w = 0, c = 0;
    AlignedFloats data;

    Tensor() = default;
    Tensor(int n, int h, int w, int c, float fill = 0.f)
        : n(n), h(h), w(w), c(c), data(size_t(n) * h * w * c, fill) {}

    size_t size() const { return data.size(); }
    int spatial() const { return h * w; }

    float& at(int in, int iy, int ix, int ic) {
        return data[((size_t(in) * h + iy) * w + ix) * c + ic];
    }
    float at(int in, int iy, int ix, int ic) const {
        return data[((size_t(in) * h + iy) * w + ix) * c + ic];
    }

    // (N*H*W) x C view
    MatMap rows() { return MatMap(data.data(), Eigen::Index(size_t(n) * h * w), c); }
    ConstMatMap rows() const { return ConstMatMap(data.data(), Eigen::Index(size_t(n) * h * w), c); }

    static Tensor from_images(const std::vector<const Image*>& images);
    static Tensor from_image(const Image& image);
};

}  // namespace lmk
