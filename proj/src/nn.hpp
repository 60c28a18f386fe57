#pragma once

// Minimal float32 reverse-mode graph for the slice denoiser. Activations use a
// channel-major (C, B, H, W) layout so a convolution is one GEMM over all
// batch columns.

#include <cstdint>
#include <functional>
#include <new>
#include <random>
#include <string>
#include <vector>

namespace tomodiff::nn {

/// 64-byte aligned storage. Eigen picks scalar or packet code paths by pointer
/// alignment, so a fixed alignment keeps results bitwise reproducible.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};
    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

struct Shape4 {
    int c = 0, b = 0, h = 0, w = 0;
    std::size_t size() const { return static_cast<std::size_t>(c) * b * h * w; }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
};

struct Param {
    std::string name;
    std::vector<int> shape;
    FloatBuffer w;
    FloatBuffer g;
};

struct Node {
    Shape4 s;
    FloatBuffer v;
    FloatBuffer g;
};

class Graph {
public:
    explicit Graph(bool record) : record_(record) {}
    ~Graph();
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    int input(Shape4 s, std::vector<float> v);
    /// k x k convolution with zero padding; W is (cout, cin, k, k).
    int conv(int x, Param& W, Param& b, int stride, int pad);
    int silu(int x);
    /// h * (1 + gamma) + beta with (gamma, beta) stacked in gb as (2C, B, 1, 1).
    int film(int h, int gb);
    int add(int a, int b);
    int concat(int a, int b);
    /// Nearest-neighbour 2x upsampling cropped to (oh, ow).
    int upsample(int x, int oh, int ow);

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

    /// Seeds d(loss)/d(out) and accumulates parameter gradients.
    void backward(int out, const std::vector<float>& dout);

private:
    int push(Shape4 s);

    bool record_;
    std::vector<Node> nodes_;
    std::vector<std::function<void()>> backs_;
};

struct Arch {
    std::vector<int> widths{16, 32, 64, 128};
    int emb_dim = 64;
    int fourier_dim = 16;
};

/// U-Net over single-channel slices conditioned on c_noise through FiLM.
class Network {
public:
    Network() = default;
    Network(const Arch& arch, std::uint64_t seed);

    const Arch& arch() const { return arch_; }
    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }
    std::size_t parameter_count() const;

    /// Raw network output F for inputs already scaled by c_in. x is (1, B, H, W).
    int forward(Graph& g, int x, const std::vector<float>& c_noise);

    void zero_grad();

private:
    struct ResBlock {
        int cin, cout;
        int w1, b1, wf, bf, w2, b2, ws = -1, bs = -1;
    };
    struct Conv {
        int w, b;
    };

    int add_param(const std::string& name, std::vector<int> shape, float stddev, std::mt19937_64& rng);
    Conv make_conv(const std::string& name, int cin, int cout, int k, bool zero, std::mt19937_64& rng);
    ResBlock make_block(const std::string& name, int cin, int cout, std::mt19937_64& rng);
    int block(Graph& g, const ResBlock& rb, int x, int emb);
    int conv(Graph& g, const Conv& c, int x, int stride, int pad);

    Arch arch_;
    std::vector<Param> params_;
    Conv emb1_{}, emb2_{}, in_{}, out_{};
    std::vector<ResBlock> enc_;
    std::vector<Conv> down_;
    ResBlock mid_{};
    std::vector<Conv> up_;
    std::vector<ResBlock> dec_;
};

} // namespace tomodiff::nn
