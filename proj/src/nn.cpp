#include "nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace tomodiff::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

int out_size(int n, int k, int stride, int pad) { return (n + 2 * pad - k) / stride + 1; }

void im2col(const float* in, Shape4 s, int k, int stride, int pad, int ho, int wo, float* col) {
    const std::size_t ncols = static_cast<std::size_t>(s.b) * ho * wo;
    for (int ci = 0; ci < s.c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                float* row = col + static_cast<std::size_t>((ci * k + ky) * k + kx) * ncols;
                for (int b = 0; b < s.b; ++b) {
                    const float* src = in + (static_cast<std::size_t>(ci) * s.b + b) * s.plane();
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        float* dst = row + (static_cast<std::size_t>(b) * ho + oy) * wo;
                        if (iy < 0 || iy >= s.h) {
                            std::fill(dst, dst + wo, 0.0f);
                            continue;
                        }
                        const float* srow = src + static_cast<std::size_t>(iy) * s.w;
                        if (stride == 1) {
                            const int off = kx - pad;
                            const int lo = std::max(0, -off), hi = std::min(wo, s.w - off);
                            std::fill(dst, dst + lo, 0.0f);
                            if (hi > lo) std::copy(srow + lo + off, srow + hi + off, dst + lo);
                            std::fill(dst + std::max(hi, lo), dst + wo, 0.0f);
                        } else {
                            for (int ox = 0; ox < wo; ++ox) {
                                const int ix = ox * stride - pad + kx;
                                dst[ox] = (ix >= 0 && ix < s.w) ? srow[ix] : 0.0f;
                            }
                        }
                    }
                }
            }
}

void col2im(const float* col, Shape4 s, int k, int stride, int pad, int ho, int wo, float* out) {
    const std::size_t ncols = static_cast<std::size_t>(s.b) * ho * wo;
    for (int ci = 0; ci < s.c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const float* row = col + static_cast<std::size_t>((ci * k + ky) * k + kx) * ncols;
                for (int b = 0; b < s.b; ++b) {
                    float* dst = out + (static_cast<std::size_t>(ci) * s.b + b) * s.plane();
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= s.h) continue;
                        const float* src = row + (static_cast<std::size_t>(b) * ho + oy) * wo;
                        float* drow = dst + static_cast<std::size_t>(iy) * s.w;
                        if (stride == 1) {
                            const int off = kx - pad;
                            const int lo = std::max(0, -off), hi = std::min(wo, s.w - off);
                            for (int ox = lo; ox < hi; ++ox) drow[ox + off] += src[ox];
                            continue;
                        }
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < s.w) drow[ix] += src[ox];
                        }
                    }
                }
            }
}

// Recycles activation buffers per thread; large fresh allocations are
// page-faulted on every forward pass otherwise.
class BufferPool {
public:
    FloatBuffer take(std::size_t n) {
        auto it = free_.lower_bound(n);
        if (it == free_.end()) return FloatBuffer(n, 0.0f);
        FloatBuffer v = std::move(it->second);
        free_.erase(it);
        v.assign(n, 0.0f);
        return v;
    }
    void give(FloatBuffer&& v) {
        if (v.capacity() == 0 || free_.size() >= 512) return;
        free_.emplace(v.capacity(), std::move(v));
    }

private:
    std::multimap<std::size_t, FloatBuffer> free_;
};

BufferPool& pool() {
    thread_local BufferPool p;
    return p;
}

struct PooledBuffer {
    FloatBuffer v;
    explicit PooledBuffer(std::size_t n) : v(pool().take(n)) {}
    ~PooledBuffer() { pool().give(std::move(v)); }
};

} // namespace

Graph::~Graph() {
    for (auto& n : nodes_) {
        pool().give(std::move(n.v));
        pool().give(std::move(n.g));
    }
}

int Graph::push(Shape4 s) {
    Node n;
    n.s = s;
    n.v = pool().take(s.size());
    if (record_) n.g = pool().take(s.size());
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Graph::input(Shape4 s, std::vector<float> v) {
    if (v.size() != s.size()) throw std::invalid_argument("graph input size mismatch");
    const int id = push(s);
    std::copy(v.begin(), v.end(), nodes_[static_cast<std::size_t>(id)].v.begin());
    return id;
}

int Graph::conv(int x, Param& W, Param& b, int stride, int pad) {
    const Shape4 s = node(x).s;
    const int cout = W.shape[0], cin = W.shape[1], k = W.shape[2];
    if (cin != s.c) throw std::invalid_argument("conv channel mismatch for " + W.name);
    const int ho = out_size(s.h, k, stride, pad), wo = out_size(s.w, k, stride, pad);
    const int y = push({cout, s.b, ho, wo});
    const std::size_t ncols = static_cast<std::size_t>(s.b) * ho * wo;
    const std::size_t krows = static_cast<std::size_t>(cin) * k * k;
    const bool direct = (k == 1 && stride == 1 && pad == 0);

    {
        PooledBuffer colbuf(direct ? 0 : krows * ncols);
        const float* colp = node(x).v.data();
        if (!direct) {
            im2col(node(x).v.data(), s, k, stride, pad, ho, wo, colbuf.v.data());
            colp = colbuf.v.data();
        }
        MapMat Y(node(y).v.data(), cout, static_cast<Eigen::Index>(ncols));
        Y.noalias() = CMapMat(W.w.data(), cout, static_cast<Eigen::Index>(krows)) *
                      CMapMat(colp, static_cast<Eigen::Index>(krows), static_cast<Eigen::Index>(ncols));
        for (int co = 0; co < cout; ++co) Y.row(co).array() += b.w[static_cast<std::size_t>(co)];
    }

    if (record_) {
        backs_.push_back([this, x, y, &W, &b, s, cout, k, stride, pad, ho, wo, ncols, krows, direct] {
            const CMapMat dY(node(y).g.data(), cout, static_cast<Eigen::Index>(ncols));
            PooledBuffer colbuf(direct ? 0 : krows * ncols);
            const float* colp = node(x).v.data();
            if (!direct) {
                im2col(node(x).v.data(), s, k, stride, pad, ho, wo, colbuf.v.data());
                colp = colbuf.v.data();
            }
            const CMapMat col(colp, static_cast<Eigen::Index>(krows), static_cast<Eigen::Index>(ncols));
            MapMat dW(W.g.data(), cout, static_cast<Eigen::Index>(krows));
            dW.noalias() += dY * col.transpose();
            for (int co = 0; co < cout; ++co) b.g[static_cast<std::size_t>(co)] += dY.row(co).sum();

            const CMapMat Wm(W.w.data(), cout, static_cast<Eigen::Index>(krows));
            if (direct) {
                MapMat dX(node(x).g.data(), static_cast<Eigen::Index>(krows), static_cast<Eigen::Index>(ncols));
                dX.noalias() += Wm.transpose() * dY;
            } else {
                PooledBuffer dcol(krows * ncols);
                MapMat(dcol.v.data(), static_cast<Eigen::Index>(krows), static_cast<Eigen::Index>(ncols)).noalias() =
                    Wm.transpose() * dY;
                col2im(dcol.v.data(), s, k, stride, pad, ho, wo, node(x).g.data());
            }
        });
    }
    return y;
}

int Graph::silu(int x) {
    const int y = push(node(x).s);
    const auto n = static_cast<Eigen::Index>(node(x).v.size());
    {
        const Eigen::Map<const Eigen::ArrayXf> xv(node(x).v.data(), n);
        Eigen::Map<Eigen::ArrayXf> yv(node(y).v.data(), n);
        yv = xv / (1.0f + (-xv).exp());
    }
    if (record_) {
        backs_.push_back([this, x, y, n] {
            const Eigen::Map<const Eigen::ArrayXf> xv(node(x).v.data(), n);
            const Eigen::Map<const Eigen::ArrayXf> dy(node(y).g.data(), n);
            Eigen::Map<Eigen::ArrayXf> dx(node(x).g.data(), n);
            const Eigen::ArrayXf sg = 1.0f / (1.0f + (-xv).exp());
            dx += dy * sg * (1.0f + xv * (1.0f - sg));
        });
    }
    return y;
}

int Graph::film(int h, int gb) {
    const Shape4 s = node(h).s;
    if (node(gb).s.c != 2 * s.c || node(gb).s.b != s.b) throw std::invalid_argument("film shape mismatch");
    const int y = push(s);
    const std::size_t P = s.plane();
    {
        const auto& hv = node(h).v;
        const auto& gv = node(gb).v;
        auto& yv = node(y).v;
        for (int c = 0; c < s.c; ++c)
            for (int b = 0; b < s.b; ++b) {
                const float gamma = gv[static_cast<std::size_t>(c) * s.b + b];
                const float beta = gv[static_cast<std::size_t>(c + s.c) * s.b + b];
                const std::size_t off = (static_cast<std::size_t>(c) * s.b + b) * P;
                for (std::size_t p = 0; p < P; ++p) yv[off + p] = hv[off + p] * (1.0f + gamma) + beta;
            }
    }
    if (record_) {
        backs_.push_back([this, h, gb, y, s, P] {
            const auto& hv = node(h).v;
            const auto& gv = node(gb).v;
            const auto& dy = node(y).g;
            auto& dh = node(h).g;
            auto& dg = node(gb).g;
            for (int c = 0; c < s.c; ++c)
                for (int b = 0; b < s.b; ++b) {
                    const std::size_t gi = static_cast<std::size_t>(c) * s.b + b;
                    const std::size_t bi = static_cast<std::size_t>(c + s.c) * s.b + b;
                    const float scale = 1.0f + gv[gi];
                    const std::size_t off = gi * P;
                    float sg = 0.0f, sb = 0.0f;
                    for (std::size_t p = 0; p < P; ++p) {
                        dh[off + p] += dy[off + p] * scale;
                        sg += dy[off + p] * hv[off + p];
                        sb += dy[off + p];
                    }
                    dg[gi] += sg;
                    dg[bi] += sb;
                }
        });
    }
    return y;
}

int Graph::add(int a, int b) {
    if (node(a).v.size() != node(b).v.size()) throw std::invalid_argument("add shape mismatch");
    const int y = push(node(a).s);
    for (std::size_t i = 0; i < node(y).v.size(); ++i) node(y).v[i] = node(a).v[i] + node(b).v[i];
    if (record_) {
        backs_.push_back([this, a, b, y] {
            const auto& dy = node(y).g;
            auto& da = node(a).g;
            for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
            auto& db = node(b).g;
            for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
        });
    }
    return y;
}

int Graph::concat(int a, int b) {
    const Shape4 sa = node(a).s, sb = node(b).s;
    if (sa.b != sb.b || sa.h != sb.h || sa.w != sb.w) throw std::invalid_argument("concat shape mismatch");
    const int y = push({sa.c + sb.c, sa.b, sa.h, sa.w});
    auto& yv = node(y).v;
    std::copy(node(a).v.begin(), node(a).v.end(), yv.begin());
    std::copy(node(b).v.begin(), node(b).v.end(), yv.begin() + static_cast<std::ptrdiff_t>(sa.size()));
    if (record_) {
        backs_.push_back([this, a, b, y] {
            const auto& dy = node(y).g;
            auto& da = node(a).g;
            auto& db = node(b).g;
            for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i];
            for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[da.size() + i];
        });
    }
    return y;
}

int Graph::upsample(int x, int oh, int ow) {
    const Shape4 s = node(x).s;
    if (oh > 2 * s.h || ow > 2 * s.w) throw std::invalid_argument("upsample target too large");
    const int y = push({s.c, s.b, oh, ow});
    const std::size_t planes = static_cast<std::size_t>(s.c) * s.b;
    {
        const auto& xv = node(x).v;
        auto& yv = node(y).v;
        for (std::size_t p = 0; p < planes; ++p)
            for (int r = 0; r < oh; ++r)
                for (int c = 0; c < ow; ++c)
                    yv[(p * oh + r) * ow + c] = xv[(p * s.h + r / 2) * s.w + c / 2];
    }
    if (record_) {
        backs_.push_back([this, x, y, s, planes, oh, ow] {
            const auto& dy = node(y).g;
            auto& dx = node(x).g;
            for (std::size_t p = 0; p < planes; ++p)
                for (int r = 0; r < oh; ++r)
                    for (int c = 0; c < ow; ++c) dx[(p * s.h + r / 2) * s.w + c / 2] += dy[(p * oh + r) * ow + c];
        });
    }
    return y;
}

void Graph::backward(int out, const std::vector<float>& dout) {
    if (!record_) throw std::logic_error("backward on a graph built without recording");
    if (dout.size() != node(out).v.size()) throw std::invalid_argument("output gradient size mismatch");
    std::copy(dout.begin(), dout.end(), node(out).g.begin());
    for (auto it = backs_.rbegin(); it != backs_.rend(); ++it) (*it)();
}

// ---------------------------------------------------------------------------

int Network::add_param(const std::string& name, std::vector<int> shape, float stddev, std::mt19937_64& rng) {
    Param p;
    p.name = name;
    p.shape = std::move(shape);
    std::size_t n = 1;
    for (int d : p.shape) n *= static_cast<std::size_t>(d);
    p.w.assign(n, 0.0f);
    p.g.assign(n, 0.0f);
    if (stddev > 0.0f) {
        std::normal_distribution<double> nd(0.0, stddev);
        for (float& v : p.w) v = static_cast<float>(nd(rng));
    }
    params_.push_back(std::move(p));
    return static_cast<int>(params_.size()) - 1;
}

Network::Conv Network::make_conv(const std::string& name, int cin, int cout, int k, bool zero, std::mt19937_64& rng) {
    const float sd = zero ? 0.0f : static_cast<float>(1.0 / std::sqrt(static_cast<double>(cin * k * k)));
    Conv c;
    c.w = add_param(name + ".weight", {cout, cin, k, k}, sd, rng);
    c.b = add_param(name + ".bias", {cout}, 0.0f, rng);
    return c;
}

Network::ResBlock Network::make_block(const std::string& name, int cin, int cout, std::mt19937_64& rng) {
    ResBlock rb{};
    rb.cin = cin;
    rb.cout = cout;
    Conv c1 = make_conv(name + ".conv1", cin, cout, 3, false, rng);
    Conv f = make_conv(name + ".film", arch_.emb_dim, 2 * cout, 1, true, rng);
    Conv c2 = make_conv(name + ".conv2", cout, cout, 3, true, rng);
    rb.w1 = c1.w, rb.b1 = c1.b, rb.wf = f.w, rb.bf = f.b, rb.w2 = c2.w, rb.b2 = c2.b;
    if (cin != cout) {
        Conv sk = make_conv(name + ".skip", cin, cout, 1, false, rng);
        rb.ws = sk.w, rb.bs = sk.b;
    }
    return rb;
}

Network::Network(const Arch& arch, std::uint64_t seed) : arch_(arch) {
    if (arch.widths.empty() || arch.emb_dim < 1 || arch.fourier_dim < 2 || arch.fourier_dim % 2 != 0)
        throw std::invalid_argument("invalid denoiser architecture");
    std::mt19937_64 rng(seed);
    const auto& w = arch_.widths;
    const int L = static_cast<int>(w.size());
    emb1_ = make_conv("emb.dense1", arch_.fourier_dim, arch_.emb_dim, 1, false, rng);
    emb2_ = make_conv("emb.dense2", arch_.emb_dim, arch_.emb_dim, 1, false, rng);
    in_ = make_conv("in", 1, w[0], 3, false, rng);
    for (int l = 0; l < L; ++l) {
        if (l > 0) down_.push_back(make_conv("down" + std::to_string(l), w[l - 1], w[l], 3, false, rng));
        enc_.push_back(make_block("enc" + std::to_string(l), w[l], w[l], rng));
    }
    mid_ = make_block("mid", w[L - 1], w[L - 1], rng);
    for (int l = L - 2; l >= 0; --l) {
        up_.push_back(make_conv("up" + std::to_string(l), w[l + 1], w[l], 1, false, rng));
        dec_.push_back(make_block("dec" + std::to_string(l), 2 * w[l], w[l], rng));
    }
    out_ = make_conv("out", w[0], 1, 3, true, rng);
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.w.size();
    return n;
}

void Network::zero_grad() {
    for (auto& p : params_) std::fill(p.g.begin(), p.g.end(), 0.0f);
}

int Network::conv(Graph& g, const Conv& c, int x, int stride, int pad) {
    return g.conv(x, params_[static_cast<std::size_t>(c.w)], params_[static_cast<std::size_t>(c.b)], stride, pad);
}

int Network::block(Graph& g, const ResBlock& rb, int x, int emb) {
    int h = g.silu(x);
    h = conv(g, {rb.w1, rb.b1}, h, 1, 1);
    const int gb = conv(g, {rb.wf, rb.bf}, emb, 1, 0);
    h = g.film(h, gb);
    h = g.silu(h);
    h = conv(g, {rb.w2, rb.b2}, h, 1, 1);
    const int skip = rb.ws >= 0 ? conv(g, {rb.ws, rb.bs}, x, 1, 0) : x;
    return g.add(skip, h);
}

int Network::forward(Graph& g, int x, const std::vector<float>& c_noise) {
    const Shape4 s = g.node(x).s;
    if (s.c != 1 || static_cast<std::size_t>(s.b) != c_noise.size()) throw std::invalid_argument("network input shape");
    const int F = arch_.fourier_dim, half = F / 2;
    std::vector<float> feats(static_cast<std::size_t>(F) * s.b);
    for (int k = 0; k < half; ++k) {
        const double freq = M_PI * std::pow(2.0, 0.5 * k);
        for (int b = 0; b < s.b; ++b) {
            const double a = freq * c_noise[static_cast<std::size_t>(b)];
            feats[static_cast<std::size_t>(k) * s.b + b] = static_cast<float>(std::sin(a));
            feats[static_cast<std::size_t>(k + half) * s.b + b] = static_cast<float>(std::cos(a));
        }
    }
    int emb = g.input({F, s.b, 1, 1}, std::move(feats));
    emb = g.silu(conv(g, emb1_, emb, 1, 0));
    emb = g.silu(conv(g, emb2_, emb, 1, 0));

    const int L = static_cast<int>(arch_.widths.size());
    std::vector<int> skips;
    int h = conv(g, in_, x, 1, 1);
    for (int l = 0; l < L; ++l) {
        if (l > 0) h = conv(g, down_[static_cast<std::size_t>(l - 1)], h, 2, 1);
        h = block(g, enc_[static_cast<std::size_t>(l)], h, emb);
        skips.push_back(h);
    }
    h = block(g, mid_, h, emb);
    for (int j = 0; j < L - 1; ++j) {
        const int l = L - 2 - j;
        const Shape4 ss = g.node(skips[static_cast<std::size_t>(l)]).s;
        h = conv(g, up_[static_cast<std::size_t>(j)], h, 1, 0);
        h = g.upsample(h, ss.h, ss.w);
        h = g.concat(h, skips[static_cast<std::size_t>(l)]);
        h = block(g, dec_[static_cast<std::size_t>(j)], h, emb);
    }
    h = g.silu(h);
    return conv(g, out_, h, 1, 1);
}

} // namespace tomodiff::nn
