#include "tomodiff/phantom.hpp"

#include "tomodiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tomodiff {

bool Ellipsoid::contains(double x, double y, double z) const {
    const double t = phi_deg * M_PI / 180.0;
    const double c = std::cos(t), s = std::sin(t);
    const double dx = x - x0, dy = y - y0, dz = z - z0;
    const double u = c * dx + s * dy;
    const double v = -s * dx + c * dy;
    return u * u / (a * a) + v * v / (b * b) + dz * dz / (this->c * this->c) <= 1.0;
}

std::vector<Ellipsoid> shepp_logan_ellipsoids() {
    // value, a, b, c, x0, y0, z0, rotation (phi + psi; theta is zero throughout)
    return {
        {1.0, 0.69, 0.92, 0.81, 0.0, 0.0, 0.0, 0.0},
        {-0.8, 0.6624, 0.874, 0.78, 0.0, -0.0184, 0.0, 0.0},
        {-0.2, 0.11, 0.31, 0.22, 0.22, 0.0, 0.0, -8.0},
        {-0.2, 0.16, 0.41, 0.28, -0.22, 0.0, 0.0, 28.0},
        {0.1, 0.21, 0.25, 0.41, 0.0, 0.35, -0.15, 0.0},
        {0.1, 0.046, 0.046, 0.05, 0.0, 0.1, 0.25, 0.0},
        {0.1, 0.046, 0.046, 0.05, 0.0, -0.1, 0.25, 0.0},
        {0.1, 0.046, 0.023, 0.05, -0.08, -0.605, 0.0, 0.0},
        {0.1, 0.023, 0.023, 0.02, 0.0, -0.606, 0.0, 0.0},
        {0.1, 0.023, 0.046, 0.02, 0.06, -0.605, 0.0, 0.0},
    };
}

Volume3 rasterize_additive(std::size_t n, const std::vector<Ellipsoid>& ellipsoids) {
    if (n < 1) throw ConfigError("phantom size must be >= 1");
    Volume3 v({n, n, n});
    for (std::size_t z = 0; z < n; ++z)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                const double cx = voxel_coord(x, n), cy = voxel_coord(y, n), cz = voxel_coord(z, n);
                double s = 0.0;
                for (const auto& e : ellipsoids)
                    if (e.contains(cx, cy, cz)) s += e.value;
                v(z, y, x) = std::clamp(s, 0.0, 1.0);
            }
    return v;
}

Volume3 shepp_logan_3d(std::size_t n) {
    if (n < 8) throw ConfigError("phantom size must be >= 8");
    return rasterize_additive(n, shepp_logan_ellipsoids());
}

Volume3 shepp_logan_variant(std::size_t n, std::uint64_t seed) {
    if (n < 8) throw ConfigError("phantom size must be >= 8");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto es = shepp_logan_ellipsoids();
    for (std::size_t k = 0; k < es.size(); ++k) {
        auto& e = es[k];
        const double scale = k < 2 ? 0.08 : 0.25;
        const double shared = 1.0 + scale * u(rng);
        e.a *= shared * (1.0 + 0.05 * u(rng));
        e.b *= shared * (1.0 + 0.05 * u(rng));
        e.c *= shared * (1.0 + 0.05 * u(rng));
        e.phi_deg += (k < 2 ? 5.0 : 20.0) * u(rng);
        if (k >= 2) {
            e.x0 += 0.06 * u(rng);
            e.y0 += 0.06 * u(rng);
            e.z0 += 0.06 * u(rng);
            e.value *= 1.0 + 0.5 * u(rng);
        }
    }
    // keep the inner shell inside the outer one
    es[1].a = std::min(es[1].a, es[0].a * 0.96);
    es[1].b = std::min(es[1].b, es[0].b * 0.95);
    es[1].c = std::min(es[1].c, es[0].c * 0.96);
    es[1].phi_deg = es[0].phi_deg;
    return rasterize_additive(n, es);
}

std::vector<Sphere> random_sphere_list(std::size_t count, std::uint64_t seed, const SphereParams& p) {
    if (!(p.r_min > 0.0) || p.r_max < p.r_min || !(p.extent > 0.0)) throw ConfigError("invalid sphere parameters");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> c(-p.extent, p.extent), r(p.r_min, p.r_max), v(0.2, 1.0);
    std::vector<Sphere> out;
    for (std::size_t k = 0; k < count; ++k) {
        Sphere s{};
        s.x0 = c(rng);
        s.y0 = c(rng);
        s.z0 = c(rng);
        s.r = r(rng);
        s.value = v(rng);
        out.push_back(s);
    }
    return out;
}

Volume3 rasterize_spheres(std::size_t n, const std::vector<Sphere>& spheres) {
    Volume3 v({n, n, n});
    for (std::size_t z = 0; z < n; ++z)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                const double cx = voxel_coord(x, n), cy = voxel_coord(y, n), cz = voxel_coord(z, n);
                for (const auto& s : spheres)
                    if (s.contains(cx, cy, cz)) v(z, y, x) = s.value;
            }
    return v;
}

Volume3 random_spheres(std::size_t n, std::size_t count, std::uint64_t seed, const SphereParams& p) {
    if (n < 8) throw ConfigError("phantom size must be >= 8");
    return rasterize_spheres(n, random_sphere_list(count, seed, p));
}

std::vector<Ellipsoid> random_ellipsoid_list(const OverlaySpec& spec) {
    if (!(spec.axis_min > 0.0) || spec.axis_max < spec.axis_min) throw ConfigError("invalid overlay axes");
    if (spec.value < 0.0 || spec.value > 1.0) throw ConfigError("overlay value must lie in [0, 1]");
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> c(-0.6, 0.6), ax(spec.axis_min, spec.axis_max), ang(0.0, 180.0);
    std::vector<Ellipsoid> out;
    for (std::size_t k = 0; k < spec.count; ++k) {
        Ellipsoid e{};
        e.value = spec.value;
        e.a = ax(rng);
        e.b = ax(rng);
        e.c = ax(rng);
        e.x0 = c(rng);
        e.y0 = c(rng);
        e.z0 = c(rng);
        e.phi_deg = ang(rng);
        out.push_back(e);
    }
    return out;
}

Volume3 ellipse_overlay(const Volume3& base, const std::vector<Ellipsoid>& ellipsoids) {
    const Shape3 s = base.shape();
    Volume3 v = base;
    for (std::size_t z = 0; z < s.nz; ++z)
        for (std::size_t y = 0; y < s.ny; ++y)
            for (std::size_t x = 0; x < s.nx; ++x) {
                const double cx = voxel_coord(x, s.nx), cy = voxel_coord(y, s.ny), cz = voxel_coord(z, s.nz);
                double& d = v(z, y, x);
                for (const auto& e : ellipsoids)
                    if (e.contains(cx, cy, cz)) d = e.value;
                d = std::clamp(d, 0.0, 1.0);
            }
    return v;
}

Volume3 ellipse_overlay(const Volume3& base, const OverlaySpec& spec) {
    return ellipse_overlay(base, random_ellipsoid_list(spec));
}

PhantomKind parse_phantom_kind(const std::string& name) {
    if (name == "shepp_logan_3d" || name == "shepp-logan" || name == "shepp_logan") return PhantomKind::shepp_logan_3d;
    if (name == "random_spheres" || name == "spheres") return PhantomKind::random_spheres;
    if (name == "ellipse_overlay" || name == "overlay") return PhantomKind::ellipse_overlay;
    throw ConfigError("unknown phantom kind: " + name);
}

Volume3 make_phantom(const PhantomSpec& spec) {
    switch (spec.kind) {
    case PhantomKind::shepp_logan_3d:
        return shepp_logan_3d(spec.n);
    case PhantomKind::random_spheres:
        return random_spheres(spec.n, spec.sphere_count, spec.seed, spec.spheres);
    case PhantomKind::ellipse_overlay: {
        OverlaySpec o = spec.overlay;
        o.seed = spec.seed;
        return ellipse_overlay(shepp_logan_3d(spec.n), o);
    }
    }
    throw ConfigError("unknown phantom kind");
}

} // namespace tomodiff
