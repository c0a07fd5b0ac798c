#include "planenav/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "planenav/geometry.hpp"

namespace planenav {

namespace {

// In-plane orthonormal pair for a given unit axis, deterministic.
void plane_basis(const Vec3& axis, Vec3& e1, Vec3& e2) {
    Vec3 w = Vec3{0, 1, 0} - axis * axis.y;
    if (norm(w) < 1e-9) w = Vec3{0, 0, 1} - axis * axis.z;
    e1 = normalized(w);
    e2 = cross(axis, e1);
}

struct Centerline {
    // Closest-point query: distance from p to the centerline and the local
    // unit tangent there; valid=false outside the arc span.
    const PhantomSpec& spec;
    Vec3 axis, e1, e2;
    double half_span_rad;

    explicit Centerline(const PhantomSpec& s) : spec(s) {
        axis = normalized(s.direction);
        plane_basis(axis, e1, e2);
        half_span_rad = deg_to_rad(s.arc_span_deg) / 2.0;
    }

    bool query(const Vec3& p, double& dist, Vec3& tangent) const {
        if (spec.kind == PhantomKind::straight_tube) {
            const Vec3 w = p - spec.origin;
            const Vec3 radial = w - axis * dot(w, axis);
            dist = norm(radial);
            tangent = axis;
            return true;
        }
        const Vec3 w = p - spec.origin;
        const double h = dot(w, axis);
        const Vec3 radial = w - axis * h;
        const double rho = norm(radial);
        if (rho < 1e-9) return false;
        const double phi = std::atan2(dot(radial, e2), dot(radial, e1));
        if (std::abs(phi) > half_span_rad) return false;
        const double dr = rho - spec.major_radius;
        dist = std::sqrt(dr * dr + h * h);
        tangent = cross(axis, radial) / rho;
        return true;
    }

    Vec3 point_at(double phi) const {
        if (spec.kind == PhantomKind::straight_tube) return spec.origin + axis * phi;
        return spec.origin + (e1 * std::cos(phi) + e2 * std::sin(phi)) * spec.major_radius;
    }

    Vec3 tangent_at(double phi) const {
        if (spec.kind == PhantomKind::straight_tube) return axis;
        return e2 * std::cos(phi) - e1 * std::sin(phi);
    }
};

bool in_box(const Vec3& p, const Vec3& ext) {
    return p.x >= 0 && p.y >= 0 && p.z >= 0 && p.x <= ext.x && p.y <= ext.y && p.z <= ext.z;
}

// Lateral clearance: at centerline sample c with tangent u, a circle of
// radius `r` perpendicular to u must stay inside the volume.
bool circle_fits(const Vec3& c, const Vec3& u, double r, const Vec3& ext) {
    Vec3 e1, e2;
    plane_basis(u, e1, e2);
    for (int k = 0; k < 16; ++k) {
        const double a = 2.0 * kPi * k / 16;
        if (!in_box(c + (e1 * std::cos(a) + e2 * std::sin(a)) * r, ext)) return false;
    }
    return true;
}

// Straight tube: intersection of the axis line with the volume box as a
// parameter interval, empty if the line misses it.
bool clip_line_to_box(const Vec3& origin, const Vec3& u, const Vec3& ext, double& s0,
                      double& s1) {
    s0 = -1e30;
    s1 = 1e30;
    const double o[3] = {origin.x, origin.y, origin.z};
    const double d[3] = {u.x, u.y, u.z};
    const double hi[3] = {ext.x, ext.y, ext.z};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) {
            if (o[a] < 0 || o[a] > hi[a]) return false;
            continue;
        }
        double t0 = (0 - o[a]) / d[a], t1 = (hi[a] - o[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        s0 = std::max(s0, t0);
        s1 = std::min(s1, t1);
    }
    return s0 < s1;
}

bool fits_in_box(const PhantomSpec& spec, const Vec3& ext) {
    const double margin =
        2.0 * std::max({spec.spacing.x, spec.spacing.y, spec.spacing.z});
    const double r = spec.radius + margin;
    const Centerline cl(spec);

    if (spec.kind == PhantomKind::straight_tube) {
        double s0, s1;
        if (!clip_line_to_box(spec.origin, cl.axis, ext, s0, s1)) return false;
        // Lateral clearance checked away from the entry/exit faces. A vessel
        // so wide that no cross-section clears both faces cannot fit.
        const double lo = s0 + r, hi = s1 - r;
        if (lo > hi) return false;
        for (double s = lo; s <= hi; s += margin)
            if (!circle_fits(cl.point_at(s), cl.axis, r, ext)) return false;
        return circle_fits(cl.point_at(hi), cl.axis, r, ext);
    }
    const double step = margin / std::max(spec.major_radius, 1.0);
    for (double phi = -cl.half_span_rad; phi <= cl.half_span_rad; phi += step) {
        const Vec3 c = cl.point_at(phi);
        if (!circle_fits(c, cl.tangent_at(phi), r, ext)) return false;
    }
    for (double sign : {-1.0, 1.0}) {
        const double phi = sign * cl.half_span_rad;
        if (!in_box(cl.point_at(phi) + cl.tangent_at(phi) * (sign * r), ext)) return false;
    }
    return true;
}

void check_fits(const PhantomSpec& spec, const Vec3& ext) {
    if (!fits_in_box(spec, ext)) throw std::runtime_error("make_phantom: tube exits volume");
}

}  // namespace

bool phantom_fits(const PhantomSpec& spec) {
    const Vec3 ext = {(spec.dims.x - 1) * spec.spacing.x, (spec.dims.y - 1) * spec.spacing.y,
                      (spec.dims.z - 1) * spec.spacing.z};
    return fits_in_box(spec, ext);
}

std::vector<double> default_waveform(int frames) {
    std::vector<double> w(frames);
    const int peak = frames / 3;
    for (int i = 0; i < frames; ++i)
        w[i] = 0.5 * (1.0 + std::cos(2.0 * kPi * (i - peak) / frames));
    return w;
}

GroundTruth phantom_ground_truth(const PhantomSpec& spec) {
    GroundTruth gt;
    gt.radius = spec.radius;
    gt.kind = spec.kind == PhantomKind::straight_tube ? "straight_tube" : "torus_arc";

    const Centerline cl(spec);
    const Vec3 ext{(spec.dims.x - 1) * spec.spacing.x, (spec.dims.y - 1) * spec.spacing.y,
                   (spec.dims.z - 1) * spec.spacing.z};
    if (spec.kind == PhantomKind::straight_tube) {
        double s0, s1;
        if (!clip_line_to_box(spec.origin, cl.axis, ext, s0, s1))
            throw std::runtime_error("phantom_ground_truth: tube exits volume");
        gt.p_t = cl.point_at((s0 + s1) / 2.0);  // centerline midpoint
        gt.n_t = cl.axis;
    } else {
        gt.p_t = cl.point_at(0.0);  // arc midpoint
        gt.n_t = cl.tangent_at(0.0);
    }

    const std::vector<double> wf =
        spec.waveform.empty() ? default_waveform(spec.frames) : spec.waveform;
    gt.q_mm3s.resize(spec.frames);
    for (int t = 0; t < spec.frames; ++t)
        gt.q_mm3s[t] = wf[t] * spec.v_max * kPi * spec.radius * spec.radius / 2.0;
    return gt;
}

FlowVolume4D make_phantom(const PhantomSpec& spec, std::uint64_t seed) {
    if (spec.frames < 1 || spec.dims.count() == 0)
        throw std::runtime_error("make_phantom: empty spec");
    if (spec.radius <= 0 || spec.v_max <= 0 || spec.venc <= 0)
        throw std::runtime_error("make_phantom: non-positive radius/v_max/venc");
    const std::vector<double> wf =
        spec.waveform.empty() ? default_waveform(spec.frames) : spec.waveform;
    if (static_cast<int>(wf.size()) != spec.frames)
        throw std::runtime_error("make_phantom: waveform length mismatch");

    FlowVolume4D vol = FlowVolume4D::zeros(spec.frames, spec.dims, spec.spacing, spec.venc);
    const Vec3 ext = vol.physical_extent();
    check_fits(spec, ext);

    const Centerline cl(spec);
    Rng rng(seed);
    for (int z = 0; z < spec.dims.z; ++z)
        for (int y = 0; y < spec.dims.y; ++y)
            for (int x = 0; x < spec.dims.x; ++x) {
                const Vec3 p = {x * spec.spacing.x, y * spec.spacing.y, z * spec.spacing.z};
                double dist;
                Vec3 tangent;
                const bool inside = cl.query(p, dist, tangent) && dist <= spec.radius;
                if (inside) {
                    const double profile = 1.0 - (dist / spec.radius) * (dist / spec.radius);
                    const Vec3 v0 = tangent * (spec.v_max * profile);
                    for (int t = 0; t < spec.frames; ++t) {
                        vol.mag(t, z, y, x) = spec.mag_inside;
                        vol.vel(t, 0, z, y, x) = v0.x * wf[t];
                        vol.vel(t, 1, z, y, x) = v0.y * wf[t];
                        vol.vel(t, 2, z, y, x) = v0.z * wf[t];
                    }
                } else {
                    for (int t = 0; t < spec.frames; ++t) {
                        vol.mag(t, z, y, x) = spec.mag_outside;
                        for (int c = 0; c < 3; ++c)
                            vol.vel(t, c, z, y, x) = std::clamp(
                                rng.gaussian(0.0, spec.noise_sigma), -spec.venc, spec.venc);
                    }
                }
            }
    return vol;
}

FlowVolume4D perturb_pose(const FlowVolume4D& vol, const Mat3& rot, const Vec3& translation) {
    FlowVolume4D out = vol;
    ScalarVolume3D mag = ScalarVolume3D::zeros(vol.dims, vol.spacing);
    VectorVolume3D vel = VectorVolume3D::zeros(vol.dims, vol.spacing);
    const std::size_t n = vol.voxels();
    for (int t = 0; t < vol.frames; ++t) {
        std::copy_n(&vol.magnitude[static_cast<std::size_t>(t) * n], n, mag.v.begin());
        const ScalarVolume3D mag_out = rigid_resample(mag, rot, translation);
        std::copy_n(mag_out.v.begin(), n, &out.magnitude[static_cast<std::size_t>(t) * n]);

        std::copy_n(&vol.velocity[static_cast<std::size_t>(t) * 3 * n], 3 * n, vel.v.begin());
        const VectorVolume3D vel_out = rigid_resample(vel, rot, translation);
        std::copy_n(vel_out.v.begin(), 3 * n,
                    &out.velocity[static_cast<std::size_t>(t) * 3 * n]);
    }
    return out;
}

FlowVolume4D perturb_pose(const FlowVolume4D& vol, const Vec3& euler_deg,
                          const Vec3& translation) {
    return perturb_pose(vol, rotation_euler_xyz_deg(euler_deg.x, euler_deg.y, euler_deg.z),
                        translation);
}

GroundTruth transform_ground_truth(const GroundTruth& gt, const Mat3& rot,
                                   const Vec3& translation, const Vec3& center) {
    GroundTruth out = gt;
    out.p_t = rot * (gt.p_t - center) + center + translation;
    out.n_t = rot * gt.n_t;
    return out;
}

void save_ground_truth(const std::string& path, const GroundTruth& gt) {
    nlohmann::json j = {{"p_t", {gt.p_t.x, gt.p_t.y, gt.p_t.z}},
                        {"n_t", {gt.n_t.x, gt.n_t.y, gt.n_t.z}},
                        {"q_mm3s", gt.q_mm3s},
                        {"radius", gt.radius},
                        {"kind", gt.kind}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << j.dump(2) << '\n';
}

GroundTruth load_ground_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error(path + ": malformed JSON");
    GroundTruth gt;
    gt.p_t = {j.at("p_t")[0], j.at("p_t")[1], j.at("p_t")[2]};
    gt.n_t = {j.at("n_t")[0], j.at("n_t")[1], j.at("n_t")[2]};
    gt.q_mm3s = j.at("q_mm3s").get<std::vector<double>>();
    gt.radius = j.value("radius", 0.0);
    gt.kind = j.value("kind", "");
    return gt;
}

void center_spec(PhantomSpec& spec) {
    const Vec3 center = {(spec.dims.x - 1) * spec.spacing.x * 0.5,
                         (spec.dims.y - 1) * spec.spacing.y * 0.5,
                         (spec.dims.z - 1) * spec.spacing.z * 0.5};
    if (spec.kind == PhantomKind::straight_tube) {
        spec.origin = center;
    } else {
        Vec3 e1, e2;
        plane_basis(normalized(spec.direction), e1, e2);
        spec.origin = center - e1 * spec.major_radius;
    }
}

PhantomSpec canonical_spec(PhantomKind kind, Dims3 dims, Vec3 spacing) {
    PhantomSpec spec;
    spec.kind = kind;
    spec.dims = dims;
    spec.spacing = spacing;
    center_spec(spec);
    return spec;
}

PhantomSpec sample_family_spec(PhantomKind kind, Dims3 dims, Vec3 spacing, Rng& rng) {
    const Vec3 center = {(dims.x - 1) * spacing.x * 0.5, (dims.y - 1) * spacing.y * 0.5,
                         (dims.z - 1) * spacing.z * 0.5};
    // Oblique poses can clip the volume corners; redraw until the whole
    // vessel fits with margin.
    for (int attempt = 0; attempt < 256; ++attempt) {
        PhantomSpec spec;
        spec.kind = kind;
        spec.dims = dims;
        spec.spacing = spacing;
        spec.radius = rng.uniform(8.0, 12.0);
        spec.v_max = rng.uniform(600.0, 1200.0);
        spec.direction = rng.unit_vector();
        const Vec3 offset = {rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0),
                             rng.uniform(-4.0, 4.0)};
        if (kind == PhantomKind::straight_tube) {
            spec.origin = center + offset;
        } else {
            spec.major_radius = rng.uniform(24.0, 30.0);
            spec.arc_span_deg = rng.uniform(120.0, 180.0);
            Vec3 e1, e2;
            plane_basis(normalized(spec.direction), e1, e2);
            // Torus center placed so the arc midpoint lands near the volume center.
            spec.origin = center + offset - e1 * spec.major_radius;
        }
        if (phantom_fits(spec)) return spec;
    }
    throw std::runtime_error("sample_family_spec: no fitting pose found");
}

}  // namespace planenav
