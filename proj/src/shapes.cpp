#include "tetforge/shapes.hpp"

#include "tetforge/error.hpp"

#include <algorithm>
#include <cmath>

namespace tetforge {

const char* primitive_name(PrimitiveKind kind) {
    switch (kind) {
    case PrimitiveKind::sphere: return "sphere";
    case PrimitiveKind::box: return "box";
    case PrimitiveKind::cylinder: return "cylinder";
    }
    return "?";
}

PrimitiveKind parse_primitive_kind(const std::string& name) {
    if (name == "sphere") return PrimitiveKind::sphere;
    if (name == "box") return PrimitiveKind::box;
    if (name == "cylinder") return PrimitiveKind::cylinder;
    throw ConfigError("unknown primitive '" + name + "' (expected sphere, box or cylinder)");
}

void Primitive::validate() const {
    Vec3 extent;
    switch (kind) {
    case PrimitiveKind::sphere:
        if (!(radius > 0)) throw ConfigError("sphere radius must be > 0");
        extent = {radius, radius, radius};
        break;
    case PrimitiveKind::box:
        if (!(half_extents.x > 0 && half_extents.y > 0 && half_extents.z > 0)) {
            throw ConfigError("box half extents must be > 0");
        }
        extent = half_extents;
        break;
    case PrimitiveKind::cylinder:
        if (!(radius > 0 && half_height > 0)) throw ConfigError("cylinder radius and half height must be > 0");
        extent = {radius, radius, half_height};
        break;
    }
    for (int i = 0; i < 3; ++i) {
        if (std::abs(center[i]) + extent[i] >= 1.0) {
            throw ConfigError(std::string(primitive_name(kind)) + " does not fit inside the [-1,1]^3 domain");
        }
    }
}

double primitive_sdf(const Primitive& p, const Vec3& x) {
    const Vec3 q = x - p.center;
    switch (p.kind) {
    case PrimitiveKind::sphere: return norm(q) - p.radius;
    case PrimitiveKind::box: {
        const Vec3 d{std::abs(q.x) - p.half_extents.x, std::abs(q.y) - p.half_extents.y,
                     std::abs(q.z) - p.half_extents.z};
        const Vec3 outside{std::max(d.x, 0.0), std::max(d.y, 0.0), std::max(d.z, 0.0)};
        return norm(outside) + std::min(std::max({d.x, d.y, d.z}), 0.0);
    }
    case PrimitiveKind::cylinder: {
        const double a = std::hypot(q.x, q.y) - p.radius;
        const double b = std::abs(q.z) - p.half_height;
        return std::min(std::max(a, b), 0.0) + std::hypot(std::max(a, 0.0), std::max(b, 0.0));
    }
    }
    return 0;
}

} // namespace tetforge
