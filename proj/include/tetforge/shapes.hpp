#pragma once

// Analytic reference primitives for the oracle prior, as exact signed
// distance functions (negative inside).

#include "tetforge/vec3.hpp"

#include <string>

namespace tetforge {

enum class PrimitiveKind { sphere, box, cylinder };

const char* primitive_name(PrimitiveKind kind);
PrimitiveKind parse_primitive_kind(const std::string& name);

struct Primitive {
    PrimitiveKind kind = PrimitiveKind::sphere;
    Vec3 center{};
    double radius = 0.5;         // sphere, cylinder
    Vec3 half_extents{0.5, 0.5, 0.5}; // box
    double half_height = 0.5;    // cylinder, axis along z

    // Throws ConfigError for non-positive sizes or shapes leaving [-1,1]^3.
    void validate() const;
};

double primitive_sdf(const Primitive& p, const Vec3& x);

} // namespace tetforge
