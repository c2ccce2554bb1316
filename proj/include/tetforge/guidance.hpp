#pragma once

// Camera sampling around observation views, influence weights and the
// view-adaptive guidance scale
//
//   w_i = 1 / max(1 - c.v_i, 1e-6),   s = s0 (w'_0 - w'_1) / sum_i w'_i
//
// where w' is w sorted in descending order (ties: lower index first).

#include "tetforge/renderer.hpp"
#include "tetforge/vec3.hpp"

#include <cstddef>
#include <random>
#include <string>
#include <vector>

namespace tetforge {

inline constexpr double kWeightClamp = 1e-6;
inline constexpr std::size_t kMaxObservations = 8;

struct Observation {
    std::string prompt;
    double azimuth_deg = 0;
    double elevation_deg = 0;
    Vec3 view; // unit direction from the origin toward the observation camera
};

struct ObservationSet {
    std::vector<Observation> entries;
    double s0 = 70;

    std::size_t size() const noexcept { return entries.size(); }
    void add(std::string prompt, double azimuth_deg, double elevation_deg);
    // Throws ConfigError when the set is empty, too large, or has an empty prompt.
    void validate() const;
    // Smallest angle between two observation views, degrees (180 for n = 1).
    double min_pairwise_angle_deg() const;
};

struct InfluenceWeights {
    std::vector<double> raw;
    std::vector<double> sorted;      // descending
    std::vector<std::size_t> order;  // sorted[k] = raw[order[k]]
    std::size_t argmax = 0;
};

InfluenceWeights influence_weights(const Vec3& camera_dir, const ObservationSet& obs);

// n = 1 returns s0.
double guidance_scale(const InfluenceWeights& weights, double s0);

const std::string& select_semantics(const InfluenceWeights& weights, const ObservationSet& obs);

inline constexpr double kAzimuthRange = 50.0;
inline constexpr double kElevationRange = 25.0;

struct CameraSample {
    Camera camera;
    std::size_t observation = 0;
    double azimuth_offset = 0;
    double elevation_offset = 0;
    InfluenceWeights weights;
    std::string prompt;
    double scale = 0;
};

// Camera at the given offsets from observation view index.
CameraSample camera_near(const ObservationSet& obs, std::size_t index, double azimuth_offset,
                         double elevation_offset, double radius, double fov_y_deg, int width, int height);

CameraSample sample_camera(const ObservationSet& obs, std::mt19937_64& rng, double radius, double fov_y_deg,
                           int width, int height);

} // namespace tetforge
