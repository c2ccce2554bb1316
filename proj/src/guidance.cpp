#include "tetforge/guidance.hpp"

#include "tetforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace tetforge {

void ObservationSet::add(std::string prompt, double azimuth_deg, double elevation_deg) {
    entries.push_back({std::move(prompt), azimuth_deg, elevation_deg, view_direction(azimuth_deg, elevation_deg)});
}

void ObservationSet::validate() const {
    if (entries.empty() || entries.size() > kMaxObservations) {
        throw ConfigError("observation set needs 1..8 entries, got " + std::to_string(entries.size()));
    }
    for (const auto& e : entries) {
        if (e.prompt.empty()) throw ConfigError("observation prompt must not be empty");
        if (std::abs(norm(e.view) - 1.0) > 1e-9) throw ConfigError("observation view is not unit length");
    }
    if (!(s0 >= 0.0) || !std::isfinite(s0)) throw ConfigError("s0 must be finite and non-negative");
}

double ObservationSet::min_pairwise_angle_deg() const {
    double best = 180.0;
    for (std::size_t i = 0; i < entries.size(); ++i)
        for (std::size_t j = i + 1; j < entries.size(); ++j) {
            const double c = std::clamp(dot(entries[i].view, entries[j].view), -1.0, 1.0);
            best = std::min(best, std::acos(c) * 180.0 / std::numbers::pi);
        }
    return best;
}

InfluenceWeights influence_weights(const Vec3& c, const ObservationSet& obs) {
    InfluenceWeights w;
    const std::size_t n = obs.size();
    w.raw.resize(n);
    for (std::size_t i = 0; i < n; ++i) w.raw[i] = 1.0 / std::max(1.0 - dot(c, obs.entries[i].view), kWeightClamp);
    w.order.resize(n);
    std::iota(w.order.begin(), w.order.end(), std::size_t{0});
    std::stable_sort(w.order.begin(), w.order.end(), [&](std::size_t a, std::size_t b) { return w.raw[a] > w.raw[b]; });
    w.sorted.resize(n);
    for (std::size_t k = 0; k < n; ++k) w.sorted[k] = w.raw[w.order[k]];
    w.argmax = n ? w.order[0] : 0;
    return w;
}

double guidance_scale(const InfluenceWeights& w, double s0) {
    if (w.sorted.size() < 2) return s0;
    double total = 0;
    for (double x : w.sorted) total += x;
    return s0 * (w.sorted[0] - w.sorted[1]) / total;
}

const std::string& select_semantics(const InfluenceWeights& w, const ObservationSet& obs) {
    return obs.entries.at(w.argmax).prompt;
}

CameraSample camera_near(const ObservationSet& obs, std::size_t index, double azimuth_offset,
                         double elevation_offset, double radius, double fov_y_deg, int width, int height) {
    const auto& o = obs.entries.at(index);
    CameraSample s;
    s.observation = index;
    s.azimuth_offset = azimuth_offset;
    s.elevation_offset = elevation_offset;
    const double el = std::clamp(o.elevation_deg + elevation_offset, -89.0, 89.0);
    s.camera = camera_from_angles(o.azimuth_deg + azimuth_offset, el, radius, fov_y_deg, width, height);
    s.weights = influence_weights(s.camera.direction(), obs);
    s.prompt = select_semantics(s.weights, obs);
    s.scale = guidance_scale(s.weights, obs.s0);
    return s;
}

CameraSample sample_camera(const ObservationSet& obs, std::mt19937_64& rng, double radius, double fov_y_deg,
                           int width, int height) {
    std::uniform_int_distribution<std::size_t> pick(0, obs.size() - 1);
    std::uniform_real_distribution<double> az(-kAzimuthRange, kAzimuthRange);
    std::uniform_real_distribution<double> el(-kElevationRange, kElevationRange);
    const std::size_t i = pick(rng);
    const double da = az(rng);
    const double de = el(rng);
    return camera_near(obs, i, da, de, radius, fov_y_deg, width, height);
}

} // namespace tetforge
