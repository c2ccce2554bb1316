#pragma once

// DDPM noise schedule, forward noising, classifier-free guidance, and the
// noise-predictor interface shared by the in-process priors (analytic oracle,
// echo) and the remote bridge client.

#include "tetforge/appearance.hpp"
#include "tetforge/renderer.hpp"
#include "tetforge/tet_field.hpp"

#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace tetforge {

struct NoiseSchedule {
    int steps = 0;
    std::vector<double> betas;      // betas[t-1] for t = 1..steps
    std::vector<double> alpha_bars; // alpha_bars[t-1]

    double alpha_bar(int t) const;
    // Loss weight 1 - alpha_bar(t).
    double omega(int t) const { return 1.0 - alpha_bar(t); }
};

NoiseSchedule make_schedule(int steps = 1000, double beta_min = 1e-4, double beta_max = 0.02);

// out = sqrt(ab) * g0 + sqrt(1 - ab) * eps, with ab = alpha_bar(t).
void add_noise(std::span<const double> g0, int t, std::span<const double> eps, const NoiseSchedule& schedule,
               std::span<double> out);
// Same formula with an explicit alpha_bar.
void add_noise_ab(std::span<const double> g0, double alpha_bar, std::span<const double> eps, std::span<double> out);

// out = s * eps_cond + (1 - s) * eps_uncond.
void cfg_combine(std::span<const double> eps_cond, std::span<const double> eps_uncond, double s,
                 std::span<double> out);

// count back-to-back copies of map.
std::vector<double> duplicate_views(std::span<const double> map, std::size_t count);

// n independent standard normal draws.
std::vector<double> standard_normal(std::mt19937_64& rng, std::size_t n);

enum class MapKind { nd, rgbd, normal2d };

const char* map_kind_name(MapKind kind);
MapKind parse_map_kind(const std::string& name);
inline int map_channels(MapKind kind) { return kind == MapKind::normal2d ? 3 : 4; }

struct ViewAngles {
    double azimuth_deg = 0;
    double elevation_deg = 0;
    bool operator==(const ViewAngles&) const = default;
};

inline constexpr std::size_t kMaxViews = 8;

struct PriorRequest {
    std::uint64_t seq = 0;
    MapKind kind = MapKind::nd;
    int t = 1;
    std::string prompt;
    bool unconditional = false;
    std::vector<ViewAngles> views; // the surrounding view set C
    std::size_t focus = 0;          // index of the observation view c in views
    int height = 0;
    int width = 0;
    std::vector<double> tensors; // views.size() x height x width x channels, view-major
    // Oracle mode only: the noise the engine added per view, same layout as tensors.
    std::vector<double> true_noise;

    int channels() const { return map_channels(kind); }
    std::size_t view_elements() const { return std::size_t(height) * width * channels(); }
    // Throws ContractError when the invariants do not hold.
    void validate() const;
};

struct PriorResponse {
    std::uint64_t seq = 0;
    std::vector<double> noise; // same layout as the request tensors
};

class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual PriorResponse predict(const PriorRequest& request) = 0;
    virtual std::string identity() const = 0;
};

// Returns the request tensors unchanged apart from the 32-bit rounding a
// remote round trip applies.
class EchoPrior final : public NoisePredictor {
public:
    PriorResponse predict(const PriorRequest& request) override;
    std::string identity() const override { return "echo"; }
};

struct OracleReference {
    SdfField<double> field;
    std::optional<AppearanceField<double>> appearance; // required for rgbd requests
};

struct OracleCamera {
    double radius = 2.5;
    double fov_y_deg = 40;
    double step_size = 0; // 0: renderer default for the reference grid
    double temperature = 0; // 0: one cell of the reference grid
};

// Analytic stand-in for a multi-view prior: the predicted noise is whatever
// turns the noised input back into the reference map at the requested view,
//   eps_hat = (g_t - sqrt(ab) g_ref) / sqrt(1 - ab).
// Unconditional requests return the engine-supplied true noise.
class OraclePrior final : public NoisePredictor {
public:
    OraclePrior(NoiseSchedule schedule, OracleCamera camera);

    void add_reference(const std::string& prompt, OracleReference reference);
    bool has_reference(const std::string& prompt) const;

    PriorResponse predict(const PriorRequest& request) override;
    std::string identity() const override { return "oracle"; }

    // Reference map (H x W x C) at the view quantized to kViewQuantum degrees.
    std::shared_ptr<const std::vector<double>> reference_map(const std::string& prompt, MapKind kind,
                                                              ViewAngles view, int width, int height);

    static constexpr double kViewQuantum = 0.5;
    static constexpr std::size_t kCacheCapacity = 256;

    std::size_t cache_size() const;

private:
    using Key = std::tuple<std::string, int, long, long, int, int>;

    NoiseSchedule schedule_;
    OracleCamera camera_;
    std::map<std::string, std::shared_ptr<const OracleReference>> references_;

    mutable std::mutex mutex_;
    std::list<std::pair<Key, std::shared_ptr<const std::vector<double>>>> lru_;
    std::map<Key, decltype(lru_)::iterator> index_;
};

// Map in the packed layout used by priors, straight from a GBuffer.
template <typename Real>
std::vector<double> pack_map(const GBuffer<Real>& g, MapKind kind);

} // namespace tetforge
