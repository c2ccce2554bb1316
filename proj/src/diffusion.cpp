#include "tetforge/diffusion.hpp"

#include "tetforge/error.hpp"
#include "tetforge/simd/kernels.hpp"

#include <cmath>
#include <string>

namespace tetforge {

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 1 || t > steps) {
        throw ContractError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps) + "]");
    }
    return alpha_bars[t - 1];
}

NoiseSchedule make_schedule(int steps, double beta_min, double beta_max) {
    if (steps < 2) throw ConfigError("noise schedule needs at least 2 steps");
    if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0)) {
        throw ConfigError("noise schedule requires 0 < beta_min < beta_max < 1");
    }
    NoiseSchedule s;
    s.steps = steps;
    s.betas.resize(steps);
    s.alpha_bars.resize(steps);
    double prod = 1.0;
    for (int i = 0; i < steps; ++i) {
        s.betas[i] = beta_min + (beta_max - beta_min) * double(i) / double(steps - 1);
        prod *= 1.0 - s.betas[i];
        s.alpha_bars[i] = prod;
    }
    return s;
}

void add_noise_ab(std::span<const double> g0, double alpha_bar, std::span<const double> eps, std::span<double> out) {
    if (g0.size() != eps.size() || g0.size() != out.size()) throw ContractError("add_noise: shape mismatch");
    simd::axpby(g0, eps, std::sqrt(alpha_bar), std::sqrt(1.0 - alpha_bar), out);
}

void add_noise(std::span<const double> g0, int t, std::span<const double> eps, const NoiseSchedule& schedule,
               std::span<double> out) {
    add_noise_ab(g0, schedule.alpha_bar(t), eps, out);
}

void cfg_combine(std::span<const double> eps_cond, std::span<const double> eps_uncond, double s,
                 std::span<double> out) {
    if (eps_cond.size() != eps_uncond.size() || eps_cond.size() != out.size()) {
        throw ContractError("cfg_combine: shape mismatch");
    }
    simd::axpby(eps_cond, eps_uncond, s, 1.0 - s, out);
}

std::vector<double> duplicate_views(std::span<const double> map, std::size_t count) {
    std::vector<double> out;
    out.reserve(map.size() * count);
    for (std::size_t i = 0; i < count; ++i) out.insert(out.end(), map.begin(), map.end());
    return out;
}

std::vector<double> standard_normal(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> out(n);
    for (auto& x : out) x = dist(rng);
    return out;
}

const char* map_kind_name(MapKind kind) {
    switch (kind) {
    case MapKind::nd: return "nd";
    case MapKind::rgbd: return "rgbd";
    case MapKind::normal2d: return "normal2d";
    }
    return "?";
}

MapKind parse_map_kind(const std::string& name) {
    if (name == "nd") return MapKind::nd;
    if (name == "rgbd") return MapKind::rgbd;
    if (name == "normal2d") return MapKind::normal2d;
    throw ProtocolError("unknown map kind '" + name + "'");
}

void PriorRequest::validate() const {
    if (views.empty() || views.size() > kMaxViews) {
        throw ContractError("prior request needs 1..8 views, got " + std::to_string(views.size()));
    }
    if (focus >= views.size()) throw ContractError("prior request focus index out of range");
    if (height < 1 || width < 1) throw ContractError("prior request has an empty image");
    if (tensors.size() != views.size() * view_elements()) throw ContractError("prior request tensor size mismatch");
    if (!true_noise.empty() && true_noise.size() != tensors.size()) {
        throw ContractError("prior request noise size mismatch");
    }
}

PriorResponse EchoPrior::predict(const PriorRequest& request) {
    request.validate();
    PriorResponse r;
    r.seq = request.seq;
    r.noise.resize(request.tensors.size());
    for (std::size_t i = 0; i < r.noise.size(); ++i) r.noise[i] = double(float(request.tensors[i]));
    return r;
}

template <typename Real>
std::vector<double> pack_map(const GBuffer<Real>& g, MapKind kind) {
    const std::size_t n = g.pixels();
    const int c = map_channels(kind);
    std::vector<double> out(n * c);
    if (kind == MapKind::rgbd && !g.has_rgb()) throw ContractError("rgbd map requires an RGB channel");
    for (std::size_t p = 0; p < n; ++p) {
        double* o = out.data() + p * c;
        const std::vector<Real>& src = kind == MapKind::rgbd ? g.rgb : g.normal;
        o[0] = src[3 * p];
        o[1] = src[3 * p + 1];
        o[2] = src[3 * p + 2];
        if (c == 4) o[3] = g.depth[p];
    }
    return out;
}

template std::vector<double> pack_map<float>(const GBuffer<float>&, MapKind);
template std::vector<double> pack_map<double>(const GBuffer<double>&, MapKind);

OraclePrior::OraclePrior(NoiseSchedule schedule, OracleCamera camera)
    : schedule_(std::move(schedule)), camera_(camera) {}

void OraclePrior::add_reference(const std::string& prompt, OracleReference reference) {
    if (!reference.field.grid) throw ConfigError("oracle reference for '" + prompt + "' has no grid");
    std::lock_guard lock(mutex_);
    references_[prompt] = std::make_shared<const OracleReference>(std::move(reference));
    lru_.clear();
    index_.clear();
}

bool OraclePrior::has_reference(const std::string& prompt) const {
    std::lock_guard lock(mutex_);
    return references_.count(prompt) != 0;
}

std::size_t OraclePrior::cache_size() const {
    std::lock_guard lock(mutex_);
    return lru_.size();
}

std::shared_ptr<const std::vector<double>> OraclePrior::reference_map(const std::string& prompt, MapKind kind,
                                                                      ViewAngles view, int width, int height) {
    const long qa = std::lround(view.azimuth_deg / kViewQuantum);
    const long qe = std::lround(view.elevation_deg / kViewQuantum);
    const Key key{prompt, int(kind), qa, qe, width, height};

    std::shared_ptr<const OracleReference> ref;
    {
        std::lock_guard lock(mutex_);
        if (auto it = index_.find(key); it != index_.end()) {
            lru_.splice(lru_.begin(), lru_, it->second);
            return it->second->second;
        }
        auto r = references_.find(prompt);
        if (r == references_.end()) throw PriorError("oracle has no reference for prompt '" + prompt + "'", false);
        ref = r->second;
    }

    const TetGrid& grid = *ref->field.grid;
    const Camera cam = camera_from_angles(double(qa) * kViewQuantum, double(qe) * kViewQuantum, camera_.radius,
                                          camera_.fov_y_deg, width, height);
    RenderConfig cfg = default_render_config(grid, cam);
    if (camera_.step_size > 0) cfg.step_size = camera_.step_size;
    cfg.temperature = camera_.temperature > 0 ? camera_.temperature : grid.cell_size();

    const AppearanceField<double>* app = nullptr;
    if (kind == MapKind::rgbd) {
        if (!ref->appearance) throw PriorError("oracle reference '" + prompt + "' has no appearance", false);
        app = &*ref->appearance;
    }
    auto map = std::make_shared<const std::vector<double>>(pack_map(render(ref->field, app, cam, cfg), kind));

    std::lock_guard lock(mutex_);
    if (auto it = index_.find(key); it != index_.end()) return it->second->second;
    lru_.emplace_front(key, map);
    index_[key] = lru_.begin();
    if (lru_.size() > kCacheCapacity) {
        index_.erase(lru_.back().first);
        lru_.pop_back();
    }
    return map;
}

PriorResponse OraclePrior::predict(const PriorRequest& request) {
    request.validate();
    PriorResponse r;
    r.seq = request.seq;
    if (request.unconditional) {
        if (request.true_noise.empty()) {
            throw PriorError("oracle unconditional prediction needs the engine noise", false);
        }
        r.noise = request.true_noise;
        return r;
    }
    const double ab = schedule_.alpha_bar(request.t);
    const double sa = std::sqrt(ab), inv = 1.0 / std::sqrt(1.0 - ab);
    const std::size_t n = request.view_elements();
    r.noise.resize(request.tensors.size());
    for (std::size_t v = 0; v < request.views.size(); ++v) {
        const auto ref = reference_map(request.prompt, request.kind, request.views[v], request.width, request.height);
        const double* gt = request.tensors.data() + v * n;
        double* out = r.noise.data() + v * n;
        for (std::size_t i = 0; i < n; ++i) out[i] = (gt[i] - sa * (*ref)[i]) * inv;
    }
    return r;
}

} // namespace tetforge
