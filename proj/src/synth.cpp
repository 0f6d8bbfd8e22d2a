#include "milatp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "milatp/image.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace milatp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Deterministic speckle in [0,1] keyed by organoid and texture block.
double speckle(std::uint64_t key, long bx, long by) {
  const std::uint64_t cell =
      splitmix64(key ^ splitmix64((static_cast<std::uint64_t>(bx) << 32) ^
                                  static_cast<std::uint64_t>(by)));
  return static_cast<double>(cell >> 11) * (1.0 / 9007199254740992.0);
}

struct Disk {
  double cx, cy, r;
};

bool clear_of(const std::vector<Disk>& disks, double cx, double cy, double r,
              double gap) {
  for (const auto& d : disks) {
    const double dx = cx - d.cx, dy = cy - d.cy;
    if (std::sqrt(dx * dx + dy * dy) < d.r + r + gap) return false;
  }
  return true;
}

int draw_count(std::mt19937_64& rng, int lo, int hi, bool geometric) {
  if (hi <= lo) return lo;
  if (geometric) {
    // Right-skewed: geometric tail clipped into the configured range.
    std::geometric_distribution<int> g(0.30);
    return lo + std::min(g(rng), hi - lo);
  }
  std::uniform_int_distribution<int> u(lo, hi);
  return u(rng);
}

}  // namespace

unsigned long long well_seed(unsigned long long base, long index) {
  return splitmix64(splitmix64(base) ^
                    (static_cast<std::uint64_t>(index) *
                     0xD1B54A32D192ED03ULL));
}

WellRecord synthesize_well_scaled(const SynthConfig& cfg,
                                  unsigned long long seed,
                                  double clutter_scale) {
  {
    const auto errors = cfg.validate();
    if (!errors.empty())
      throw std::invalid_argument("synth: " + errors.front());
  }
  const int S = cfg.image_size;
  const double cx0 = 0.5 * S, cy0 = 0.5 * S;
  const double well_r = cfg.well_radius_frac * S;

  std::seed_seq organoid_seq{seed, 0xA11ULL};
  std::seed_seq clutter_seq{seed, 0xB22ULL};
  std::seed_seq noise_seq{seed, 0xC33ULL};
  std::mt19937_64 organoid_rng(organoid_seq);
  std::mt19937_64 clutter_rng(clutter_seq);
  std::mt19937_64 noise_rng(noise_seq);

  WellRecord rec;
  rec.image = ImageF::Constant(S, S, 0.02f);
  for (Index y = 0; y < S; ++y)
    for (Index x = 0; x < S; ++x) {
      const double dx = x - cx0, dy = y - cy0;
      if (dx * dx + dy * dy <= well_r * well_r) rec.image(y, x) = 0.08f;
    }

  // Organoids: placement, size, and viability all come from their own
  // stream, so the label never depends on the clutter draw.
  const int want_organoids =
      draw_count(organoid_rng, cfg.organoids_min, cfg.organoids_max, true);
  std::uniform_real_distribution<double> uradius(cfg.radius_min,
                                                 cfg.radius_max);
  std::uniform_real_distribution<double> uviab(cfg.viability_min,
                                               cfg.viability_max);
  std::uniform_real_distribution<double> uangle(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> uunit(0.0, 1.0);

  std::vector<Disk> organoid_disks;
  for (int k = 0; k < want_organoids; ++k) {
    const double r = uradius(organoid_rng);
    const double v = uviab(organoid_rng);
    bool placed = false;
    double cx = 0, cy = 0;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      const double reach = well_r - r - 3.0;
      if (reach <= 0) break;
      const double ang = uangle(organoid_rng);
      const double rad = reach * std::sqrt(uunit(organoid_rng));
      cx = cx0 + rad * std::cos(ang);
      cy = cy0 + rad * std::sin(ang);
      placed = clear_of(organoid_disks, cx, cy, r, 2.0);
    }
    if (!placed) continue;
    organoid_disks.push_back({cx, cy, r});

    const std::uint64_t tex_key =
        splitmix64(seed ^ (static_cast<std::uint64_t>(k) + 1) *
                              0x9E3779B97F4A7C15ULL);
    long area = 0;
    const long x_lo = std::max<long>(0, static_cast<long>(cx - r) - 1);
    const long x_hi = std::min<long>(S - 1, static_cast<long>(cx + r) + 1);
    const long y_lo = std::max<long>(0, static_cast<long>(cy - r) - 1);
    const long y_hi = std::min<long>(S - 1, static_cast<long>(cy + r) + 1);
    for (long y = y_lo; y <= y_hi; ++y)
      for (long x = x_lo; x <= x_hi; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double d2 = dx * dx + dy * dy;
        if (d2 > r * r) continue;
        ++area;
        const double dome = std::sqrt(std::max(0.0, 1.0 - d2 / (r * r)));
        const double tex = speckle(tex_key, x / 3, y / 3) - 0.5;
        const double value = v * (0.25 + 0.45 * dome + 0.30 * tex);
        rec.image(y, x) += static_cast<float>(std::max(0.0, value));
      }

    SynthObject obj;
    obj.type = "organoid";
    obj.cx = cx;
    obj.cy = cy;
    obj.radius = r;
    obj.viability = v;
    obj.area_px = area;
    rec.objects.push_back(obj);
    rec.atp += cfg.atp_per_area * static_cast<double>(area) * v;
  }

  // Clutter carries no ATP and avoids the organoids, so tripling it leaves
  // every organoid pixel untouched.
  auto place_clutter = [&](double r, double gap) -> std::optional<Disk> {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double reach = well_r - r - 2.0;
      if (reach <= 0) return std::nullopt;
      const double ang = uangle(clutter_rng);
      const double rad = reach * std::sqrt(uunit(clutter_rng));
      const double cx = cx0 + rad * std::cos(ang);
      const double cy = cy0 + rad * std::sin(ang);
      if (clear_of(organoid_disks, cx, cy, r, gap)) return Disk{cx, cy, r};
    }
    return std::nullopt;
  };

  const int base_vac =
      draw_count(clutter_rng, cfg.vacuoles_min, cfg.vacuoles_max, false);
  const int base_imp =
      draw_count(clutter_rng, cfg.impurities_min, cfg.impurities_max, false);
  const int n_vac = static_cast<int>(std::lround(base_vac * clutter_scale));
  const int n_imp = static_cast<int>(std::lround(base_imp * clutter_scale));

  std::uniform_real_distribution<double> uvac_r(5.0, 12.0);
  for (int k = 0; k < n_vac; ++k) {
    const double r = uvac_r(clutter_rng);
    const auto d = place_clutter(r, 3.0);
    if (!d) continue;
    const long x_lo = std::max<long>(0, static_cast<long>(d->cx - r) - 1);
    const long x_hi = std::min<long>(S - 1, static_cast<long>(d->cx + r) + 1);
    const long y_lo = std::max<long>(0, static_cast<long>(d->cy - r) - 1);
    const long y_hi = std::min<long>(S - 1, static_cast<long>(d->cy + r) + 1);
    for (long y = y_lo; y <= y_hi; ++y)
      for (long x = x_lo; x <= x_hi; ++x) {
        const double dx = x - d->cx, dy = y - d->cy;
        const double dist = std::sqrt(dx * dx + dy * dy);
        if (dist > r + 1.2) continue;
        if (std::abs(dist - r) <= 1.2)
          rec.image(y, x) += 0.18f;  // dim ring
        else
          rec.image(y, x) -= 0.03f;  // slightly darker interior
      }
    SynthObject obj;
    obj.type = "vacuole";
    obj.cx = d->cx;
    obj.cy = d->cy;
    obj.radius = r;
    rec.objects.push_back(obj);
  }

  std::uniform_real_distribution<double> uimp_r(1.0, 3.0);
  for (int k = 0; k < n_imp; ++k) {
    const double r = uimp_r(clutter_rng);
    const auto d = place_clutter(r, 2.0);
    if (!d) continue;
    const long x_lo = std::max<long>(0, static_cast<long>(d->cx - r) - 1);
    const long x_hi = std::min<long>(S - 1, static_cast<long>(d->cx + r) + 1);
    const long y_lo = std::max<long>(0, static_cast<long>(d->cy - r) - 1);
    const long y_hi = std::min<long>(S - 1, static_cast<long>(d->cy + r) + 1);
    for (long y = y_lo; y <= y_hi; ++y)
      for (long x = x_lo; x <= x_hi; ++x) {
        const double dx = x - d->cx, dy = y - d->cy;
        const double d2 = dx * dx + dy * dy;
        if (d2 > r * r) continue;
        const double dome = std::sqrt(std::max(0.0, 1.0 - d2 / (r * r)));
        rec.image(y, x) += static_cast<float>(0.75 * dome);
      }
    SynthObject obj;
    obj.type = "impurity";
    obj.cx = d->cx;
    obj.cy = d->cy;
    obj.radius = r;
    rec.objects.push_back(obj);
  }

  // Pixel noise from a dedicated stream in fixed scan order.
  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (Index y = 0; y < S; ++y)
      for (Index x = 0; x < S; ++x)
        rec.image(y, x) += static_cast<float>(noise(noise_rng));
  }

  for (Index y = 0; y < S; ++y)
    for (Index x = 0; x < S; ++x)
      rec.image(y, x) = std::min(1.0f, std::max(0.0f, rec.image(y, x)));

  return rec;
}

WellRecord synthesize_well(const SynthConfig& cfg, unsigned long long seed) {
  return synthesize_well_scaled(cfg, seed, 1.0);
}

DatasetManifest synthesize_dataset(int n, const SynthConfig& cfg,
                                   const std::string& out_dir,
                                   double clutter_scale) {
  if (n < 1) throw std::invalid_argument("synth: n must be >= 1");
  {
    const auto errors = cfg.validate();
    if (!errors.empty())
      throw std::invalid_argument("synth: " + errors.front());
  }
  fs::create_directories(out_dir);

  DatasetManifest rel;
  for (int i = 0; i < n; ++i) {
    const unsigned long long seed = well_seed(cfg.seed, i);
    const WellRecord rec = synthesize_well_scaled(cfg, seed, clutter_scale);

    std::ostringstream stem;
    stem << "well_" << std::setw(4) << std::setfill('0') << i;
    const std::string png_name = stem.str() + ".png";
    save_png16((fs::path(out_dir) / png_name).string(), rec.image);

    json meta;
    meta["atp"] = rec.atp;
    meta["seed"] = seed;
    meta["objects"] = json::array();
    for (const auto& o : rec.objects) {
      json j;
      j["type"] = o.type;
      j["cx"] = o.cx;
      j["cy"] = o.cy;
      j["radius"] = o.radius;
      if (o.type == "organoid") {
        j["viability"] = o.viability;
        j["area_px"] = o.area_px;
      }
      meta["objects"].push_back(j);
    }
    std::ofstream meta_out(fs::path(out_dir) / (stem.str() + ".json"));
    meta_out << meta.dump(2) << '\n';
    if (!meta_out)
      throw std::runtime_error("synth: failed writing metadata for " +
                               png_name);

    WellSample s;
    s.image_path = png_name;
    s.atp = rec.atp;
    if (cfg.group_size > 0)
      s.group_id = "g" + std::to_string(i / cfg.group_size);
    rel.samples.push_back(s);
    rel.atp_max = std::max(rel.atp_max, rec.atp);
  }
  const std::string manifest_path =
      (fs::path(out_dir) / "manifest.csv").string();
  save_manifest(rel, manifest_path);
  return load_manifest(manifest_path);
}

}  // namespace milatp
