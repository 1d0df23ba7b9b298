#include "phaze/archspace.hpp"

#include <algorithm>
#include <sstream>

namespace phaze {

std::string AcceleratorConfig::compute_tuple() const {
  std::ostringstream os;
  os << "{" << num_tc << "," << num_vc << "," << pe_x << "," << pe_y << "," << pe_vc << "}";
  return os.str();
}

std::string AcceleratorConfig::label() const {
  std::ostringstream os;
  os << compute_tuple() << " glb=" << glb / kMiB << "MB";
  return os.str();
}

L2Sizes derived_l2(int pe_x, int pe_y, Bytes vc_lane_bytes) {
  if (!is_power_of_two(pe_x) || !is_power_of_two(pe_y)) {
    throw ValidationError("derived_l2: pe_x and pe_y must be powers of two");
  }
  if (vc_lane_bytes <= 0) throw ValidationError("derived_l2: lane bytes must be positive");
  const int exp = log2_exact(pe_x) + log2_exact(pe_y) - 6;
  L2Sizes out;
  out.l2_tc = exp <= 0 ? kKiB : (Bytes{1} << exp) * kKiB;
  out.l2_vc = std::min<Bytes>(4 * kKiB, std::max<Bytes>(kKiB, static_cast<Bytes>(pe_x) * vc_lane_bytes));
  return out;
}

std::int64_t derived_glb_bw(int num_tc, int pe_x) {
  return std::min<std::int64_t>(kMaxGlbBandwidthWords, static_cast<std::int64_t>(num_tc) * pe_x);
}

AcceleratorConfig make_config(int num_tc, int num_vc, int pe_x, int pe_y, Bytes glb, Bytes hbm, std::int64_t hbm_bw,
                              Bytes vc_lane_bytes) {
  if (num_tc < 1 || num_vc < 1) throw ValidationError("core counts must be positive");
  AcceleratorConfig cfg;
  cfg.num_tc = num_tc;
  cfg.num_vc = num_vc;
  cfg.pe_x = pe_x;
  cfg.pe_y = pe_y;
  cfg.pe_vc = pe_x;
  cfg.glb = glb;
  cfg.glb_bw = derived_glb_bw(num_tc, pe_x);
  L2Sizes l2 = derived_l2(pe_x, pe_y, vc_lane_bytes);
  cfg.l2_tc = l2.l2_tc;
  cfg.l2_vc = l2.l2_vc;
  cfg.hbm = hbm;
  cfg.hbm_bw = hbm_bw;
  return cfg;
}

AcceleratorConfig reference_config(Bytes hbm, std::int64_t hbm_bw, Bytes vc_lane_bytes) {
  return make_config(8, 2, 128, 128, 128 * kMiB, hbm, hbm_bw, vc_lane_bytes);
}

Rational area_of(const AcceleratorConfig& cfg, const AreaModel& m) {
  const std::int64_t macs = static_cast<std::int64_t>(cfg.num_tc) * cfg.pe_x * cfg.pe_y;
  const std::int64_t lanes = static_cast<std::int64_t>(cfg.num_vc) * cfg.pe_vc;
  const Bytes sram = cfg.glb + cfg.num_tc * cfg.l2_tc + cfg.num_vc * cfg.l2_vc;
  return m.unit_area_mac * Rational(macs) + m.unit_area_vec_lane * Rational(lanes) +
         m.unit_area_per_byte_sram * Rational(sram);
}

AreaModel AreaModel::with_reference_budget(Rational mac, Rational lane, Rational sram_byte, Bytes vc_lane_bytes) {
  AreaModel m;
  m.unit_area_mac = mac;
  m.unit_area_vec_lane = lane;
  m.unit_area_per_byte_sram = sram_byte;
  if (mac <= Rational(0) || lane <= Rational(0) || sram_byte <= Rational(0)) {
    throw ValidationError("unit areas must be positive");
  }
  m.budget = area_of(reference_config(0, 1, vc_lane_bytes), m);
  return m;
}

AreaModel AreaModel::defaults() {
  return with_reference_budget(Rational(1), Rational(1, 2), Rational(1, 512));
}

void SearchBounds::validate() const {
  auto check = [](const auto& values, const char* name) {
    if (values.empty()) throw ValidationError(std::string("search bound '") + name + "' is empty");
    for (auto v : values) {
      if (!is_power_of_two(static_cast<std::int64_t>(v))) {
        throw ValidationError(std::string("search bound '") + name + "' has non power-of-two value " +
                              std::to_string(v));
      }
    }
  };
  check(num_tc, "num_tc");
  check(num_vc, "num_vc");
  check(pe_x, "pe_x");
  check(pe_y, "pe_y");
  check(glb, "glb");
  if (hbm_bw <= 0) throw ValidationError("hbm_bw must be positive");
}

std::vector<RankedConfig> enumerate_configs(const SearchBounds& bounds, const AreaModel& model) {
  bounds.validate();
  std::vector<RankedConfig> out;
  for (int tc : bounds.num_tc) {
    for (int vc : bounds.num_vc) {
      for (int px : bounds.pe_x) {
        for (int py : bounds.pe_y) {
          for (Bytes glb : bounds.glb) {
            AcceleratorConfig cfg = make_config(tc, vc, px, py, glb, bounds.hbm, bounds.hbm_bw, bounds.vc_lane_bytes);
            Rational area = area_of(cfg, model);
            if (area <= model.budget) out.push_back({cfg, area});
          }
        }
      }
    }
  }
  if (out.empty()) throw ValidationError("search bounds admit no configuration within the area budget");
  auto key = [](const AcceleratorConfig& c) { return std::make_tuple(c.num_tc, c.pe_x, c.num_vc, c.pe_y, c.glb); };
  std::sort(out.begin(), out.end(), [&](const RankedConfig& a, const RankedConfig& b) {
    if (!(a.area == b.area)) return a.area > b.area;
    return key(a.config) > key(b.config);
  });
  // Duplicate bound values would otherwise produce duplicate configs.
  out.erase(std::unique(out.begin(), out.end(),
                        [](const RankedConfig& a, const RankedConfig& b) { return a.config == b.config; }),
            out.end());
  return out;
}

const char* to_string(ConvergeDecision d) { return d == ConvergeDecision::Converged ? "converged" : "continue"; }

ConvergeDecision check_converge(const std::vector<double>& level_best, int hysteresis) {
  if (hysteresis < 1) throw ValidationError("hysteresis must be >= 1");
  if (static_cast<int>(level_best.size()) <= hysteresis) return ConvergeDecision::Continue;
  const std::size_t first = level_best.size() - static_cast<std::size_t>(hysteresis);
  for (std::size_t i = first + 1; i < level_best.size(); ++i) {
    if (!(level_best[i] < level_best[i - 1])) return ConvergeDecision::Continue;
  }
  return ConvergeDecision::Converged;
}

}  // namespace phaze
