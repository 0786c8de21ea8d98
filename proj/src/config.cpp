#include <fstream>
#include <algorithm>
#include <functional>
#include <sstream>

#include "evline/io.hpp"
#include "evline/pipeline.hpp"

namespace evline {

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(std::string_view)> set;
};

Field real(std::string s, std::string k, double& v) {
  return {std::move(s), std::move(k), [&v] { return fmt_double(v); },
          [&v](std::string_view t) { v = parse_double(t); }};
}

template <typename Int>
Field integer(std::string s, std::string k, Int& v) {
  return {std::move(s), std::move(k), [&v] { return std::to_string(v); },
          [&v](std::string_view t) {
            const long long x = parse_int(t);
            if (x < 0 && std::is_unsigned_v<Int>) throw ParseError("negative value for unsigned key");
            v = static_cast<Int>(x);
          }};
}

Field flag(std::string s, std::string k, bool& v) {
  return {std::move(s), std::move(k), [&v] { return std::string(v ? "true" : "false"); },
          [&v](std::string_view t) {
            if (t == "true") v = true;
            else if (t == "false") v = false;
            else throw ParseError("expected true or false, got `" + std::string(t) + "`");
          }};
}

Field real_list(std::string s, std::string k, std::vector<double>& v) {
  return {std::move(s), std::move(k),
          [&v] {
            std::string out;
            for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt_double(v[i]);
            return out;
          },
          [&v](std::string_view t) {
            v.clear();
            std::size_t pos = 0;
            while (pos <= t.size()) {
              auto end = t.find(',', pos);
              if (end == std::string_view::npos) end = t.size();
              v.push_back(parse_double(trim(t.substr(pos, end - pos))));
              pos = end + 1;
            }
          }};
}

// Every tunable, in serialization order.
std::vector<Field> fields(PipelineConfig& c) {
  auto& d = c.mwmr.detector;
  auto& r = c.recon;
  return {
      integer("", "seed", c.seed),
      integer("", "workers", c.workers),
      integer("frontend", "frame_interval_us", c.frontend.frame_interval_us),
      real_list("frontend", "window_fractions", c.frontend.window_fractions),
      flag("frontend", "binary", c.frontend.binary),
      flag("frontend", "timestamp", c.frontend.timestamp),
      real("detect", "threshold", d.threshold),
      real("detect", "min_length", d.min_length),
      real("detect", "split_tol", d.split_tol),
      real("detect", "join_gap", d.join_gap),
      real("detect", "join_dist", d.join_dist),
      real("detect", "join_angle_deg", d.join_angle_deg),
      real("detect", "merge_dist", c.mwmr.merge_dist),
      real("detect", "merge_angle_deg", c.mwmr.angle_tol_deg),
      flag("planefit", "enabled", c.use_planefit),
      real("planefit", "candidate_radius", c.planefit.candidate_radius),
      real("planefit", "tau", c.planefit.tau),
      real("planefit", "time_scale", c.planefit.time_scale),
      integer("planefit", "iterations", c.planefit.iterations),
      integer("planefit", "min_support", c.planefit.min_support),
      integer("planefit", "n_assoc", c.planefit.n_assoc),
      real("planefit", "min_length", c.planefit.min_length),
      real("matching", "max_dist", c.match.max_dist),
      real("matching", "max_angle_deg", c.match.max_angle_deg),
      integer("matching", "stride", c.match.stride),
      real("matching", "score_thresh", c.match.score_thresh),
      integer("matching", "min_agreeing", c.match.min_agreeing),
      integer("matching", "neighbors", c.match.neighbors),
      real("matching", "epipolar_tol", c.match.epipolar_tol),
      integer("matching", "epipolar_samples", c.match.epipolar_samples),
      real("matching", "consistency_px", c.match.consistency_px),
      real("matching", "consistency_quantile", c.match.consistency_quantile),
      integer("matching", "min_track_len", c.match.min_track_len),
      real("recon", "graff_thresh", r.graff_thresh),
      integer("recon", "min_inliers", r.min_inliers),
      real("recon", "max_angle_3d_deg", r.max_angle_3d_deg),
      real("recon", "max_angle_2d_deg", r.max_angle_2d_deg),
      real("recon", "max_perp_px", r.max_perp_px),
      real("recon", "max_persp_px", r.max_persp_px),
      real("recon", "min_plane_angle_deg", r.min_plane_angle_deg),
      integer("recon", "exhaustive_max_views", r.exhaustive_max_views),
      integer("recon", "random_pairs", r.random_pairs),
      real("recon", "dbscan_eps", r.dbscan_eps),
      integer("recon", "dbscan_min_pts", r.dbscan_min_pts),
      real("recon", "trim_bandwidth", r.trim_bandwidth),
      flag("optimize", "enabled", c.optimize),
      {"optimize", "cost", [&c] { return std::string(to_string(c.cost)); },
       [&c](std::string_view t) { c.cost = cost_variant_from_string(t); }},
      flag("optimize", "refine_poses", c.refine_poses),
      flag("optimize", "fix_scale", c.fix_scale),
      real("optimize", "lambda_event", r.lambda_event),
      integer("optimize", "n_events_per_line", r.n_events_per_line),
      integer("optimize", "max_iterations", r.max_iterations),
      real("optimize", "divergence_factor", r.divergence_factor),
  };
}

}  // namespace

const char* to_string(CostVariant v) {
  switch (v) {
    case CostVariant::kFull: return "full";
    case CostVariant::kLineOnly: return "line-only";
    case CostVariant::kReprojection: return "reprojection";
  }
  return "?";
}

CostVariant cost_variant_from_string(std::string_view s) {
  if (s == "full") return CostVariant::kFull;
  if (s == "line-only") return CostVariant::kLineOnly;
  if (s == "reprojection") return CostVariant::kReprojection;
  throw ParseError("unknown cost variant `" + std::string(s) + "`");
}

std::string config_to_text(const PipelineConfig& cfg) {
  PipelineConfig c = cfg;
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields(c)) {
    if (f.section != section) {
      section = f.section;
      out << "\n[" << section << "]\n";
    }
    out << f.key << " = " << f.get() << '\n';
  }
  return out.str();
}

PipelineConfig config_from_text(std::string_view text) {
  PipelineConfig c;
  auto fs = fields(c);
  for (const auto& [key, value] : parse_key_values(text)) {
    auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) {
      return (f.section.empty() ? f.key : f.section + "." + f.key) == key;
    });
    if (it == fs.end()) throw ParseError("unknown config key `" + key + "`");
    try {
      it->set(value);
    } catch (const std::exception& e) {
      throw ParseError("config key `" + key + "`: " + e.what());
    }
  }
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str());
}

void save_config(const std::string& path, const PipelineConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << config_to_text(cfg);
}

}  // namespace evline
