// SPDX-License-Identifier: Apache-2.0

#include "ggrow/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numbers>

namespace ggrow {

namespace {

using nlohmann::json;

const Vec3 kBackground = Vec3::Ones();

void say(const Progress& p, const std::string& msg) {
  if (p) p(msg);
}

template <typename F>
auto tagged(const char* stage, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(stage) + ": " + e.what());
  }
}

double angle_deg(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 /
         std::numbers::pi;
}

ViewBundle make_bundle(const UnsignedField& field, const CameraPose& pose,
                       const PipelineConfig& cfg) {
  ViewBundle b;
  b.pose = pose;
  b.maps = render_geometry_maps(field, pose, cfg.threads);
  b.prompt = cfg.prompt;
  return b;
}

json pose_json(const CameraPose& p) {
  const Vec3& x = p.position();
  return json::array({x.x(), x.y(), x.z()});
}

json view_opt_json(const ViewOptResult& r) {
  return {{"initial_loss", r.initial_loss}, {"final_loss", r.final_loss},
          {"iterations", r.iterations},     {"mask_px", r.mask_pixels},
          {"active", r.active},             {"newly_grown", r.newly_grown},
          {"skipped", r.skipped}};
}

}  // namespace

void validate(const PipelineConfig& cfg) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, "pipeline: " + m); };
  if (cfg.n_additional < 0) fail("n_additional must be >= 0");
  if (cfg.k_total != 6 + cfg.n_additional) fail("k_total must equal 6 + n_additional");
  if (cfg.max_inpaint_iters < 1) fail("max_inpaint_iters must be >= 1");
  if (cfg.opt_iters_per_view < 0) fail("opt_iters_per_view must be >= 0");
  if (!(cfg.lr_color > 0.0) || !(cfg.lr_opacity > 0.0)) fail("learning rates must be > 0");
  if (cfg.mask_dilation_px < 0) fail("mask_dilation_px must be >= 0");
  if (!(cfg.loss_min_alpha >= 0.0 && cfg.loss_min_alpha < 1.0)) {
    fail("loss_min_alpha must be in [0, 1)");
  }
  if (!(cfg.ungrown_stop_frac >= 0.0 && cfg.ungrown_stop_frac < 1.0)) {
    fail("ungrown_stop_frac must be in [0, 1)");
  }
  if (!(cfg.sphere_radius > 1.0)) fail("sphere_radius must exceed the unit scene radius");
  if (cfg.intrinsics.width < 1 || cfg.intrinsics.height < 1) fail("resolution must be positive");
  if (!(cfg.intrinsics.fov_y > 0.0 && cfg.intrinsics.fov_y < std::numbers::pi)) {
    fail("fov must be in (0, pi)");
  }
  if (!(cfg.inpaint_radius_factor > 0.0)) fail("inpaint_radius_factor must be > 0");
  validate(pose_config(cfg));
}

PoseOptConfig pose_config(const PipelineConfig& cfg) {
  PoseOptConfig p = cfg.pose;
  p.sphere_radius = cfg.sphere_radius;
  p.intrinsics = cfg.intrinsics;
  p.splat = cfg.splat;
  p.threads = cfg.threads;
  return p;
}

Mask dilate(const Mask& m, int radius) {
  if (radius <= 0) return m;
  Mask out(m.width, m.height, 0);
  const int r2 = radius * radius;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= m.height) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= m.width || dx * dx + dy * dy > r2) continue;
          out.at(xx, yy) = 1;
        }
      }
    }
  }
  return out;
}

ViewOptResult optimize_view(GaussianSet& set, const ViewBundle& bundle, const IndexSet& active,
                            const PipelineConfig& cfg) {
  if (!bundle.target) throw Error(ErrorCode::Precondition, "optimize_view: bundle has no target");
  if (active.empty()) throw Error(ErrorCode::Precondition, "optimize_view: empty active set");
  validate(bundle);
  const int nt = resolve_threads(cfg.threads);
  const Image& target = *bundle.target;
  ViewOptResult res;
  res.active = active.size();

  RenderOutput r = render(set, bundle.pose, kBackground, cfg.splat, true, nt);
  if (!r.color.same_shape(target)) {
    throw Error(ErrorCode::InvalidArgument, "optimize_view: target size differs from the pose");
  }
  std::vector<std::uint8_t> is_active(set.size(), 0);
  for (std::uint32_t i : active) is_active.at(i) = 1;

  Mask mask(r.width(), r.height(), 0);
  for (std::size_t p = 0; p < mask.size(); ++p) {
    const std::int32_t h = r.first_hit.data[p];
    if (h == kNoHit || !is_active[static_cast<std::size_t>(h)]) continue;
    if (!bundle.maps.hit_mask.data[p]) continue;
    if (r.alpha.data[p] < cfg.loss_min_alpha) continue;
    if (bundle.mask && !bundle.mask->data[p]) continue;
    mask.data[p] = 1;
    ++res.mask_pixels;
  }
  if (res.mask_pixels == 0) {
    res.skipped = true;
    res.warning = "no loss pixels: active disks are not first hits inside the target";
    return res;
  }

  // Per-disk compositing weight over the loss pixels. Dividing by it turns
  // each gradient into a weighted mean residual sign, so one learning rate
  // fits disks of any footprint.
  std::vector<double> coverage(set.size(), 0.0);
  const FragmentGeometry& fg = *r.fragments;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask.data[p]) continue;
    for (std::uint32_t k = fg.offsets[p]; k < fg.offsets[p + 1]; ++k) {
      coverage[fg.disk[k]] += r.weights[k];
    }
  }
  const double n3 = 3.0 * static_cast<double>(res.mask_pixels);

  std::vector<Vec3> old_color(active.size());
  std::vector<double> old_opacity(active.size());
  AppearanceGradient g = backward_color_opacity(set, r, target, &mask, active, nt);
  res.initial_loss = g.loss;
  double loss = g.loss;
  for (int it = 0; it < cfg.opt_iters_per_view; ++it) {
    for (std::size_t a = 0; a < active.size(); ++a) {
      old_color[a] = set[active[a]].color;
      old_opacity[a] = set[active[a]].opacity;
    }
    double scale = 1.0;
    bool accepted = false;
    RenderOutput trial;
    double trial_loss = loss;
    for (int b = 0; b <= cfg.max_backtracks; ++b) {
      for (std::size_t a = 0; a < active.size(); ++a) {
        const std::uint32_t i = active[a];
        if (coverage[i] <= 0.0) continue;
        const double pc = n3 / coverage[i];
        const Vec3 c = old_color[a] - scale * cfg.lr_color * pc * g.d_color[i];
        set.set_color(i, c.cwiseMax(0.0).cwiseMin(1.0));
        const double o = old_opacity[a] -
                         scale * cfg.lr_opacity * pc * old_opacity[a] / 3.0 * g.d_opacity[i];
        set.set_opacity(i, std::clamp(o, 0.0, 1.0));
      }
      trial = composite(set, r.fragments, kBackground, cfg.splat, true, nt);
      trial_loss = photometric_loss(trial, target, &mask);
      if (trial_loss <= loss) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) {
      for (std::size_t a = 0; a < active.size(); ++a) {
        set.set_color(active[a], old_color[a]);
        set.set_opacity(active[a], old_opacity[a]);
      }
      break;
    }
    r = std::move(trial);
    loss = trial_loss;
    res.iterations = it + 1;
    if (it + 1 < cfg.opt_iters_per_view) {
      g = backward_color_opacity(set, r, target, &mask, active, nt);
    }
  }
  res.final_loss = loss;
  const std::size_t before = set.grown_count();
  for (std::uint32_t i : active) set.mark_grown(i);
  res.newly_grown = set.grown_count() - before;
  return res;
}

Stage1Report stage1_grow(GaussianSet& set, const UnsignedField& field, AppearanceBackend& backend,
                         const PipelineConfig& cfg, const Progress& progress) {
  validate(cfg);
  const int nt = resolve_threads(cfg.threads);
  Stage1Report rep;
  const auto cards = cardinal_views(cfg.sphere_radius, cfg.intrinsics);

  // (a) cardinal views.
  std::vector<ViewBundle> bundles;
  for (const CameraPose& pose : cards) bundles.push_back(make_bundle(field, pose, cfg));
  const Image reference = backend.synthesize_reference(bundles.front());
  const std::vector<Image> targets = backend.synthesize_multiview(bundles, reference);
  if (targets.size() != bundles.size()) {
    throw Error(ErrorCode::Protocol, "multiview returned the wrong number of images");
  }
  for (std::size_t v = 0; v < bundles.size(); ++v) {
    bundles[v].target = targets[v];
    const IndexSet active = front_facing(set, cards[v], cfg.splat, nt);
    ViewRecord rec{"cardinal", cards[v], {}};
    if (active.empty()) {
      rec.opt.skipped = true;
      rep.warnings.push_back("cardinal view " + std::to_string(v) + " has no front-facing disks");
    } else {
      rec.opt = optimize_view(set, bundles[v], active, cfg);
      if (rec.opt.skipped) rep.warnings.push_back(rec.opt.warning);
    }
    say(progress, "stage1 cardinal " + std::to_string(v) + ": loss " +
                      std::to_string(rec.opt.final_loss) + ", grown " +
                      std::to_string(set.grown_fraction()));
    rep.views.push_back(std::move(rec));
  }
  rep.grown_frac_cardinal = set.grown_fraction();

  // (b) overlap regions of orthogonal cardinal pairs.
  std::vector<IndexSet> vis;
  for (const CameraPose& pose : cards) vis.push_back(visible_set(set, pose, cfg.splat, nt));
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) {
      if (std::abs(cards[i].position().normalized().dot(cards[j].position().normalized())) > 0.5) {
        continue;
      }
      rep.regions.push_back(make_overlap_region(set, vis[i], vis[j], cards[i], cards[j], i, j));
    }
  }
  std::stable_sort(rep.regions.begin(), rep.regions.end(),
                   [](const OverlapRegion& a, const OverlapRegion& b) {
                     return a.members.size() > b.members.size();
                   });
  if (cfg.n_additional == 0) {
    rep.grown_frac = set.grown_fraction();
    return rep;
  }
  if (rep.regions.empty() || rep.regions.front().members.empty()) {
    rep.warnings.push_back("all overlap regions are empty; skipping additional views");
    rep.grown_frac = set.grown_fraction();
    return rep;
  }

  std::vector<Vec3> taken;
  for (const CameraPose& c : cards) taken.push_back(c.position());
  std::vector<std::pair<CameraPose, const OverlapRegion*>> chosen;
  for (const OverlapRegion& region : rep.regions) {
    if (static_cast<int>(chosen.size()) == cfg.n_additional) break;
    if (region.members.empty()) break;
    PoseOptConfig pc = pose_config(cfg);
    pc.hemisphere = region.mean_normal;
    const PoseOptResult pr = optimize_overlap_pose(region, set, pc);
    for (const std::string& w : pr.warnings) rep.warnings.push_back(w);
    const Vec3 dir = pr.pose.position();
    const bool dup = std::any_of(taken.begin(), taken.end(),
                                 [&](const Vec3& t) { return angle_deg(t, dir) < cfg.dedup_deg; });
    if (dup) {
      rep.warnings.push_back("additional pose for pair (" + std::to_string(region.view_i) + ", " +
                             std::to_string(region.view_j) + ") duplicates an existing view");
      continue;
    }
    taken.push_back(dir);
    chosen.emplace_back(pr.pose, &region);
  }

  std::vector<ViewBundle> extra;
  for (const auto& [pose, region] : chosen) extra.push_back(make_bundle(field, pose, cfg));
  if (extra.empty()) {
    rep.grown_frac = set.grown_fraction();
    return rep;
  }
  const std::vector<Image> extra_targets = backend.synthesize_multiview(extra, reference);
  if (extra_targets.size() != extra.size()) {
    throw Error(ErrorCode::Protocol, "multiview returned the wrong number of images");
  }
  for (std::size_t v = 0; v < extra.size(); ++v) {
    extra[v].target = extra_targets[v];
    const OverlapRegion& region = *chosen[v].second;
    rep.region_sizes.push_back(region.members.size());
    const IndexSet active =
        set_intersection(region.members, visible_set(set, chosen[v].first, cfg.splat, nt));
    ViewRecord rec{"additional", chosen[v].first, {}};
    if (active.empty()) {
      rec.opt.skipped = true;
      rep.warnings.push_back("additional view " + std::to_string(v) + " sees no region member");
    } else {
      rec.opt = optimize_view(set, extra[v], active, cfg);
      if (rec.opt.skipped) rep.warnings.push_back(rec.opt.warning);
    }
    say(progress, "stage1 additional " + std::to_string(v) + ": loss " +
                      std::to_string(rec.opt.final_loss) + ", region " +
                      std::to_string(region.members.size()));
    rep.views.push_back(std::move(rec));
  }
  rep.grown_frac = set.grown_fraction();
  return rep;
}

Stage2Report stage2_iterative_inpaint(GaussianSet& set, const UnsignedField& field,
                                      AppearanceBackend& backend, const PipelineConfig& cfg,
                                      const Progress& progress) {
  validate(cfg);
  const int nt = resolve_threads(cfg.threads);
  Stage2Report rep;
  rep.stop_reason = "iteration cap";
  for (int it = 0; it < cfg.max_inpaint_iters; ++it) {
    if (1.0 - set.grown_fraction() < cfg.ungrown_stop_frac) {
      rep.stop_reason = "un-grown fraction below threshold";
      break;
    }
    if (set.grown_count() == set.size()) {
      rep.stop_reason = "all disks grown";
      break;
    }
    if (set.grown_count() == 0) {
      rep.stop_reason = "nothing grown to compare against";
      break;
    }
    Stage2Iteration rec;
    const PoseOptResult pr = optimize_unseen_pose(set, pose_config(cfg));
    for (const std::string& w : pr.warnings) rep.warnings.push_back(w);
    rec.pose = pr.pose;
    rec.occlusion_loss = pr.loss;

    const RenderOutput current = render(set, rec.pose, kBackground, cfg.splat, false, nt);
    Mask seed(current.width(), current.height(), 0);
    for (std::size_t p = 0; p < seed.size(); ++p) {
      const std::int32_t h = current.first_hit.data[p];
      if (h != kNoHit && !set[static_cast<std::size_t>(h)].grown) seed.data[p] = 1;
    }
    ViewBundle b = make_bundle(field, rec.pose, cfg);
    b.mask = dilate(seed, cfg.mask_dilation_px);
    for (std::uint8_t v : b.mask->data) rec.mask_px += v;
    if (rec.mask_px == 0) {
      rep.stop_reason = "no un-grown disk is a first hit from the best pose";
      break;
    }
    b.target = to_image(current);
    b.target = backend.inpaint(b);

    const IndexSet active =
        set_intersection(set.ungrown_indices(), visible_set(set, rec.pose, cfg.splat, nt));
    if (active.empty()) {
      rep.stop_reason = "no un-grown disk visible from the best pose";
      break;
    }
    const ViewOptResult opt = optimize_view(set, b, active, cfg);
    if (opt.skipped || opt.newly_grown == 0) {
      rep.stop_reason = "view optimization grew nothing";
      if (!opt.warning.empty()) rep.warnings.push_back(opt.warning);
      break;
    }
    rec.loss = opt.final_loss;
    rec.newly_grown = opt.newly_grown;
    rec.grown_frac = set.grown_fraction();
    say(progress, "stage2 iteration " + std::to_string(it) + ": mask " +
                      std::to_string(rec.mask_px) + " px, grown " +
                      std::to_string(rec.grown_frac));
    rep.iterations.push_back(rec);
  }
  if (rep.iterations.size() == static_cast<std::size_t>(cfg.max_inpaint_iters) &&
      1.0 - set.grown_fraction() < cfg.ungrown_stop_frac) {
    rep.stop_reason = "un-grown fraction below threshold";
  }
  rep.grown_frac_before_spatial = set.grown_fraction();
  if (set.grown_count() > 0 && set.grown_count() < set.size()) {
    rep.spatial = spatial_inpaint(set, cfg.inpaint_radius_factor * field.median_spacing());
    say(progress, "spatial inpaint: " + std::to_string(rep.spatial.fills.size()) + " disks in " +
                      std::to_string(rep.spatial.rounds) + " rounds");
  }
  rep.grown_frac = set.grown_fraction();
  return rep;
}

std::array<CameraPose, 8> heldout_poses(double radius, const Intrinsics& intr) {
  std::array<CameraPose, 8> out;
  int k = 0;
  for (int sz : {1, -1}) {
    for (int sy : {1, -1}) {
      for (int sx : {1, -1}) {
        out[k++] = CameraPose::look_at_origin(radius * Vec3(sx, sy, sz).normalized(), intr);
      }
    }
  }
  return out;
}

GaussianSet oracle_colored(const GaussianSet& set, double opacity) {
  std::vector<GaussianDisk> disks(set.disks().begin(), set.disks().end());
  for (GaussianDisk& d : disks) {
    d.color = oracle_color(d.center);
    d.opacity = opacity;
  }
  return GaussianSet(std::move(disks));
}

double mean_color_error(const GaussianSet& set) {
  if (set.empty()) return 0.0;
  double sum = 0.0;
  for (const GaussianDisk& d : set.disks()) sum += (d.color - oracle_color(d.center)).norm();
  return sum / static_cast<double>(set.size());
}

std::vector<double> heldout_psnr(const GaussianSet& set, const PipelineConfig& cfg) {
  const GaussianSet truth = oracle_colored(set, cfg.init.opacity);
  std::vector<double> out;
  for (const CameraPose& pose : heldout_poses(cfg.sphere_radius, cfg.intrinsics)) {
    const Image a = to_image(render(set, pose, kBackground, cfg.splat, false, cfg.threads));
    const Image b = to_image(render(truth, pose, kBackground, cfg.splat, false, cfg.threads));
    out.push_back(psnr(a, b));
  }
  return out;
}

double seam_metric(const GaussianSet& set, std::span<const OverlapRegion> regions,
                   const PipelineConfig& cfg) {
  std::vector<std::uint8_t> in_region(set.size(), 0);
  for (const OverlapRegion& r : regions) {
    for (std::uint32_t m : r.members) in_region[m] = 1;
  }
  const GaussianSet truth = oracle_colored(set, cfg.init.opacity);
  double sum = 0.0;
  std::size_t count = 0;
  for (const CameraPose& pose : heldout_poses(cfg.sphere_radius, cfg.intrinsics)) {
    const RenderOutput a = render(set, pose, kBackground, cfg.splat, false, cfg.threads);
    const RenderOutput b = render(truth, pose, kBackground, cfg.splat, false, cfg.threads);
    const int w = a.width(), h = a.height();
    for (int y = 0; y + 1 < h; ++y) {
      for (int x = 0; x + 1 < w; ++x) {
        const std::int32_t hit = a.first_hit.at(x, y);
        if (hit == kNoHit || !in_region[static_cast<std::size_t>(hit)]) continue;
        const Vec3 e = a.color.at(x, y) - b.color.at(x, y);
        const Vec3 gx = a.color.at(x + 1, y) - b.color.at(x + 1, y) - e;
        const Vec3 gy = a.color.at(x, y + 1) - b.color.at(x, y + 1) - e;
        sum += std::sqrt(gx.squaredNorm() + gy.squaredNorm());
        ++count;
      }
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

RunResult run_pipeline(const PointCloud& cloud, const PipelineConfig& cfg,
                       AppearanceBackend& backend, const Progress& progress) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  RunResult out;
  const NormalizedCloud nc = tagged("normalize", [&] { return normalize_to_unit(cloud); });
  const UnsignedField field = tagged("field", [&] { return UnsignedField(nc.cloud, cfg.field); });
  const SpacingResult spacing =
      tagged("spacing", [&] { return estimate_spacing(nc.cloud, 8, cfg.threads); });
  out.set = tagged("init", [&] {
    return init_from_cloud(nc.cloud, field, spacing.spacing, cfg.init, cfg.threads);
  });
  out.initial = out.set;
  say(progress, "init: " + std::to_string(out.set.size()) + " disks");
  out.stage1 = tagged("stage1", [&] { return stage1_grow(out.set, field, backend, cfg, progress); });
  out.seam_after_stage1 = seam_metric(out.set, out.stage1.regions, cfg);
  out.stage2 = tagged("stage2", [&] {
    return stage2_iterative_inpaint(out.set, field, backend, cfg, progress);
  });
  tagged("evaluate", [&] {
    out.seam_final = seam_metric(out.set, out.stage1.regions, cfg);
    out.color_error = mean_color_error(out.set);
    out.psnr = heldout_psnr(out.set, cfg);
    return 0;
  });
  out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::string report_json(const RunResult& r, const PipelineConfig& cfg, bool include_wall) {
  json s1;
  json losses = json::array(), views = json::array();
  for (const ViewRecord& v : r.stage1.views) {
    losses.push_back(v.opt.final_loss);
    views.push_back({{"kind", v.kind}, {"pose", pose_json(v.pose)}, {"opt", view_opt_json(v.opt)}});
  }
  s1["per_view_loss"] = losses;
  s1["views"] = views;
  s1["region_sizes"] = r.stage1.region_sizes;
  json all_regions = json::array();
  for (const OverlapRegion& g : r.stage1.regions) {
    all_regions.push_back({{"view_pair", {g.view_i, g.view_j}}, {"member_count", g.members.size()}});
  }
  s1["overlap_regions"] = all_regions;
  s1["grown_frac_cardinal"] = r.stage1.grown_frac_cardinal;
  s1["grown_frac"] = r.stage1.grown_frac;
  s1["seam_metric"] = r.seam_after_stage1;
  s1["warnings"] = r.stage1.warnings;

  json s2;
  json its = json::array();
  for (const Stage2Iteration& it : r.stage2.iterations) {
    its.push_back({{"pose", pose_json(it.pose)},
                   {"occlusion_loss", it.occlusion_loss},
                   {"mask_px", it.mask_px},
                   {"loss", it.loss},
                   {"newly_grown", it.newly_grown},
                   {"grown_frac", it.grown_frac}});
  }
  s2["iterations"] = its;
  s2["stop_reason"] = r.stage2.stop_reason;
  s2["grown_frac_before_spatial"] = r.stage2.grown_frac_before_spatial;
  s2["spatial_inpaint"] = {{"rounds", r.stage2.spatial.rounds},
                           {"filled", r.stage2.spatial.fills.size()},
                           {"still_ungrown", r.stage2.spatial.still_ungrown.size()}};
  s2["grown_frac"] = r.stage2.grown_frac;
  s2["warnings"] = r.stage2.warnings;

  json fin = {{"grown_frac", r.set.grown_fraction()},
              {"psnr_heldout", r.psnr},
              {"color_error", r.color_error},
              {"seam_metric", r.seam_final},
              {"disks", r.set.size()}};
  if (include_wall) fin["wall_s"] = r.wall_s;

  json conf = {{"k_total", cfg.k_total},
               {"n_additional", cfg.n_additional},
               {"max_inpaint_iters", cfg.max_inpaint_iters},
               {"ungrown_stop_frac", cfg.ungrown_stop_frac},
               {"opt_iters_per_view", cfg.opt_iters_per_view},
               {"lr_color", cfg.lr_color},
               {"lr_opacity", cfg.lr_opacity},
               {"mask_dilation_px", cfg.mask_dilation_px},
               {"loss_min_alpha", cfg.loss_min_alpha},
               {"prompt", cfg.prompt},
               {"resolution", {cfg.intrinsics.width, cfg.intrinsics.height}}};
  return json{{"config", conf}, {"stage1", s1}, {"stage2", s2}, {"final", fin}}.dump(2);
}

RunResult run_full(const std::string& cloud_path, const std::string& out_dir,
                   const PipelineConfig& cfg, AppearanceBackend& backend,
                   const Progress& progress) {
  validate(cfg);
  const PointCloud cloud = tagged("load", [&] { return load_ply(cloud_path); });
  RunResult r = run_pipeline(cloud, cfg, backend, progress);
  tagged("export", [&] {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "renders", ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + out_dir + ": " + ec.message());
    export_splat_ply(r.initial, (fs::path(out_dir) / "initial.ply").string());
    export_splat_ply(r.set, (fs::path(out_dir) / "grown.ply").string());
    const auto poses = heldout_poses(cfg.sphere_radius, cfg.intrinsics);
    for (std::size_t k = 0; k < poses.size(); ++k) {
      const Image img = to_image(render(r.set, poses[k], kBackground, cfg.splat, false, cfg.threads));
      write_png((fs::path(out_dir) / "renders" / ("heldout_" + std::to_string(k) + ".png")).string(),
                img);
    }
    const std::string rep = report_json(r, cfg);
    write_file((fs::path(out_dir) / "report.json").string(), rep.data(), rep.size());
    return 0;
  });
  return r;
}

}  // namespace ggrow
