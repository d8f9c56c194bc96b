// SPDX-License-Identifier: Apache-2.0

#include "ggrow/cli.hpp"

#include "ggrow/image_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>
#include <variant>

namespace ggrow {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kDeg = std::numbers::pi / 180.0;

/// One config key bound to a field; the same table drives the flags, the
/// config file and the dump.
struct Key {
  std::string name;
  std::string help;
  std::variant<int*, std::size_t*, double*, std::string*, bool*> ref;
};

std::vector<Key> keys(RunConfig& rc) {
  PipelineConfig& p = rc.pipeline;
  return {
      {"input", "input point cloud (PLY)", &rc.input},
      {"output", "output directory", &rc.output},
      {"backend", "appearance backend: procedural | remote", &rc.backend},
      {"backend-url", "remote backend URL (falls back to GGROW_BACKEND_URL)", &rc.backend_url},
      {"backend-timeout", "remote request timeout, seconds", &rc.backend_timeout_s},
      {"backend-retries", "remote retries on transport errors and 5xx", &rc.backend_retries},
      {"prompt", "text prompt passed to the backend", &p.prompt},
      {"radius", "camera sphere radius", &p.sphere_radius},
      {"fov", "vertical field of view, degrees", &rc.fov_deg},
      {"resolution", "square image size, pixels", &rc.resolution},
      {"k-blend", "distance-field neighbor count", &p.field.k_blend},
      {"bandwidth", "distance-field softmin temperature (<= 0: 2 x median spacing)",
       &p.field.bandwidth},
      {"scale-factor", "disk scale as a multiple of the point spacing", &p.init.scale_factor},
      {"opacity-init", "initial disk opacity", &p.init.opacity},
      {"k-total", "total stage-1 views (0: 6 + n-additional)", &rc.k_total},
      {"n-additional", "additional overlap views in stage 1", &p.n_additional},
      {"max-inpaint-iters", "stage-2 iteration cap", &p.max_inpaint_iters},
      {"ungrown-stop-frac", "stage-2 stops below this un-grown fraction", &p.ungrown_stop_frac},
      {"opt-iters-per-view", "descent steps per view", &p.opt_iters_per_view},
      {"lr-color", "color learning rate", &p.lr_color},
      {"lr-opacity", "opacity learning rate", &p.lr_opacity},
      {"max-backtracks", "step halvings per descent step", &p.max_backtracks},
      {"mask-dilation-px", "stage-2 mask dilation, pixels", &p.mask_dilation_px},
      {"loss-min-alpha", "minimum rendered alpha of a loss pixel", &p.loss_min_alpha},
      {"dedup-deg", "minimum angle between stage-1 views, degrees", &p.dedup_deg},
      {"inpaint-radius-factor", "spatial inpainting radius / median spacing",
       &p.inpaint_radius_factor},
      {"pose-restarts", "pose optimizer restarts", &p.pose.restarts},
      {"pose-max-iters", "pose optimizer iterations per restart", &p.pose.max_iters},
      {"pose-step", "initial pose step, radians", &p.pose.step_size},
      {"pose-tol", "pose convergence tolerance", &p.pose.convergence_tol},
      {"tau", "occlusion sigmoid temperature", &p.pose.tau},
      {"pose-fd-step", "occlusion finite-difference step, radians", &p.pose.fd_step},
      {"exact-pairs", "exhaustive occlusion pair sum", &p.pose.exact_pairs},
      {"threads", "worker threads (0: hardware default)", &p.threads},
  };
}

std::string format_value(const Key& k) {
  std::ostringstream os;
  os << std::setprecision(17);
  std::visit(
      [&](auto* v) {
        using T = std::remove_pointer_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) {
          os << std::quoted(*v);
        } else if constexpr (std::is_same_v<T, bool>) {
          os << (*v ? "true" : "false");
        } else {
          os << *v;
        }
      },
      k.ref);
  return os.str();
}

std::string dump(RunConfig& rc) {
  std::string out;
  for (const Key& k : keys(rc)) out += k.name + " = " + format_value(k) + "\n";
  return out;
}

void bind(CLI::App& app, std::vector<Key>& table) {
  for (Key& k : table) {
    std::visit(
        [&](auto* v) {
          using T = std::remove_pointer_t<decltype(v)>;
          if constexpr (std::is_same_v<T, bool>) {
            app.add_flag("--" + k.name, *v, k.help)->capture_default_str();
          } else {
            app.add_option("--" + k.name, *v, k.help)->capture_default_str();
          }
        },
        k.ref);
  }
}

struct Session {
  RunConfig rc;
  PipelineConfig cfg;
  std::ostream& out;
  std::ostream& err;
};

std::unique_ptr<AppearanceBackend> backend_for(const RunConfig& rc) {
  RemoteConfig remote;
  remote.url = rc.backend_url;
  remote.timeout_s = rc.backend_timeout_s;
  remote.retries = rc.backend_retries;
  return make_backend(rc.backend, remote);
}

void require_input(const RunConfig& rc) {
  if (rc.input.empty()) throw Error(ErrorCode::Config, "input is required");
}

fs::path prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path.string(), text.data(), text.size());
}

void cmd_init(Session& s) {
  require_input(s.rc);
  const PointCloud cloud = load_ply(s.rc.input);
  const NormalizedCloud nc = normalize_to_unit(cloud);
  const UnsignedField field(nc.cloud, s.cfg.field);
  const SpacingResult sp = estimate_spacing(nc.cloud, 8, s.cfg.threads);
  const GaussianSet set = init_from_cloud(nc.cloud, field, sp.spacing, s.cfg.init, s.cfg.threads);

  const std::vector<double> edges = {0, 1, 2, 5, 10, 20, 45, 90};
  std::vector<std::size_t> counts(edges.size() - 1, 0);
  std::size_t fallbacks = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Vec3 pca = field.pca_normal(nc.cloud.points[i]);
    const double c = std::min(1.0, std::abs(pca.normalized().dot(set[i].normal())));
    const double deg = std::acos(c) / kDeg;
    const auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, deg);
    ++counts[static_cast<std::size_t>(it - edges.begin()) - 1];
    fallbacks += set[i].normal_fallback ? 1 : 0;
  }
  const json stats = {{"n", set.size()},
                      {"spacing_median", sp.median},
                      {"spacing_clamped", sp.clamped},
                      {"bandwidth", field.bandwidth()},
                      {"scale_factor", s.cfg.init.scale_factor},
                      {"normal_fallbacks", fallbacks},
                      {"normal_pca_disagreement", {{"edges_deg", edges}, {"counts", counts}}}};
  const fs::path dir = prepare_dir(s.rc.output);
  export_splat_ply(set, (dir / "initial.ply").string());
  write_text(dir / "init_stats.json", stats.dump(2) + "\n");
  s.out << "wrote " << (dir / "initial.ply").string() << " (" << set.size() << " disks)\n";
}

void cmd_maps(Session& s, double az_deg, double el_deg) {
  require_input(s.rc);
  const NormalizedCloud nc = normalize_to_unit(load_ply(s.rc.input));
  const UnsignedField field(nc.cloud, s.cfg.field);
  const CameraPose pose = CameraPose::from_spherical(az_deg * kDeg, el_deg * kDeg,
                                                     s.cfg.sphere_radius, s.cfg.intrinsics);
  const GeometryMaps maps = render_geometry_maps(field, pose, s.cfg.threads);
  const fs::path dir = prepare_dir(fs::path(s.rc.output) / "maps");
  write_png((dir / "depth.png").string(), encode_depth(maps, default_depth_range(pose)));
  write_png((dir / "normal.png").string(), encode_normals(maps));
  write_png((dir / "position.png").string(), encode_positions(maps));
  s.out << "wrote depth, normal and position maps to " << dir.string() << "\n";
}

void cmd_grow(Session& s) {
  require_input(s.rc);
  const auto backend = backend_for(s.rc);
  std::ostream& err = s.err;
  const RunResult r = run_full(s.rc.input, s.rc.output, s.cfg, *backend,
                               [&err](const std::string& m) { err << "[grow] " << m << "\n"; });
  double mean = 0.0;
  for (double p : r.psnr) mean += p / static_cast<double>(r.psnr.size());
  s.out << "grown " << r.set.grown_fraction() << ", color error " << r.color_error
        << ", held-out PSNR " << mean << " dB\n";
}

std::vector<CameraPose> parse_poses(const std::vector<std::string>& specs,
                                    const PipelineConfig& cfg) {
  std::vector<CameraPose> out;
  for (const std::string& text : specs) {
    const auto comma = text.find(',');
    double az = 0.0, el = 0.0;
    try {
      if (comma == std::string::npos) throw std::invalid_argument(text);
      std::size_t used = 0;
      az = std::stod(text.substr(0, comma), &used);
      if (used != comma) throw std::invalid_argument(text);
      const std::string rest = text.substr(comma + 1);
      el = std::stod(rest, &used);
      if (used != rest.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Config, "pose must be 'azimuth,elevation' in degrees: " + text);
    }
    out.push_back(
        CameraPose::from_spherical(az * kDeg, el * kDeg, cfg.sphere_radius, cfg.intrinsics));
  }
  return out;
}

void cmd_render(Session& s, const std::string& splat, const std::vector<std::string>& pose_specs,
                bool oracle_colors) {
  if (splat.empty()) throw Error(ErrorCode::Config, "render needs --splat");
  const std::vector<CameraPose> custom = parse_poses(pose_specs, s.cfg);
  GaussianSet set = import_splat_ply(splat);
  if (oracle_colors) set = oracle_colored(set, s.cfg.init.opacity);
  std::vector<std::pair<std::string, CameraPose>> views;
  if (custom.empty()) {
    const auto held = heldout_poses(s.cfg.sphere_radius, s.cfg.intrinsics);
    for (std::size_t k = 0; k < held.size(); ++k) {
      views.emplace_back("heldout_" + std::to_string(k), held[k]);
    }
  } else {
    for (std::size_t k = 0; k < custom.size(); ++k) {
      views.emplace_back("view_" + std::to_string(k), custom[k]);
    }
  }
  const fs::path dir = prepare_dir(fs::path(s.rc.output) / "renders");
  for (const auto& [name, pose] : views) {
    const Image img = to_image(render(set, pose, Vec3::Ones(), s.cfg.splat, false, s.cfg.threads));
    write_png((dir / (name + ".png")).string(), img);
  }
  s.out << "wrote " << views.size() << " renders to " << dir.string() << "\n";
}

void cmd_eval(Session& s, const std::string& a, const std::string& b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::Config, "eval needs --a and --b");
  std::vector<std::string> names;
  std::error_code ec;
  for (fs::directory_iterator it(a, ec), end; !ec && it != end; it.increment(ec)) {
    if (it->path().extension() == ".png") names.push_back(it->path().filename().string());
  }
  if (ec) throw Error(ErrorCode::Io, "cannot list " + a + ": " + ec.message());
  if (names.empty()) throw Error(ErrorCode::Io, "no PNG files in " + a);
  std::sort(names.begin(), names.end());
  double sum = 0.0;
  json rows = json::array();
  for (const std::string& n : names) {
    const fs::path pb = fs::path(b) / n;
    if (!fs::exists(pb)) throw Error(ErrorCode::Io, "missing " + pb.string());
    const Image ia = from_rgb8(read_png_rgb8((fs::path(a) / n).string()));
    const Image ib = from_rgb8(read_png_rgb8(pb.string()));
    if (!ia.same_shape(ib)) throw Error(ErrorCode::InvalidArgument, "size mismatch for " + n);
    const double p = psnr(ia, ib);
    sum += p;
    s.out << std::left << std::setw(24) << n << std::fixed << std::setprecision(3) << p << "\n";
    rows.push_back({{"image", n}, {"psnr_db", p}});
  }
  const double mean = sum / static_cast<double>(names.size());
  s.out << std::left << std::setw(24) << "mean" << std::fixed << std::setprecision(3) << mean
        << "\n";
  const fs::path dir = prepare_dir(s.rc.output);
  write_text(dir / "eval.json", json{{"images", rows}, {"mean_psnr_db", mean}}.dump(2) + "\n");
}

}  // namespace

PipelineConfig effective_pipeline(const RunConfig& rc) {
  PipelineConfig p = rc.pipeline;
  if (rc.resolution < 1) throw Error(ErrorCode::Config, "resolution must be positive");
  if (!(rc.fov_deg > 0.0 && rc.fov_deg < 180.0)) {
    throw Error(ErrorCode::Config, "fov must be in (0, 180) degrees");
  }
  if (rc.k_total < 0) throw Error(ErrorCode::Config, "k-total must be >= 0");
  if (rc.pipeline.threads < 0) throw Error(ErrorCode::Config, "threads must be >= 0");
  p.intrinsics.width = p.intrinsics.height = rc.resolution;
  p.intrinsics.fov_y = rc.fov_deg * kDeg;
  p.k_total = rc.k_total == 0 ? 6 + p.n_additional : rc.k_total;
  validate(p);
  validate(pose_config(p));
  if (rc.backend != "procedural" && rc.backend != "remote") {
    throw Error(ErrorCode::Config, "unknown backend '" + rc.backend + "' (procedural | remote)");
  }
  return p;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::InvalidArgument:
      return kExitConfig;
    case ErrorCode::Io:
    case ErrorCode::MalformedHeader:
    case ErrorCode::BadPropertyType:
    case ErrorCode::TruncatedData:
      return kExitIo;
    case ErrorCode::Backend:
    case ErrorCode::Protocol:
      return kExitBackend;
    default:
      return kExitFailure;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  std::vector<Key> table = keys(rc);
  CLI::App app{"Grow textured Gaussian disks on a point cloud", "ggrow"};
  app.set_config("--config", "", "key = value config file");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(0, 1);
  app.fallthrough();
  bool dump_config = false;
  app.add_flag("--dump-config", dump_config, "print the effective config and exit")
      ->configurable(false);
  bind(app, table);

  CLI::App* init = app.add_subcommand("init", "initial splats and stats");
  CLI::App* maps = app.add_subcommand("maps", "geometry maps from one pose");
  double az = 0.0, el = 0.0;
  maps->add_option("--azimuth", az, "degrees")->capture_default_str();
  maps->add_option("--elevation", el, "degrees")->capture_default_str();
  CLI::App* grow = app.add_subcommand("grow", "full two-stage pipeline");
  CLI::App* render_cmd = app.add_subcommand("render", "render a splat file");
  std::string splat;
  std::vector<std::string> pose_specs;
  bool oracle = false;
  render_cmd->add_option("--splat", splat, "splat PLY");
  render_cmd->add_option("--pose", pose_specs, "azimuth,elevation in degrees (repeatable)");
  render_cmd->add_flag("--oracle-colors", oracle, "recolor disks with the procedural oracle");
  CLI::App* eval = app.add_subcommand("eval", "PSNR between two render directories");
  std::string dir_a, dir_b;
  eval->add_option("--a", dir_a, "first directory");
  eval->add_option("--b", dir_b, "second directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    Session s{rc, effective_pipeline(rc), out, err};
    if (!rc.backend_url.empty() || rc.backend == "remote") backend_for(rc);
    if (dump_config) {
      out << dump(s.rc);
      return kExitOk;
    }
    if (init->parsed()) {
      cmd_init(s);
    } else if (maps->parsed()) {
      cmd_maps(s, az, el);
    } else if (grow->parsed()) {
      cmd_grow(s);
    } else if (render_cmd->parsed()) {
      cmd_render(s, splat, pose_specs, oracle);
    } else if (eval->parsed()) {
      cmd_eval(s, dir_a, dir_b);
    } else {
      err << app.help();
      return kExitConfig;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace ggrow
