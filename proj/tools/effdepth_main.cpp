#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "effdepth/effdepth.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void print_json_error(const char* type, const std::string& message) {
    const nlohmann::json j{{"error", {{"type", type}, {"message", message}}}};
    std::cerr << j.dump() << "\n";
}

std::string fmt(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v, int decimals) {
    return v ? fmt(*v, decimals) : std::string("-");
}

/// Depth-valued inputs (.pfm) become single-channel images; everything else
/// goes through the PNG/PNM decoders.
effdepth::Image load_image_file(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pfm") {
        return effdepth::Image::gray(effdepth::read_pfm(effdepth::read_file(path)));
    }
    return effdepth::read_image(effdepth::read_file(path));
}

struct BoostFlags {
    std::string image;
    std::string backend;
    std::string out;
    int patch = 640;
    int overlap = 320;
    int ref_size = 518;
    int passthrough = 960;
    int jobs = 0;
};

void add_boost_flags(CLI::App* cmd, BoostFlags& f, bool with_out) {
    cmd->add_option("--backend", f.backend,
                    "Backend spec: synthetic:KIND[?seed=..&..], dir:PATH, or "
                    "cmd:TEMPLATE with {input}/{output}")
        ->required();
    cmd->add_option("--patch", f.patch, "Square patch side in pixels")
        ->capture_default_str();
    cmd->add_option("--overlap", f.overlap,
                    "Minimum overlap between adjacent patches in pixels")
        ->capture_default_str();
    cmd->add_option("--ref-size", f.ref_size,
                    "Longest side of the whole-image reference inference "
                    "(overridden by a backend-declared native size)")
        ->capture_default_str();
    cmd->add_option("--passthrough", f.passthrough,
                    "Skip boosting when the longest image side is at most "
                    "this many pixels")
        ->capture_default_str();
    cmd->add_option("--jobs", f.jobs,
                    "Concurrent tile inferences (0 = hardware concurrency)")
        ->capture_default_str();
    if (with_out) {
        cmd->add_option("--out", f.out, "Output depth file (.pfm, .png, .raw)")
            ->required();
    }
}

effdepth::BoostConfig config_from(const BoostFlags& f) {
    effdepth::BoostConfig cfg;
    cfg.patch = f.patch;
    cfg.overlap = f.overlap;
    cfg.reference_size = f.ref_size;
    cfg.passthrough_max_side = f.passthrough;
    return cfg;
}

int run_boost(const BoostFlags& f) {
    auto backend = effdepth::parse_backend_spec(f.backend);
    const effdepth::BoostConfig cfg = config_from(f);
    const std::filesystem::path image_path(f.image);
    const effdepth::MemoryImageSource src(load_image_file(image_path),
                                          image_path.stem().string());
    const auto t0 = Clock::now();
    const effdepth::BoostResult r =
        effdepth::simple_boost_detailed(src, *backend, cfg, f.jobs);
    const double elapsed = ms_since(t0);
    effdepth::save_depth(f.out, r.depth);
    if (r.passthrough) {
        std::cout << "pass-through: max side " << std::max(src.width(), src.height())
                  << " <= " << cfg.passthrough_max_side << ", single backend call\n";
    } else {
        std::cout << "plan: " << r.plan.tiles.size() << " tiles ("
                  << r.plan.x.starts.size() << " x " << r.plan.y.starts.size()
                  << "), patch " << r.plan.patch << ", overlap "
                  << r.plan.overlap << "\n";
        for (std::size_t i = 0; i < r.plan.tiles.size(); ++i) {
            const effdepth::Rect& t = r.plan.tiles[i];
            std::cout << "tile " << i << " (" << t.x << "," << t.y << " "
                      << t.w << "x" << t.h << "): s=" << fmt(r.alignments[i].s, 6)
                      << " o=" << fmt(r.alignments[i].o, 6) << "\n";
        }
    }
    std::cout << "wall time: " << fmt(elapsed, 1) << " ms ("
              << r.backend_calls << " backend call"
              << (r.backend_calls == 1 ? "" : "s") << ")\n";
    std::cout << "wrote " << f.out << "\n";
    return 0;
}

int run_eval(const std::string& manifest_path, bool no_align, double delta,
             double margin, std::optional<double> depth_cap,
             const std::string& report_path) {
    effdepth::EvalConfig cfg;
    cfg.delta_threshold = delta;
    cfg.whdr_margin = margin;
    cfg.depth_cap = depth_cap;
    if (no_align) cfg.align = effdepth::AlignMode::NONE;
    const effdepth::Manifest manifest = effdepth::load_manifest(manifest_path);
    const effdepth::DatasetReport report =
        effdepth::evaluate_dataset(manifest, cfg);
    for (const effdepth::SampleResult& s : report.samples) {
        if (!s.error.empty()) {
            std::cout << "sample " << s.id << ": ERROR " << s.error << "\n";
            continue;
        }
        std::cout << "sample " << s.id << ": AbsRel " << fmt_opt(s.abs_rel, 4)
                  << "  100(1-delta1) " << fmt_opt(s.one_minus_delta1_pct, 2)
                  << "  WHDR " << fmt_opt(s.whdr, 4) << "  n_valid "
                  << s.n_valid << "\n";
    }
    std::cout << "aggregate: AbsRel " << fmt_opt(report.mean_abs_rel, 4)
              << "  100(1-delta1) "
              << fmt_opt(report.mean_one_minus_delta1_pct, 2) << "  WHDR "
              << fmt_opt(report.mean_whdr, 4) << "  (" << report.n_evaluated
              << " evaluated, " << report.n_failed << " failed)\n";
    if (!report_path.empty()) {
        auto opt_json = [](const std::optional<double>& v) {
            return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
        };
        nlohmann::json samples = nlohmann::json::array();
        for (const effdepth::SampleResult& s : report.samples) {
            samples.push_back(
                {{"id", s.id},
                 {"abs_rel", opt_json(s.abs_rel)},
                 {"one_minus_delta1_pct", opt_json(s.one_minus_delta1_pct)},
                 {"whdr", opt_json(s.whdr)},
                 {"n_valid", s.n_valid},
                 {"alignment", {{"s", s.alignment.s}, {"o", s.alignment.o}}},
                 {"error", s.error}});
        }
        const nlohmann::json j{
            {"aggregate",
             {{"abs_rel", opt_json(report.mean_abs_rel)},
              {"one_minus_delta1_pct",
               opt_json(report.mean_one_minus_delta1_pct)},
              {"whdr", opt_json(report.mean_whdr)},
              {"n_evaluated", report.n_evaluated},
              {"n_failed", report.n_failed}}},
            {"samples", samples}};
        effdepth::write_file(report_path, j.dump(2) + "\n");
        std::cout << "report written to " << report_path << "\n";
    }
    return report.n_failed > 0 ? 1 : 0;
}

int run_loss(const std::string& pred_path, const std::string& gt_path,
             double alpha_l, double alpha_edge, double alpha_lpips,
             const std::string& lpips_cmd) {
    const effdepth::DepthGrid pred = effdepth::load_depth(pred_path);
    const effdepth::DepthGrid gt = effdepth::load_depth(gt_path);
    effdepth::PerceptualBackend backend = effdepth::mean_abs_diff_backend;
    if (!lpips_cmd.empty()) {
        backend = effdepth::process_perceptual_backend(lpips_cmd);
    }
    const effdepth::LossWeights w{alpha_l, alpha_edge, alpha_lpips};
    const effdepth::LossBreakdown b = effdepth::loss_total(pred, gt, backend, w);
    std::cout << "loss_ssi:   " << fmt(b.l, 6) << "\n"
              << "loss_edge:  " << fmt(b.edge, 6) << "\n"
              << "loss_lpips: " << fmt(b.lpips, 6) << "\n"
              << "total:      " << fmt(b.total, 6) << "  (weights "
              << fmt(w.alpha_l, 2) << ", " << fmt(w.alpha_edge, 2) << ", "
              << fmt(w.alpha_lpips, 2) << ")\n";
    return 0;
}

int run_tile_plan(int width, int height, int patch, int overlap) {
    effdepth::BoostConfig cfg;
    cfg.patch = patch;
    cfg.overlap = overlap;
    const effdepth::TilePlan plan = effdepth::plan_tiles(width, height, cfg);
    std::cout << "plan: " << plan.tiles.size() << " tiles ("
              << plan.x.starts.size() << " x " << plan.y.starts.size()
              << ") for " << width << "x" << height << ", patch " << patch
              << ", overlap " << overlap << "\n";
    for (std::size_t i = 0; i < plan.tiles.size(); ++i) {
        const effdepth::Rect& t = plan.tiles[i];
        std::cout << "tile " << i << ": " << t.x << "," << t.y << " " << t.w
                  << "x" << t.h << "\n";
    }
    return 0;
}

int run_decode_bimodal(const std::string& field_path,
                       const std::string& out_path) {
    const effdepth::BimodalField field =
        effdepth::read_bimodal_field(effdepth::read_file(field_path));
    const effdepth::DepthGrid decoded = effdepth::decode_field(field);
    effdepth::save_depth(out_path, decoded);
    std::cout << "decoded " << field.width() << "x" << field.height()
              << " field, wrote " << out_path << "\n";
    return 0;
}

int run_bench(const std::string& manifest_path, const BoostFlags& f,
              int repeat) {
    if (repeat < 1) {
        throw effdepth::UsageError("--repeat must be >= 1");
    }
    auto backend = effdepth::parse_backend_spec(f.backend);
    const effdepth::BoostConfig cfg = config_from(f);
    const effdepth::Manifest manifest = effdepth::load_manifest(manifest_path);
    if (manifest.entries.empty()) {
        std::cout << "no entries to bench\n";
        return 0;
    }
    // Decode everything up front: timings cover the pipeline only, never
    // image loading.
    std::vector<effdepth::MemoryImageSource> sources;
    sources.reserve(manifest.entries.size());
    for (const effdepth::ManifestEntry& e : manifest.entries) {
        sources.emplace_back(load_image_file(e.image_path), e.id);
    }
    std::cout << "image            mean_ms      std_ms   repeats\n";
    for (std::size_t i = 0; i < sources.size(); ++i) {
        double sum = 0.0, sum_sq = 0.0;
        for (int r = 0; r < repeat; ++r) {
            const auto t0 = Clock::now();
            effdepth::simple_boost(sources[i], *backend, cfg, f.jobs);
            const double t = ms_since(t0);
            sum += t;
            sum_sq += t * t;
        }
        const double mean = sum / repeat;
        const double var = std::max(0.0, sum_sq / repeat - mean * mean);
        std::printf("%-12s %11.2f %11.2f %9d\n",
                    manifest.entries[i].id.c_str(), mean, std::sqrt(var),
                    repeat);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"effdepth: patch-boosted monocular depth post-processing, "
                 "evaluation, and format tools"};
    app.require_subcommand(1);

    BoostFlags boost_flags;
    CLI::App* cmd_boost = app.add_subcommand(
        "boost", "Tile, infer, align, and blend one image into a depth map");
    cmd_boost->add_option("--image", boost_flags.image,
                          "Input image (.png, .ppm/.pgm, or .pfm)")
        ->required();
    add_boost_flags(cmd_boost, boost_flags, true);

    std::string eval_manifest, eval_report;
    bool eval_no_align = false;
    double eval_delta = 1.25, eval_margin = 0.0;
    std::optional<double> eval_cap;
    CLI::App* cmd_eval = app.add_subcommand(
        "eval", "Evaluate predictions against ground truth per a manifest");
    cmd_eval->add_option("--manifest", eval_manifest, "Dataset manifest (JSON)")
        ->required();
    cmd_eval->add_flag("--no-align", eval_no_align,
                       "Skip least-squares alignment of predictions");
    cmd_eval->add_option("--delta", eval_delta,
                         "Depth-ratio threshold for the delta1 metric")
        ->capture_default_str();
    cmd_eval->add_option("--margin", eval_margin,
                         "Relative inverse-depth margin under which a pair "
                         "is predicted equal (always a disagreement)")
        ->capture_default_str();
    cmd_eval->add_option("--depth-cap", eval_cap,
                         "Drop ground-truth pixels deeper than this");
    cmd_eval->add_option("--report", eval_report,
                         "Write a machine-readable JSON report here");

    std::string loss_pred, loss_gt, loss_lpips_cmd;
    double alpha_l = 0.4, alpha_edge = 0.2, alpha_lpips = 0.4;
    CLI::App* cmd_loss = app.add_subcommand(
        "loss", "Print the training-objective breakdown for two depth maps");
    cmd_loss->add_option("--pred", loss_pred, "Predicted depth file")->required();
    cmd_loss->add_option("--gt", loss_gt, "Ground-truth depth file")->required();
    cmd_loss->add_option("--alpha-l", alpha_l,
                         "Weight of the scale/shift-invariant term")
        ->capture_default_str();
    cmd_loss->add_option("--alpha-edge", alpha_edge, "Weight of the edge term")
        ->capture_default_str();
    cmd_loss->add_option("--alpha-lpips", alpha_lpips,
                         "Weight of the perceptual term")
        ->capture_default_str();
    cmd_loss->add_option("--lpips-cmd", loss_lpips_cmd,
                         "External perceptual command with {input_a}, "
                         "{input_b}, {output} (default: built-in mean "
                         "absolute difference)");

    int plan_w = 0, plan_h = 0, plan_patch = 640, plan_overlap = 320;
    CLI::App* cmd_plan = app.add_subcommand(
        "tile-plan", "Print the tile layout for an image size");
    cmd_plan->add_option("--width", plan_w, "Image width")->required();
    cmd_plan->add_option("--height", plan_h, "Image height")->required();
    cmd_plan->add_option("--patch", plan_patch, "Square patch side in pixels")
        ->capture_default_str();
    cmd_plan->add_option("--overlap", plan_overlap,
                         "Minimum overlap between adjacent patches in pixels")
        ->capture_default_str();

    std::string field_path, field_out;
    CLI::App* cmd_decode = app.add_subcommand(
        "decode-bimodal",
        "Pick the dominant mixture mode per pixel of a 5-plane field");
    cmd_decode->add_option("--field", field_path, "Mixture field (.pf5/.pfm "
                           "5-plane file)")
        ->required();
    cmd_decode->add_option("--out", field_out,
                           "Output depth file (.pfm, .png, .raw)")
        ->required();

    std::string bench_manifest;
    int bench_repeat = 3;
    BoostFlags bench_flags;
    CLI::App* cmd_bench = app.add_subcommand(
        "bench", "Time the full pipeline per image (loading excluded)");
    cmd_bench->add_option("--manifest", bench_manifest,
                          "Dataset manifest (JSON)")
        ->required();
    cmd_bench->add_option("--repeat", bench_repeat, "Timed runs per image")
        ->capture_default_str();
    add_boost_flags(cmd_bench, bench_flags, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_json_error("usage", e.what());
        return 2;
    }

    try {
        if (cmd_boost->parsed()) return run_boost(boost_flags);
        if (cmd_eval->parsed()) {
            return run_eval(eval_manifest, eval_no_align, eval_delta,
                            eval_margin, eval_cap, eval_report);
        }
        if (cmd_loss->parsed()) {
            return run_loss(loss_pred, loss_gt, alpha_l, alpha_edge,
                            alpha_lpips, loss_lpips_cmd);
        }
        if (cmd_plan->parsed()) {
            return run_tile_plan(plan_w, plan_h, plan_patch, plan_overlap);
        }
        if (cmd_decode->parsed()) return run_decode_bimodal(field_path, field_out);
        if (cmd_bench->parsed()) {
            return run_bench(bench_manifest, bench_flags, bench_repeat);
        }
    } catch (const effdepth::UsageError& e) {
        print_json_error("usage", e.what());
        return 2;
    } catch (const effdepth::InvalidParameterError& e) {
        print_json_error("usage", e.what());
        return 2;
    } catch (const std::exception& e) {
        print_json_error("runtime", e.what());
        return 1;
    }
    return 2;
}
