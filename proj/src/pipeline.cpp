#include "fruitsplat/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fruitsplat/losses.hpp"
#include "fruitsplat/tactile.hpp"

namespace fruitsplat {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& message) : std::runtime_error(message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body())
{
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

template <typename F>
int run_command(const char* command, std::ostream& err, F&& body)
{
    try {
        body();
        return 0;
    } catch (const StageError& e) {
        err << "error [" << command << "/" << e.stage() << "]: " << e.what() << "\n";
    } catch (const std::exception& e) {
        err << "error [" << command << "]: " << e.what() << "\n";
    }
    return 1;
}

std::string format(const char* fmt, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof(buf), fmt, args...);
    return buf;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("I/O error writing " + path.string());
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void require_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where)
{
    if (!obj.is_object()) throw std::runtime_error(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw std::runtime_error("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void take(const json& obj, const char* key, T& dst)
{
    if (const auto it = obj.find(key); it != obj.end()) dst = it->get<T>();
}

void take_path(const json& obj, const char* key, const fs::path& base, fs::path& dst)
{
    if (const auto it = obj.find(key); it != obj.end()) {
        const fs::path p = it->get<std::string>();
        dst = p.is_relative() && !base.empty() ? base / p : p;
    }
}

void take_path(const json& obj, const char* key, const fs::path& base, std::optional<fs::path>& dst)
{
    if (const auto it = obj.find(key); it != obj.end() && !it->is_null()) {
        fs::path p;
        take_path(obj, key, base, p);
        dst = p;
    }
}

json config_to_json(const PipelineConfig& c)
{
    const TrainConfig& t = c.train;
    json dataset = {{"model_dir", c.model_dir.string()}, {"image_dir", c.image_dir.string()}};
    if (c.strawberry_mask_dir) dataset["strawberry_mask_dir"] = c.strawberry_mask_dir->string();
    if (c.bruise_mask_dir) dataset["bruise_mask_dir"] = c.bruise_mask_dir->string();
    const Eigen::Vector3d& bg = t.render.background;
    return {
        {"dataset", dataset},
        {"output_dir", c.output_dir.string()},
        {"train",
         {{"steps", t.steps},
          {"lambda_dssim", t.lambda_dssim},
          {"w_strawberry", t.w_strawberry},
          {"w_bruise", t.w_bruise},
          {"lr_mean", t.lr_mean},
          {"lr_mean_final", t.lr_mean_final},
          {"lr_scale", t.lr_scale},
          {"lr_rotation", t.lr_rotation},
          {"lr_opacity", t.lr_opacity},
          {"lr_color", t.lr_color},
          {"lr_semantic", t.lr_semantic},
          {"prune_opacity_threshold", t.prune_opacity_threshold},
          {"prune_interval", t.prune_interval},
          {"seed", t.seed},
          {"ssim_window", t.ssim.window},
          {"ssim_sigma", t.ssim.sigma},
          {"ssim_c1", t.ssim.c1},
          {"ssim_c2", t.ssim.c2},
          {"initial_opacity", c.init.initial_opacity},
          {"knn_k", c.init.knn_k},
          {"holdout_every", c.holdout_every},
          {"log_every", c.log_every}}},
        {"render",
         {{"near_clip", t.render.near_clip},
          {"background", {bg.x(), bg.y(), bg.z()}},
          {"tile_size", t.render.tile_size},
          {"threads", t.render.threads}}},
        {"analysis", {{"strawberry_threshold", c.thresholds.strawberry}, {"bruise_threshold", c.thresholds.bruise}}},
    };
}

std::string loss_csv(const std::vector<LossBreakdown>& losses)
{
    std::string csv = "step,l1,dssim,bce_s,bce_b,total\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        const LossBreakdown& l = losses[i];
        csv += format("%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", i + 1, l.l1, l.dssim, l.bce_strawberry, l.bce_bruise,
                      l.total);
    }
    return csv;
}

std::string stem_of(const std::string& image_name) { return fs::path(image_name).stem().string(); }

void write_render_set(const fs::path& dir, const std::string& stem, const RenderOutput& out)
{
    write_png_rgb(dir / (stem + ".png"), out.color);
    write_png_gray(dir / (stem + "_strawberry.png"), out.strawberry);
    write_png_gray(dir / (stem + "_bruise.png"), out.bruise);
    write_png_gray(dir / (stem + "_alpha.png"), out.alpha);
}

std::vector<fs::path> sorted_pngs(const fs::path& dir)
{
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no PNG frames in " + dir.string());
    return files;
}

TactileFrame load_tactile(const fs::path& path, double timestamp)
{
    return {read_png_rgb(path), "sensor", timestamp};
}

} // namespace

void PipelineConfig::validate() const
{
    auto require_dir = [](const fs::path& p, const char* what) {
        if (p.empty()) throw std::invalid_argument(std::string(what) + " is not set");
        if (!fs::is_directory(p)) throw std::invalid_argument(std::string(what) + " does not exist: " + p.string());
    };
    require_dir(model_dir, "dataset.model_dir");
    require_dir(image_dir, "dataset.image_dir");
    if (strawberry_mask_dir) require_dir(*strawberry_mask_dir, "dataset.strawberry_mask_dir");
    if (bruise_mask_dir) require_dir(*bruise_mask_dir, "dataset.bruise_mask_dir");
    if (bruise_mask_dir && !strawberry_mask_dir)
        throw std::invalid_argument("dataset.bruise_mask_dir requires dataset.strawberry_mask_dir");
    if (output_dir.empty()) throw std::invalid_argument("output_dir is not set");
    for (double t : {thresholds.strawberry, thresholds.bruise})
        if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("analysis thresholds must be in (0, 1)");
    if (holdout_every < 0) throw std::invalid_argument("train.holdout_every must be >= 0");
    if (log_every < 0) throw std::invalid_argument("train.log_every must be >= 0");
    if (!(init.initial_opacity > 0.0 && init.initial_opacity < 1.0))
        throw std::invalid_argument("train.initial_opacity must be in (0, 1)");
    if (init.knn_k < 1) throw std::invalid_argument("train.knn_k must be >= 1");
    if (!(train.render.near_clip > 0.0)) throw std::invalid_argument("render.near_clip must be > 0");
    if (train.render.tile_size <= 0) throw std::invalid_argument("render.tile_size must be > 0");
    train.validate();
}

PipelineConfig parse_pipeline_config(const std::string& json_text, const fs::path& base_dir)
{
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("malformed JSON: ") + e.what());
    }
    require_keys(root, {"dataset", "output_dir", "train", "render", "analysis"}, "config");

    for (const char* key : {"dataset", "output_dir"})
        if (!root.contains(key)) throw std::runtime_error(std::string("config: missing required key '") + key + "'");
    for (const char* key : {"model_dir", "image_dir"})
        if (!root["dataset"].is_object() || !root["dataset"].contains(key))
            throw std::runtime_error(std::string("config: missing required key 'dataset.") + key + "'");

    PipelineConfig c;
    try {
        if (const auto it = root.find("dataset"); it != root.end()) {
            require_keys(*it, {"model_dir", "image_dir", "strawberry_mask_dir", "bruise_mask_dir"}, "dataset");
            take_path(*it, "model_dir", base_dir, c.model_dir);
            take_path(*it, "image_dir", base_dir, c.image_dir);
            take_path(*it, "strawberry_mask_dir", base_dir, c.strawberry_mask_dir);
            take_path(*it, "bruise_mask_dir", base_dir, c.bruise_mask_dir);
        }
        take_path(root, "output_dir", base_dir, c.output_dir);

        TrainConfig& t = c.train;
        if (const auto it = root.find("train"); it != root.end()) {
            const json& j = *it;
            require_keys(j,
                         {"steps", "lambda_dssim", "w_strawberry", "w_bruise", "lr_mean", "lr_mean_final", "lr_scale",
                          "lr_rotation", "lr_opacity", "lr_color", "lr_semantic", "prune_opacity_threshold",
                          "prune_interval", "seed", "ssim_window", "ssim_sigma", "ssim_c1", "ssim_c2",
                          "initial_opacity", "knn_k", "holdout_every", "log_every"},
                         "train");
            take(j, "steps", t.steps);
            take(j, "lambda_dssim", t.lambda_dssim);
            take(j, "w_strawberry", t.w_strawberry);
            take(j, "w_bruise", t.w_bruise);
            take(j, "lr_mean", t.lr_mean);
            take(j, "lr_mean_final", t.lr_mean_final);
            take(j, "lr_scale", t.lr_scale);
            take(j, "lr_rotation", t.lr_rotation);
            take(j, "lr_opacity", t.lr_opacity);
            take(j, "lr_color", t.lr_color);
            take(j, "lr_semantic", t.lr_semantic);
            take(j, "prune_opacity_threshold", t.prune_opacity_threshold);
            take(j, "prune_interval", t.prune_interval);
            take(j, "seed", t.seed);
            take(j, "ssim_window", t.ssim.window);
            take(j, "ssim_sigma", t.ssim.sigma);
            take(j, "ssim_c1", t.ssim.c1);
            take(j, "ssim_c2", t.ssim.c2);
            take(j, "initial_opacity", c.init.initial_opacity);
            take(j, "knn_k", c.init.knn_k);
            take(j, "holdout_every", c.holdout_every);
            take(j, "log_every", c.log_every);
        }
        if (const auto it = root.find("render"); it != root.end()) {
            require_keys(*it, {"near_clip", "background", "tile_size", "threads"}, "render");
            take(*it, "near_clip", t.render.near_clip);
            take(*it, "tile_size", t.render.tile_size);
            take(*it, "threads", t.render.threads);
            if (const auto bg = it->find("background"); bg != it->end()) {
                const auto v = bg->get<std::vector<double>>();
                if (v.size() != 3) throw std::runtime_error("render.background must have 3 entries");
                t.render.background = {v[0], v[1], v[2]};
            }
        }
        if (const auto it = root.find("analysis"); it != root.end()) {
            require_keys(*it, {"strawberry_threshold", "bruise_threshold"}, "analysis");
            take(*it, "strawberry_threshold", c.thresholds.strawberry);
            take(*it, "bruise_threshold", c.thresholds.bruise);
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("bad config value: ") + e.what());
    }
    return c;
}

PipelineConfig load_pipeline_config(const fs::path& path)
{
    return parse_pipeline_config(read_text(path), path.parent_path());
}

std::string pipeline_config_json(const PipelineConfig& config) { return config_to_json(config).dump(2) + "\n"; }

bool is_holdout(const CameraFrame& frame, int holdout_every)
{
    return holdout_every > 0 && frame.frame_id % holdout_every == 0;
}

double semantic_flag_accuracy(const GaussianCloud& trained, const GaussianCloud& reference)
{
    if (trained.empty() || reference.empty()) throw std::invalid_argument("semantic_flag_accuracy: empty cloud");
    std::size_t agree = 0;
    for (const Gaussian& g : trained.gaussians) {
        const Gaussian* nearest = nullptr;
        double best = std::numeric_limits<double>::infinity();
        for (const Gaussian& r : reference.gaussians) {
            const double d = (r.mean - g.mean).squaredNorm();
            if (d < best) {
                best = d;
                nearest = &r;
            }
        }
        agree += (g.strawberry() >= 0.5) == (nearest->strawberry() >= 0.5);
    }
    return static_cast<double>(agree) / static_cast<double>(trained.size());
}

int cmd_synth(const SynthOptions& options, std::ostream& out, std::ostream& err)
{
    return run_command("synth", err, [&] {
        SyntheticSceneSpec spec = options.spec;
        stage("spec", [&] {
            if (options.output_dir.empty()) throw std::invalid_argument("output directory is not set");
            if (options.train_steps <= 0) throw std::invalid_argument("train steps must be > 0");
            if (options.bruise_fraction) spec.bruise_patch_angle = calibrate_bruise_angle(spec, *options.bruise_fraction);
            spec.validate();
        });
        const SyntheticScene scene = stage("generate", [&] { return generate_synthetic_scene(spec, options.render); });

        const fs::path root = options.output_dir;
        stage("write", [&] {
            for (const char* sub : {"sparse/0", "images", "masks/strawberry", "masks/bruise"})
                fs::create_directories(root / sub);
            std::vector<CameraFrame> frames;
            for (const auto& s : scene.samples) {
                frames.push_back(s.frame);
                write_png_rgb(root / "images" / s.frame.image_name, s.image);
                write_png_mask(mask_path_for(root / "masks/strawberry", s.frame.image_name), *s.strawberry_mask);
                write_png_mask(mask_path_for(root / "masks/bruise", s.frame.image_name), *s.bruise_mask);
            }
            write_colmap_model(frames, scene.sparse_points, root / "sparse/0", ModelFormat::Binary);
            export_ply(scene.cloud, root / "gt_cloud.ply");

            const SyntheticGroundTruth& gt = scene.ground_truth;
            const json truth = {
                {"seed", spec.seed},
                {"bruise_fraction", gt.bruise_fraction},
                {"strawberry_count", gt.strawberry_count},
                {"bruise_count", gt.bruise_count},
                {"ring_count", spec.n_ring_gaussians},
                {"bruise_patch_angle", spec.bruise_patch_angle},
                {"n_cameras", spec.n_cameras},
                {"image_size", spec.image_size},
            };
            write_text(root / "ground_truth.json", truth.dump(2) + "\n");

            PipelineConfig cfg;
            cfg.model_dir = "sparse/0";
            cfg.image_dir = "images";
            cfg.strawberry_mask_dir = "masks/strawberry";
            cfg.bruise_mask_dir = "masks/bruise";
            cfg.output_dir = "train";
            cfg.train.steps = options.train_steps;
            cfg.train.seed = spec.seed;
            cfg.train.render = options.render;
            write_text(root / "train_config.json", pipeline_config_json(cfg));

            out << format("synth: %zu fruit Gaussians (%zu bruised, fraction %.4f), %zu background, %d views -> %s\n",
                          gt.strawberry_count, gt.bruise_count, gt.bruise_fraction,
                          scene.cloud.size() - gt.strawberry_count, spec.n_cameras, root.string().c_str());
        });
    });
}

int cmd_ingest(const IngestOptions& options, std::ostream& out, std::ostream& err)
{
    return run_command("ingest", err, [&] {
        const SparseModel model = stage("parse", [&] { return parse_colmap_model(options.model_dir, options.format); });
        std::vector<CameraIntrinsics> cameras;
        for (const auto& f : model.frames)
            if (std::find(cameras.begin(), cameras.end(), f.intrinsics) == cameras.end()) cameras.push_back(f.intrinsics);
        out << format("frames: %zu\ncameras: %zu\npoints: %zu\n", model.frames.size(), cameras.size(),
                      model.points.size());
        for (std::size_t i = 0; i < cameras.size(); ++i) {
            const auto& c = cameras[i];
            out << format("camera %zu: %s %dx%d fx=%.6g fy=%.6g cx=%.6g cy=%.6g\n", i + 1,
                          camera_model_name(c.model), c.width, c.height, c.fx, c.fy, c.cx, c.cy);
        }
        if (options.convert_to)
            stage("convert", [&] { write_colmap_model(model.frames, model.points, *options.convert_to, options.convert_format); });
    });
}

int cmd_train(const fs::path& config_path, const TrainOverrides& overrides, std::ostream& out, std::ostream& err)
{
    return run_command("train", err, [&] {
        PipelineConfig config = stage("config", [&] {
            PipelineConfig c = load_pipeline_config(config_path);
            if (overrides.steps) c.train.steps = *overrides.steps;
            if (overrides.seed) c.train.seed = *overrides.seed;
            if (overrides.threads) c.train.render.threads = *overrides.threads;
            if (overrides.output_dir) c.output_dir = *overrides.output_dir;
            c.validate();
            return c;
        });

        const SparseModel model = stage("dataset", [&] { return parse_colmap_model(config.model_dir); });
        const std::vector<TrainingSample> samples = stage("dataset", [&] {
            return load_dataset(config.model_dir, config.image_dir, config.strawberry_mask_dir, config.bruise_mask_dir);
        });
        std::vector<TrainingSample> train_set, holdout_set;
        for (const auto& s : samples) (is_holdout(s.frame, config.holdout_every) ? holdout_set : train_set).push_back(s);

        GaussianCloud cloud = stage("init", [&] {
            if (train_set.empty()) throw std::runtime_error("every frame is held out; lower holdout_every");
            if (model.points.empty()) throw std::runtime_error("sparse model has no 3D points to initialize from");
            GaussianCloud c = init_from_points(model.points, config.init);
            c.metadata.source = config.model_dir.string();
            return c;
        });
        out << format("train: %zu Gaussians, %zu training views, %zu held-out views, %d steps\n", cloud.size(),
                      train_set.size(), holdout_set.size(), config.train.steps);

        const auto start = std::chrono::steady_clock::now();
        const TrainResult result = stage("train", [&] {
            return train(std::move(cloud), train_set, config.train,
                         [&](std::size_t step, const LossBreakdown& l, const GaussianCloud& c) {
                             if (config.log_every > 0 && (step + 1) % static_cast<std::size_t>(config.log_every) == 0)
                                 out << format("step %zu: total %.6f l1 %.6f dssim %.6f bce_s %.6f bce_b %.6f (%zu Gaussians)\n",
                                               step + 1, l.total, l.l1, l.dssim, l.bce_strawberry, l.bce_bruise,
                                               c.size())
                                     << std::flush;
                         });
        });
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        const fs::path dir = config.output_dir;
        double mean_psnr = 0.0;
        const auto& eval_set = holdout_set.empty() ? train_set : holdout_set;
        stage("evaluate", [&] {
            fs::create_directories(dir / "renders");
            for (const auto& s : eval_set) {
                const RenderOutput r = render(result.cloud, s.frame, config.train.render);
                mean_psnr += psnr(r.color, s.image);
                write_render_set(dir / "renders", stem_of(s.frame.image_name), r);
            }
            mean_psnr /= static_cast<double>(eval_set.size());
        });

        stage("checkpoint", [&] {
            write_text(dir / "losses.csv", loss_csv(result.losses));
            export_ply(result.cloud, dir / "checkpoint.ply");
            const json sidecar = {
                {"step", result.cloud.metadata.step},
                {"seed", config.train.seed},
                {"gaussians", result.cloud.size()},
                {"psnr_db", mean_psnr},
                {"psnr_views", holdout_set.empty() ? "train" : "held-out"},
                {"config", config_to_json(config)},
            };
            write_text(dir / "checkpoint.json", sidecar.dump(2) + "\n");
        });

        const LossBreakdown& last = result.losses.back();
        out << format("final loss: total %.6f l1 %.6f dssim %.6f bce_s %.6f bce_b %.6f\n", last.total, last.l1,
                      last.dssim, last.bce_strawberry, last.bce_bruise);
        out << format("%s PSNR: %.3f dB over %zu views\n", holdout_set.empty() ? "training-view" : "held-out", mean_psnr,
                      eval_set.size());
        out << format("trained %zu steps in %.1f s -> %s\n", result.losses.size(), seconds,
                      (dir / "checkpoint.ply").string().c_str());
    });
}

int cmd_render(const RenderOptions& options, std::ostream& out, std::ostream& err)
{
    return run_command("render", err, [&] {
        const GaussianCloud cloud = stage("load", [&] { return import_ply(options.checkpoint); });
        const SparseModel model = stage("load", [&] { return parse_colmap_model(options.model_dir); });
        std::vector<const CameraFrame*> frames;
        stage("select", [&] {
            const std::set<int> wanted(options.frame_ids.begin(), options.frame_ids.end());
            for (const auto& f : model.frames)
                if (wanted.empty() || wanted.count(f.frame_id)) frames.push_back(&f);
            for (int id : wanted)
                if (std::none_of(frames.begin(), frames.end(), [&](const CameraFrame* f) { return f->frame_id == id; }))
                    throw std::runtime_error("no frame with id " + std::to_string(id));
        });
        stage("render", [&] {
            fs::create_directories(options.output_dir);
            for (const CameraFrame* f : frames)
                write_render_set(options.output_dir, stem_of(f->image_name), render(cloud, *f, options.render));
        });
        out << format("rendered %zu frames -> %s\n", frames.size(), options.output_dir.string().c_str());
    });
}

int cmd_export(const ExportOptions& options, std::ostream& out, std::ostream& err)
{
    return run_command("export", err, [&] {
        const GaussianCloud cloud = stage("load", [&] { return import_ply(options.checkpoint); });
        stage("write", [&] { export_ply(cloud, options.output, options.activated); });
        out << format("exported %zu Gaussians (%s) -> %s\n", cloud.size(), options.activated ? "activated" : "raw",
                      options.output.string().c_str());
    });
}

int cmd_analyze(const AnalyzeOptions& options, std::ostream& out, std::ostream& err)
{
    return run_command("analyze", err, [&] {
        const GaussianCloud pre = stage("load", [&] { return import_ply(options.pre); });
        const GaussianCloud post = stage("load", [&] { return import_ply(options.post); });
        const DamageReport report = stage("filter", [&] {
            return compare_damage(filter_strawberry(pre, options.thresholds.strawberry),
                                  filter_strawberry(post, options.thresholds.strawberry), options.thresholds.bruise);
        });
        out << format_damage_table(report);
        if (options.report)
            stage("report", [&] {
                const json j = {
                    {"pre", options.pre.string()},
                    {"post", options.post.string()},
                    {"pre_bruise_pct", report.pre_bruise_pct},
                    {"post_bruise_pct", report.post_bruise_pct},
                    {"delta_pct", report.delta_pct},
                    {"pre_count", report.pre_count},
                    {"post_count", report.post_count},
                    {"thresholds",
                     {{"strawberry", report.thresholds.strawberry}, {"bruise", report.thresholds.bruise}}},
                };
                write_text(*options.report, j.dump(2) + "\n");
            });
    });
}

int cmd_stiffness(const StiffnessOptions& options, std::ostream& out, std::ostream& err)
{
    return run_command("stiffness", err, [&] {
        const auto records = stage("parse", [&] { return read_stiffness_csv(options.csv); });
        const auto summary = stage("summarize", [&] {
            if (records.empty()) throw std::runtime_error("no stiffness rows in " + options.csv.string());
            return summarize_stiffness(records);
        });
        out << format("%-12s %12s %12s %6s %6s %12s\n", "fruit", "pre_k_N/mm", "post_k_N/mm", "n_pre", "n_post",
                      "retention_%");
        json rows = json::array();
        for (const auto& s : summary) {
            out << format("%-12s %12.6f %12.6f %6zu %6zu %12.4f\n", s.fruit_id.c_str(), s.pre_k, s.post_k,
                          s.pre_points, s.post_points, s.retention_pct);
            rows.push_back({{"fruit_id", s.fruit_id},
                            {"pre_k", s.pre_k},
                            {"post_k", s.post_k},
                            {"pre_points", s.pre_points},
                            {"post_points", s.post_points},
                            {"retention_pct", s.retention_pct}});
        }
        if (options.report) stage("report", [&] { write_text(*options.report, rows.dump(2) + "\n"); });
    });
}

int cmd_contact(const ContactOptions& options, std::ostream& out, std::ostream& err)
{
    return run_command("contact", err, [&] {
        const auto files = stage("frames", [&] { return sorted_pngs(options.frames_dir); });
        const TactileFrame reference = stage("frames", [&] { return load_tactile(options.reference, 0.0); });

        const double tau = stage("tau", [&] {
            if (options.tau) {
                if (!(*options.tau > 0.0)) throw std::invalid_argument("tau must be > 0");
                return *options.tau;
            }
            if (!options.calibration_dir)
                throw std::invalid_argument("either --tau or a contact-free calibration clip is required");
            std::vector<TactileFrame> clip;
            for (const auto& p : sorted_pngs(*options.calibration_dir)) clip.push_back(load_tactile(p, 0.0));
            return calibrate_tau(clip, reference);
        });

        std::string csv = "index,energy,contact_flag\n";
        std::size_t contacts = 0;
        stage("energy", [&] {
            const ContactConfig config{tau, reference};
            for (std::size_t i = 0; i < files.size(); ++i) {
                const TactileFrame frame = load_tactile(files[i], static_cast<double>(i));
                const double energy = contact_energy(frame, reference);
                const bool flag = detect_contact(frame, config);
                contacts += flag;
                csv += format("%zu,%.17g,%d\n", i, energy, flag ? 1 : 0);
            }
        });
        if (options.output_csv) {
            stage("write", [&] { write_text(*options.output_csv, csv); });
            out << format("contact: %zu of %zu frames above tau %.6g -> %s\n", contacts, files.size(), tau,
                          options.output_csv->string().c_str());
        } else {
            out << csv;
        }
    });
}

} // namespace fruitsplat
