#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fruitsplat/colmap.hpp"
#include "fruitsplat/damage.hpp"
#include "fruitsplat/dataset.hpp"
#include "fruitsplat/trainer.hpp"

namespace fruitsplat {

/// Settings for one training run, loaded from a JSON file.
///
/// Schema (every key except the dataset paths and output_dir is optional):
///
///     {
///       "dataset": {"model_dir": "...", "image_dir": "...",
///                   "strawberry_mask_dir": "...", "bruise_mask_dir": "..."},
///       "output_dir": "...",
///       "train": {"steps", "lambda_dssim", "w_strawberry", "w_bruise", "lr_mean", "lr_mean_final",
///                 "lr_scale", "lr_rotation", "lr_opacity", "lr_color", "lr_semantic",
///                 "prune_opacity_threshold", "prune_interval", "seed", "ssim_window", "ssim_sigma",
///                 "ssim_c1", "ssim_c2", "initial_opacity", "knn_k", "holdout_every", "log_every"},
///       "render": {"near_clip", "background": [r, g, b], "tile_size", "threads"},
///       "analysis": {"strawberry_threshold", "bruise_threshold"}
///     }
///
/// Relative paths are resolved against the directory holding the config file.
/// Unknown keys are rejected.
struct PipelineConfig {
    std::filesystem::path model_dir;
    std::filesystem::path image_dir;
    std::optional<std::filesystem::path> strawberry_mask_dir;
    std::optional<std::filesystem::path> bruise_mask_dir;
    std::filesystem::path output_dir;

    TrainConfig train;
    InitOptions init;
    DamageThresholds thresholds;
    int holdout_every = 8; // frames with frame_id % holdout_every == 0 are held out; 0 keeps all for training
    int log_every = 500;   // progress line interval on stdout; 0 silences it

    /// Checks input paths exist, thresholds lie in (0, 1) and the training settings are valid.
    void validate() const;
};

PipelineConfig parse_pipeline_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
/// Serializes every field; parse_pipeline_config reads the result back unchanged.
std::string pipeline_config_json(const PipelineConfig& config);

/// True for frames held out of training.
bool is_holdout(const CameraFrame& frame, int holdout_every);

/// Mean fraction of trained Gaussians whose strawberry flag (score >= 0.5) agrees with the flag of
/// the nearest Gaussian in `reference`.
double semantic_flag_accuracy(const GaussianCloud& trained, const GaussianCloud& reference);

struct SynthOptions {
    std::filesystem::path output_dir;
    SyntheticSceneSpec spec;
    /// When set, overrides spec.bruise_patch_angle with the calibrated angle for this fraction.
    std::optional<double> bruise_fraction;
    RenderConfig render;
    int train_steps = 3000; // written into the generated train_config.json
};

struct IngestOptions {
    std::filesystem::path model_dir;
    ModelFormat format = ModelFormat::Auto;
    std::optional<std::filesystem::path> convert_to;
    ModelFormat convert_format = ModelFormat::Text;
};

struct TrainOverrides {
    std::optional<int> steps;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::filesystem::path> output_dir;
};

struct RenderOptions {
    std::filesystem::path checkpoint;
    std::filesystem::path model_dir;
    std::filesystem::path output_dir;
    std::vector<int> frame_ids; // empty renders every frame
    RenderConfig render;
};

struct ExportOptions {
    std::filesystem::path checkpoint;
    std::filesystem::path output;
    bool activated = false;
};

struct AnalyzeOptions {
    std::filesystem::path pre;
    std::filesystem::path post;
    DamageThresholds thresholds;
    std::optional<std::filesystem::path> report; // JSON report path
};

struct StiffnessOptions {
    std::filesystem::path csv;
    std::optional<std::filesystem::path> report;
};

struct ContactOptions {
    std::filesystem::path frames_dir;
    std::filesystem::path reference;
    std::optional<double> tau;
    std::optional<std::filesystem::path> calibration_dir; // contact-free clip used when tau is absent
    std::optional<std::filesystem::path> output_csv;      // stdout when absent
};

// Subcommands. Each returns a process exit code and reports failures on `err` as
// "error [<command>/<stage>]: <message>".
int cmd_synth(const SynthOptions& options, std::ostream& out, std::ostream& err);
int cmd_ingest(const IngestOptions& options, std::ostream& out, std::ostream& err);
int cmd_train(const std::filesystem::path& config_path, const TrainOverrides& overrides, std::ostream& out,
              std::ostream& err);
int cmd_render(const RenderOptions& options, std::ostream& out, std::ostream& err);
int cmd_export(const ExportOptions& options, std::ostream& out, std::ostream& err);
int cmd_analyze(const AnalyzeOptions& options, std::ostream& out, std::ostream& err);
int cmd_stiffness(const StiffnessOptions& options, std::ostream& out, std::ostream& err);
int cmd_contact(const ContactOptions& options, std::ostream& out, std::ostream& err);

} // namespace fruitsplat
