#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "fruitsplat/pipeline.hpp"

using namespace fruitsplat;

namespace {

const std::map<std::string, ModelFormat> kFormats = {
    {"auto", ModelFormat::Auto}, {"bin", ModelFormat::Binary}, {"txt", ModelFormat::Text}};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Gaussian splat reconstruction with strawberry and bruise channels, plus damage metrics"};
    app.require_subcommand(1);
    int status = 0;

    SynthOptions synth;
    int synth_threads = 0;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic fruit scene with COLMAP model, images and masks");
    synth_cmd->add_option("-o,--out", synth.output_dir, "Output directory")->required();
    synth_cmd->add_option("--bruise-fraction", synth.bruise_fraction, "Share of fruit Gaussians to bruise, in [0, 1)");
    synth_cmd->add_option("--patch-angle", synth.spec.bruise_patch_angle, "Bruise patch half-angle in radians");
    synth_cmd->add_option("--n-gaussians", synth.spec.n_gaussians, "Fruit surface Gaussians");
    synth_cmd->add_option("--n-ring", synth.spec.n_ring_gaussians, "Background ring Gaussians");
    synth_cmd->add_option("--n-cameras", synth.spec.n_cameras, "Camera count");
    synth_cmd->add_option("--camera-radius", synth.spec.camera_radius, "Camera distance from the origin in meters");
    synth_cmd->add_option("--image-size", synth.spec.image_size, "Square image side in pixels");
    synth_cmd->add_option("--seed", synth.spec.seed, "Random seed");
    synth_cmd->add_option("--train-steps", synth.train_steps, "Steps written into the generated train_config.json");
    synth_cmd->add_option("--threads", synth_threads, "Worker threads (0: all cores)");
    synth_cmd->callback([&] {
        synth.render.threads = synth_threads;
        status = cmd_synth(synth, std::cout, std::cerr);
    });

    IngestOptions ingest;
    std::string ingest_format = "auto", convert_format = "txt";
    std::string convert_to;
    auto* ingest_cmd = app.add_subcommand("ingest", "Parse a COLMAP sparse model and print a summary");
    ingest_cmd->add_option("model_dir", ingest.model_dir, "Directory with cameras/images/points3D")->required();
    ingest_cmd->add_option("--format", ingest_format, "auto, bin or txt")->check(CLI::IsMember({"auto", "bin", "txt"}));
    ingest_cmd->add_option("--convert-to", convert_to, "Write the parsed model to this directory");
    ingest_cmd->add_option("--convert-format", convert_format, "bin or txt")->check(CLI::IsMember({"bin", "txt"}));
    ingest_cmd->callback([&] {
        ingest.format = kFormats.at(ingest_format);
        ingest.convert_format = kFormats.at(convert_format);
        if (!convert_to.empty()) ingest.convert_to = convert_to;
        status = cmd_ingest(ingest, std::cout, std::cerr);
    });

    std::filesystem::path train_config;
    TrainOverrides overrides;
    auto* train_cmd = app.add_subcommand("train", "Train a splat from a JSON pipeline config");
    train_cmd->add_option("config", train_config, "Pipeline config JSON")->required();
    train_cmd->add_option("--steps", overrides.steps, "Override train.steps");
    train_cmd->add_option("--seed", overrides.seed, "Override train.seed");
    train_cmd->add_option("--threads", overrides.threads, "Override render.threads");
    train_cmd->add_option("-o,--out", overrides.output_dir, "Override output_dir");
    train_cmd->callback([&] { status = cmd_train(train_config, overrides, std::cout, std::cerr); });

    RenderOptions render_opts;
    auto* render_cmd = app.add_subcommand("render", "Render color and semantic channels of a checkpoint");
    render_cmd->add_option("checkpoint", render_opts.checkpoint, "Checkpoint PLY")->required();
    render_cmd->add_option("model_dir", render_opts.model_dir, "COLMAP model with the cameras to render")->required();
    render_cmd->add_option("-o,--out", render_opts.output_dir, "Output directory")->required();
    render_cmd->add_option("--frames", render_opts.frame_ids, "Frame ids (default: all)");
    render_cmd->add_option("--threads", render_opts.render.threads, "Worker threads");
    render_cmd->callback([&] { status = cmd_render(render_opts, std::cout, std::cerr); });

    ExportOptions export_opts;
    auto* export_cmd = app.add_subcommand("export", "Rewrite a checkpoint PLY, optionally with activated values");
    export_cmd->add_option("checkpoint", export_opts.checkpoint, "Checkpoint PLY")->required();
    export_cmd->add_option("output", export_opts.output, "Output PLY")->required();
    export_cmd->add_flag("--activated", export_opts.activated, "Store sigmoid(opacity/strawberry/bruise)");
    export_cmd->callback([&] { status = cmd_export(export_opts, std::cout, std::cerr); });

    AnalyzeOptions analyze;
    auto* analyze_cmd = app.add_subcommand("analyze", "Compare bruise percentages of pre and post checkpoints");
    analyze_cmd->add_option("pre", analyze.pre, "Pre-manipulation checkpoint PLY")->required();
    analyze_cmd->add_option("post", analyze.post, "Post-manipulation checkpoint PLY")->required();
    analyze_cmd->add_option("--strawberry-threshold", analyze.thresholds.strawberry, "Strawberry score cutoff");
    analyze_cmd->add_option("--bruise-threshold", analyze.thresholds.bruise, "Bruise score cutoff");
    analyze_cmd->add_option("--report", analyze.report, "JSON report path");
    analyze_cmd->callback([&] { status = cmd_analyze(analyze, std::cout, std::cerr); });

    StiffnessOptions stiffness;
    auto* stiffness_cmd = app.add_subcommand("stiffness", "Stiffness retention from force-probe CSV");
    stiffness_cmd->add_option("csv", stiffness.csv, "fruit_id,phase,point_index,force_newtons,displacement_mm")->required();
    stiffness_cmd->add_option("--report", stiffness.report, "JSON report path");
    stiffness_cmd->callback([&] { status = cmd_stiffness(stiffness, std::cout, std::cerr); });

    ContactOptions contact;
    auto* contact_cmd = app.add_subcommand("contact", "Per-frame tactile contact energy and contact flag");
    contact_cmd->add_option("frames_dir", contact.frames_dir, "Directory of PNG tactile frames")->required();
    contact_cmd->add_option("reference", contact.reference, "Undeformed reference PNG")->required();
    auto* tau_opt = contact_cmd->add_option("--tau", contact.tau, "Energy threshold");
    contact_cmd->add_option("--calibrate", contact.calibration_dir, "Contact-free clip; tau = mean + 5 sigma")
        ->excludes(tau_opt);
    contact_cmd->add_option("-o,--out", contact.output_csv, "CSV path (default: stdout)");
    contact_cmd->callback([&] { status = cmd_contact(contact, std::cout, std::cerr); });

    CLI11_PARSE(app, argc, argv);
    return status;
}
