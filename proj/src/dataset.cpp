#include "fruitsplat/dataset.hpp"

#include <stdexcept>
#include <string>

#include "fruitsplat/parallel.hpp"

namespace fruitsplat {
namespace {

std::string size_string(Eigen::Index w, Eigen::Index h) { return std::to_string(w) + "x" + std::to_string(h); }

Mask load_mask(const std::filesystem::path& path, const CameraFrame& frame)
{
    if (!std::filesystem::is_regular_file(path))
        throw std::runtime_error("frame " + std::to_string(frame.frame_id) + ": missing mask " + path.string());
    const auto gray = read_png_gray8(path);
    if (gray.cols() != frame.intrinsics.width || gray.rows() != frame.intrinsics.height)
        throw std::runtime_error("frame " + std::to_string(frame.frame_id) + ": mask " + path.string() + " is " +
                                 size_string(gray.cols(), gray.rows()) + " but the image is " +
                                 size_string(frame.intrinsics.width, frame.intrinsics.height));
    return (gray > std::uint8_t{127}).cast<std::uint8_t>();
}

} // namespace

void TrainingSample::validate() const
{
    const int w = frame.intrinsics.width, h = frame.intrinsics.height;
    const std::string id = "sample " + std::to_string(frame.frame_id);
    if (image.width() != w || image.height() != h)
        throw std::invalid_argument(id + ": image is " + size_string(image.width(), image.height()) +
                                    " but intrinsics are " + size_string(w, h));
    if (bruise_mask && !strawberry_mask) throw std::invalid_argument(id + ": bruise mask without strawberry mask");
    for (const auto* m : {&strawberry_mask, &bruise_mask})
        if (*m && ((*m)->cols() != w || (*m)->rows() != h))
            throw std::invalid_argument(id + ": mask is " + size_string((*m)->cols(), (*m)->rows()) +
                                        " but the image is " + size_string(w, h));
}

std::filesystem::path mask_path_for(const std::filesystem::path& dir, const std::string& image_name)
{
    return dir / (std::filesystem::path(image_name).stem().string() + ".png");
}

std::vector<TrainingSample> load_dataset(const std::filesystem::path& model_dir, const std::filesystem::path& image_dir,
                                         const std::optional<std::filesystem::path>& strawberry_mask_dir,
                                         const std::optional<std::filesystem::path>& bruise_mask_dir)
{
    if (!std::filesystem::is_directory(image_dir)) throw std::runtime_error("image directory not found: " + image_dir.string());
    for (const auto* dir : {&strawberry_mask_dir, &bruise_mask_dir})
        if (*dir && !std::filesystem::is_directory(**dir))
            throw std::runtime_error("mask directory not found: " + (*dir)->string());

    const SparseModel model = parse_colmap_model(model_dir);
    std::vector<TrainingSample> samples(model.frames.size());

    parallel_for(samples.size(), resolve_thread_count(), [&](std::size_t i) {
        const CameraFrame& frame = model.frames[i];
        TrainingSample& s = samples[i];
        s.frame = frame;
        const auto image_path = image_dir / frame.image_name;
        if (!std::filesystem::is_regular_file(image_path))
            throw std::runtime_error("frame " + std::to_string(frame.frame_id) + ": missing image " + image_path.string());
        s.image = read_png_rgb(image_path);
        if (s.image.width() != frame.intrinsics.width || s.image.height() != frame.intrinsics.height)
            throw std::runtime_error("frame " + std::to_string(frame.frame_id) + ": image " + image_path.string() + " is " +
                                     size_string(s.image.width(), s.image.height()) + " but the camera expects " +
                                     size_string(frame.intrinsics.width, frame.intrinsics.height));
        if (strawberry_mask_dir) s.strawberry_mask = load_mask(mask_path_for(*strawberry_mask_dir, frame.image_name), frame);
        if (bruise_mask_dir) s.bruise_mask = load_mask(mask_path_for(*bruise_mask_dir, frame.image_name), frame);
    });
    for (const auto& s : samples) s.validate();
    return samples;
}

} // namespace fruitsplat
