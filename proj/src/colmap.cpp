#include "fruitsplat/colmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fruitsplat {

const char* camera_model_name(CameraModel model)
{
    switch (model) {
    case CameraModel::SimplePinhole: return "SIMPLE_PINHOLE";
    case CameraModel::Pinhole: return "PINHOLE";
    case CameraModel::SimpleRadial: return "SIMPLE_RADIAL";
    }
    return "UNKNOWN";
}

void CameraIntrinsics::validate() const
{
    auto fail = [](const std::string& what) { throw std::invalid_argument("invalid camera intrinsics: " + what); };
    if (width <= 0 || height <= 0) fail("non-positive image size");
    if (!(fx > 0.0) || !(fy > 0.0)) fail("non-positive focal length");
    if (!(cx >= 0.0 && cx <= width) || !(cy >= 0.0 && cy <= height)) fail("principal point outside image");
    if (!std::isfinite(radial_k)) fail("non-finite radial coefficient");
    if (model != CameraModel::Pinhole && fx != fy) fail(std::string(camera_model_name(model)) + " requires fx == fy");
    if (model != CameraModel::SimpleRadial && radial_k != 0.0) fail("radial coefficient on a pinhole model");
}

void CameraFrame::validate() const
{
    intrinsics.validate();
    if (std::abs(rotation.norm() - 1.0) > 1e-6)
        throw std::invalid_argument("frame " + std::to_string(frame_id) + ": rotation quaternion is not unit length");
    if (!translation.allFinite())
        throw std::invalid_argument("frame " + std::to_string(frame_id) + ": non-finite translation");
}

bool CameraFrame::operator==(const CameraFrame& o) const
{
    return frame_id == o.frame_id && intrinsics == o.intrinsics && rotation.coeffs() == o.rotation.coeffs() &&
           translation == o.translation && image_name == o.image_name;
}

namespace {

namespace fs = std::filesystem;

constexpr double kNormalizeSlack = 1e-12;

Eigen::Quaterniond normalized_quaternion(double w, double x, double y, double z)
{
    Eigen::Quaterniond q(w, x, y, z);
    const double n = q.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw std::runtime_error("degenerate quaternion in image record");
    if (std::abs(n - 1.0) > kNormalizeSlack) q.coeffs() /= n;
    return q;
}

CameraModel model_from_id(std::int64_t id, const std::string& where)
{
    switch (id) {
    case 0: return CameraModel::SimplePinhole;
    case 1: return CameraModel::Pinhole;
    case 2: return CameraModel::SimpleRadial;
    default:
        throw std::runtime_error(where + ": unsupported camera model id " + std::to_string(id) +
                                 " (supported: SIMPLE_PINHOLE, PINHOLE, SIMPLE_RADIAL)");
    }
}

CameraModel model_from_name(const std::string& name, const std::string& where)
{
    if (name == "SIMPLE_PINHOLE") return CameraModel::SimplePinhole;
    if (name == "PINHOLE") return CameraModel::Pinhole;
    if (name == "SIMPLE_RADIAL") return CameraModel::SimpleRadial;
    throw std::runtime_error(where + ": unsupported camera model " + name);
}

std::size_t param_count(CameraModel model) { return model == CameraModel::Pinhole || model == CameraModel::SimpleRadial ? 4 : 3; }

std::vector<double> params_of(const CameraIntrinsics& c)
{
    switch (c.model) {
    case CameraModel::SimplePinhole: return {c.fx, c.cx, c.cy};
    case CameraModel::Pinhole: return {c.fx, c.fy, c.cx, c.cy};
    case CameraModel::SimpleRadial: return {c.fx, c.cx, c.cy, c.radial_k};
    }
    return {};
}

CameraIntrinsics intrinsics_from(CameraModel model, std::uint64_t width, std::uint64_t height, const std::vector<double>& p)
{
    CameraIntrinsics c;
    c.model = model;
    c.width = static_cast<int>(width);
    c.height = static_cast<int>(height);
    if (model == CameraModel::Pinhole) {
        c.fx = p[0];
        c.fy = p[1];
        c.cx = p[2];
        c.cy = p[3];
    } else {
        c.fx = c.fy = p[0];
        c.cx = p[1];
        c.cy = p[2];
        if (model == CameraModel::SimpleRadial) c.radial_k = p[3];
    }
    return c;
}

struct Paths {
    fs::path cameras, images, points;
};

Paths paths_for(const fs::path& dir, bool binary)
{
    const char* ext = binary ? ".bin" : ".txt";
    return {dir / (std::string("cameras") + ext), dir / (std::string("images") + ext),
            dir / (std::string("points3D") + ext)};
}

void require_file(const fs::path& p)
{
    if (!fs::is_regular_file(p)) throw std::runtime_error("missing COLMAP file: " + p.string());
}

// ---------------------------------------------------------------- binary

class BinaryReader {
public:
    explicit BinaryReader(const fs::path& path) : name_(path.filename().string())
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path.string());
        bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    void begin_record(const char* kind, std::uint64_t index)
    {
        kind_ = kind;
        index_ = index;
    }

    template <typename T>
    T read()
    {
        T value;
        need(sizeof(T));
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string read_cstring()
    {
        const auto begin = bytes_.begin() + static_cast<std::ptrdiff_t>(pos_);
        const auto end = std::find(begin, bytes_.end(), '\0');
        if (end == bytes_.end()) fail("unterminated string", bytes_.size() - pos_ + 1);
        std::string s(begin, end);
        pos_ += s.size() + 1;
        return s;
    }

    void skip(std::uint64_t count, std::uint64_t element_size)
    {
        if (count > remaining() / element_size) fail("truncated record", count * element_size);
        pos_ += count * element_size;
    }

    std::uint64_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::uint64_t n)
    {
        if (n > bytes_.size() - pos_) fail("truncated record", n);
    }

    [[noreturn]] void fail(const char* what, std::uint64_t n) const
    {
        std::ostringstream msg;
        msg << name_ << ": " << what;
        if (kind_) msg << " (" << kind_ << " index " << index_ << ")";
        msg << " at byte offset " << pos_ << ": need " << n << " bytes, " << (bytes_.size() - pos_) << " available";
        throw std::runtime_error(msg.str());
    }

    std::string name_;
    std::vector<char> bytes_;
    std::uint64_t pos_ = 0;
    const char* kind_ = nullptr;
    std::uint64_t index_ = 0;
};

class BinaryWriter {
public:
    template <typename T>
    void write(T value)
    {
        const auto* p = reinterpret_cast<const char*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }
    void write_cstring(const std::string& s)
    {
        bytes_.insert(bytes_.end(), s.begin(), s.end());
        bytes_.push_back('\0');
    }
    void save(const fs::path& path) const
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
        if (!out) throw std::runtime_error("I/O error writing " + path.string());
    }

private:
    std::vector<char> bytes_;
};

using CameraTable = std::map<std::uint32_t, CameraIntrinsics>;

CameraTable read_cameras_binary(const fs::path& path)
{
    BinaryReader r(path);
    const auto count = r.read<std::uint64_t>();
    CameraTable cameras;
    for (std::uint64_t i = 0; i < count; ++i) {
        r.begin_record("camera", i);
        const auto id = r.read<std::uint32_t>();
        const auto model = model_from_id(r.read<std::int32_t>(), path.filename().string());
        const auto width = r.read<std::uint64_t>();
        const auto height = r.read<std::uint64_t>();
        std::vector<double> params(param_count(model));
        for (auto& p : params) p = r.read<double>();
        cameras[id] = intrinsics_from(model, width, height, params);
    }
    return cameras;
}

std::vector<CameraFrame> read_images_binary(const fs::path& path, const CameraTable& cameras)
{
    BinaryReader r(path);
    const auto count = r.read<std::uint64_t>();
    std::vector<CameraFrame> frames;
    for (std::uint64_t i = 0; i < count; ++i) {
        r.begin_record("image", i);
        CameraFrame f;
        f.frame_id = static_cast<int>(r.read<std::uint32_t>());
        const double qw = r.read<double>(), qx = r.read<double>(), qy = r.read<double>(), qz = r.read<double>();
        f.rotation = normalized_quaternion(qw, qx, qy, qz);
        for (int k = 0; k < 3; ++k) f.translation[k] = r.read<double>();
        const auto camera_id = r.read<std::uint32_t>();
        f.image_name = r.read_cstring();
        const auto n2d = r.read<std::uint64_t>();
        r.skip(n2d, 24);
        const auto it = cameras.find(camera_id);
        if (it == cameras.end())
            throw std::runtime_error(path.filename().string() + ": image " + std::to_string(f.frame_id) +
                                     " references unknown camera " + std::to_string(camera_id));
        f.intrinsics = it->second;
        frames.push_back(std::move(f));
    }
    return frames;
}

std::vector<SparsePoint> read_points_binary(const fs::path& path)
{
    BinaryReader r(path);
    const auto count = r.read<std::uint64_t>();
    std::vector<SparsePoint> points;
    points.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, r.remaining() / 43)));
    for (std::uint64_t i = 0; i < count; ++i) {
        r.begin_record("point3D", i);
        r.read<std::uint64_t>(); // id
        SparsePoint p;
        for (int k = 0; k < 3; ++k) p.position[k] = r.read<double>();
        for (int k = 0; k < 3; ++k) p.color[k] = r.read<std::uint8_t>();
        r.read<double>(); // reprojection error
        const auto track = r.read<std::uint64_t>();
        r.skip(track, 8);
        if (!p.position.allFinite())
            throw std::runtime_error(path.filename().string() + ": non-finite position at point index " + std::to_string(i));
        points.push_back(p);
    }
    return points;
}

// ---------------------------------------------------------------- text

struct TextLine {
    std::size_t number;
    std::string text;
};

std::vector<TextLine> read_lines(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<TextLine> lines;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back({n, line});
    }
    return lines;
}

bool is_data_line(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t");
    return first != std::string::npos && s[first] != '#';
}

[[noreturn]] void text_error(const fs::path& path, std::size_t line, const std::string& what)
{
    throw std::runtime_error(path.filename().string() + ":" + std::to_string(line) + ": " + what);
}

CameraTable read_cameras_text(const fs::path& path)
{
    CameraTable cameras;
    for (const auto& [number, text] : read_lines(path)) {
        if (!is_data_line(text)) continue;
        std::istringstream ss(text);
        std::uint32_t id;
        std::string model_name;
        std::uint64_t width, height;
        if (!(ss >> id >> model_name >> width >> height)) text_error(path, number, "malformed camera line");
        const auto model = model_from_name(model_name, path.filename().string() + ":" + std::to_string(number));
        std::vector<double> params(param_count(model));
        for (auto& p : params)
            if (!(ss >> p)) text_error(path, number, "missing camera parameter");
        cameras[id] = intrinsics_from(model, width, height, params);
    }
    return cameras;
}

std::vector<CameraFrame> read_images_text(const fs::path& path, const CameraTable& cameras)
{
    const auto lines = read_lines(path);
    std::vector<CameraFrame> frames;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!is_data_line(lines[i].text)) continue;
        std::istringstream ss(lines[i].text);
        CameraFrame f;
        double qw, qx, qy, qz;
        std::uint32_t camera_id;
        if (!(ss >> f.frame_id >> qw >> qx >> qy >> qz >> f.translation[0] >> f.translation[1] >> f.translation[2] >>
              camera_id >> f.image_name))
            text_error(path, lines[i].number, "malformed image line (record " + std::to_string(frames.size()) + ")");
        f.rotation = normalized_quaternion(qw, qx, qy, qz);
        const auto it = cameras.find(camera_id);
        if (it == cameras.end())
            text_error(path, lines[i].number, "image references unknown camera " + std::to_string(camera_id));
        f.intrinsics = it->second;
        frames.push_back(std::move(f));
        ++i; // points2D line, possibly empty
    }
    return frames;
}

std::vector<SparsePoint> read_points_text(const fs::path& path)
{
    std::vector<SparsePoint> points;
    for (const auto& [number, text] : read_lines(path)) {
        if (!is_data_line(text)) continue;
        std::istringstream ss(text);
        std::uint64_t id;
        SparsePoint p;
        int r, g, b;
        if (!(ss >> id >> p.position[0] >> p.position[1] >> p.position[2] >> r >> g >> b))
            text_error(path, number, "malformed point line (record " + std::to_string(points.size()) + ")");
        if (r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255) text_error(path, number, "color out of range");
        if (!p.position.allFinite()) text_error(path, number, "non-finite position");
        p.color = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
        points.push_back(p);
    }
    return points;
}

void warn_distortion(const std::vector<CameraFrame>& frames)
{
    for (const auto& f : frames) {
        if (f.intrinsics.radial_k != 0.0) {
            std::clog << "warning: SIMPLE_RADIAL distortion is ignored; images are treated as undistorted\n";
            return;
        }
    }
}

} // namespace

SparseModel parse_colmap_model(const fs::path& dir, ModelFormat format)
{
    if (format == ModelFormat::Auto) format = fs::exists(dir / "cameras.bin") ? ModelFormat::Binary : ModelFormat::Text;
    const bool binary = format == ModelFormat::Binary;
    const Paths p = paths_for(dir, binary);
    require_file(p.cameras);
    require_file(p.images);
    require_file(p.points);

    SparseModel model;
    const CameraTable cameras = binary ? read_cameras_binary(p.cameras) : read_cameras_text(p.cameras);
    model.frames = binary ? read_images_binary(p.images, cameras) : read_images_text(p.images, cameras);
    model.points = binary ? read_points_binary(p.points) : read_points_text(p.points);

    std::stable_sort(model.frames.begin(), model.frames.end(),
                     [](const CameraFrame& a, const CameraFrame& b) { return a.frame_id < b.frame_id; });
    for (std::size_t i = 1; i < model.frames.size(); ++i)
        if (model.frames[i].frame_id == model.frames[i - 1].frame_id)
            throw std::runtime_error("duplicate image id " + std::to_string(model.frames[i].frame_id));
    warn_distortion(model.frames);
    return model;
}

void write_colmap_model(const std::vector<CameraFrame>& frames_in, const std::vector<SparsePoint>& points,
                        const fs::path& dir, ModelFormat format)
{
    for (const auto& f : frames_in) f.validate();
    for (const auto& p : points)
        if (!p.position.allFinite()) throw std::invalid_argument("non-finite sparse point");

    std::vector<CameraFrame> frames = frames_in;
    std::stable_sort(frames.begin(), frames.end(), [](const CameraFrame& a, const CameraFrame& b) { return a.frame_id < b.frame_id; });
    for (std::size_t i = 1; i < frames.size(); ++i)
        if (frames[i].frame_id == frames[i - 1].frame_id)
            throw std::invalid_argument("duplicate frame id " + std::to_string(frames[i].frame_id));

    std::vector<CameraIntrinsics> cameras;
    std::vector<std::uint32_t> camera_of_frame;
    for (const auto& f : frames) {
        auto it = std::find(cameras.begin(), cameras.end(), f.intrinsics);
        if (it == cameras.end()) {
            cameras.push_back(f.intrinsics);
            it = cameras.end() - 1;
        }
        camera_of_frame.push_back(static_cast<std::uint32_t>(it - cameras.begin()) + 1);
    }

    std::error_code ec;
    fs::create_directories(dir, ec);
    const bool binary = format != ModelFormat::Text;
    const Paths p = paths_for(dir, binary);

    if (binary) {
        BinaryWriter cw;
        cw.write<std::uint64_t>(cameras.size());
        for (std::size_t i = 0; i < cameras.size(); ++i) {
            cw.write<std::uint32_t>(static_cast<std::uint32_t>(i + 1));
            cw.write<std::int32_t>(static_cast<std::int32_t>(cameras[i].model));
            cw.write<std::uint64_t>(static_cast<std::uint64_t>(cameras[i].width));
            cw.write<std::uint64_t>(static_cast<std::uint64_t>(cameras[i].height));
            for (double v : params_of(cameras[i])) cw.write<double>(v);
        }
        cw.save(p.cameras);

        BinaryWriter iw;
        iw.write<std::uint64_t>(frames.size());
        for (std::size_t i = 0; i < frames.size(); ++i) {
            const auto& f = frames[i];
            iw.write<std::uint32_t>(static_cast<std::uint32_t>(f.frame_id));
            iw.write<double>(f.rotation.w());
            iw.write<double>(f.rotation.x());
            iw.write<double>(f.rotation.y());
            iw.write<double>(f.rotation.z());
            for (int k = 0; k < 3; ++k) iw.write<double>(f.translation[k]);
            iw.write<std::uint32_t>(camera_of_frame[i]);
            iw.write_cstring(f.image_name);
            iw.write<std::uint64_t>(0);
        }
        iw.save(p.images);

        BinaryWriter pw;
        pw.write<std::uint64_t>(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) {
            pw.write<std::uint64_t>(i + 1);
            for (int k = 0; k < 3; ++k) pw.write<double>(points[i].position[k]);
            for (int k = 0; k < 3; ++k) pw.write<std::uint8_t>(points[i].color[k]);
            pw.write<double>(0.0);
            pw.write<std::uint64_t>(0);
        }
        pw.save(p.points);
        return;
    }

    auto open = [](const fs::path& path) {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << std::setprecision(17);
        return out;
    };

    {
        auto out = open(p.cameras);
        out << "# Camera list with one line of data per camera:\n"
            << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n"
            << "# Number of cameras: " << cameras.size() << "\n";
        for (std::size_t i = 0; i < cameras.size(); ++i) {
            out << i + 1 << ' ' << camera_model_name(cameras[i].model) << ' ' << cameras[i].width << ' ' << cameras[i].height;
            for (double v : params_of(cameras[i])) out << ' ' << v;
            out << '\n';
        }
        if (!out) throw std::runtime_error("I/O error writing " + p.cameras.string());
    }
    {
        auto out = open(p.images);
        out << "# Image list with two lines of data per image:\n"
            << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
            << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n"
            << "# Number of images: " << frames.size() << ", mean observations per image: 0\n";
        for (std::size_t i = 0; i < frames.size(); ++i) {
            const auto& f = frames[i];
            out << f.frame_id << ' ' << f.rotation.w() << ' ' << f.rotation.x() << ' ' << f.rotation.y() << ' '
                << f.rotation.z() << ' ' << f.translation[0] << ' ' << f.translation[1] << ' ' << f.translation[2] << ' '
                << camera_of_frame[i] << ' ' << f.image_name << "\n\n";
        }
        if (!out) throw std::runtime_error("I/O error writing " + p.images.string());
    }
    {
        auto out = open(p.points);
        out << "# 3D point list with one line of data per point:\n"
            << "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n"
            << "# Number of points: " << points.size() << ", mean track length: 0\n";
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto& pt = points[i];
            out << i + 1 << ' ' << pt.position[0] << ' ' << pt.position[1] << ' ' << pt.position[2] << ' '
                << int(pt.color[0]) << ' ' << int(pt.color[1]) << ' ' << int(pt.color[2]) << " 0\n";
        }
        if (!out) throw std::runtime_error("I/O error writing " + p.points.string());
    }
}

} // namespace fruitsplat
