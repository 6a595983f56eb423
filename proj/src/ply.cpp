#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fruitsplat/gaussian.hpp"

namespace fruitsplat {
namespace {

// Property order is part of the file contract.
constexpr std::size_t kPropertyCount = 16;
constexpr std::array<const char*, kPropertyCount> kProperties = {
    "x", "y", "z", "red", "green", "blue", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3", "strawberry", "bruise",
};

std::array<double, kPropertyCount> pack(const Gaussian& g, bool activated)
{
    return {g.mean.x(),
            g.mean.y(),
            g.mean.z(),
            g.color.x(),
            g.color.y(),
            g.color.z(),
            activated ? g.opacity() : g.opacity_logit,
            g.log_scale.x(),
            g.log_scale.y(),
            g.log_scale.z(),
            g.rotation[0],
            g.rotation[1],
            g.rotation[2],
            g.rotation[3],
            activated ? g.strawberry() : g.s_logit,
            activated ? g.bruise() : g.b_logit};
}

std::size_t type_size(const std::string& type)
{
    static const std::map<std::string, std::size_t> sizes = {
        {"char", 1}, {"uchar", 1}, {"int8", 1}, {"uint8", 1},   {"short", 2},   {"ushort", 2},  {"int16", 2},
        {"uint16", 2}, {"int", 4}, {"uint", 4}, {"int32", 4},  {"uint32", 4},  {"float", 4},   {"float32", 4},
        {"double", 8}, {"float64", 8}};
    const auto it = sizes.find(type);
    if (it == sizes.end()) throw std::runtime_error("unsupported PLY property type " + type);
    return it->second;
}

double decode_value(const std::string& type, const char* p)
{
    auto get = [p]<typename T>(T) {
        T v;
        std::memcpy(&v, p, sizeof(T));
        return static_cast<double>(v);
    };
    if (type == "double" || type == "float64") return get(double{});
    if (type == "float" || type == "float32") return get(float{});
    if (type == "uchar" || type == "uint8") return get(std::uint8_t{});
    if (type == "char" || type == "int8") return get(std::int8_t{});
    if (type == "short" || type == "int16") return get(std::int16_t{});
    if (type == "ushort" || type == "uint16") return get(std::uint16_t{});
    if (type == "int" || type == "int32") return get(std::int32_t{});
    return get(std::uint32_t{});
}

} // namespace

void export_ply(const GaussianCloud& cloud, const std::filesystem::path& path, bool activated)
{
    if (cloud.empty()) throw std::invalid_argument("export_ply: empty cloud");
    cloud.validate();

    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\n"
           << "comment fruitsplat activation " << (activated ? "sigmoid" : "raw") << "\n"
           << "comment fruitsplat step " << cloud.metadata.step << "\n"
           << "element vertex " << cloud.size() << "\n";
    for (std::size_t i = 0; i < kPropertyCount; ++i) header << "property double " << kProperties[i] << "\n";
    header << "end_header\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const Gaussian& g : cloud.gaussians) {
        const auto values = pack(g, activated);
        out.write(reinterpret_cast<const char*>(values.data()), sizeof(double) * kPropertyCount);
    }
    if (!out) throw std::runtime_error("I/O error writing " + path.string());
}

GaussianCloud import_ply(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line) || line != "ply") throw std::runtime_error(path.string() + ": not a PLY file");

    struct Property {
        std::string name, type;
        std::size_t offset;
    };
    std::vector<Property> props;
    std::size_t stride = 0;
    std::size_t count = 0;
    std::size_t step = 0;
    bool in_vertex = false;
    bool vertex_seen = false;
    bool saw_format = false;

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "end_header") break;
        if (word == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt == "ascii") throw std::runtime_error(path.string() + ": ASCII PLY is not supported (binary only)");
            if (fmt != "binary_little_endian")
                throw std::runtime_error(path.string() + ": unsupported PLY format " + fmt);
            saw_format = true;
        } else if (word == "comment") {
            std::string tag, key, value;
            ss >> tag >> key >> value;
            if (tag == "fruitsplat" && key == "activation" && value != "raw")
                throw std::runtime_error(path.string() + ": activated PLY cannot be imported (raw logits required)");
            if (tag == "fruitsplat" && key == "step") step = std::stoull(value);
        } else if (word == "element") {
            std::string name;
            ss >> name;
            in_vertex = name == "vertex";
            if (in_vertex) {
                ss >> count;
                vertex_seen = true;
            } else if (!vertex_seen) {
                throw std::runtime_error(path.string() + ": vertex must be the first element");
            }
        } else if (word == "property" && in_vertex) {
            std::string type, name;
            ss >> type >> name;
            if (type == "list") throw std::runtime_error(path.string() + ": list properties on vertices are not supported");
            props.push_back({name, type, stride});
            stride += type_size(type);
        }
    }
    if (!saw_format) throw std::runtime_error(path.string() + ": missing format line");

    std::array<const Property*, kPropertyCount> lookup{};
    for (std::size_t i = 0; i < kPropertyCount; ++i) {
        for (const auto& p : props)
            if (p.name == kProperties[i]) lookup[i] = &p;
        if (!lookup[i]) throw std::runtime_error("missing property " + std::string(kProperties[i]));
    }

    std::vector<char> body(stride * count);
    in.read(body.data(), static_cast<std::streamsize>(body.size()));
    if (static_cast<std::size_t>(in.gcount()) != body.size())
        throw std::runtime_error(path.string() + ": truncated vertex data");

    GaussianCloud cloud;
    cloud.metadata.source = path.string();
    cloud.metadata.step = step;
    cloud.gaussians.resize(count);
    for (std::size_t v = 0; v < count; ++v) {
        std::array<double, kPropertyCount> x{};
        for (std::size_t i = 0; i < kPropertyCount; ++i)
            x[i] = decode_value(lookup[i]->type, body.data() + v * stride + lookup[i]->offset);
        Gaussian& g = cloud.gaussians[v];
        g.mean = {x[0], x[1], x[2]};
        g.color = {x[3], x[4], x[5]};
        g.opacity_logit = x[6];
        g.log_scale = {x[7], x[8], x[9]};
        g.rotation = {x[10], x[11], x[12], x[13]};
        g.s_logit = x[14];
        g.b_logit = x[15];
    }
    return cloud;
}

} // namespace fruitsplat
