#include "fruitsplat/damage.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fruitsplat {
namespace {

void require_unit_interval(double t, const char* what)
{
    if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument(std::string(what) + " must be in (0, 1)");
}

} // namespace

FilteredPointCloud filter_strawberry(const GaussianCloud& cloud, double strawberry_threshold)
{
    require_unit_interval(strawberry_threshold, "strawberry threshold");
    FilteredPointCloud pc;
    pc.strawberry_threshold = strawberry_threshold;
    pc.source = cloud.metadata.source;
    for (const Gaussian& g : cloud.gaussians)
        if (g.strawberry() >= strawberry_threshold) pc.points.push_back({g.mean, g.bruise()});
    if (pc.points.empty()) throw std::runtime_error("no strawberry points above threshold");
    return pc;
}

double bruise_percentage(const FilteredPointCloud& pc, double bruise_threshold)
{
    require_unit_interval(bruise_threshold, "bruise threshold");
    if (pc.points.empty()) throw std::invalid_argument("bruise_percentage: empty point cloud");
    const auto bruised = std::count_if(pc.points.begin(), pc.points.end(),
                                       [&](const ScoredPoint& p) { return p.bruise_score >= bruise_threshold; });
    return 100.0 * static_cast<double>(bruised) / static_cast<double>(pc.points.size());
}

DamageReport compare_damage(const FilteredPointCloud& pre, const FilteredPointCloud& post, double bruise_threshold)
{
    DamageReport r;
    r.pre_bruise_pct = bruise_percentage(pre, bruise_threshold);
    r.post_bruise_pct = bruise_percentage(post, bruise_threshold);
    r.delta_pct = r.post_bruise_pct - r.pre_bruise_pct;
    r.pre_count = pre.points.size();
    r.post_count = post.points.size();
    r.thresholds = {pre.strawberry_threshold, bruise_threshold};
    return r;
}

std::string format_damage_table(const DamageReport& r)
{
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%-6s %12s %10s\n"
                  "%-6s %12zu %9.3f%%\n"
                  "%-6s %12zu %9.3f%%\n"
                  "%-6s %12s %+9.3f%%\n"
                  "thresholds: strawberry %.3f, bruise %.3f\n",
                  "phase", "points", "bruise", "pre", r.pre_count, r.pre_bruise_pct, "post", r.post_count,
                  r.post_bruise_pct, "delta", "", r.delta_pct, r.thresholds.strawberry, r.thresholds.bruise);
    return buf;
}

void StiffnessRecord::validate() const
{
    if (point_forces.empty()) throw std::invalid_argument("stiffness record " + fruit_id + ": no probe points");
    if (!(displacement_mm > 0.0)) throw std::invalid_argument("stiffness record " + fruit_id + ": displacement must be > 0");
    for (double f : point_forces)
        if (!(f >= 0.0)) throw std::invalid_argument("stiffness record " + fruit_id + ": forces must be >= 0");
}

double StiffnessRecord::mean_spring_constant() const
{
    validate();
    double sum = 0.0;
    for (double f : point_forces) sum += f / displacement_mm;
    return sum / static_cast<double>(point_forces.size());
}

double stiffness_retention(const StiffnessRecord& pre, const StiffnessRecord& post)
{
    if (pre.fruit_id != post.fruit_id)
        throw std::invalid_argument("stiffness_retention: fruit ids differ (" + pre.fruit_id + " vs " + post.fruit_id + ")");
    const double k_pre = pre.mean_spring_constant();
    const double k_post = post.mean_spring_constant();
    if (k_pre == 0.0) throw std::invalid_argument("stiffness_retention: pre-interaction stiffness is zero for " + pre.fruit_id);
    return 100.0 * k_post / k_pre;
}

std::vector<StiffnessRecord> read_stiffness_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());

    struct Key {
        std::string fruit;
        ProbePhase phase;
        bool operator<(const Key& o) const { return std::tie(fruit, phase) < std::tie(o.fruit, o.phase); }
    };
    std::map<Key, std::size_t> index;
    std::vector<StiffnessRecord> records;

    std::string line;
    for (std::size_t number = 1; std::getline(in, line); ++number) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (number == 1 && line.rfind("fruit_id", 0) == 0) continue;

        auto fail = [&](const std::string& what) {
            throw std::runtime_error(path.filename().string() + ":" + std::to_string(number) + ": " + what);
        };
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() != 5) fail("expected 5 columns, got " + std::to_string(cells.size()));

        ProbePhase phase;
        std::string p = cells[1];
        std::transform(p.begin(), p.end(), p.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
        if (p == "PRE") phase = ProbePhase::Pre;
        else if (p == "POST") phase = ProbePhase::Post;
        else fail("phase must be PRE or POST, got '" + cells[1] + "'");

        double force = 0.0, displacement = 0.0;
        try {
            std::size_t used = 0;
            (void)std::stoi(cells[2], &used);
            if (used != cells[2].size()) fail("malformed point_index");
            force = std::stod(cells[3], &used);
            if (used != cells[3].size()) fail("malformed force_newtons");
            displacement = std::stod(cells[4], &used);
            if (used != cells[4].size()) fail("malformed displacement_mm");
        } catch (const std::invalid_argument&) {
            fail("non-numeric field");
        } catch (const std::out_of_range&) {
            fail("numeric field out of range");
        }
        if (!(force >= 0.0)) fail("negative force");
        if (!(displacement > 0.0)) fail("displacement must be > 0");

        const Key key{cells[0], phase};
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, records.size()).first;
            records.push_back({cells[0], phase, {}, displacement});
        }
        StiffnessRecord& rec = records[it->second];
        if (rec.displacement_mm != displacement) fail("displacement differs within one fruit/phase");
        rec.point_forces.push_back(force);
    }
    return records;
}

std::vector<StiffnessSummary> summarize_stiffness(const std::vector<StiffnessRecord>& records)
{
    std::vector<std::string> order;
    std::map<std::string, std::pair<const StiffnessRecord*, const StiffnessRecord*>> by_fruit;
    for (const auto& r : records) {
        auto [it, inserted] = by_fruit.try_emplace(r.fruit_id, nullptr, nullptr);
        if (inserted) order.push_back(r.fruit_id);
        (r.phase == ProbePhase::Pre ? it->second.first : it->second.second) = &r;
    }
    std::vector<StiffnessSummary> out;
    for (const auto& id : order) {
        const auto [pre, post] = by_fruit[id];
        if (!pre || !post) throw std::runtime_error("fruit " + id + " lacks a " + (pre ? "POST" : "PRE") + " record");
        StiffnessSummary s;
        s.fruit_id = id;
        s.pre_k = pre->mean_spring_constant();
        s.post_k = post->mean_spring_constant();
        s.pre_points = pre->point_forces.size();
        s.post_points = post->point_forces.size();
        s.retention_pct = stiffness_retention(*pre, *post);
        out.push_back(s);
    }
    return out;
}

} // namespace fruitsplat
