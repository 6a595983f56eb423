#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fruitsplat/gaussian.hpp"

namespace fruitsplat {

struct ScoredPoint {
    Eigen::Vector3d position;
    double bruise_score; // sigmoid(b_logit)
};

struct FilteredPointCloud {
    std::vector<ScoredPoint> points;
    double strawberry_threshold = 0.5;
    std::string source;
};

struct DamageThresholds {
    double strawberry = 0.5;
    double bruise = 0.5;
};

struct DamageReport {
    double pre_bruise_pct = 0.0;
    double post_bruise_pct = 0.0;
    double delta_pct = 0.0; // post - pre, sign preserved
    std::size_t pre_count = 0;
    std::size_t post_count = 0;
    DamageThresholds thresholds;
};

/// Keeps Gaussians whose strawberry score reaches the threshold.
FilteredPointCloud filter_strawberry(const GaussianCloud& cloud, double strawberry_threshold = 0.5);

/// 100 * share of points whose bruise score reaches the threshold.
double bruise_percentage(const FilteredPointCloud& pc, double bruise_threshold = 0.5);

DamageReport compare_damage(const FilteredPointCloud& pre, const FilteredPointCloud& post, double bruise_threshold = 0.5);

/// Fixed-width human-readable table.
std::string format_damage_table(const DamageReport& report);

enum class ProbePhase { Pre, Post };

struct StiffnessRecord {
    std::string fruit_id;
    ProbePhase phase = ProbePhase::Pre;
    std::vector<double> point_forces; // newtons
    double displacement_mm = 1.25;

    void validate() const;
    /// Mean spring constant in N/mm.
    double mean_spring_constant() const;
};

/// 100 * mean(k_post) / mean(k_pre), k = force / displacement per probe point.
double stiffness_retention(const StiffnessRecord& pre, const StiffnessRecord& post);

struct StiffnessSummary {
    std::string fruit_id;
    double pre_k = 0.0;  // N/mm
    double post_k = 0.0; // N/mm
    std::size_t pre_points = 0;
    std::size_t post_points = 0;
    double retention_pct = 0.0;
};

/// Parses fruit_id,phase,point_index,force_newtons,displacement_mm rows (header optional).
/// Errors carry the 1-based line number.
std::vector<StiffnessRecord> read_stiffness_csv(const std::filesystem::path& path);

/// Pairs PRE/POST records per fruit in first-appearance order.
std::vector<StiffnessSummary> summarize_stiffness(const std::vector<StiffnessRecord>& records);

} // namespace fruitsplat
