#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace bimind::diag {

inline constexpr std::size_t kClasses = 2;
inline constexpr double kVoxEpsilon = 1e-6;

using Logits = std::array<double, kClasses>;

/// z_E[y] - z_0[y], in logits.
double vox(std::span<const double> z0, std::span<const double> ze, int y);

enum class VoxCategory { Helps, Hurts, Neutral };
VoxCategory vox_category(double v, double eps = kVoxEpsilon);
std::string vox_category_name(VoxCategory c);

/// Per-instance summary of one forward pass, as stored in trace files.
struct TraceRecord {
    std::string id;
    int y = 0;
    Logits z0{}, ze{}, zf{};
    Logits p0{}, pe{}, pf{};
    double h0 = 0.0, he = 0.0;
    std::optional<double> gate;
    double sym_kl = 0.0;
};

nlohmann::json to_json(const TraceRecord& t);
TraceRecord trace_from_json(const nlohmann::json& j);
void write_traces(std::ostream& out, const std::vector<TraceRecord>& traces);
std::vector<TraceRecord> read_traces(std::istream& in);
std::vector<TraceRecord> load_traces(const std::string& path);

std::size_t argmax(const Logits& z);

struct VoxRecord {
    std::string id;
    int y = 0;
    double vox = 0.0;
    std::optional<double> gate;
    bool correct_head0 = false;
    bool correct_headE = false;
    VoxCategory category = VoxCategory::Neutral;
};

VoxRecord vox_record(const TraceRecord& t, double eps = kVoxEpsilon);
/// id,y,vox,gate,category with an empty gate field when there is no gate.
void write_vox_csv(std::ostream& out, const std::vector<VoxRecord>& records);

/// Fractions in [0, 1]. Macro averages are unweighted over classes; a class
/// with no true and no predicted instances contributes 0 and is listed in
/// `absent_classes`.
struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::vector<std::size_t> absent_classes;
};

Metrics macro_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                      std::size_t classes = kClasses);

struct RoutingThresholds {
    double low = 0.3;
    double high = 0.7;
};

struct GateStats {
    double mean = 0.0;
    double pct_low = 0.0;
    double pct_high = 0.0;
};

struct RoutingReport {
    std::size_t instances = 0;
    Metrics head0, headE, fused;
    double vox_mean = 0.0;
    double pos_pct = 0.0;
    double neg_pct = 0.0;
    double neutral_pct = 0.0;
    double vox_epsilon = kVoxEpsilon;
    std::optional<GateStats> gate;
    RoutingThresholds thresholds;
    double sym_kl_mean = 0.0;
    std::uint64_t seed = 0;
    std::string config_fingerprint;
    std::string fusion_mode;
};

struct ReportContext {
    RoutingThresholds thresholds;
    std::uint64_t seed = 0;
    std::string config_fingerprint;
    std::string fusion_mode;
    double vox_epsilon = kVoxEpsilon;
};

/// Head_0 (argmax z_0), Head_E (argmax z_E) and fused (argmax z_F) metrics
/// plus VoX and gate aggregates. Throws MetricError on an empty set.
RoutingReport routing_report(const std::vector<TraceRecord>& traces, const ReportContext& context = {});

/// Percentages are reported in [0, 100].
nlohmann::json to_json(const RoutingReport& r);
std::string to_table(const RoutingReport& r);

} // namespace bimind::diag
