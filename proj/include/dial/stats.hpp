#pragma once

#include "dial/explore.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dial::stats {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct CorrReport {
    double rho = kNaN;
    std::size_t n = 0;
    double p_value = kNaN;
    bool defined = false;         // false when either input is constant
    bool p_approximate = false;   // t approximation used with n < 10
    double ci_low = kNaN;
    double ci_high = kNaN;
};

enum class CorrKind { spearman, pearson };

/// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

/// Throws InvalidArgument on length mismatch or n < 3. A constant input
/// yields defined = false and NaN rho.
CorrReport spearman(std::span<const double> x, std::span<const double> y);
CorrReport pearson(std::span<const double> x, std::span<const double> y);
CorrReport correlation(CorrKind kind, std::span<const double> x, std::span<const double> y);

/// Percentile 95% interval over b resamples with replacement; resample i draws
/// from derive_seed(seed, "bootstrap", i). Undefined resamples are skipped;
/// throws Error if every one is undefined.
std::pair<double, double> bootstrap_ci(std::span<const double> x, std::span<const double> y, CorrKind kind,
                                       std::size_t b = 1000, std::uint64_t seed = 0);

/// Correlation plus its bootstrap interval. The interval is widened to
/// contain rho when percentile endpoints fall short of it.
CorrReport correlate_with_ci(CorrKind kind, std::span<const double> x, std::span<const double> y,
                             std::size_t b = 1000, std::uint64_t seed = 0);

struct CellKey {
    std::string environment;
    std::string config;  // backbone / configuration id
    auto operator<=>(const CellKey&) const = default;
};

enum class NormScheme { S1_per_cell, S2_per_backbone, S3_per_environment };
std::string_view to_string(NormScheme s);

/// Hazen quantile (average rank - 0.5) / n within each pool of the scheme.
std::vector<double> quantile_normalize(std::span<const double> values, std::span<const CellKey> keys, NormScheme scheme);

struct TransformRow {
    std::string transform;
    double spearman = kNaN;
    double pearson = kNaN;
};

struct TransformSpec {
    double scale_t = 2.0;       // sigma -> sigma / T
    double u_scale = -1.0;      // U -> alpha * U
    double log_offset = 1e-6;   // log(sigma + eps')
};

/// Raw row, then sigma^0.5, sigma^2, log(sigma + eps'), sigma / T and
/// alpha * U. Throws InvalidArgument when a transform leaves its domain.
std::vector<TransformRow> transform_suite(std::span<const double> sigma, std::span<const double> u,
                                          const TransformSpec& spec = {});

struct TemporalSplit {
    CorrReport early;
    CorrReport late;
    double delta = kNaN;  // late - early
    double median_step = 0.0;
};

/// Median split on step index over labeled records (early: step <= median),
/// then spearman(signal, label) per bucket. Throws InvalidArgument if a bucket has < 3 rows.
TemporalSplit temporal_split_rho(std::span<const StepRecord> records);

/// beta - (alpha + beta) p_I: a sign-level prediction, not an estimate of rho.
double predicted_rho(double alpha, double beta, double p_i);
double crossing_point(double alpha, double beta);

struct SimpsonReport {
    CorrReport within_i;
    CorrReport within_d;
    CorrReport aggregate;
};

/// Within-type and pooled spearman(signal, utility). Throws InvalidArgument if
/// either type has fewer than 3 rows.
SimpsonReport simpson_decomposition(std::span<const double> signal, std::span<const double> utility,
                                    std::span<const LatentType> types);
/// Labeled simulator records (utility = label). Throws InvalidArgument when
/// latent types are missing.
SimpsonReport simpson_decomposition(std::span<const StepRecord> records);

/// Mann-Whitney AUC with ties counted as one half. Throws InvalidArgument on a single class.
double auc(std::span<const int> labels, std::span<const double> scores);

/// Wilson score interval for k successes in n trials.
std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054);

struct ReportRow {
    std::string group;
    std::size_t n = 0;
    double spearman = kNaN;
    double pearson = kNaN;
    double p_value = kNaN;
    double ci_low = kNaN;
    double ci_high = kNaN;
};

ReportRow report_row(std::string group, std::span<const double> x, std::span<const double> y, std::size_t b = 1000,
                     std::uint64_t seed = 0);

/// CSV with header group,n,spearman,pearson,p_value,ci_low,ci_high; `provenance`
/// becomes leading "# key: value" lines. Undefined values print as "nan".
void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows,
                      const std::map<std::string, std::string>& provenance = {});
nlohmann::ordered_json report_json(const std::vector<ReportRow>& rows);

} // namespace dial::stats
