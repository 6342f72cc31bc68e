#pragma once

#include "dial/explore.hpp"
#include "dial/features.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dial {

enum class Regularizer { l1, l2, none, elastic_net, mi_topk };

std::string_view to_string(Regularizer r);
Regularizer regularizer_from_string(std::string_view s);

/// Per-feature location/scale with population sd. Columns whose sd is zero
/// (relative to their mean) are dropped: their standardized value is always 0.
struct Standardizer {
    std::vector<std::string> names;
    std::vector<double> mean;
    std::vector<double> sd;  // 0 for dropped columns
    std::vector<std::string> dropped;

    bool is_dropped(std::size_t j) const { return sd[j] == 0.0; }
    Eigen::VectorXd apply(const std::vector<double>& raw) const;
    Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
};

/// Throws InvalidArgument with fewer than 2 rows or a name/column mismatch.
Standardizer fit_standardizer(const std::vector<std::string>& names, const Eigen::MatrixXd& x);

/// Labeled rows of `d` as a design matrix and 0/1 label vector.
struct DesignMatrix {
    std::vector<std::string> names;
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
};
DesignMatrix labeled_design(const LabeledDataset& d);
/// Restricts to the named columns, in the given order.
DesignMatrix select_columns(const DesignMatrix& m, const std::vector<std::string>& names);

struct LogisticFit {
    Eigen::VectorXd w;
    double b = 0.0;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Sum of binary cross-entropy plus (1/c) times the regularizer's penalty.
/// Penalties: l1 |w|_1; l2 0.5|w|^2; elastic_net 0.5|w|_1 + 0.25|w|^2;
/// none and mi_topk 0. The bias is never penalized.
double logistic_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                          double c, Regularizer reg);

inline constexpr double kSolverTolerance = 1e-8;
inline constexpr int kSolverMaxIterations = 10000;

/// Minimizes logistic_objective. l1/elastic_net use cyclic coordinate descent
/// with soft-thresholding; l2/none use accelerated full-gradient steps.
/// Stops when the largest parameter change in one sweep is below 1e-8, or
/// after 10,000 sweeps. Throws SingleClassError if y has one class.
LogisticFit fit_sparse_logistic(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double c, Regularizer reg);

inline const std::vector<double> kDefaultCGrid = {0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0};

struct CvRow {
    double c = 0.0;
    double mean_log_loss = 0.0;  // mean over used folds of per-row held-out log-loss
    std::size_t folds_used = 0;
};

struct CvResult {
    double chosen_c = 0.0;
    std::vector<CvRow> report;
    std::vector<std::size_t> fold_of;  // fold index per row
};

/// Stratified k-fold assignment: each class is shuffled with `seed` and dealt round-robin.
std::vector<std::size_t> stratified_folds(const Eigen::VectorXd& y, std::size_t folds, std::uint64_t seed);

/// Picks the C with the lowest mean held-out log-loss; ties go to the smaller C.
/// Folds whose training or held-out part has a single class are skipped.
CvResult cross_validate_c(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const std::vector<double>& grid,
                          std::size_t folds, std::uint64_t seed, Regularizer reg = Regularizer::l1);

enum class TauMode { fixed, cv };

struct GateConfig {
    Regularizer regularizer = Regularizer::l1;
    std::vector<double> c_grid = kDefaultCGrid;
    std::size_t folds = 5;
    TauMode tau_mode = TauMode::fixed;
    double tau = 0.5;
    std::size_t mi_k = 3;
    std::size_t mi_bins = 10;
    std::vector<std::string> features;  // empty: every dataset feature

    void validate() const;
};

struct GateModel {
    std::vector<std::string> feature_names;  // input order expected by decide()
    Standardizer standardizer;
    std::vector<double> weights;  // one per feature; exactly 0 for dropped/unselected
    double bias = 0.0;
    double tau = 0.5;
    Regularizer regularizer = Regularizer::l1;
    double chosen_c = 0.0;
    std::vector<CvRow> cv_report;
    std::vector<std::string> selected;  // mi_topk only
    bool intercept_only = false;
    std::map<std::string, std::string> metadata;  // seed, data digest, ...

    std::size_t nnz() const;
    double margin(const std::vector<double>& raw) const;
    double probability(const std::vector<double>& raw) const;
    /// Throws InvalidArgument on a dimension mismatch.
    bool decide(const std::vector<double>& raw) const;
};

/// 1[sigmoid(w . standardize(phi) + b) > tau]; the boundary does not trigger.
bool gate_decide(const GateModel& m, const std::vector<double>& raw_features);
/// Looks features up by name; extra entries in `fv` are ignored.
bool gate_decide(const GateModel& m, const FeatureVector& fv);

/// Fits standardizer, selects C (and tau in cv mode) and refits on all labeled rows.
/// Throws SingleClassError when labels have one class, InvalidArgument with < 2 labeled rows.
GateModel fit_gate(const LabeledDataset& d, const GateConfig& config, std::uint64_t seed);

/// Constant gate: zero weights, bias = logit of the (clamped) positive fraction.
GateModel intercept_only_gate(const LabeledDataset& d, const GateConfig& config);

/// Negates every weight; bias, tau and standardizer are kept.
GateModel reverse_direction(GateModel m);

/// Plug-in mutual information (nats) between a quantile-binned column and a 0/1 label.
double mutual_information(const Eigen::VectorXd& x, const Eigen::VectorXd& y, std::size_t bins);

/// Top-k columns by mutual information with the label; ties broken by name.
std::vector<std::string> mi_topk_select(const DesignMatrix& m, std::size_t k, std::size_t bins);

enum class WeightClass { type_d_proxy, type_i_proxy, uninformative };
std::string_view to_string(WeightClass c);

struct WeightDiagnostic {
    std::vector<std::pair<std::string, WeightClass>> features;
};

WeightDiagnostic weight_diagnostic(const GateModel& m);

nlohmann::ordered_json to_json(const GateModel& m);
GateModel gate_from_json(const nlohmann::ordered_json& j);

} // namespace dial
