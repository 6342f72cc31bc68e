#include "dial/gate.hpp"

#include "dial/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace dial {

using json = nlohmann::ordered_json;

std::string_view to_string(Regularizer r) {
    switch (r) {
    case Regularizer::l1: return "l1";
    case Regularizer::l2: return "l2";
    case Regularizer::none: return "none";
    case Regularizer::elastic_net: return "elastic_net";
    case Regularizer::mi_topk: return "mi_topk";
    }
    return "l1";
}

Regularizer regularizer_from_string(std::string_view s) {
    for (auto r : {Regularizer::l1, Regularizer::l2, Regularizer::none, Regularizer::elastic_net, Regularizer::mi_topk}) {
        if (to_string(r) == s) return r;
    }
    throw InvalidArgument("unknown regularizer '" + std::string(s) + "' (expected l1, l2, none, elastic_net, mi_topk)");
}

std::string_view to_string(WeightClass c) {
    switch (c) {
    case WeightClass::type_d_proxy: return "type_d_proxy";
    case WeightClass::type_i_proxy: return "type_i_proxy";
    case WeightClass::uninformative: return "uninformative";
    }
    return "uninformative";
}

namespace {

double sigmoid(double m) {
    if (m >= 0) return 1.0 / (1.0 + std::exp(-m));
    const double e = std::exp(m);
    return e / (1.0 + e);
}

double softplus(double m) { return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); }

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

struct Penalty {
    double l1 = 0.0;  // coefficient on |w|_1
    double l2 = 0.0;  // coefficient on 0.5|w|^2
};

Penalty penalty_for(Regularizer reg, double c) {
    switch (reg) {
    case Regularizer::l1: return {1.0 / c, 0.0};
    case Regularizer::l2: return {0.0, 1.0 / c};
    case Regularizer::elastic_net: return {0.5 / c, 0.5 / c};
    case Regularizer::none:
    case Regularizer::mi_topk: return {};
    }
    return {};
}

double data_loss(const Eigen::VectorXd& margins, const Eigen::VectorXd& y) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < margins.size(); ++i) s += softplus(margins[i]) - y[i] * margins[i];
    return s;
}

void require_two_classes(const Eigen::VectorXd& y) {
    const double pos = y.sum();
    if (y.size() == 0 || pos == 0.0 || pos == static_cast<double>(y.size())) {
        throw SingleClassError("labels contain a single class; use an intercept-only gate instead");
    }
}

// Loss along coordinate j when moving it by delta (margins updated by delta * z_j).
double coordinate_loss(const Eigen::VectorXd& margins, const Eigen::VectorXd& y, const double* col, double delta) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < margins.size(); ++i) {
        const double m = margins[i] + delta * (col ? col[i] : 1.0);
        s += softplus(m) - y[i] * m;
    }
    return s;
}

LogisticFit fit_coordinate_descent(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, Penalty pen) {
    const Eigen::Index n = z.rows(), d = z.cols();
    LogisticFit fit;
    fit.w = Eigen::VectorXd::Zero(d);
    const double pos = y.mean();
    fit.b = std::log(pos / (1.0 - pos));
    Eigen::VectorXd margins = Eigen::VectorXd::Constant(n, fit.b);
    Eigen::VectorXd bound(d);
    for (Eigen::Index j = 0; j < d; ++j) bound[j] = 0.25 * z.col(j).squaredNorm();

    auto coord_penalty = [&](double w) { return pen.l1 * std::abs(w) + 0.5 * pen.l2 * w * w; };

    for (int it = 1; it <= kSolverMaxIterations; ++it) {
        double max_delta = 0.0;

        // Bias: unpenalized Newton step, falling back to the curvature bound.
        {
            double g = 0.0, h = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double p = sigmoid(margins[i]);
                g += p - y[i];
                h += p * (1.0 - p);
            }
            const double base = coordinate_loss(margins, y, nullptr, 0.0);
            double delta = h > 0 ? -g / h : 0.0;
            if (delta != 0.0 && coordinate_loss(margins, y, nullptr, delta) > base) delta = -g / (0.25 * n);
            if (delta != 0.0 && coordinate_loss(margins, y, nullptr, delta) <= base) {
                fit.b += delta;
                margins.array() += delta;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }

        for (Eigen::Index j = 0; j < d; ++j) {
            if (bound[j] == 0.0) continue;
            const double* col = z.col(j).data();
            double g = 0.0, h = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double p = sigmoid(margins[i]);
                g += (p - y[i]) * col[i];
                h += p * (1.0 - p) * col[i] * col[i];
            }
            const double w0 = fit.w[j];
            const double base = coordinate_loss(margins, y, col, 0.0) + coord_penalty(w0);
            auto propose = [&](double curv) { return soft_threshold(curv * w0 - g, pen.l1) / (curv + pen.l2); };
            double w1 = h > 0 ? propose(h) : w0;
            if (coordinate_loss(margins, y, col, w1 - w0) + coord_penalty(w1) > base) {
                w1 = propose(bound[j]);
                if (coordinate_loss(margins, y, col, w1 - w0) + coord_penalty(w1) > base) w1 = w0;
            }
            const double delta = w1 - w0;
            if (delta != 0.0) {
                fit.w[j] = w1;
                margins += delta * z.col(j);
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }

        fit.iterations = it;
        if (max_delta < kSolverTolerance) {
            fit.converged = true;
            break;
        }
    }
    return fit;
}

LogisticFit fit_accelerated_gradient(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, Penalty pen) {
    const Eigen::Index n = z.rows(), d = z.cols();
    Eigen::MatrixXd a(n, d + 1);
    a << z, Eigen::VectorXd::Ones(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a.transpose() * a, Eigen::EigenvaluesOnly);
    const double lipschitz = 0.25 * eig.eigenvalues().maxCoeff() + pen.l2;
    const double step = 1.0 / lipschitz;

    auto gradient = [&](const Eigen::VectorXd& theta) {
        Eigen::VectorXd m = a * theta;
        Eigen::VectorXd r(n);
        for (Eigen::Index i = 0; i < n; ++i) r[i] = sigmoid(m[i]) - y[i];
        Eigen::VectorXd g = a.transpose() * r;
        g.head(d) += pen.l2 * theta.head(d);
        return g;
    };

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);
    const double pos = y.mean();
    theta[d] = std::log(pos / (1.0 - pos));
    Eigen::VectorXd look = theta;
    double t = 1.0;
    LogisticFit fit;
    for (int it = 1; it <= kSolverMaxIterations; ++it) {
        const Eigen::VectorXd next = look - step * gradient(look);
        // Restart momentum when it points against the step just taken.
        if ((look - next).dot(next - theta) > 0) t = 1.0;
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double max_delta = (next - theta).cwiseAbs().maxCoeff();
        look = next + ((t - 1.0) / t_next) * (next - theta);
        theta = next;
        t = t_next;
        fit.iterations = it;
        if (max_delta < kSolverTolerance) {
            fit.converged = true;
            break;
        }
    }
    fit.w = theta.head(d);
    fit.b = theta[d];
    return fit;
}

double held_out_log_loss(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const LogisticFit& f) {
    constexpr double eps = 1e-15;
    double s = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double p = std::clamp(sigmoid(z.row(i).dot(f.w) + f.b), eps, 1.0 - eps);
        s -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
    }
    return s / static_cast<double>(z.rows());
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
    return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Eigen::Index>(r)] = v[rows[r]];
    return out;
}

bool has_both_classes(const Eigen::VectorXd& y) {
    const double s = y.sum();
    return y.size() > 0 && s > 0.0 && s < static_cast<double>(y.size());
}

struct FoldSplit {
    std::vector<Eigen::Index> train, test;
};

std::vector<FoldSplit> usable_folds(const Eigen::VectorXd& y, const std::vector<std::size_t>& fold_of, std::size_t folds) {
    std::vector<FoldSplit> out;
    for (std::size_t f = 0; f < folds; ++f) {
        FoldSplit s;
        for (Eigen::Index i = 0; i < y.size(); ++i) (fold_of[static_cast<std::size_t>(i)] == f ? s.test : s.train).push_back(i);
        if (has_both_classes(take_rows(y, s.train)) && has_both_classes(take_rows(y, s.test))) out.push_back(std::move(s));
    }
    return out;
}

} // namespace

Eigen::VectorXd Standardizer::apply(const std::vector<double>& raw) const {
    if (raw.size() != names.size()) {
        throw InvalidArgument("feature dimension mismatch: model expects " + std::to_string(names.size()) + ", got " +
                              std::to_string(raw.size()));
    }
    Eigen::VectorXd z(static_cast<Eigen::Index>(raw.size()));
    for (std::size_t j = 0; j < raw.size(); ++j) z[static_cast<Eigen::Index>(j)] = is_dropped(j) ? 0.0 : (raw[j] - mean[j]) / sd[j];
    return z;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& raw) const {
    if (static_cast<std::size_t>(raw.cols()) != names.size()) {
        throw InvalidArgument("feature dimension mismatch: model expects " + std::to_string(names.size()) + ", got " +
                              std::to_string(raw.cols()));
    }
    Eigen::MatrixXd z(raw.rows(), raw.cols());
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        const auto uj = static_cast<std::size_t>(j);
        if (is_dropped(uj)) {
            z.col(j).setZero();
        } else {
            z.col(j) = (raw.col(j).array() - mean[uj]) / sd[uj];
        }
    }
    return z;
}

Standardizer fit_standardizer(const std::vector<std::string>& names, const Eigen::MatrixXd& x) {
    if (x.rows() < 2) throw InvalidArgument("standardizer needs at least 2 rows, got " + std::to_string(x.rows()));
    if (static_cast<std::size_t>(x.cols()) != names.size()) throw InvalidArgument("standardizer: name/column count mismatch");
    Standardizer s;
    s.names = names;
    const double n = static_cast<double>(x.rows());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double mu = x.col(j).sum() / n;
        const double var = (x.col(j).array() - mu).square().sum() / n;
        double sd = std::sqrt(var);
        if (!(sd > 1e-12 * (1.0 + std::abs(mu)))) {
            sd = 0.0;
            s.dropped.push_back(names[static_cast<std::size_t>(j)]);
        }
        s.mean.push_back(mu);
        s.sd.push_back(sd);
    }
    return s;
}

DesignMatrix labeled_design(const LabeledDataset& d) {
    const auto idx = d.labeled_indices();
    DesignMatrix m;
    m.names = d.feature_names;
    m.x.resize(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(d.feature_names.size()));
    m.y.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& s = d.steps[idx[r]];
        if (s.features.size() != d.feature_names.size()) {
            throw InvalidArgument("step " + std::to_string(idx[r]) + " has " + std::to_string(s.features.size()) +
                                  " features, dataset declares " + std::to_string(d.feature_names.size()));
        }
        for (std::size_t j = 0; j < s.features.size(); ++j) m.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = s.features[j];
        m.y[static_cast<Eigen::Index>(r)] = *s.utility_label;
    }
    return m;
}

DesignMatrix select_columns(const DesignMatrix& m, const std::vector<std::string>& names) {
    DesignMatrix out;
    out.names = names;
    out.y = m.y;
    out.x.resize(m.x.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
        const auto it = std::find(m.names.begin(), m.names.end(), names[k]);
        if (it == m.names.end()) throw InvalidArgument("unknown feature '" + names[k] + "'");
        out.x.col(static_cast<Eigen::Index>(k)) = m.x.col(it - m.names.begin());
    }
    return out;
}

double logistic_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                          double c, Regularizer reg) {
    const Penalty pen = penalty_for(reg, c);
    const Eigen::VectorXd m = (z * w).array() + b;
    return data_loss(m, y) + pen.l1 * w.lpNorm<1>() + 0.5 * pen.l2 * w.squaredNorm();
}

LogisticFit fit_sparse_logistic(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double c, Regularizer reg) {
    if (z.rows() != y.size()) throw InvalidArgument("row count mismatch between features and labels");
    if (!(c > 0)) throw InvalidArgument("C must be positive");
    require_two_classes(y);
    const Penalty pen = penalty_for(reg, c);
    LogisticFit fit = (reg == Regularizer::l1 || reg == Regularizer::elastic_net) ? fit_coordinate_descent(z, y, pen)
                                                                                   : fit_accelerated_gradient(z, y, pen);
    fit.objective = logistic_objective(z, y, fit.w, fit.b, c, reg);
    return fit;
}

std::vector<std::size_t> stratified_folds(const Eigen::VectorXd& y, std::size_t folds, std::uint64_t seed) {
    if (folds < 2) throw InvalidArgument("need at least 2 folds");
    std::vector<std::size_t> fold_of(static_cast<std::size_t>(y.size()));
    std::mt19937_64 rng(derive_seed(seed, "cv_folds"));
    for (int cls : {0, 1}) {
        std::vector<std::size_t> rows;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (static_cast<int>(y[i]) == cls) rows.push_back(static_cast<std::size_t>(i));
        }
        // Fisher-Yates with our own index draw so the permutation is portable.
        for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng() % i]);
        for (std::size_t k = 0; k < rows.size(); ++k) fold_of[rows[k]] = k % folds;
    }
    return fold_of;
}

CvResult cross_validate_c(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const std::vector<double>& grid,
                          std::size_t folds, std::uint64_t seed, Regularizer reg) {
    if (grid.empty()) throw InvalidArgument("C grid is empty");
    if (folds < 2) throw InvalidArgument("need at least 2 folds");
    if (static_cast<std::size_t>(y.size()) < folds) {
        throw InvalidArgument("need at least " + std::to_string(folds) + " labeled rows for " + std::to_string(folds) +
                              "-fold CV, got " + std::to_string(y.size()));
    }
    for (double c : grid) {
        if (!(c > 0)) throw InvalidArgument("C grid values must be positive");
    }
    CvResult res;
    res.fold_of = stratified_folds(y, folds, seed);
    const auto splits = usable_folds(y, res.fold_of, folds);
    if (splits.empty()) throw SingleClassError("every CV fold has a single class in its training or held-out part");

    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    double best = std::numeric_limits<double>::infinity();
    for (double c : sorted) {
        double total = 0.0;
        for (const auto& s : splits) {
            const auto fit = fit_sparse_logistic(take_rows(z, s.train), take_rows(y, s.train), c, reg);
            total += held_out_log_loss(take_rows(z, s.test), take_rows(y, s.test), fit);
        }
        const double mean = total / static_cast<double>(splits.size());
        res.report.push_back({c, mean, splits.size()});
        if (res.report.size() == 1 || mean < best - 1e-12 * std::max(1.0, std::abs(best))) {
            best = mean;
            res.chosen_c = c;
        }
    }
    return res;
}

void GateConfig::validate() const {
    if (c_grid.empty()) throw InvalidArgument("gate.c_grid: must be non-empty");
    for (double c : c_grid) {
        if (!(c > 0)) throw InvalidArgument("gate.c_grid: values must be positive");
    }
    if (folds < 2) throw InvalidArgument("gate.folds: must be at least 2");
    if (!(tau > 0 && tau < 1)) throw InvalidArgument("gate.tau: must lie in (0, 1)");
    if (regularizer == Regularizer::mi_topk) {
        if (mi_k == 0) throw InvalidArgument("gate.mi_k: must be positive");
        if (mi_bins < 2) throw InvalidArgument("gate.mi_bins: must be at least 2");
    }
}

std::size_t GateModel::nnz() const {
    return static_cast<std::size_t>(std::count_if(weights.begin(), weights.end(), [](double w) { return w != 0.0; }));
}

double GateModel::margin(const std::vector<double>& raw) const {
    const Eigen::VectorXd z = standardizer.apply(raw);
    double m = bias;
    for (std::size_t j = 0; j < weights.size(); ++j) m += weights[j] * z[static_cast<Eigen::Index>(j)];
    return m;
}

double GateModel::probability(const std::vector<double>& raw) const { return sigmoid(margin(raw)); }

bool GateModel::decide(const std::vector<double>& raw) const { return probability(raw) > tau; }

bool gate_decide(const GateModel& m, const std::vector<double>& raw_features) { return m.decide(raw_features); }

bool gate_decide(const GateModel& m, const FeatureVector& fv) {
    std::vector<double> raw;
    raw.reserve(m.feature_names.size());
    for (const auto& name : m.feature_names) raw.push_back(fv.at(name));
    return m.decide(raw);
}

double mutual_information(const Eigen::VectorXd& x, const Eigen::VectorXd& y, std::size_t bins) {
    if (bins < 2) throw InvalidArgument("mutual information needs at least 2 bins");
    const auto n = static_cast<std::size_t>(x.size());
    if (n == 0) return 0.0;
    std::vector<double> sorted(x.data(), x.data() + n);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges;
    for (std::size_t k = 1; k < bins; ++k) edges.push_back(sorted[k * n / bins]);

    std::vector<std::array<double, 2>> joint(bins, {0.0, 0.0});
    for (std::size_t i = 0; i < n; ++i) {
        const auto b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x[static_cast<Eigen::Index>(i)]) - edges.begin());
        joint[b][y[static_cast<Eigen::Index>(i)] > 0.5 ? 1 : 0] += 1.0;
    }
    const double py1 = y.sum() / static_cast<double>(n);
    const double py[2] = {1.0 - py1, py1};
    double mi = 0.0;
    for (const auto& cell : joint) {
        const double pb = (cell[0] + cell[1]) / static_cast<double>(n);
        for (int c = 0; c < 2; ++c) {
            const double pj = cell[c] / static_cast<double>(n);
            if (pj > 0) mi += pj * std::log(pj / (pb * py[c]));
        }
    }
    return std::max(0.0, mi);
}

std::vector<std::string> mi_topk_select(const DesignMatrix& m, std::size_t k, std::size_t bins) {
    if (k == 0) throw InvalidArgument("mi_topk: k must be positive");
    if (k > m.names.size()) {
        throw InvalidArgument("mi_topk: k = " + std::to_string(k) + " exceeds feature count " + std::to_string(m.names.size()));
    }
    std::vector<std::pair<double, std::string>> scored;
    for (std::size_t j = 0; j < m.names.size(); ++j) {
        scored.emplace_back(mutual_information(m.x.col(static_cast<Eigen::Index>(j)), m.y, bins), m.names[j]);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(scored[i].second);
    return out;
}

GateModel fit_gate(const LabeledDataset& d, const GateConfig& config, std::uint64_t seed) {
    config.validate();
    DesignMatrix dm = labeled_design(d);
    if (!config.features.empty()) dm = select_columns(dm, config.features);
    if (dm.y.size() < 2) {
        throw InvalidArgument("gate fitting needs at least 2 labeled rows; exploration produced " +
                              std::to_string(dm.y.size()) + " (raise exploration eps or n_episodes)");
    }
    require_two_classes(dm.y);

    GateModel m;
    m.feature_names = dm.names;
    m.standardizer = fit_standardizer(dm.names, dm.x);
    m.regularizer = config.regularizer;
    m.tau = config.tau;
    m.metadata["seed"] = std::to_string(seed);
    m.metadata["n_labeled"] = std::to_string(dm.y.size());

    Eigen::MatrixXd z = m.standardizer.apply(dm.x);
    std::vector<std::size_t> active(dm.names.size());
    std::iota(active.begin(), active.end(), 0);
    Regularizer solver_reg = config.regularizer;
    if (config.regularizer == Regularizer::mi_topk) {
        m.selected = mi_topk_select(dm, config.mi_k, config.mi_bins);
        active.clear();
        for (const auto& name : m.selected) {
            active.push_back(static_cast<std::size_t>(std::find(dm.names.begin(), dm.names.end(), name) - dm.names.begin()));
        }
        solver_reg = Regularizer::none;
    }
    Eigen::MatrixXd za(z.rows(), static_cast<Eigen::Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) za.col(static_cast<Eigen::Index>(k)) = z.col(static_cast<Eigen::Index>(active[k]));

    const bool penalized = solver_reg != Regularizer::none;
    std::vector<std::size_t> fold_of;
    if (penalized) {
        auto cv = cross_validate_c(za, dm.y, config.c_grid, config.folds, seed, solver_reg);
        m.chosen_c = cv.chosen_c;
        m.cv_report = std::move(cv.report);
        fold_of = std::move(cv.fold_of);
    } else {
        m.chosen_c = 1.0;  // penalty is zero; C has no effect
        fold_of = stratified_folds(dm.y, config.folds, seed);
    }

    if (config.tau_mode == TauMode::cv) {
        // Held-out probabilities at the chosen C, then the most accurate tau; ties go toward 0.5.
        std::vector<double> prob(static_cast<std::size_t>(dm.y.size()), -1.0);
        for (const auto& s : usable_folds(dm.y, fold_of, config.folds)) {
            const auto f = fit_sparse_logistic(take_rows(za, s.train), take_rows(dm.y, s.train), m.chosen_c, solver_reg);
            for (auto i : s.test) prob[static_cast<std::size_t>(i)] = sigmoid(za.row(i).dot(f.w) + f.b);
        }
        double best_acc = -1.0;
        for (int k = 1; k <= 9; ++k) {
            const double tau = k / 10.0;
            std::size_t correct = 0, seen = 0;
            for (std::size_t i = 0; i < prob.size(); ++i) {
                if (prob[i] < 0) continue;
                ++seen;
                if ((prob[i] > tau) == (dm.y[static_cast<Eigen::Index>(i)] > 0.5)) ++correct;
            }
            if (seen == 0) break;
            const double acc = static_cast<double>(correct) / static_cast<double>(seen);
            const bool closer = std::abs(tau - 0.5) < std::abs(m.tau - 0.5);
            if (acc > best_acc + 1e-12 || (std::abs(acc - best_acc) <= 1e-12 && closer)) {
                best_acc = acc;
                m.tau = tau;
            }
        }
    }

    const auto fit = fit_sparse_logistic(za, dm.y, m.chosen_c, solver_reg);
    m.weights.assign(dm.names.size(), 0.0);
    for (std::size_t k = 0; k < active.size(); ++k) {
        if (!m.standardizer.is_dropped(active[k])) m.weights[active[k]] = fit.w[static_cast<Eigen::Index>(k)];
    }
    m.bias = fit.b;
    m.metadata["solver_iterations"] = std::to_string(fit.iterations);
    m.metadata["solver_converged"] = fit.converged ? "true" : "false";
    return m;
}

GateModel intercept_only_gate(const LabeledDataset& d, const GateConfig& config) {
    DesignMatrix dm = labeled_design(d);
    if (!config.features.empty()) dm = select_columns(dm, config.features);
    GateModel m;
    m.feature_names = dm.names;
    if (dm.x.rows() >= 2) {
        m.standardizer = fit_standardizer(dm.names, dm.x);
    } else {
        m.standardizer.names = dm.names;
        m.standardizer.mean.assign(dm.names.size(), 0.0);
        m.standardizer.sd.assign(dm.names.size(), 0.0);
        m.standardizer.dropped = dm.names;
    }
    m.weights.assign(dm.names.size(), 0.0);
    const double frac = dm.y.size() > 0 ? dm.y.mean() : 0.0;
    const double p = std::clamp(frac, 1e-6, 1.0 - 1e-6);
    m.bias = std::log(p / (1.0 - p));
    m.tau = config.tau;
    m.regularizer = config.regularizer;
    m.intercept_only = true;
    m.metadata["n_labeled"] = std::to_string(dm.y.size());
    return m;
}

GateModel reverse_direction(GateModel m) {
    for (auto& w : m.weights) w = -w;
    return m;
}

WeightDiagnostic weight_diagnostic(const GateModel& m) {
    WeightDiagnostic out;
    const double zero_tol = m.regularizer == Regularizer::l1 ? 0.0 : 1e-10;
    for (std::size_t j = 0; j < m.weights.size(); ++j) {
        const double w = m.weights[j];
        WeightClass c = WeightClass::uninformative;
        if (std::abs(w) > zero_tol) c = w > 0 ? WeightClass::type_d_proxy : WeightClass::type_i_proxy;
        out.features.emplace_back(m.feature_names[j], c);
    }
    return out;
}

json to_json(const GateModel& m) {
    json j;
    j["feature_names"] = m.feature_names;
    j["weights"] = m.weights;
    j["bias"] = m.bias;
    j["tau"] = m.tau;
    j["regularizer"] = std::string(to_string(m.regularizer));
    j["chosen_c"] = m.chosen_c;
    j["nnz"] = m.nnz();
    j["intercept_only"] = m.intercept_only;
    j["selected"] = m.selected;
    j["standardizer"] = {{"mean", m.standardizer.mean}, {"sd", m.standardizer.sd}, {"dropped", m.standardizer.dropped}};
    json cv = json::array();
    for (const auto& r : m.cv_report) cv.push_back({{"c", r.c}, {"mean_log_loss", r.mean_log_loss}, {"folds_used", r.folds_used}});
    j["cv_report"] = cv;
    json diag = json::object();
    for (const auto& [name, cls] : weight_diagnostic(m).features) diag[name] = std::string(to_string(cls));
    j["diagnostic"] = diag;
    j["metadata"] = m.metadata;
    return j;
}

GateModel gate_from_json(const json& j) {
    try {
        GateModel m;
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.weights = j.at("weights").get<std::vector<double>>();
        m.bias = j.at("bias").get<double>();
        m.tau = j.at("tau").get<double>();
        m.regularizer = regularizer_from_string(j.at("regularizer").get<std::string>());
        m.chosen_c = j.value("chosen_c", 0.0);
        m.intercept_only = j.value("intercept_only", false);
        m.selected = j.value("selected", std::vector<std::string>{});
        const auto& s = j.at("standardizer");
        m.standardizer.names = m.feature_names;
        m.standardizer.mean = s.at("mean").get<std::vector<double>>();
        m.standardizer.sd = s.at("sd").get<std::vector<double>>();
        m.standardizer.dropped = s.value("dropped", std::vector<std::string>{});
        for (const auto& r : j.value("cv_report", json::array())) {
            m.cv_report.push_back({r.at("c").get<double>(), r.at("mean_log_loss").get<double>(), r.at("folds_used").get<std::size_t>()});
        }
        if (j.contains("metadata")) m.metadata = j["metadata"].get<std::map<std::string, std::string>>();
        const auto n = m.feature_names.size();
        if (m.weights.size() != n || m.standardizer.mean.size() != n || m.standardizer.sd.size() != n) {
            throw InvalidArgument("gate model: weights/standardizer length does not match feature_names");
        }
        if (!(m.tau > 0 && m.tau < 1)) throw InvalidArgument("gate model: tau must lie in (0, 1)");
        return m;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed gate model JSON: ") + e.what());
    }
}

} // namespace dial
