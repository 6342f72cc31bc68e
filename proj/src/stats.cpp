#include "dial/stats.hpp"

#include "dial/common.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace dial::stats {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw InvalidArgument("correlation inputs differ in length (" + std::to_string(x.size()) + " vs " +
                              std::to_string(y.size()) + ")");
    }
    if (x.size() < 3) throw InvalidArgument("correlation needs at least 3 pairs, got " + std::to_string(x.size()));
}

// Pearson on raw vectors; NaN if either is constant.
double pearson_raw(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return kNaN;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double stat_raw(CorrKind kind, std::span<const double> x, std::span<const double> y) {
    if (kind == CorrKind::pearson) return pearson_raw(x, y);
    const auto rx = average_ranks(x), ry = average_ranks(y);
    return pearson_raw(rx, ry);
}

CorrReport finish(double rho, std::size_t n) {
    CorrReport r;
    r.n = n;
    r.rho = rho;
    r.defined = !std::isnan(rho);
    if (!r.defined) return r;
    const double df = static_cast<double>(n) - 2.0;
    if (std::abs(rho) >= 1.0) {
        r.p_value = 0.0;
    } else {
        const double t = rho * std::sqrt(df / (1.0 - rho * rho));
        boost::math::students_t dist(df);
        r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    }
    r.p_approximate = n < 10;
    return r;
}

double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

nlohmann::ordered_json num_or_null(double v) { return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v); }

} // namespace

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

CorrReport spearman(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    return finish(stat_raw(CorrKind::spearman, x, y), x.size());
}

CorrReport pearson(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    return finish(pearson_raw(x, y), x.size());
}

CorrReport correlation(CorrKind kind, std::span<const double> x, std::span<const double> y) {
    return kind == CorrKind::spearman ? spearman(x, y) : pearson(x, y);
}

std::pair<double, double> bootstrap_ci(std::span<const double> x, std::span<const double> y, CorrKind kind,
                                       std::size_t b, std::uint64_t seed) {
    check_pair(x, y);
    if (b < 100) throw InvalidArgument("bootstrap needs at least 100 resamples");
    const std::size_t n = x.size();
    std::vector<double> stats;
    stats.reserve(b);
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < b; ++i) {
        std::mt19937_64 rng(derive_seed(seed, "bootstrap", i));
        for (std::size_t k = 0; k < n; ++k) {
            const auto pick = static_cast<std::size_t>(rng() % n);
            xs[k] = x[pick];
            ys[k] = y[pick];
        }
        const double s = stat_raw(kind, xs, ys);
        if (!std::isnan(s)) stats.push_back(s);
    }
    if (stats.empty()) throw Error("every bootstrap resample produced an undefined correlation");
    return {percentile(stats, 0.025), percentile(stats, 0.975)};
}

CorrReport correlate_with_ci(CorrKind kind, std::span<const double> x, std::span<const double> y, std::size_t b,
                             std::uint64_t seed) {
    CorrReport r = correlation(kind, x, y);
    if (!r.defined) return r;
    const auto [lo, hi] = bootstrap_ci(x, y, kind, b, seed);
    r.ci_low = std::min(lo, r.rho);
    r.ci_high = std::max(hi, r.rho);
    return r;
}

std::string_view to_string(NormScheme s) {
    switch (s) {
    case NormScheme::S1_per_cell: return "S1_per_cell";
    case NormScheme::S2_per_backbone: return "S2_per_backbone";
    case NormScheme::S3_per_environment: return "S3_per_environment";
    }
    return "S1_per_cell";
}

std::vector<double> quantile_normalize(std::span<const double> values, std::span<const CellKey> keys, NormScheme scheme) {
    if (values.size() != keys.size()) throw InvalidArgument("quantile_normalize: values and keys differ in length");
    std::map<CellKey, std::vector<std::size_t>> pools;
    for (std::size_t i = 0; i < values.size(); ++i) {
        CellKey k = keys[i];
        if (k.environment.empty() || k.config.empty()) throw InvalidArgument("quantile_normalize: empty cell key component");
        if (scheme == NormScheme::S2_per_backbone) k.environment.clear();
        if (scheme == NormScheme::S3_per_environment) k.config.clear();
        pools[k].push_back(i);
    }
    std::vector<double> out(values.size());
    for (const auto& [key, idx] : pools) {
        std::vector<double> pool;
        for (auto i : idx) pool.push_back(values[i]);
        const auto ranks = average_ranks(pool);
        const double n = static_cast<double>(pool.size());
        for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = (ranks[k] - 0.5) / n;
    }
    return out;
}

std::vector<TransformRow> transform_suite(std::span<const double> sigma, std::span<const double> u,
                                          const TransformSpec& spec) {
    check_pair(sigma, u);
    if (!(spec.scale_t > 0)) throw InvalidArgument("transform_suite: T must be positive");
    if (!(spec.log_offset > 0)) throw InvalidArgument("transform_suite: log offset must be positive");
    for (double s : sigma) {
        if (s < 0) throw InvalidArgument("transform_suite: sigma must be nonnegative for power and log transforms");
    }
    auto row = [&](std::string name, const std::vector<double>& s, const std::vector<double>& v) {
        return TransformRow{std::move(name), stat_raw(CorrKind::spearman, s, v), stat_raw(CorrKind::pearson, s, v)};
    };
    const std::vector<double> s0(sigma.begin(), sigma.end()), u0(u.begin(), u.end());
    auto map = [&](auto f) {
        std::vector<double> out;
        for (double s : s0) out.push_back(f(s));
        return out;
    };
    std::vector<TransformRow> rows;
    rows.push_back(row("raw", s0, u0));
    rows.push_back(row("sigma^0.5", map([](double s) { return std::sqrt(s); }), u0));
    rows.push_back(row("sigma^2", map([](double s) { return s * s; }), u0));
    std::ostringstream logname, tname, uname;
    logname << "log(sigma+" << spec.log_offset << ")";
    rows.push_back(row(logname.str(), map([&](double s) { return std::log(s + spec.log_offset); }), u0));
    tname << "sigma/" << spec.scale_t;
    rows.push_back(row(tname.str(), map([&](double s) { return s / spec.scale_t; }), u0));
    std::vector<double> us;
    for (double v : u0) us.push_back(spec.u_scale * v);
    uname << spec.u_scale << "*U";
    rows.push_back(row(uname.str(), s0, us));
    return rows;
}

TemporalSplit temporal_split_rho(std::span<const StepRecord> records) {
    std::vector<const StepRecord*> labeled;
    for (const auto& r : records) {
        if (r.utility_label) labeled.push_back(&r);
    }
    if (labeled.empty()) throw InvalidArgument("temporal split: no labeled records");
    std::vector<double> steps;
    for (auto* r : labeled) steps.push_back(r->step_index);
    std::sort(steps.begin(), steps.end());
    const std::size_t m = steps.size();
    const double median = m % 2 ? steps[m / 2] : 0.5 * (steps[m / 2 - 1] + steps[m / 2]);
    std::vector<double> es, el, ls, ll;
    for (auto* r : labeled) {
        auto& s = r->step_index <= median ? es : ls;
        auto& l = r->step_index <= median ? el : ll;
        s.push_back(r->signal);
        l.push_back(*r->utility_label);
    }
    if (es.size() < 3 || ls.size() < 3) {
        throw InvalidArgument("temporal split: bucket too small (early " + std::to_string(es.size()) + ", late " +
                              std::to_string(ls.size()) + "; need 3 each)");
    }
    TemporalSplit out;
    out.median_step = median;
    out.early = spearman(es, el);
    out.late = spearman(ls, ll);
    out.delta = out.late.rho - out.early.rho;
    return out;
}

double predicted_rho(double alpha, double beta, double p_i) {
    if (!(alpha > 0 && beta > 0)) throw InvalidArgument("predicted_rho: alpha and beta must be positive");
    if (!(p_i >= 0 && p_i <= 1)) throw InvalidArgument("predicted_rho: p_i must lie in [0, 1]");
    return beta - (alpha + beta) * p_i;
}

double crossing_point(double alpha, double beta) {
    if (!(alpha > 0 && beta > 0)) throw InvalidArgument("crossing_point: alpha and beta must be positive");
    return beta / (alpha + beta);
}

SimpsonReport simpson_decomposition(std::span<const double> signal, std::span<const double> utility,
                                    std::span<const LatentType> types) {
    if (signal.size() != utility.size() || signal.size() != types.size()) {
        throw InvalidArgument("simpson_decomposition: inputs differ in length");
    }
    std::vector<double> si, ui, sd, ud;
    for (std::size_t k = 0; k < signal.size(); ++k) {
        const bool is_i = types[k] == LatentType::intervention_unsuitable;
        (is_i ? si : sd).push_back(signal[k]);
        (is_i ? ui : ud).push_back(utility[k]);
    }
    if (si.size() < 3 || sd.size() < 3) {
        throw InvalidArgument("simpson_decomposition: need at least 3 rows of each type (I " + std::to_string(si.size()) +
                              ", D " + std::to_string(sd.size()) + ")");
    }
    return {spearman(si, ui), spearman(sd, ud), spearman(signal, utility)};
}

SimpsonReport simpson_decomposition(std::span<const StepRecord> records) {
    std::vector<double> s, u;
    std::vector<LatentType> t;
    for (const auto& r : records) {
        if (!r.utility_label) continue;
        if (!r.latent_type_debug) {
            throw InvalidArgument("simpson_decomposition: records lack latent types (only simulator data carries them)");
        }
        s.push_back(r.signal);
        u.push_back(*r.utility_label);
        t.push_back(*r.latent_type_debug);
    }
    return simpson_decomposition(s, u, t);
}

double auc(std::span<const int> labels, std::span<const double> scores) {
    if (labels.size() != scores.size()) throw InvalidArgument("auc: labels and scores differ in length");
    std::size_t pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw InvalidArgument("auc: labels must be 0 or 1");
        pos += static_cast<std::size_t>(l);
    }
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw InvalidArgument("auc: both classes must be present");
    const auto ranks = average_ranks(scores);
    double rank_sum = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) rank_sum += ranks[i];
    }
    const double p = static_cast<double>(pos), q = static_cast<double>(neg);
    return (rank_sum - p * (p + 1) / 2) / (p * q);
}

std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z) {
    if (n == 0) throw InvalidArgument("wilson_interval: n must be positive");
    if (k > n) throw InvalidArgument("wilson_interval: k exceeds n");
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double z2 = z * z;
    const double denom = 1 + z2 / nn;
    const double centre = (p + z2 / (2 * nn)) / denom;
    const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / denom;
    // Exact endpoints at the boundaries; the closed form only reaches them up to rounding.
    return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

ReportRow report_row(std::string group, std::span<const double> x, std::span<const double> y, std::size_t b,
                     std::uint64_t seed) {
    const auto s = correlate_with_ci(CorrKind::spearman, x, y, b, seed);
    const auto p = pearson(x, y);
    return {std::move(group), s.n, s.rho, p.rho, s.p_value, s.ci_low, s.ci_high};
}

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows,
                      const std::map<std::string, std::string>& provenance) {
    for (const auto& [k, v] : provenance) out << "# " << k << ": " << v << '\n';
    out << "group,n,spearman,pearson,p_value,ci_low,ci_high\n";
    for (const auto& r : rows) {
        out << r.group << ',' << r.n << ',' << fmt(r.spearman) << ',' << fmt(r.pearson) << ',' << fmt(r.p_value) << ','
            << fmt(r.ci_low) << ',' << fmt(r.ci_high) << '\n';
    }
}

nlohmann::ordered_json report_json(const std::vector<ReportRow>& rows) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        arr.push_back({{"group", r.group},
                       {"n", r.n},
                       {"spearman", num_or_null(r.spearman)},
                       {"pearson", num_or_null(r.pearson)},
                       {"p_value", num_or_null(r.p_value)},
                       {"ci_low", num_or_null(r.ci_low)},
                       {"ci_high", num_or_null(r.ci_high)}});
    }
    return arr;
}

} // namespace dial::stats
