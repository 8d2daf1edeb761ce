#include "scratchq/evaluation.hpp"

#include "scratchq/error.hpp"
#include "scratchq/labeling.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

namespace scratchq {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::LengthMismatch, "inputs differ in length");
    }
    if (a.empty()) {
        throw Error(ErrorKind::EmptyInput, "metric of empty input");
    }
}

double sum_abs_error(std::span<const double> truth, std::span<const double> pred) {
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        sum += std::abs(truth[i] - pred[i]);
    }
    return sum;
}

} // namespace

double mae(std::span<const double> truth, std::span<const double> pred) {
    check_pair(truth, pred);
    return sum_abs_error(truth, pred) / static_cast<double>(truth.size());
}

double mape(std::span<const double> truth, std::span<const double> pred) {
    return mae(truth, pred) / kMaxPowerMw * 100.0;
}

double accuracy(std::span<const double> truth, std::span<const double> prob, double threshold) {
    check_pair(truth, prob);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool predicted = prob[i] >= threshold;
        const bool actual = truth[i] >= 0.5;
        correct += predicted == actual ? 1 : 0;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(truth.size());
}

NaiveBaseline NaiveBaseline::fit(std::span<const double> train_labels) {
    if (train_labels.empty()) {
        throw Error(ErrorKind::EmptyInput, "baseline needs at least one label");
    }
    return NaiveBaseline(mean_of(train_labels));
}

double to_vas_linear(double power_mw) {
    if (power_mw < 0.0) {
        throw Error(ErrorKind::NegativePower, "power " + std::to_string(power_mw) + " mW is negative");
    }
    return power_mw / 60.0;
}

double to_vas_sqrt(double power_mw) {
    if (power_mw < 0.0) {
        throw Error(ErrorKind::NegativePower, "power " + std::to_string(power_mw) + " mW is negative");
    }
    return 10.0 * std::sqrt(power_mw / kMaxPowerMw);
}

std::string_view to_string(VasMapping m) { return m == VasMapping::Linear ? "linear" : "sqrt"; }

VasMapping parse_vas_mapping(std::string_view s) {
    if (s == "linear") {
        return VasMapping::Linear;
    }
    if (s == "sqrt") {
        return VasMapping::Sqrt;
    }
    throw Error(ErrorKind::InvalidConfig, "unknown VAS mapping '" + std::string(s) + "'");
}

double to_vas(double power_mw, VasMapping mapping) {
    return mapping == VasMapping::Linear ? to_vas_linear(power_mw) : to_vas_sqrt(power_mw);
}

std::string_view to_string(StatMethod m) {
    switch (m) {
    case StatMethod::WilcoxonExact: return "wilcoxon-exact";
    case StatMethod::WilcoxonNormal: return "wilcoxon-normal";
    case StatMethod::Spearman: return "spearman";
    }
    return "";
}

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) {
            ++j;
        }
        // positions i..j-1 share the average of ranks i+1..j
        const double avg = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            ranks[order[k]] = avg;
        }
        i = j;
    }
    return ranks;
}

namespace {

// P(W+ <= w) under the null, by counting sign assignments. Ranks are doubled so
// tie-averaged half ranks become integers.
double wilcoxon_exact_cdf(std::span<const double> ranks, double w) {
    std::vector<long long> doubled(ranks.size());
    long long total = 0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        doubled[i] = std::llround(2.0 * ranks[i]);
        total += doubled[i];
    }
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    long long reach = 0;
    for (long long r : doubled) {
        for (long long s = reach; s >= 0; --s) {
            if (counts[static_cast<std::size_t>(s)] != 0.0) {
                counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
            }
        }
        reach += r;
    }
    const long long limit = std::llround(2.0 * w);
    double below = 0.0;
    for (long long s = 0; s <= std::min(limit, total); ++s) {
        below += counts[static_cast<std::size_t>(s)];
    }
    return below / std::ldexp(1.0, static_cast<int>(ranks.size()));
}

} // namespace

StatTestResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, WilcoxonMode mode) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::LengthMismatch, "paired samples differ in length");
    }
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) {
            diffs.push_back(d);
        }
    }
    if (diffs.empty()) {
        throw Error(ErrorKind::AllZeroDifferences, "every paired difference is zero");
    }
    const std::size_t n = diffs.size();
    if (n < 5) {
        throw Error(ErrorKind::TooFewPairs, std::to_string(n) + " non-zero differences, need at least 5");
    }
    std::vector<double> magnitudes(n);
    std::transform(diffs.begin(), diffs.end(), magnitudes.begin(), [](double d) { return std::abs(d); });
    const std::vector<double> ranks = average_ranks(magnitudes);
    double w_plus = 0.0;
    double w_minus = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        (diffs[i] > 0.0 ? w_plus : w_minus) += ranks[i];
    }
    StatTestResult result;
    result.statistic = std::min(w_plus, w_minus);
    result.n = n;

    const bool exact = mode == WilcoxonMode::Exact || (mode == WilcoxonMode::Auto && n <= kWilcoxonExactMaxN);
    if (exact) {
        result.method = StatMethod::WilcoxonExact;
        result.p_value = std::min(1.0, 2.0 * wilcoxon_exact_cdf(ranks, result.statistic));
        return result;
    }

    const double nd = static_cast<double>(n);
    const double mean = nd * (nd + 1.0) / 4.0;
    double tie_term = 0.0;
    std::vector<double> sorted = magnitudes;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && sorted[j] == sorted[i]) {
            ++j;
        }
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    const double variance = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
    result.method = StatMethod::WilcoxonNormal;
    if (variance <= 0.0) {
        result.p_value = 1.0;
        return result;
    }
    // W <= mean, so the continuity correction moves it half a unit toward the mean.
    const double z = std::min(0.0, result.statistic - mean + 0.5) / std::sqrt(variance);
    const boost::math::normal_distribution<double> standard;
    result.p_value = std::min(1.0, 2.0 * boost::math::cdf(standard, z));
    return result;
}

StatTestResult spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw Error(ErrorKind::LengthMismatch, "Spearman inputs differ in length");
    }
    const std::size_t n = x.size();
    if (n < 3) {
        throw Error(ErrorKind::TooFewPairs, "Spearman needs at least 3 pairs");
    }
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double mx = mean_of(rx);
    const double my = mean_of(ry);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw Error(ErrorKind::ConstantInput, "rank correlation undefined for constant input");
    }
    StatTestResult result;
    result.method = StatMethod::Spearman;
    result.n = n;
    result.statistic = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double rho = result.statistic;
    if (std::abs(rho) >= 1.0 - 1e-15) {
        result.p_value = 0.0;
        return result;
    }
    const double df = static_cast<double>(n - 2);
    const double t = rho * std::sqrt(df / (1.0 - rho * rho));
    const boost::math::students_t_distribution<double> dist(df);
    result.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
    return result;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) {
        throw Error(ErrorKind::ConstantInput, "cannot fit a line to constant x");
    }
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    return fit;
}

double mean_of(std::span<const double> v) {
    if (v.empty()) {
        throw Error(ErrorKind::EmptyInput, "mean of empty input");
    }
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(std::span<const double> v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) {
        ss += (x - m) * (x - m);
    }
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<Fold> loso_split(std::span<const std::string> participants) {
    const std::set<std::string> ids(participants.begin(), participants.end());
    if (ids.size() < 2) {
        throw Error(ErrorKind::SingleParticipant, "LOSO needs at least two participants");
    }
    std::vector<Fold> folds;
    for (const auto& id : ids) {
        Fold fold;
        fold.held_out = id;
        for (std::size_t i = 0; i < participants.size(); ++i) {
            (participants[i] == id ? fold.test : fold.train).push_back(i);
        }
        folds.push_back(std::move(fold));
    }
    return folds;
}

namespace {

Dataset to_dataset(const FeatureTable& table, const MinMaxScaler& scaler) {
    Dataset ds;
    ds.features = table.matrix();
    for (Eigen::Index r = 0; r < ds.features.rows(); ++r) {
        Eigen::RowVectorXd row = ds.features.row(r);
        scaler.transform_in_place(std::span<double>(row.data(), static_cast<std::size_t>(row.size())));
        ds.features.row(r) = row;
    }
    ds.targets = Eigen::Map<const Eigen::VectorXd>(table.labels.data(), static_cast<Eigen::Index>(table.labels.size()));
    return ds;
}

MinMaxScaler fit_scaler(const FeatureTable& table) {
    if (table.rows() == 0) {
        throw Error(ErrorKind::EmptyTrainingSet, "cannot fit a scaler on zero rows");
    }
    const auto m = table.matrix();
    std::vector<double> mins(table.dims);
    std::vector<double> maxs(table.dims);
    for (std::size_t c = 0; c < table.dims; ++c) {
        mins[c] = m.col(static_cast<Eigen::Index>(c)).minCoeff();
        maxs[c] = m.col(static_cast<Eigen::Index>(c)).maxCoeff();
    }
    return MinMaxScaler(std::move(mins), std::move(maxs));
}

MetricSummary summarize(std::span<const double> v) {
    MetricSummary s;
    if (v.empty()) {
        return s;
    }
    s.mean = mean_of(v);
    s.sd = stddev_of(v);
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    return s;
}

} // namespace

FoldReport run_fold(const FeatureTable& table, const Fold& fold, const MlpConfig& config) {
    FoldReport report;
    report.held_out = fold.held_out;
    std::set<std::string> train_ids;
    for (std::size_t i : fold.train) {
        if (table.participants[i] == fold.held_out) {
            throw Error(ErrorKind::InvalidConfig, "training rows include held-out participant " + fold.held_out);
        }
        train_ids.insert(table.participants[i]);
    }
    for (std::size_t i : fold.test) {
        if (table.participants[i] != fold.held_out) {
            throw Error(ErrorKind::InvalidConfig, "test rows include participant " + table.participants[i]);
        }
    }
    report.train_participants.assign(train_ids.begin(), train_ids.end());

    const FeatureTable train_table = table.subset(fold.train);
    const FeatureTable test_table = table.subset(fold.test);
    const MinMaxScaler scaler = fit_scaler(train_table);
    report.scaler_mins = scaler.mins();
    report.scaler_maxs = scaler.maxs();

    MlpConfig fold_config = config;
    fold_config.layer_sizes.front() = table.dims;
    const Dataset train_ds = to_dataset(train_table, scaler);
    const Dataset test_ds = to_dataset(test_table, scaler);
    const TrainResult trained = train(fold_config, train_ds);
    report.final_train_loss = trained.history.empty() ? 0.0 : trained.history.back().train_loss;

    const Eigen::VectorXd pred = predict_rows(trained.network, test_ds.features);
    report.n_train = train_table.rows();
    report.n_test = test_table.rows();
    report.labels = test_table.labels;
    report.predictions.assign(pred.data(), pred.data() + pred.size());
    report.activities = test_table.activities;
    report.window_starts = test_table.window_starts;

    if (table.task == Task::Intensity) {
        report.mae = mae(report.labels, report.predictions);
        report.mape = mape(report.labels, report.predictions);
        const double baseline = NaiveBaseline::fit(train_table.labels).predict();
        const std::vector<double> constant(report.labels.size(), baseline);
        report.baseline_mae = mae(report.labels, constant);
        std::vector<double> lin_t, lin_p, sq_t, sq_p;
        for (std::size_t i = 0; i < report.labels.size(); ++i) {
            // Negative regressions are floored at 0 mW before mapping onto the 0-10 scale.
            const double truth = std::max(0.0, report.labels[i]);
            const double guess = std::max(0.0, report.predictions[i]);
            lin_t.push_back(to_vas_linear(truth));
            lin_p.push_back(to_vas_linear(guess));
            sq_t.push_back(to_vas_sqrt(truth));
            sq_p.push_back(to_vas_sqrt(guess));
        }
        report.mae_vas_linear = mae(lin_t, lin_p);
        report.mae_vas_sqrt = mae(sq_t, sq_p);
    } else {
        report.accuracy = accuracy(report.labels, report.predictions);
    }
    return report;
}

bool LosoReport::ok() const {
    return std::none_of(folds.begin(), folds.end(), [](const FoldReport& f) { return f.error.has_value(); });
}

LosoReport run_loso(const FeatureTable& full_table, const LosoOptions& options) {
    full_table.validate();
    const FeatureTable table = options.ablation == Ablation::Both
                                   ? full_table
                                   : full_table.select_columns(ablation_columns(full_table.task, options.ablation));
    const std::vector<Fold> folds = loso_split(table.participants);

    LosoReport report;
    report.task = table.task;
    report.ablation = options.ablation;
    report.folds.resize(folds.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t f = next++; f < folds.size(); f = next++) {
            try {
                report.folds[f] = run_fold(table, folds[f], options.config);
            } catch (const std::exception& e) {
                report.folds[f] = FoldReport{};
                report.folds[f].held_out = folds[f].held_out;
                report.folds[f].error = e.what();
            }
        }
    };
    const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, folds.size());
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    std::vector<double> maes, mapes, vas_lin, vas_sqrt, base, accs;
    std::map<std::string, std::pair<std::size_t, std::vector<double>>> interactions;
    for (const auto& fold : report.folds) {
        if (fold.error || fold.n_test == 0) {
            continue;
        }
        if (table.task == Task::Intensity) {
            maes.push_back(fold.mae);
            mapes.push_back(fold.mape);
            vas_lin.push_back(fold.mae_vas_linear);
            vas_sqrt.push_back(fold.mae_vas_sqrt);
            base.push_back(fold.baseline_mae);
        } else {
            accs.push_back(fold.accuracy);
            std::map<std::string, std::pair<std::size_t, std::size_t>> per_fold;
            for (std::size_t i = 0; i < fold.n_test; ++i) {
                auto& [n, correct] = per_fold[fold.activities[i]];
                ++n;
                correct += ((fold.predictions[i] >= 0.5) == (fold.labels[i] >= 0.5)) ? 1 : 0;
            }
            for (const auto& [activity, nc] : per_fold) {
                auto& entry = interactions[activity];
                entry.first += nc.first;
                entry.second.push_back(100.0 * static_cast<double>(nc.second) / static_cast<double>(nc.first));
            }
        }
    }
    report.mae = summarize(maes);
    report.mape = summarize(mapes);
    report.mae_vas_linear = summarize(vas_lin);
    report.mae_vas_sqrt = summarize(vas_sqrt);
    report.baseline_mae = summarize(base);
    report.accuracy = summarize(accs);
    for (const auto& [activity, entry] : interactions) {
        report.per_interaction.push_back({activity, entry.first, mean_of(entry.second)});
    }
    return report;
}

} // namespace scratchq
