#pragma once

#include "scratchq/feature_table.hpp"
#include "scratchq/mlp.hpp"
#include "scratchq/spectral.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scratchq {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double mae(std::span<const double> truth, std::span<const double> pred);

/// Absolute error as a percentage of the fixed 600 mW scale maximum.
double mape(std::span<const double> truth, std::span<const double> pred);

/// Percentage of predictions on the correct side of `threshold`.
double accuracy(std::span<const double> truth, std::span<const double> prob, double threshold = 0.5);

/// Constant predictor returning the mean training label.
class NaiveBaseline {
public:
    static NaiveBaseline fit(std::span<const double> train_labels);
    double predict() const noexcept { return mean_; }

private:
    explicit NaiveBaseline(double mean) : mean_(mean) {}
    double mean_;
};

/// 0-600 mW onto 0-10 by dividing by 60.
double to_vas_linear(double power_mw);
/// 0-600 mW onto 0-10 as 10 * sqrt(p / 600).
double to_vas_sqrt(double power_mw);

enum class VasMapping { Linear, Sqrt };
std::string_view to_string(VasMapping m);
VasMapping parse_vas_mapping(std::string_view s);
double to_vas(double power_mw, VasMapping mapping);

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

enum class StatMethod { WilcoxonExact, WilcoxonNormal, Spearman };
std::string_view to_string(StatMethod m);

struct StatTestResult {
    double statistic = 0.0; // W = min(W+, W-) or Spearman rho
    double p_value = 1.0;
    std::size_t n = 0;
    StatMethod method = StatMethod::Spearman;
};

/// Tie-averaged 1-based ranks.
std::vector<double> average_ranks(std::span<const double> values);

enum class WilcoxonMode { Auto, Exact, Normal };

inline constexpr std::size_t kWilcoxonExactMaxN = 25;

/// Paired two-sided Wilcoxon signed-rank test. Zero differences are dropped.
/// Auto uses the exact null distribution for n <= 25 and the tie- and
/// continuity-corrected normal approximation above that.
StatTestResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    WilcoxonMode mode = WilcoxonMode::Auto);

/// Spearman rank correlation with a two-sided Student-t p-value on n - 2 df.
StatTestResult spearman(std::span<const double> x, std::span<const double> y);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

double mean_of(std::span<const double> v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev_of(std::span<const double> v);

// ---------------------------------------------------------------------------
// Leave-one-subject-out cross-validation
// ---------------------------------------------------------------------------

struct Fold {
    std::string held_out;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// One fold per distinct participant, ordered by participant id.
std::vector<Fold> loso_split(std::span<const std::string> participants);

struct InteractionAccuracy {
    std::string activity;
    std::size_t samples = 0;
    double accuracy = 0.0; // mean over folds containing the activity, percent
};

struct FoldReport {
    std::string held_out;
    std::vector<std::string> train_participants;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    double mae = 0.0;
    double mape = 0.0;
    double mae_vas_linear = 0.0;
    double mae_vas_sqrt = 0.0;
    double baseline_mae = 0.0;
    double accuracy = 0.0;
    std::vector<double> labels;
    std::vector<double> predictions;
    std::vector<std::string> activities;
    std::vector<double> window_starts;
    std::vector<double> scaler_mins;
    std::vector<double> scaler_maxs;
    double final_train_loss = 0.0;
    std::optional<std::string> error;
};

struct MetricSummary {
    double mean = 0.0;
    double sd = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct LosoReport {
    Task task = Task::Intensity;
    Ablation ablation = Ablation::Both;
    std::vector<FoldReport> folds;
    MetricSummary mae;
    MetricSummary mape;
    MetricSummary mae_vas_linear;
    MetricSummary mae_vas_sqrt;
    MetricSummary baseline_mae;
    MetricSummary accuracy;
    std::vector<InteractionAccuracy> per_interaction;

    bool ok() const;
};

struct LosoOptions {
    MlpConfig config;
    Ablation ablation = Ablation::Both;
    std::size_t jobs = 1;
};

/// Trains and evaluates one fold: scaler and model are fitted on the training
/// rows only. Throws if a training row belongs to the held-out participant.
FoldReport run_fold(const FeatureTable& table, const Fold& fold, const MlpConfig& config);

/// Full LOSO run. Folds run on up to `jobs` threads; per-fold failures are
/// recorded in the fold report rather than thrown.
LosoReport run_loso(const FeatureTable& table, const LosoOptions& options);

} // namespace scratchq
