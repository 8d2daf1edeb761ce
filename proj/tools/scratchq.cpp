#include "scratchq/error.hpp"
#include "scratchq/evaluation.hpp"
#include "scratchq/io.hpp"
#include "scratchq/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <tuple>

using namespace scratchq;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kInput = 2, kNumeric = 3, kFoldFailure = 4, kArtifact = 5 };

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::NonFiniteLoss: return kNumeric;
    case ErrorKind::ChecksumFailure:
    case ErrorKind::VersionUnsupported:
    case ErrorKind::TaskMismatch: return kArtifact;
    default: return kInput;
    }
}

struct ModelFlags {
    std::string preset;
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
    cmd->add_option("--preset", f.preset, "Base hyperparameters: intensity or detection (default: the task's)");
    cmd->add_option("--config", f.config_path, "JSON file with MlpConfig keys applied over the preset");
    cmd->add_option("--override", f.overrides, "key=value applied last; value is JSON or a bare string")
        ->take_all();
    cmd->add_option("--seed", f.seed, "Training seed (default: $SCRATCHQ_SEED, then the preset's)");
}

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("SCRATCHQ_SEED");
    if (s == nullptr || *s == '\0') {
        return std::nullopt;
    }
    try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used);
        if (used != std::strlen(s)) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidConfig, std::string("SCRATCHQ_SEED is not an unsigned integer: ") + s);
    }
}

// Preset, then config file, then overrides, then seed. Everything is checked
// before any data is read.
MlpConfig resolve_config(Task task, const ModelFlags& f) {
    MlpConfig c = f.preset.empty() ? preset_for(task) : preset_for(parse_task(f.preset));
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) {
            throw Error(ErrorKind::MissingFile, f.config_path + " does not exist");
        }
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::InvalidConfig, f.config_path + ": " + e.what());
        }
        c = config_from_json(j, c);
    }
    json patch = json::object();
    for (const auto& o : f.overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw Error(ErrorKind::InvalidConfig, "override '" + o + "' is not key=value");
        }
        const std::string key = o.substr(0, eq);
        const std::string value = o.substr(eq + 1);
        try {
            patch[key] = json::parse(value);
        } catch (const json::exception&) {
            patch[key] = value;
        }
    }
    c = config_from_json(patch, c);
    if (f.seed) {
        c.seed = *f.seed;
    } else if (auto s = env_seed()) {
        c.seed = *s;
    }
    c.validate();
    return c;
}

std::string csv_text(const std::string& s) {
    if (s.find_first_of(",\n\r") != std::string::npos) {
        throw Error(ErrorKind::InvalidConfig, "'" + s + "' contains a comma or newline");
    }
    return s;
}

std::string opt_int(const std::optional<int>& v) {
    return v ? std::to_string(*v) : std::string();
}

std::optional<int> parse_opt_int(const CsvTable& csv, std::size_t row, std::size_t col) {
    const std::string& s = csv.rows[row][col];
    if (s.empty()) {
        return std::nullopt;
    }
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used == s.size()) {
            return v;
        }
    } catch (const std::exception&) {
    }
    csv.fail_row(row, "'" + s + "' is not an integer");
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
    }
    return out;
}

// ---------------------------------------------------------------------------
// label
// ---------------------------------------------------------------------------

struct LabelArgs {
    std::vector<std::string> tablets;
    std::vector<std::string> manifests;
    std::string participant;
    double block_length_s = 0.0;
    std::string out;
};

int cmd_label(const LabelArgs& a) {
    std::vector<LabelRecord> records;
    const LabelingOptions opts;
    for (const auto& path : a.tablets) {
        const ContactTrace trace = read_tablet_csv(path);
        if (trace.size() == 0) {
            throw Error(ErrorKind::EmptyInput, path + ": no tablet samples");
        }
        const std::string participant = a.participant.empty() ? fs::path(path).stem().string() : a.participant;
        const std::string activity = fs::path(path).stem().string();
        const double length = a.block_length_s > 0.0 ? a.block_length_s : trace.block_length_s;
        const double end = trace.start_s + trace.block_length_s;
        for (double begin = trace.start_s; begin + opts.window_s <= end + 1e-9; begin += length) {
            const ContactTrace block = slice_trace(trace, begin, std::min(begin + length, end));
            for (const auto& l : label_block(block, opts)) {
                records.push_back({csv_text(participant), l, csv_text(activity)});
            }
        }
    }
    for (const auto& path : a.manifests) {
        const Session s = load_session(load_manifest(path));
        if (!s.tablet) {
            throw Error(ErrorKind::SchemaMismatch, path + ": manifest has no tablet stream");
        }
        if (s.manifest.annotations.empty()) {
            for (const auto& l : label_block(*s.tablet, opts)) {
                records.push_back({s.manifest.participant_id, l, ""});
            }
        }
        for (const auto& ann : s.manifest.annotations) {
            if (!ann.tablet) {
                continue;
            }
            for (const auto& l : label_block(slice_trace(*s.tablet, ann.start_s, ann.end_s), opts)) {
                records.push_back({s.manifest.participant_id, l, ann.activity});
            }
        }
    }
    write_labels_csv(a.out, records);
    const auto valid = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.label.valid; });
    std::map<std::string, std::size_t> reasons;
    for (const auto& r : records) {
        if (!r.label.valid) {
            ++reasons[std::string(to_string(r.label.reason))];
        }
    }
    std::cout << "valid " << valid << " invalid " << records.size() - static_cast<std::size_t>(valid) << '\n';
    for (const auto& [reason, n] : reasons) {
        std::cout << "  " << reason << ' ' << n << '\n';
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// featurize
// ---------------------------------------------------------------------------

struct FeaturizeArgs {
    std::vector<std::string> manifests;
    std::string task;
    std::string out;
    std::string labels_out;
    bool keep_unlabelled = false;
};

int cmd_featurize(const FeaturizeArgs& a) {
    const Task task = parse_task(a.task);
    FeatureTable table;
    table.task = task;
    table.dims = feature_layout(task).size();
    std::vector<LabelRecord> labels;
    std::size_t rejected = 0;
    for (const auto& path : a.manifests) {
        const Session s = load_session(load_manifest(path));
        const SessionWindows sw = session_windows(s, task, {}, a.keep_unlabelled);
        rejected += sw.rejected;
        labels.insert(labels.end(), sw.tablet_labels.begin(), sw.tablet_labels.end());
        for (const auto& lw : sw.windows) {
            if (!lw.label && !a.keep_unlabelled) {
                continue;
            }
            table.append(lw.window.participant_id(), lw.window.activity(), lw.window.start_time(),
                         lw.label ? *lw.label : kMissing, extract_features(lw.window, task));
        }
    }
    write_features_csv(a.out, table);
    if (!a.labels_out.empty()) {
        write_labels_csv(a.labels_out, labels);
    }
    std::cout << "windows " << table.rows() << " dims " << table.dims << " rejected " << rejected << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

FeatureTable labelled_features(const std::string& path, Task task) {
    FeatureTable table = read_features_csv(path);
    if (table.task != task) {
        throw Error(ErrorKind::SchemaMismatch, path + " holds " + std::string(to_string(table.task)) +
                                                   " features, --task is " + std::string(to_string(task)));
    }
    for (std::size_t i = 0; i < table.rows(); ++i) {
        if (is_missing(table.labels[i])) {
            throw Error(ErrorKind::SchemaMismatch, path + ": row " + std::to_string(i + 1) + " has no label");
        }
    }
    if (table.rows() == 0) {
        throw Error(ErrorKind::EmptyTrainingSet, path + " has no rows");
    }
    return table;
}

struct TrainArgs {
    std::string features;
    std::string task;
    std::string out;
    std::string history;
    ModelFlags model;
};

int cmd_train(const TrainArgs& a) {
    const Task task = parse_task(a.task);
    MlpConfig config = resolve_config(task, a.model);
    const FeatureTable table = labelled_features(a.features, task);
    config.layer_sizes.front() = table.dims;
    config.validate();

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        rows.emplace_back(table.row(i).begin(), table.row(i).end());
    }
    const MinMaxScaler scaler = MinMaxScaler::fit(rows);
    Dataset ds;
    ds.features.resize(static_cast<Eigen::Index>(table.rows()), static_cast<Eigen::Index>(table.dims));
    ds.targets.resize(static_cast<Eigen::Index>(table.rows()));
    for (std::size_t i = 0; i < table.rows(); ++i) {
        const auto scaled = scaler.transform(rows[i]);
        for (std::size_t c = 0; c < table.dims; ++c) {
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = scaled[c];
        }
        ds.targets(static_cast<Eigen::Index>(i)) = table.labels[i];
    }
    TrainResult result = train(config, ds);
    ModelArtifact artifact{task, scaler, std::move(result.network)};
    save_model(a.out, artifact);
    const fs::path history = a.history.empty() ? fs::path(a.out + ".history.csv") : fs::path(a.history);
    write_history_csv(history, result.history);

    const Eigen::VectorXd pred = predict_rows(artifact.network, ds.features);
    const std::vector<double> p(pred.data(), pred.data() + pred.size());
    std::cout << "rows " << table.rows() << " final_loss " << format_double(result.history.back().train_loss);
    if (task == Task::Detection) {
        std::cout << " train_accuracy " << format_double(accuracy(table.labels, p));
    } else {
        std::cout << " train_mae " << format_double(mae(table.labels, p));
    }
    const auto bytes = encode_model(artifact);
    std::cout << " checksum " << std::hex << checksum(bytes) << std::dec << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// loso
// ---------------------------------------------------------------------------

struct LosoArgs {
    std::string features;
    std::string task;
    std::string ablation = "both";
    std::size_t jobs = 1;
    std::string out_dir;
    ModelFlags model;
};

void write_summary_row(std::ostream& out, const std::string& name, const MetricSummary& m) {
    out << name << ',' << format_double(m.mean) << ',' << format_double(m.sd) << ',' << format_double(m.min) << ','
        << format_double(m.max) << '\n';
}

int cmd_loso(const LosoArgs& a) {
    const Task task = parse_task(a.task);
    LosoOptions opts;
    opts.config = resolve_config(task, a.model);
    opts.ablation = parse_ablation(a.ablation);
    opts.jobs = std::max<std::size_t>(1, a.jobs);
    const FeatureTable table = labelled_features(a.features, task);
    const LosoReport report = run_loso(table, opts);
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);

    {
        auto out = open_output(dir / "loso_folds.csv");
        out << csv_preamble("loso-folds")
            << "held_out,n_train,n_test,mae_mw,mape_pct,mae_vas_linear,mae_vas_sqrt,baseline_mae_mw,accuracy_pct,"
               "final_train_loss,error\n";
        for (const auto& f : report.folds) {
            std::string err = f.error.value_or("");
            std::replace(err.begin(), err.end(), ',', ';');
            std::replace(err.begin(), err.end(), '\n', ' ');
            out << f.held_out << ',' << f.n_train << ',' << f.n_test << ',' << format_double(f.mae) << ','
                << format_double(f.mape) << ',' << format_double(f.mae_vas_linear) << ','
                << format_double(f.mae_vas_sqrt) << ',' << format_double(f.baseline_mae) << ','
                << format_double(f.accuracy) << ',' << format_double(f.final_train_loss) << ',' << err << '\n';
        }
    }
    {
        auto out = open_output(dir / "loso_summary.csv");
        out << csv_preamble("loso-summary") << "metric,mean,sd,min,max\n";
        if (task == Task::Intensity) {
            write_summary_row(out, "mae_mw", report.mae);
            write_summary_row(out, "mape_pct", report.mape);
            write_summary_row(out, "mae_vas_linear", report.mae_vas_linear);
            write_summary_row(out, "mae_vas_sqrt", report.mae_vas_sqrt);
            write_summary_row(out, "baseline_mae_mw", report.baseline_mae);
        } else {
            write_summary_row(out, "accuracy_pct", report.accuracy);
        }
    }
    if (task == Task::Detection) {
        auto out = open_output(dir / "loso_interactions.csv");
        out << csv_preamble("loso-interactions") << "activity,samples,accuracy_pct\n";
        for (const auto& ia : report.per_interaction) {
            out << ia.activity << ',' << ia.samples << ',' << format_double(ia.accuracy) << '\n';
        }
    }
    {
        auto out = open_output(dir / "loso_predictions.csv");
        out << csv_preamble("loso-predictions") << "participant,activity,window_start_s,label,prediction\n";
        for (const auto& f : report.folds) {
            for (std::size_t i = 0; i < f.n_test; ++i) {
                out << f.held_out << ',' << f.activities[i] << ',' << format_double(f.window_starts[i]) << ','
                    << format_double(f.labels[i]) << ',' << format_double(f.predictions[i]) << '\n';
            }
        }
    }

    std::cout << "task " << to_string(task) << " ablation " << to_string(opts.ablation) << " folds "
              << report.folds.size() << '\n';
    if (task == Task::Intensity) {
        std::cout << "mae_mw " << format_double(report.mae.mean) << " sd " << format_double(report.mae.sd)
                  << " mape_pct " << format_double(report.mape.mean) << " baseline_mae_mw "
                  << format_double(report.baseline_mae.mean) << '\n';
    } else {
        std::cout << "accuracy_pct " << format_double(report.accuracy.mean) << " sd "
                  << format_double(report.accuracy.sd) << '\n';
    }
    if (!report.ok()) {
        for (const auto& f : report.folds) {
            if (f.error) {
                std::cerr << "fold " << f.held_out << " failed: " << *f.error << '\n';
            }
        }
        return kFoldFailure;
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictArgs {
    std::string intensity_model;
    std::string detection_model;
    std::vector<std::string> manifests;
    std::string features;
    std::string vas = "linear";
    std::string out;
};

struct PredictRow {
    std::string participant;
    std::string activity;
    std::optional<int> set;
    std::optional<int> level;
    double window_start = 0.0;
    double label = kMissing;
    double prob = kMissing;
    double power = kMissing;
};

int cmd_predict(const PredictArgs& a) {
    if (a.intensity_model.empty() && a.detection_model.empty()) {
        throw Error(ErrorKind::InvalidConfig, "give --intensity-model and/or --detection-model");
    }
    if (a.manifests.empty() == a.features.empty()) {
        throw Error(ErrorKind::InvalidConfig, "give either --manifest or --features");
    }
    const VasMapping vas = parse_vas_mapping(a.vas);
    std::optional<ModelArtifact> intensity;
    std::optional<ModelArtifact> detection;
    if (!a.intensity_model.empty()) {
        intensity = load_model(a.intensity_model, Task::Intensity);
    }
    if (!a.detection_model.empty()) {
        detection = load_model(a.detection_model, Task::Detection);
    }

    std::vector<PredictRow> rows;
    for (const auto& path : a.manifests) {
        const Session s = load_session(load_manifest(path));
        const SessionWindows sw = session_windows(s, Task::Intensity, {}, true);
        for (const auto& lw : sw.windows) {
            PredictRow r{lw.window.participant_id(), lw.window.activity(), lw.set, lw.level, lw.window.start_time()};
            r.label = lw.label ? *lw.label : kMissing;
            if (intensity) {
                r.power = intensity->predict(extract_features(lw.window, Task::Intensity));
            }
            if (detection) {
                r.prob = detection->predict(extract_features(lw.window, Task::Detection));
            }
            rows.push_back(std::move(r));
        }
    }
    if (!a.features.empty()) {
        const FeatureTable table = read_features_csv(a.features);
        const auto* model = table.task == Task::Intensity ? (intensity ? &*intensity : nullptr)
                                                          : (detection ? &*detection : nullptr);
        if (model == nullptr) {
            throw Error(ErrorKind::TaskMismatch, a.features + " holds " + std::string(to_string(table.task)) +
                                                     " features but no matching model was given");
        }
        for (std::size_t i = 0; i < table.rows(); ++i) {
            PredictRow r{table.participants[i], table.activities[i], std::nullopt, std::nullopt,
                         table.window_starts[i], table.labels[i]};
            (table.task == Task::Intensity ? r.power : r.prob) = model->predict(table.row(i));
            rows.push_back(std::move(r));
        }
    }

    auto out = open_output(a.out);
    out << csv_preamble("predictions") << "participant,activity,set,level,window_start_s,label";
    if (detection) {
        out << ",scratch_prob";
    }
    out << ",power_mw,vas_units\n";
    for (const auto& r : rows) {
        out << r.participant << ',' << r.activity << ',' << opt_int(r.set) << ',' << opt_int(r.level) << ','
            << format_double(r.window_start) << ',' << format_double(r.label);
        if (detection) {
            out << ',' << format_double(r.prob);
        }
        const double vas_units = is_missing(r.power) ? kMissing : to_vas(std::max(0.0, r.power), vas);
        out << ',' << format_double(r.power) << ',' << format_double(vas_units) << '\n';
    }
    std::cout << "windows " << rows.size() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

struct StatsArgs {
    std::string input;
    std::string test;
    std::string value = "power_mw";
    bool normalize = false;
    std::string activity_prefix;
    std::string out;
};

int cmd_stats(const StatsArgs& a) {
    const CsvTable csv = read_csv(a.input, "predictions");
    const std::size_t cp = csv.column("participant");
    const std::size_t ca = csv.column("activity");
    const std::size_t cs = csv.column("set");
    const std::size_t cl = csv.column("level");
    const std::size_t cv = csv.column(a.value);

    // Mean value per (participant, set, level).
    std::map<std::tuple<std::string, int, int>, std::pair<double, std::size_t>> cells;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        if (!a.activity_prefix.empty() && csv.rows[r][ca].rfind(a.activity_prefix, 0) != 0) {
            continue;
        }
        const auto level = parse_opt_int(csv, r, cl);
        const auto set = parse_opt_int(csv, r, cs);
        const double v = parse_double_field(csv, r, cv, true);
        if (!level || is_missing(v)) {
            continue;
        }
        auto& cell = cells[{csv.rows[r][cp], set.value_or(0), *level}];
        cell.first += v;
        ++cell.second;
    }
    if (cells.empty()) {
        throw Error(ErrorKind::EmptyInput, a.input + ": no rows with a level and a '" + a.value + "' value");
    }
    std::map<std::pair<std::string, int>, std::map<int, double>> groups;
    std::set<int> levels;
    for (const auto& [key, cell] : cells) {
        const auto& [participant, set, level] = key;
        groups[{participant, set}][level] = cell.first / static_cast<double>(cell.second);
        levels.insert(level);
    }

    auto out = open_output(a.out);
    out << csv_preamble("stats") << "test,level_a,level_b,n,statistic,p_value,method\n";
    if (a.test == "wilcoxon") {
        const std::vector<int> lv(levels.begin(), levels.end());
        if (lv.size() < 2) {
            throw Error(ErrorKind::TooFewPairs, "wilcoxon needs at least two levels");
        }
        for (std::size_t i = 0; i + 1 < lv.size(); ++i) {
            std::vector<double> x, y;
            for (const auto& [key, by_level] : groups) {
                const auto lo = by_level.find(lv[i]);
                const auto hi = by_level.find(lv[i + 1]);
                if (lo != by_level.end() && hi != by_level.end()) {
                    x.push_back(lo->second);
                    y.push_back(hi->second);
                }
            }
            const StatTestResult res = wilcoxon_signed_rank(x, y);
            out << "wilcoxon," << lv[i] << ',' << lv[i + 1] << ',' << res.n << ',' << format_double(res.statistic)
                << ',' << format_double(res.p_value) << ',' << to_string(res.method) << '\n';
            std::cout << "levels " << lv[i] << "-" << lv[i + 1] << " n " << res.n << " W "
                      << format_double(res.statistic) << " p " << format_double(res.p_value) << '\n';
        }
    } else if (a.test == "spearman") {
        std::vector<double> x, y;
        for (const auto& [key, by_level] : groups) {
            double lo = 0.0, hi = 0.0;
            if (a.normalize) {
                lo = by_level.begin()->second;
                hi = lo;
                for (const auto& [level, v] : by_level) {
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            }
            for (const auto& [level, v] : by_level) {
                x.push_back(level);
                y.push_back(a.normalize ? (hi > lo ? (v - lo) / (hi - lo) : 0.0) : v);
            }
        }
        const StatTestResult res = spearman(x, y);
        out << "spearman,,," << res.n << ',' << format_double(res.statistic) << ',' << format_double(res.p_value)
            << ',' << to_string(res.method) << '\n';
        std::cout << "rho " << format_double(res.statistic) << " p " << format_double(res.p_value) << " n " << res.n
                  << '\n';
    } else {
        throw Error(ErrorKind::InvalidConfig, "--test must be wilcoxon or spearman");
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

double median_of(std::vector<double> v) {
    if (v.empty()) {
        return kMissing;
    }
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_report(const std::string& dir, double bin_width) {
    const fs::path root(dir);
    if (!fs::is_directory(root)) {
        throw Error(ErrorKind::MissingFile, dir + " is not a directory");
    }
    const fs::path labels_path = root / "labels.csv";
    const fs::path loso_path = root / "loso_predictions.csv";
    const fs::path pred_path = root / "predictions.csv";
    std::size_t written = 0;

    if (fs::exists(labels_path)) {
        const auto records = read_labels_csv(labels_path);
        struct Acc {
            std::size_t total = 0;
            std::vector<double> force, velocity, power;
        };
        std::map<std::string, Acc> by_activity;
        for (const auto& r : records) {
            auto& acc = by_activity[r.activity];
            ++acc.total;
            if (r.label.valid) {
                acc.force.push_back(r.label.mean_force);
                acc.velocity.push_back(r.label.mean_velocity);
                acc.power.push_back(r.label.power);
            }
        }
        auto out = open_output(root / "label_summary.csv");
        out << csv_preamble("label-summary")
            << "activity,windows,valid,mean_force_n,mean_velocity_mm_s,mean_power_mw,median_power_mw,sd_power_mw\n";
        for (const auto& [activity, acc] : by_activity) {
            const bool any = !acc.power.empty();
            out << activity << ',' << acc.total << ',' << acc.power.size() << ','
                << format_double(any ? mean_of(acc.force) : kMissing) << ','
                << format_double(any ? mean_of(acc.velocity) : kMissing) << ','
                << format_double(any ? mean_of(acc.power) : kMissing) << ',' << format_double(median_of(acc.power))
                << ',' << format_double(any ? stddev_of(acc.power) : kMissing) << '\n';
        }
        ++written;
    }

    if (fs::exists(loso_path)) {
        const CsvTable csv = read_csv(loso_path, "loso-predictions");
        const std::size_t cl = csv.column("label");
        const std::size_t cp = csv.column("prediction");
        std::map<long, std::pair<std::vector<double>, std::vector<double>>> bins;
        for (std::size_t r = 0; r < csv.rows.size(); ++r) {
            const double label = parse_double_field(csv, r, cl);
            const double pred = parse_double_field(csv, r, cp);
            auto& bin = bins[static_cast<long>(std::floor(label / bin_width))];
            bin.first.push_back(label);
            bin.second.push_back(pred);
        }
        auto out = open_output(root / "error_by_range.csv");
        out << csv_preamble("error-by-range") << "range_lo_mw,range_hi_mw,n,mae_mw,mean_prediction_mw\n";
        for (const auto& [b, lp] : bins) {
            out << format_double(static_cast<double>(b) * bin_width) << ','
                << format_double(static_cast<double>(b + 1) * bin_width) << ',' << lp.first.size() << ','
                << format_double(mae(lp.first, lp.second)) << ',' << format_double(mean_of(lp.second)) << '\n';
        }
        ++written;
    }

    if (fs::exists(pred_path)) {
        const CsvTable csv = read_csv(pred_path, "predictions");
        const std::size_t cp = csv.column("participant");
        const std::size_t cl = csv.column("level");
        const std::size_t clab = csv.column("label");
        std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_participant;
        for (std::size_t r = 0; r < csv.rows.size(); ++r) {
            const auto level = parse_opt_int(csv, r, cl);
            const double label = parse_double_field(csv, r, clab, true);
            if (!level || is_missing(label)) {
                continue;
            }
            auto& xy = by_participant[csv.rows[r][cp]];
            xy.first.push_back(2.0 * *level);
            xy.second.push_back(label);
        }
        auto out = open_output(root / "scale_fits.csv");
        out << csv_preamble("scale-fits") << "participant,n,slope_mw_per_unit,intercept_mw\n";
        std::vector<double> slopes, intercepts;
        for (const auto& [participant, xy] : by_participant) {
            const std::set<double> distinct(xy.first.begin(), xy.first.end());
            if (distinct.size() < 2) {
                continue;
            }
            const LineFit fit = fit_line(xy.first, xy.second);
            slopes.push_back(fit.slope);
            intercepts.push_back(fit.intercept);
            out << participant << ',' << xy.first.size() << ',' << format_double(fit.slope) << ','
                << format_double(fit.intercept) << '\n';
        }
        if (!slopes.empty()) {
            std::cout << "mean slope " << format_double(mean_of(slopes)) << " sd " << format_double(stddev_of(slopes))
                      << " mean intercept " << format_double(mean_of(intercepts)) << '\n';
        }
        ++written;
    }

    if (written == 0) {
        throw Error(ErrorKind::MissingFile,
                    dir + " holds none of labels.csv, loso_predictions.csv, predictions.csv");
    }
    std::cout << "reports " << written << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

SyntheticScratchSpec scratch_spec_from_json(const json& j) {
    SyntheticScratchSpec s;
    for (const auto& [key, v] : j.items()) {
        if (key == "kind") {
            continue;
        } else if (key == "style") {
            const auto style = v.get<std::string>();
            if (style != "continuous" && style != "lift-off") {
                throw Error(ErrorKind::InvalidConfig, "style must be continuous or lift-off");
            }
            s.style = style == "continuous" ? ScratchStyle::ContinuousContact : ScratchStyle::LiftOff;
        } else if (key == "waveform") {
            const auto w = v.get<std::string>();
            if (w != "sine" && w != "triangle") {
                throw Error(ErrorKind::InvalidConfig, "waveform must be sine or triangle");
            }
            s.waveform = w == "sine" ? StrokeWaveform::Sine : StrokeWaveform::Triangle;
        } else if (key == "stroke_amplitude_mm") {
            s.stroke_amplitude_mm = v.get<double>();
        } else if (key == "stroke_period_s") {
            s.stroke_period_s = v.get<double>();
        } else if (key == "stroke_phase") {
            s.stroke_phase = v.get<double>();
        } else if (key == "force_mean_n") {
            s.force_mean_n = v.get<double>();
        } else if (key == "force_amplitude_n") {
            s.force_amplitude_n = v.get<double>();
        } else if (key == "force_period_s") {
            s.force_period_s = v.get<double>();
        } else if (key == "duration_s") {
            s.duration_s = v.get<double>();
        } else if (key == "position_noise_sd_mm") {
            s.position_noise_sd_mm = v.get<double>();
        } else if (key == "force_noise_sd_n") {
            s.force_noise_sd_n = v.get<double>();
        } else if (key == "contact_gap_fraction") {
            s.contact_gap_fraction = v.get<double>();
        } else if (key == "x_center_mm") {
            s.x_center_mm = v.get<double>();
        } else if (key == "y_center_mm") {
            s.y_center_mm = v.get<double>();
        } else if (key == "start_s") {
            s.start_s = v.get<double>();
        } else if (key == "seed") {
            s.seed = v.get<std::uint64_t>();
        } else {
            throw Error(ErrorKind::InvalidConfig, "unknown contact_trace key '" + key + "'");
        }
    }
    s.validate();
    return s;
}

std::vector<Tone> tones_from_json(const json& j) {
    std::vector<Tone> out;
    for (const auto& t : j) {
        out.push_back({t.at("frequency_hz").get<double>(), t.at("amplitude").get<double>(), t.value("phase", 0.0)});
    }
    return out;
}

void append_series(TimeSeries& into, const TimeSeries& part) {
    into.timestamps.insert(into.timestamps.end(), part.timestamps.begin(), part.timestamps.end());
    into.values.insert(into.values.end(), part.values.begin(), part.values.end());
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
    std::ifstream in(spec_path);
    if (!in) {
        throw Error(ErrorKind::MissingFile, spec_path + " does not exist");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, spec_path + ": " + e.what());
    }
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "contact_trace") {
            const SyntheticTrace st = gen_contact_trace(scratch_spec_from_json(j));
            write_tablet_csv(dir / "tablet.csv", st.trace);
            auto out = open_output(dir / "truth.csv");
            out << csv_preamble("truth") << "window_start_s,true_power_mw\n";
            for (std::size_t w = 0; w < st.window_starts.size(); ++w) {
                out << format_double(st.window_starts[w]) << ',' << format_double(st.true_power[w]) << '\n';
            }
            std::cout << "samples " << st.trace.size() << " windows " << st.window_starts.size() << '\n';
        } else if (kind == "sensor_session") {
            SessionManifest m;
            m.participant_id = j.value("participant_id", std::string("P1"));
            m.kind = parse_session_kind(j.value("session_kind", std::string("detection")));
            const std::uint64_t seed = j.value("seed", std::uint64_t{0});
            const double noise = j.value("noise_sd", 0.0);
            TimeSeries cm = make_uniform_series(Channel::ContactMic, {}, 0.0);
            TimeSeries acc = make_uniform_series(Channel::AccelZ, {}, 0.0);
            double cursor = 0.0;
            std::uint64_t k = 0;
            for (const auto& seg : j.at("segments")) {
                const double duration = seg.at("duration_s").get<double>();
                append_series(cm, gen_tone_stream(Channel::ContactMic, tones_from_json(seg.value("cm_tones", json::array())),
                                                  duration, noise, seed * 1000 + 2 * k, cursor));
                append_series(acc, gen_tone_stream(Channel::AccelZ, tones_from_json(seg.value("accel_tones", json::array())),
                                                   duration, noise, seed * 1000 + 2 * k + 1, cursor));
                Annotation ann;
                ann.activity = seg.at("activity").get<std::string>();
                ann.start_s = cursor;
                ann.end_s = cursor + duration;
                if (seg.contains("scratch")) {
                    ann.scratch = seg.at("scratch").get<bool>();
                }
                ann.tablet = seg.value("tablet", false);
                if (seg.contains("set")) {
                    ann.set = seg.at("set").get<int>();
                }
                if (seg.contains("level")) {
                    ann.level = seg.at("level").get<int>();
                }
                m.annotations.push_back(ann);
                cursor += duration;
                ++k;
            }
            write_sensor_csv(dir / "contact_mic.csv", cm);
            write_sensor_csv(dir / "accel_z.csv", acc);
            m.contact_mic = "contact_mic.csv";
            m.accel_z = "accel_z.csv";
            if (j.contains("tablet")) {
                json tj = j.at("tablet");
                tj["duration_s"] = cursor;
                const SyntheticTrace st = gen_contact_trace(scratch_spec_from_json(tj));
                write_tablet_csv(dir / "tablet.csv", st.trace);
                m.tablet = "tablet.csv";
            }
            auto out = open_output(dir / "manifest.json");
            out << manifest_to_json(m).dump(2) << '\n';
            std::cout << "duration_s " << format_double(cursor) << " segments " << m.annotations.size() << '\n';
        } else {
            throw Error(ErrorKind::InvalidConfig, "kind must be contact_trace or sensor_session");
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, spec_path + ": " + e.what());
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scratch intensity quantification from ring-sensor data"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "scratchq 1.0");

    LabelArgs label;
    auto* c_label = app.add_subcommand("label", "Compute power labels from pressure-tablet traces");
    c_label->add_option("--tablet", label.tablets, "Tablet CSV (one or more)");
    c_label->add_option("--manifest", label.manifests, "Session manifest with a tablet stream (one or more)");
    c_label->add_option("--participant", label.participant, "Participant id for --tablet inputs (default: file stem)");
    c_label->add_option("--block-length", label.block_length_s, "Split --tablet traces into blocks of this many seconds");
    c_label->add_option("--out", label.out, "Labels CSV")->required();

    FeaturizeArgs feat;
    auto* c_feat = app.add_subcommand("featurize", "Window sessions and extract spectral features");
    c_feat->add_option("--manifest", feat.manifests, "Session manifest (one or more)")->required();
    c_feat->add_option("--task", feat.task, "intensity or detection")->required();
    c_feat->add_option("--out", feat.out, "Features CSV")->required();
    c_feat->add_option("--labels-out", feat.labels_out, "Also write every tablet label window");
    c_feat->add_flag("--keep-unlabelled", feat.keep_unlabelled, "Keep windows without a label (rejected, or outside any labelled block)");

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Fit a scaler and network on a features CSV");
    c_train->add_option("--features", tr.features, "Features CSV")->required();
    c_train->add_option("--task", tr.task, "intensity or detection")->required();
    c_train->add_option("--out", tr.out, "Model file")->required();
    c_train->add_option("--history", tr.history, "Per-epoch loss CSV (default: <out>.history.csv)");
    add_model_flags(c_train, tr.model);

    LosoArgs lo;
    auto* c_loso = app.add_subcommand("loso", "Leave-one-subject-out cross-validation");
    c_loso->add_option("--features", lo.features, "Features CSV")->required();
    c_loso->add_option("--task", lo.task, "intensity or detection")->required();
    c_loso->add_option("--ablation", lo.ablation, "both, cm-only or accel-only");
    c_loso->add_option("--jobs", lo.jobs, "Folds trained in parallel");
    c_loso->add_option("--out-dir", lo.out_dir, "Report directory")->required();
    add_model_flags(c_loso, lo.model);

    PredictArgs pr;
    auto* c_pred = app.add_subcommand("predict", "Sliding-window inference");
    c_pred->add_option("--intensity-model", pr.intensity_model, "Intensity model file");
    c_pred->add_option("--detection-model", pr.detection_model, "Detection model file");
    c_pred->add_option("--manifest", pr.manifests, "Session manifest (one or more)");
    c_pred->add_option("--features", pr.features, "Features CSV instead of manifests");
    c_pred->add_option("--vas", pr.vas, "linear or sqrt");
    c_pred->add_option("--out", pr.out, "Predictions CSV")->required();

    StatsArgs st;
    auto* c_stats = app.add_subcommand("stats", "Wilcoxon or Spearman over instructed intensity levels");
    c_stats->add_option("--input", st.input, "Predictions CSV")->required();
    c_stats->add_option("--test", st.test, "wilcoxon or spearman")->required();
    c_stats->add_option("--value", st.value, "Column to analyse");
    c_stats->add_flag("--normalize", st.normalize, "Min-max normalise each participant set before Spearman");
    c_stats->add_option("--activity-prefix", st.activity_prefix, "Only rows whose activity starts with this");
    c_stats->add_option("--out", st.out, "Stats CSV")->required();

    std::string report_dir;
    double bin_width = 100.0;
    auto* c_report = app.add_subcommand("report", "Summary tables from labels, LOSO and prediction CSVs in a directory");
    c_report->add_option("--dir", report_dir, "Directory holding the inputs; outputs are written beside them")
        ->required();
    c_report->add_option("--bin-width", bin_width, "Label range width for the error table (mW)");

    std::string synth_spec, synth_out;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic tablet trace or sensor session from JSON");
    c_synth->add_option("--spec", synth_spec, "JSON spec")->required();
    c_synth->add_option("--out-dir", synth_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInput;
    }

    try {
        if (c_label->parsed()) {
            if (label.tablets.empty() && label.manifests.empty()) {
                throw Error(ErrorKind::InvalidConfig, "give --tablet or --manifest");
            }
            return cmd_label(label);
        }
        if (c_feat->parsed()) {
            return cmd_featurize(feat);
        }
        if (c_train->parsed()) {
            return cmd_train(tr);
        }
        if (c_loso->parsed()) {
            return cmd_loso(lo);
        }
        if (c_pred->parsed()) {
            return cmd_predict(pr);
        }
        if (c_stats->parsed()) {
            return cmd_stats(st);
        }
        if (c_report->parsed()) {
            if (!(bin_width > 0.0)) {
                throw Error(ErrorKind::InvalidConfig, "--bin-width must be positive");
            }
            return cmd_report(report_dir, bin_width);
        }
        if (c_synth->parsed()) {
            return cmd_synth(synth_spec, synth_out);
        }
    } catch (const Error& e) {
        std::cerr << "scratchq: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "scratchq: " << e.what() << '\n';
        return kInput;
    }
    return kInput;
}
