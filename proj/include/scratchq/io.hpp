#pragma once

#include "scratchq/feature_table.hpp"
#include "scratchq/labeling.hpp"
#include "scratchq/mlp.hpp"
#include "scratchq/signal.hpp"
#include "scratchq/spectral.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace scratchq {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;
inline constexpr std::uint32_t kModelFormatVersion = 1;

// ---------------------------------------------------------------------------
// CSV plumbing. Every file starts with "# scratchq <kind> schema_version=<n>"
// followed by a header row.
// ---------------------------------------------------------------------------

struct CsvTable {
    std::string path;
    std::string kind;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers; // 1-based source line of each row

    /// Index of a header column; throws SchemaMismatch if absent.
    std::size_t column(const std::string& name) const;
    std::optional<std::size_t> find_column(const std::string& name) const;
    [[noreturn]] void fail_row(std::size_t row, const std::string& message) const;
};

CsvTable read_csv(const fs::path& path, const std::string& expected_kind);

/// Strict decimal parse; empty fields are rejected unless `allow_empty` (returns NaN).
double parse_double_field(const CsvTable& table, std::size_t row, std::size_t col, bool allow_empty = false);

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

std::string csv_preamble(const std::string& kind);

// ---------------------------------------------------------------------------
// Streams and labels
// ---------------------------------------------------------------------------

/// `t_s,value`; an empty value marks a dropped sample.
TimeSeries read_sensor_csv(const fs::path& path, Channel channel);
void write_sensor_csv(const fs::path& path, const TimeSeries& series);

/// `t_s,x_mm,y_mm,force_n`; empty fields mark timesteps without contact.
ContactTrace read_tablet_csv(const fs::path& path);
void write_tablet_csv(const fs::path& path, const ContactTrace& trace);

struct LabelRecord {
    std::string participant;
    PowerLabel label;
    std::string activity;
};

/// `participant,window_start_s,mean_force_n,mean_velocity_mm_s,power_mw,valid,reason,activity`.
void write_labels_csv(const fs::path& path, const std::vector<LabelRecord>& labels);
std::vector<LabelRecord> read_labels_csv(const fs::path& path);

/// `participant,activity,window_start_s,label,f0..f{d-1}`; empty label = unlabelled.
void write_features_csv(const fs::path& path, const FeatureTable& table);
FeatureTable read_features_csv(const fs::path& path);

// ---------------------------------------------------------------------------
// Session manifests
// ---------------------------------------------------------------------------

enum class SessionKind { IntensityStudy1, ValidationStudy2, Detection };
std::string_view to_string(SessionKind k);
SessionKind parse_session_kind(std::string_view s);

struct Annotation {
    std::string activity;
    double start_s = 0.0;
    double end_s = 0.0;
    std::optional<bool> scratch;   // detection ground truth
    bool tablet = false;           // block was performed on the pressure tablet
    std::optional<int> set;        // repetition set (validation study)
    std::optional<int> level;      // instructed intensity 1-5 (validation study)
};

struct SessionManifest {
    int schema_version = kSchemaVersion;
    std::string participant_id;
    SessionKind kind = SessionKind::IntensityStudy1;
    fs::path contact_mic;
    fs::path accel_z;
    std::optional<fs::path> tablet;
    std::vector<Annotation> annotations;
    fs::path source; // manifest location; relative stream paths resolve against it
};

SessionManifest parse_manifest(const nlohmann::json& j, const fs::path& base_dir = {});
SessionManifest load_manifest(const fs::path& path);
nlohmann::json manifest_to_json(const SessionManifest& m);

struct Session {
    SessionManifest manifest;
    TimeSeries contact_mic;
    TimeSeries accel_z;
    std::optional<ContactTrace> tablet;
};

/// Reads every stream referenced by the manifest; MissingFile names the path.
Session load_session(const SessionManifest& manifest);

/// Tablet samples inside [begin_s, end_s) as a block of that length.
ContactTrace slice_trace(const ContactTrace& trace, double begin_s, double end_s);

struct LabeledWindow {
    SensorWindow window;
    std::optional<double> label;
    std::optional<int> set;
    std::optional<int> level;
};

struct SessionWindows {
    std::vector<LabeledWindow> windows;
    std::vector<LabelRecord> tablet_labels; // every label window, valid or not
    std::size_t rejected = 0;               // ring windows dropped for invalid labels
};

/// Cuts a session into 1-s ring windows (0.25 s stride) per annotation, or over
/// the whole recording when there are none. Intensity labels come from the
/// tablet block each window falls in; detection labels from the annotation's
/// scratch flag. Windows whose tablet label was rejected are dropped unless
/// `keep_rejected`, in which case they stay with no label.
SessionWindows session_windows(const Session& session, Task task, const LabelingOptions& options = {},
                               bool keep_rejected = false);

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

nlohmann::json config_to_json(const MlpConfig& c);
/// Applies the keys present in `j` on top of `base`; unknown keys are an error.
MlpConfig config_from_json(const nlohmann::json& j, MlpConfig base);

struct ModelArtifact {
    Task task = Task::Intensity;
    MinMaxScaler scaler;
    Network network;

    double predict(std::span<const double> raw_features) const;
};

std::vector<std::uint8_t> encode_model(const ModelArtifact& artifact);
ModelArtifact decode_model(std::span<const std::uint8_t> bytes);

void save_model(const fs::path& path, const ModelArtifact& artifact);
/// Throws ChecksumFailure, VersionUnsupported, or TaskMismatch when `expected`
/// is given and differs.
ModelArtifact load_model(const fs::path& path, std::optional<Task> expected = std::nullopt);

std::uint32_t checksum(std::span<const std::uint8_t> bytes);

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history);

} // namespace scratchq
