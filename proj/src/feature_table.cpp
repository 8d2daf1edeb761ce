#include "scratchq/feature_table.hpp"

#include "scratchq/error.hpp"

namespace scratchq {

void FeatureTable::append(std::string participant, std::string activity, double window_start, double label,
                          std::span<const double> features) {
    if (rows() == 0 && dims == 0) {
        dims = features.size();
    }
    if (features.size() != dims) {
        throw Error(ErrorKind::ShapeMismatch, "feature row has " + std::to_string(features.size()) +
                                                  " values, table has " + std::to_string(dims));
    }
    participants.push_back(std::move(participant));
    activities.push_back(std::move(activity));
    window_starts.push_back(window_start);
    labels.push_back(label);
    values.insert(values.end(), features.begin(), features.end());
}

FeatureTable FeatureTable::subset(std::span<const std::size_t> row_indices) const {
    FeatureTable out;
    out.task = task;
    out.dims = dims;
    for (std::size_t i : row_indices) {
        out.append(participants.at(i), activities.at(i), window_starts.at(i), labels.at(i), row(i));
    }
    return out;
}

FeatureTable FeatureTable::select_columns(std::span<const std::size_t> columns) const {
    FeatureTable out;
    out.task = task;
    out.dims = columns.size();
    out.participants = participants;
    out.activities = activities;
    out.window_starts = window_starts;
    out.labels = labels;
    out.values.reserve(rows() * columns.size());
    for (std::size_t r = 0; r < rows(); ++r) {
        const auto src = row(r);
        for (std::size_t c : columns) {
            if (c >= dims) {
                throw Error(ErrorKind::ShapeMismatch, "column " + std::to_string(c) + " out of range");
            }
            out.values.push_back(src[c]);
        }
    }
    return out;
}

void FeatureTable::validate() const {
    const std::size_t n = rows();
    if (activities.size() != n || window_starts.size() != n || labels.size() != n || values.size() != n * dims) {
        throw Error(ErrorKind::ShapeMismatch, "feature table columns are inconsistent");
    }
}

} // namespace scratchq
