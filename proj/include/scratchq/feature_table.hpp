#pragma once

#include "scratchq/spectral.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace scratchq {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unnormalised features for many windows plus the metadata needed to split and
/// report on them. Row i belongs to participants[i].
struct FeatureTable {
    Task task = Task::Intensity;
    std::size_t dims = 0;
    std::vector<std::string> participants;
    std::vector<std::string> activities;
    std::vector<double> window_starts;
    std::vector<double> labels; // mW for intensity, {0, 1} for detection
    std::vector<double> values; // row-major, rows() x dims

    std::size_t rows() const noexcept { return participants.size(); }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * dims, dims}; }

    Eigen::Map<const RowMatrixXd> matrix() const {
        return {values.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(dims)};
    }

    void append(std::string participant, std::string activity, double window_start, double label,
                std::span<const double> features);

    FeatureTable subset(std::span<const std::size_t> row_indices) const;

    /// Keeps only the listed feature columns (ablation).
    FeatureTable select_columns(std::span<const std::size_t> columns) const;

    void validate() const;
};

} // namespace scratchq
