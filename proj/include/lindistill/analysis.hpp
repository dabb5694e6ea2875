#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lindistill/model.hpp"
#include "lindistill/tasks.hpp"

namespace lindistill {

using StepModel = std::pair<std::int64_t, Model>;

// `count` distinct example indices drawn from [0, size) by seed, in draw order.
std::vector<std::size_t> probe_indices(std::size_t size, std::size_t count, std::uint64_t seed);

// Hidden traces of `model` on the given probe examples, evaluated without
// gradients.
HiddenTrace probe_trace(const Model& model, const Dataset& probe, std::span<const std::size_t> indices);

// 1 - cos(a, b); 0 when both vectors are zero, 1 when exactly one is.
double cosine_distance(std::span<const double> a, std::span<const double> b);

// Mean 1 - cos over every (sample, valid position, layer) hidden vector.
// Models must share depth and width.
double mean_cosine_distance(const Model& a, const Model& b, const Dataset& probe,
                            std::span<const std::size_t> indices);

struct ShiftCurve {
    std::vector<std::pair<std::int64_t, double>> points;  // (step, distance), sorted by step
};

ShiftCurve hidden_shift(const Model& source, const std::vector<StepModel>& checkpoints, const Dataset& probe,
                        std::size_t samples, std::uint64_t seed);

struct Pca2 {
    Eigen::MatrixXd coords;                 // rows x 2
    Eigen::MatrixXd axes;                   // features x 2, unit columns
    std::array<double, 2> explained{};      // variance ratios
    double total_variance = 0.0;            // sum of squared centered entries / (rows - 1)
};

// Top-2 principal axes of the rows of `x`, through the rows x rows Gram
// matrix. Each axis is oriented so its first nonzero loading is positive.
// Throws std::invalid_argument when the uncentered matrix has rank < 2.
Pca2 pca2(const Eigen::MatrixXd& x);

struct TrajectoryVariant {
    std::string name;
    std::vector<StepModel> checkpoints;
};

struct TrajectoryPoint {
    std::string variant;
    std::int64_t step = 0;
    double x = 0.0;
    double y = 0.0;
};

struct TrajectoryProjection {
    std::vector<TrajectoryPoint> points;  // variant order, then checkpoint order
    std::array<double, 2> explained{};
};

// Flattened hidden states (all layers, all probe positions) as one row.
Eigen::RowVectorXd hidden_features(const Model& model, const Dataset& probe, std::span<const std::size_t> indices);

TrajectoryProjection trajectory_projection(const std::vector<TrajectoryVariant>& variants, const Dataset& probe,
                                           std::span<const std::size_t> indices);

struct TimingPoint {
    std::string kind;
    std::size_t length = 0;
    double mean_seconds = 0.0;
    double std_seconds = 0.0;
};

struct TimingReport {
    std::vector<TimingPoint> points;
    std::map<std::string, double> slopes;  // log-log least-squares slope per kind
    std::size_t runs = 0;
};

// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

using TimedFn = std::function<void(std::size_t length)>;

// Times fn(N) `runs` times per length after `warmup` discarded calls.
// Requires runs >= 3 and at least 4 lengths.
TimingReport timing_bench(const std::vector<std::pair<std::string, TimedFn>>& kinds,
                          const std::vector<std::size_t>& lengths, std::size_t runs, std::size_t warmup = 1);

// Forward passes of each model on a random batch of length N.
TimingReport timing_bench(const std::vector<std::pair<std::string, Model>>& models,
                          const std::vector<std::size_t>& lengths, std::size_t runs, std::size_t batch = 1,
                          std::uint64_t seed = 0);

void write_shift_csv(const std::filesystem::path& path, const std::map<std::string, ShiftCurve>& curves);
void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryProjection& projection);
void write_timing_csv(const std::filesystem::path& path, const TimingReport& report);

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

struct ChartOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
    bool lines = true;  // false: markers only
};

// Minimal SVG line chart.
std::string line_chart_svg(const std::vector<Series>& series, const ChartOptions& options);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace lindistill
