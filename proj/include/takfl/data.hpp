// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <tuple>
#include <vector>

#include "takfl/nn.hpp"
#include "takfl/rng.hpp"

namespace takfl::data {

using nn::Label;
using nn::Matrix;

struct LabeledDataset {
    Matrix features;
    std::vector<Label> labels;
    std::size_t class_count = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t input_dim() const { return features.cols(); }

    // Throws ConfigError if row counts differ or a label is out of range.
    void validate() const;

    LabeledDataset subset(std::span<const std::size_t> indices) const;

    // Per-class sample counts.
    std::vector<std::size_t> class_histogram() const;

    nn::Batch as_batch() const { return {features, labels}; }
};

struct UnlabeledDataset {
    Matrix features;

    std::size_t size() const { return features.rows(); }
};

struct SyntheticSpec {
    std::size_t class_count = 10;
    std::size_t input_dim = 16;
    std::size_t samples_per_class = 500;
    double cluster_spread = 1.0;
    double class_center_scale = 1.0;

    void validate() const;
};

// One row per class.
using ClassCenters = Matrix;

struct PartitionPlan {
    std::vector<std::vector<std::size_t>> shards;
};

// Centers uniform in [-scale, scale] per coordinate.
ClassCenters draw_class_centers(const SyntheticSpec& spec, Rng& rng);

// samples_per_class draws of center + N(0, spread^2), class-major order.
LabeledDataset sample_blobs(const SyntheticSpec& spec, const ClassCenters& centers, Rng& rng);

// draw_class_centers followed by sample_blobs on the same stream.
LabeledDataset generate_synthetic(const SyntheticSpec& spec, Rng& rng);

// Unlabeled draw around centers shifted by N(0, center_shift^2) per coordinate.
UnlabeledDataset make_public_dataset(const SyntheticSpec& spec, const ClassCenters& centers,
                                     double center_shift, std::size_t samples_per_class,
                                     Rng& rng);

// Disjoint random split with sizes from largest-remainder rounding of the
// normalized ratios (ties go to the lower part index). Each part keeps the
// source order of its samples.
std::vector<LabeledDataset> ratio_split(const LabeledDataset& ds, std::span<const double> ratios,
                                        Rng& rng);

// Largest-remainder apportionment of `total` by `ratios`; exposed for tests.
std::vector<std::size_t> apportion(std::size_t total, std::span<const double> ratios);

// Label-skewed split over n_clients:
//   for each class c (ascending): shuffle that class's indices, draw p ~ Dir(alpha * 1),
//   cut at floor(cumsum(p)_k * n_c) for k = 1..n-1 and hand segment k to client k.
// Clients left empty then take one sample (the last one) from the currently
// largest shard, lowest client index on ties, in ascending client order.
PartitionPlan dirichlet_partition(const LabeledDataset& ds, double alpha, std::size_t n_clients,
                                  Rng& rng);

struct HoldoutSplit {
    LabeledDataset train;
    LabeledDataset validation;
    LabeledDataset test;
};

// test gets test_count samples; validation gets round(val_fraction * (|ds| - test_count)).
HoldoutSplit holdout_split(const LabeledDataset& ds, double val_fraction, std::size_t test_count,
                           Rng& rng);

// Numeric CSV, last column is the integer label.
LabeledDataset load_csv(const std::filesystem::path& path, bool has_header);

// Same format; the label column is dropped when drop_last_column is set.
UnlabeledDataset load_csv_features(const std::filesystem::path& path, bool has_header,
                                   bool drop_last_column);

// Mean over clients of the total-variation distance between the client's label
// distribution and the global one. Empty shards are skipped.
double mean_label_tv_distance(const LabeledDataset& ds, const PartitionPlan& plan);

} // namespace takfl::data
