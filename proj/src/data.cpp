// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "takfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "takfl/errors.hpp"

namespace takfl::data {

void LabeledDataset::validate() const {
    if (features.rows() != labels.size())
        throw ConfigError("dataset has " + std::to_string(features.rows()) + " rows but " +
                          std::to_string(labels.size()) + " labels");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= class_count)
            throw ConfigError("label " + std::to_string(labels[i]) + " at row " +
                              std::to_string(i) + " exceeds class_count " +
                              std::to_string(class_count));
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out{features.gather_rows(indices), {}, class_count};
    out.labels.reserve(indices.size());
    for (std::size_t i : indices)
        out.labels.push_back(labels[i]);
    return out;
}

std::vector<std::size_t> LabeledDataset::class_histogram() const {
    std::vector<std::size_t> h(class_count, 0);
    for (Label y : labels)
        ++h[y];
    return h;
}

void SyntheticSpec::validate() const {
    if (class_count < 2)
        throw ConfigError("synthetic.class_count must be at least 2");
    if (input_dim == 0)
        throw ConfigError("synthetic.input_dim must be positive");
    if (samples_per_class == 0)
        throw ConfigError("synthetic.samples_per_class must be positive");
    if (!(cluster_spread > 0.0))
        throw ConfigError("synthetic.cluster_spread must be positive");
    if (!(class_center_scale > 0.0))
        throw ConfigError("synthetic.class_center_scale must be positive");
}

ClassCenters draw_class_centers(const SyntheticSpec& spec, Rng& rng) {
    spec.validate();
    ClassCenters centers(spec.class_count, spec.input_dim);
    for (double& x : centers.data())
        x = rng.uniform(-spec.class_center_scale, spec.class_center_scale);
    return centers;
}

LabeledDataset sample_blobs(const SyntheticSpec& spec, const ClassCenters& centers, Rng& rng) {
    spec.validate();
    if (centers.rows() != spec.class_count || centers.cols() != spec.input_dim)
        throw ShapeError("class centers do not match the synthetic spec");
    const std::size_t n = spec.class_count * spec.samples_per_class;
    LabeledDataset ds{Matrix(n, spec.input_dim), {}, spec.class_count};
    ds.labels.reserve(n);
    std::size_t r = 0;
    for (std::size_t c = 0; c < spec.class_count; ++c) {
        for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++r) {
            auto row = ds.features.row(r);
            for (std::size_t d = 0; d < spec.input_dim; ++d)
                row[d] = centers(c, d) + spec.cluster_spread * rng.normal();
            ds.labels.push_back(c);
        }
    }
    return ds;
}

LabeledDataset generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
    auto centers = draw_class_centers(spec, rng);
    return sample_blobs(spec, centers, rng);
}

UnlabeledDataset make_public_dataset(const SyntheticSpec& spec, const ClassCenters& centers,
                                     double center_shift, std::size_t samples_per_class,
                                     Rng& rng) {
    if (center_shift < 0.0)
        throw ConfigError("public.center_shift must be nonnegative");
    if (samples_per_class == 0)
        throw ConfigError("public.samples_per_class must be positive");
    ClassCenters shifted = centers;
    for (double& x : shifted.data())
        x += center_shift * rng.normal();
    SyntheticSpec pub = spec;
    pub.samples_per_class = samples_per_class;
    auto labeled = sample_blobs(pub, shifted, rng);
    return {std::move(labeled.features)};
}

std::vector<std::size_t> apportion(std::size_t total, std::span<const double> ratios) {
    if (ratios.empty())
        throw ConfigError("ratios must be nonempty");
    double sum = 0.0;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        if (!(ratios[i] > 0.0) || !std::isfinite(ratios[i]))
            throw ConfigError("ratios[" + std::to_string(i) + "] must be positive");
        sum += ratios[i];
    }
    std::vector<std::size_t> sizes(ratios.size());
    std::vector<double> remainder(ratios.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        const double quota = static_cast<double>(total) * ratios[i] / sum;
        sizes[i] = static_cast<std::size_t>(std::floor(quota));
        remainder[i] = quota - static_cast<double>(sizes[i]);
        assigned += sizes[i];
    }
    std::vector<std::size_t> order(ratios.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned)
        ++sizes[order[k % order.size()]];
    return sizes;
}

std::vector<LabeledDataset> ratio_split(const LabeledDataset& ds, std::span<const double> ratios,
                                        Rng& rng) {
    if (ratios.size() > ds.size())
        throw ConfigError("ratio_split: " + std::to_string(ratios.size()) + " parts for " +
                          std::to_string(ds.size()) + " samples");
    const auto sizes = apportion(ds.size(), ratios);
    std::vector<std::size_t> perm(ds.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span(perm));
    std::vector<LabeledDataset> parts;
    parts.reserve(sizes.size());
    auto it = perm.begin();
    for (std::size_t s : sizes) {
        std::vector<std::size_t> idx(it, it + static_cast<std::ptrdiff_t>(s));
        it += static_cast<std::ptrdiff_t>(s);
        std::sort(idx.begin(), idx.end());
        parts.push_back(ds.subset(idx));
    }
    return parts;
}

PartitionPlan dirichlet_partition(const LabeledDataset& ds, double alpha, std::size_t n_clients,
                                  Rng& rng) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw ConfigError("dirichlet alpha must be positive");
    if (n_clients == 0)
        throw ConfigError("n_clients must be at least 1");
    if (n_clients > ds.size())
        throw ConfigError("cannot partition " + std::to_string(ds.size()) + " samples over " +
                          std::to_string(n_clients) + " clients");

    std::vector<std::vector<std::size_t>> by_class(ds.class_count);
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[ds.labels[i]].push_back(i);

    PartitionPlan plan;
    plan.shards.resize(n_clients);
    std::vector<double> log_g(n_clients);
    for (auto& members : by_class) {
        if (members.empty())
            continue;
        rng.shuffle(std::span(members));
        // p ~ Dir(alpha), normalized in log space
        double mx = -std::numeric_limits<double>::infinity();
        for (auto& lg : log_g) {
            lg = rng.log_gamma_variate(alpha);
            mx = std::max(mx, lg);
        }
        double z = 0.0;
        for (double lg : log_g)
            z += std::exp(lg - mx);
        const std::size_t n_c = members.size();
        std::size_t start = 0;
        double cum = 0.0;
        for (std::size_t k = 0; k < n_clients; ++k) {
            std::size_t end = n_c;
            if (k + 1 < n_clients) {
                cum += std::exp(log_g[k] - mx) / z;
                end = std::min(n_c, static_cast<std::size_t>(
                                        std::floor(cum * static_cast<double>(n_c))));
                end = std::max(end, start);
            }
            plan.shards[k].insert(plan.shards[k].end(),
                                  members.begin() + static_cast<std::ptrdiff_t>(start),
                                  members.begin() + static_cast<std::ptrdiff_t>(end));
            start = end;
        }
    }

    for (std::size_t k = 0; k < n_clients; ++k) {
        if (!plan.shards[k].empty())
            continue;
        std::size_t donor = 0;
        for (std::size_t j = 1; j < n_clients; ++j)
            if (plan.shards[j].size() > plan.shards[donor].size())
                donor = j;
        plan.shards[k].push_back(plan.shards[donor].back());
        plan.shards[donor].pop_back();
    }
    for (auto& s : plan.shards)
        std::sort(s.begin(), s.end());
    return plan;
}

HoldoutSplit holdout_split(const LabeledDataset& ds, double val_fraction, std::size_t test_count,
                           Rng& rng) {
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        throw ConfigError("val_fraction must lie in [0, 1)");
    if (test_count >= ds.size())
        throw ConfigError("test_count " + std::to_string(test_count) +
                          " leaves no training samples out of " + std::to_string(ds.size()));
    const std::size_t pool = ds.size() - test_count;
    const auto val_count =
        static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(pool)));
    if (val_count >= pool)
        throw ConfigError("val_fraction leaves no training samples");

    std::vector<std::size_t> perm(ds.size());
    std::iota(perm.begin(), perm.end(), 0);
    if (test_count > 0 || val_count > 0)
        rng.shuffle(std::span(perm));
    auto take = [&](std::size_t from, std::size_t count) {
        std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(from),
                                     perm.begin() + static_cast<std::ptrdiff_t>(from + count));
        std::sort(idx.begin(), idx.end());
        return ds.subset(idx);
    };
    HoldoutSplit out;
    out.test = take(0, test_count);
    out.validation = take(test_count, val_count);
    out.train = take(test_count + val_count, pool - val_count);
    return out;
}

namespace {

std::vector<std::vector<double>> read_csv_rows(const std::filesystem::path& path,
                                               bool has_header) {
    std::ifstream in(path);
    if (!in)
        throw FormatError("cannot open CSV file " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line_no == 1 && has_header)
            continue;
        if (line.find_first_not_of(" \t") == std::string::npos)
            continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || cell.find_first_not_of(" \t", used) != std::string::npos)
                throw FormatError(path.string() + ":" + std::to_string(line_no) +
                                  ": non-numeric cell '" + cell + "'");
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(rows.front().size()) + " columns, got " +
                              std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw FormatError("CSV file " + path.string() + " has no data rows");
    return rows;
}

} // namespace

LabeledDataset load_csv(const std::filesystem::path& path, bool has_header) {
    auto rows = read_csv_rows(path, has_header);
    const std::size_t cols = rows.front().size();
    if (cols < 2)
        throw FormatError(path.string() + ": need at least one feature column and a label");
    LabeledDataset ds{Matrix(rows.size(), cols - 1), {}, 0};
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double y = rows[r].back();
        if (y < 0.0 || y != std::floor(y) || y > 1e9)
            throw FormatError(path.string() + ": row " + std::to_string(r + 1) +
                              " has a non-integer or negative label");
        ds.labels.push_back(static_cast<Label>(y));
        std::copy_n(rows[r].begin(), cols - 1, ds.features.row(r).begin());
        ds.class_count = std::max(ds.class_count, ds.labels.back() + 1);
    }
    return ds;
}

UnlabeledDataset load_csv_features(const std::filesystem::path& path, bool has_header,
                                   bool drop_last_column) {
    auto rows = read_csv_rows(path, has_header);
    const std::size_t cols = rows.front().size() - (drop_last_column ? 1 : 0);
    if (cols == 0)
        throw FormatError(path.string() + ": no feature columns");
    UnlabeledDataset out{Matrix(rows.size(), cols)};
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(rows[r].begin(), cols, out.features.row(r).begin());
    return out;
}

double mean_label_tv_distance(const LabeledDataset& ds, const PartitionPlan& plan) {
    const auto global = ds.class_histogram();
    const double n = static_cast<double>(ds.size());
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& shard : plan.shards) {
        if (shard.empty())
            continue;
        std::vector<double> h(ds.class_count, 0.0);
        for (std::size_t i : shard)
            h[ds.labels[i]] += 1.0;
        double tv = 0.0;
        for (std::size_t c = 0; c < ds.class_count; ++c)
            tv += std::abs(h[c] / static_cast<double>(shard.size()) -
                           static_cast<double>(global[c]) / n);
        total += 0.5 * tv;
        ++counted;
    }
    return counted ? total / static_cast<double>(counted) : 0.0;
}

} // namespace takfl::data
