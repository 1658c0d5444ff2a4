#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "strata/features.hpp"
#include "strata/truncation.hpp"

namespace strata {

struct SweepRow {
    std::string method; // "ours" or "global"
    double phi = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double fid = 0.0;
    int64_t n = 0;
    std::uint64_t seed = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::string extractor;
    int knn_k = 3;

    std::vector<SweepRow> method_rows(const std::string& method) const;
    /// Header "method,phi,precision,recall,fid,n,seed" and one line per row.
    std::string csv() const;
    std::string pr_curve_svg() const;
    std::string p_fid_curve_svg() const;
};

/// Interior grid of `count` points plus the diagnostic endpoints 0 and 1,
/// ascending.
std::vector<double> sweep_phi_grid(int count);

struct SweepInputs {
    const FrozenGenerator* generator = nullptr;
    const LevelPartition* partition = nullptr;
    const LevelModels* models = nullptr;
    const ClusterCenters* centers = nullptr;
    const FeatureExtractor* extractor = nullptr;
    const FeatureSet* real = nullptr;
};

/// Pre-samples n latents once, assigns them once, then evaluates both
/// truncation methods at every φ against the fixed real features.
SweepResult truncation_sweep(const SweepInputs& in, int64_t n, const std::vector<double>& phis, std::uint64_t seed,
                             int knn_k = 3, const std::function<void(const std::string&)>& log = {});

/// Per level, cluster purity of the classifier assignments of n broadcast
/// samples against the extractor's predicted factor of that level. Generated
/// images carry no ground truth, so the extractor stands in for it.
std::array<double, 3> level_purity(const LevelModels& models, const FrozenGenerator& g, const LevelPartition& p,
                                   const FeatureExtractor& extractor, int64_t n, std::uint64_t seed);

struct PrecisionComparison {
    int wins = 0;
    int points = 0;
    int uncontested = 0; // wins where no global row reached our recall
    std::vector<double> winning_phis;
};

/// Counts interior φ where our precision is at least the global precision of
/// every interior global row whose recall is equal or higher than ours.
PrecisionComparison compare_precision(const SweepResult& result);

} // namespace strata
