#include "strata/sweep.hpp"

#include <sstream>
#include <stdexcept>

#include "strata/metrics.hpp"
#include "strata/plot.hpp"
#include "strata/text.hpp"

namespace strata {

namespace {

constexpr int64_t kChunk = 256;

bool interior(double phi)
{
    return phi > 0.0 && phi < 1.0;
}

Series series_of(const SweepResult& r, const std::string& method, bool p_vs_fid)
{
    Series s;
    s.label = method == "ours" ? "multi-level" : "global mean";
    for (const auto& row : r.method_rows(method)) {
        if (!interior(row.phi))
            continue;
        s.x.push_back(p_vs_fid ? row.fid : row.recall);
        s.y.push_back(row.precision);
    }
    return s;
}

} // namespace

std::vector<SweepRow> SweepResult::method_rows(const std::string& method) const
{
    std::vector<SweepRow> out;
    for (const auto& r : rows)
        if (r.method == method)
            out.push_back(r);
    return out;
}

std::string SweepResult::csv() const
{
    std::ostringstream out;
    out << "method,phi,precision,recall,fid,n,seed\n";
    for (const auto& r : rows)
        out << r.method << ',' << format_real(r.phi) << ',' << format_real(r.precision) << ',' << format_real(r.recall) << ','
            << format_real(r.fid) << ',' << r.n << ',' << r.seed << '\n';
    return out.str();
}

std::string SweepResult::pr_curve_svg() const
{
    return svg_line_plot({"Precision vs recall", "recall", "precision"},
                         {series_of(*this, "ours", false), series_of(*this, "global", false)});
}

std::string SweepResult::p_fid_curve_svg() const
{
    return svg_line_plot({"Precision vs FID", "FID", "precision"},
                         {series_of(*this, "ours", true), series_of(*this, "global", true)});
}

std::vector<double> sweep_phi_grid(int count)
{
    auto grid = interior_phi_grid(count);
    grid.insert(grid.begin(), 0.0);
    grid.push_back(1.0);
    return grid;
}

SweepResult truncation_sweep(const SweepInputs& in, int64_t n, const std::vector<double>& phis, std::uint64_t seed,
                             int knn_k, const std::function<void(const std::string&)>& log)
{
    if (!in.generator || !in.partition || !in.models || !in.centers || !in.extractor || !in.real)
        throw std::invalid_argument("truncation sweep inputs incomplete");
    const auto& g = *in.generator;
    const auto& p = *in.partition;

    const auto w = sample_w(g, n, seed);
    std::vector<BatchAssignment> assignments;
    for (int64_t i = 0; i < n; i += kChunk)
        assignments.push_back(assign_clusters_batch(w.narrow(0, i, std::min(kChunk, n - i)), *in.models, g, p));

    SweepResult result;
    result.extractor = in.extractor->id();
    result.knn_k = knn_k;
    for (const std::string method : {"ours", "global"}) {
        for (double phi : phis) {
            std::vector<torch::Tensor> images;
            for (std::size_t c = 0; c < assignments.size(); ++c) {
                const auto start = static_cast<int64_t>(c) * kChunk;
                const auto wc = w.narrow(0, start, std::min(kChunk, n - start));
                const auto ext = method == "ours" ? truncate_multilevel(wc, *in.centers, assignments[c], phi)
                                                  : truncate_global(wc, in.centers->global_mean, phi);
                torch::NoGradGuard no_grad;
                images.push_back(g.synthesize(expand_to_layers(ext, p)));
            }
            const auto gen = in.extractor->extract(torch::cat(images));
            const auto pr = precision_recall(*in.real, gen, knn_k);
            SweepRow row{method, phi, pr.precision, pr.recall, fid(*in.real, gen), n, seed};
            if (log)
                log(method + " phi " + format_real(phi) + " precision " + format_real(row.precision) + " recall " + format_real(row.recall)
                    + " fid " + format_real(row.fid));
            result.rows.push_back(row);
        }
    }
    return result;
}

std::array<double, 3> level_purity(const LevelModels& models, const FrozenGenerator& g, const LevelPartition& p,
                                   const FeatureExtractor& extractor, int64_t n, std::uint64_t seed)
{
    const auto w = sample_w(g, n, seed);
    std::array<std::vector<int>, 3> assigned, truth;
    for (int64_t i = 0; i < n; i += kChunk) {
        const auto wc = w.narrow(0, i, std::min(kChunk, n - i));
        const auto a = assign_clusters_batch(wc, models, g, p);
        torch::Tensor images;
        {
            torch::NoGradGuard no_grad;
            images = g.generate(wc);
        }
        const auto factors = extractor.predict_factors(images);
        for (std::size_t l = 0; l < 3; ++l) {
            const auto idx = a.index[l].contiguous();
            assigned[l].insert(assigned[l].end(), idx.data_ptr<int64_t>(), idx.data_ptr<int64_t>() + idx.numel());
            truth[l].insert(truth[l].end(), factors[l].begin(), factors[l].end());
        }
    }
    std::array<double, 3> out{};
    for (std::size_t l = 0; l < 3; ++l)
        out[l] = cluster_purity(assigned[l], truth[l]);
    return out;
}

PrecisionComparison compare_precision(const SweepResult& result)
{
    PrecisionComparison cmp;
    const auto ours = result.method_rows("ours");
    const auto global = result.method_rows("global");
    for (const auto& o : ours) {
        if (!interior(o.phi))
            continue;
        ++cmp.points;
        bool win = true;
        bool contested = false;
        for (const auto& gr : global) {
            if (!interior(gr.phi) || gr.recall < o.recall)
                continue;
            contested = true;
            if (o.precision < gr.precision)
                win = false;
        }
        if (win) {
            ++cmp.wins;
            cmp.winning_phis.push_back(o.phi);
            if (!contested)
                ++cmp.uncontested;
        }
    }
    return cmp;
}

} // namespace strata
