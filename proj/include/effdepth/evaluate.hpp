#pragma once

#include <optional>
#include <string>
#include <vector>

#include "effdepth/depth_file.hpp"
#include "effdepth/errors.hpp"
#include "effdepth/manifest.hpp"
#include "effdepth/metrics.hpp"

namespace effdepth {

struct SampleResult {
    std::string id;
    std::optional<double> abs_rel;
    std::optional<double> one_minus_delta1_pct;
    std::optional<double> whdr;
    std::size_t n_valid = 0;
    AffineAlignment alignment;
    /// Nonempty when the sample failed to evaluate; it is then excluded
    /// from the aggregate and the run counts as a partial failure.
    std::string error;
};

struct DatasetReport {
    std::vector<SampleResult> samples;
    std::optional<double> mean_abs_rel;
    std::optional<double> mean_one_minus_delta1_pct;
    std::optional<double> mean_whdr;
    std::size_t n_evaluated = 0;
    std::size_t n_failed = 0;
};

namespace detail {

// Compensated (Kahan) accumulator so the aggregate mean stays within 1e-9
// of the plain arithmetic mean no matter the sample count.
class KahanMean {
public:
    void add(double v) {
        const double y = v - c_;
        const double t = sum_ + y;
        c_ = (t - sum_) - y;
        sum_ = t;
        ++n_;
    }
    std::optional<double> mean() const {
        if (n_ == 0) return std::nullopt;
        return sum_ / static_cast<double>(n_);
    }

private:
    double sum_ = 0.0;
    double c_ = 0.0;
    std::size_t n_ = 0;
};

} // namespace detail

/// Evaluate every manifest entry (in manifest order) against its ground
/// truth and/or ordinal labels, then aggregate by unweighted per-sample
/// means. File problems are recorded per sample and skip only that sample.
inline DatasetReport evaluate_dataset(const Manifest& manifest,
                                      const EvalConfig& base_cfg = {}) {
    detail::validate_eval_config(base_cfg);
    validate_manifest_for_eval(manifest);
    DatasetReport report;
    detail::KahanMean abs_rel_mean, delta1_mean, whdr_mean;
    for (const ManifestEntry& entry : manifest.entries) {
        SampleResult sample;
        sample.id = entry.id;
        try {
            if (!entry.pred_path) {
                throw FormatError("entry has no pred_path to evaluate");
            }
            EvalConfig cfg = base_cfg;
            if (entry.depth_cap) cfg.depth_cap = *entry.depth_cap;
            const DepthGrid pred = load_depth(*entry.pred_path);
            std::optional<std::vector<OrdinalPair>> pairs;
            if (entry.pairs_path) {
                pairs = read_pairs(read_file(*entry.pairs_path));
            }
            if (entry.gt_path) {
                const DepthGrid gt = load_depth(*entry.gt_path);
                const MetricsReport r = evaluate_sample(
                    pred, gt, pairs ? &*pairs : nullptr, cfg);
                sample.abs_rel = r.abs_rel;
                sample.one_minus_delta1_pct = r.one_minus_delta1_pct;
                sample.whdr = r.whdr;
                sample.n_valid = r.n_valid;
                sample.alignment = r.alignment;
            } else {
                sample.whdr = whdr(pred, *pairs, cfg);
            }
        } catch (const std::exception& e) {
            sample.error = e.what();
        }
        if (sample.error.empty()) {
            if (sample.abs_rel) abs_rel_mean.add(*sample.abs_rel);
            if (sample.one_minus_delta1_pct)
                delta1_mean.add(*sample.one_minus_delta1_pct);
            if (sample.whdr) whdr_mean.add(*sample.whdr);
            ++report.n_evaluated;
        } else {
            ++report.n_failed;
        }
        report.samples.push_back(std::move(sample));
    }
    report.mean_abs_rel = abs_rel_mean.mean();
    report.mean_one_minus_delta1_pct = delta1_mean.mean();
    report.mean_whdr = whdr_mean.mean();
    return report;
}

} // namespace effdepth
