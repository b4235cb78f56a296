// Grid experiments: labeled-set-size and rule-precision sweeps, one
// multi-seed replicate per grid point, emitted as plot-ready CSV rows.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "rulex/trainer.hpp"

namespace rulex::experiments {

enum class SweepKind { LabeledSize, RulePrecision };

struct SweepRow {
    double grid_value = 0.0;
    train::ReplicateSummary summary;
};

// Shrinks the labeled split to its first `keep` instances (by id); the
// remainder joins the unlabeled pool. Rules are untouched.
inline Dataset with_labeled_size(const Dataset& ds, std::size_t keep) {
    Dataset out = ds;
    std::size_t seen = 0;
    for (int i = 0; i < static_cast<int>(out.size()); ++i) {
        if (out.split(i) != Split::L) continue;
        if (++seen > keep) out.set_split(i, Split::U);
    }
    if (seen < keep)
        throw std::invalid_argument("labeled_size " + std::to_string(keep) +
                                    " exceeds available labeled instances");
    return out;
}

// Exemplar links pointing at removed or renumbered rules must follow the
// rule filtering; links whose rule was dropped are cleared.
inline Dataset remap_exemplars(const Dataset& ds, const FilteredRules& filtered) {
    std::vector<int> new_id(filtered.kept.size() + filtered.removed_ids.size(), -1);
    for (std::size_t j = 0; j < filtered.kept_original_ids.size(); ++j)
        new_id[static_cast<std::size_t>(filtered.kept_original_ids[j])] = static_cast<int>(j);
    Dataset out = ds;
    for (int i = 0; i < static_cast<int>(out.size()); ++i) {
        const auto link = out.exemplar_rule(i);
        if (!link) continue;
        out.set_exemplar_rule(i, new_id[static_cast<std::size_t>(*link)]);
    }
    return out;
}

inline std::vector<SweepRow> sweep(SweepKind kind, const std::vector<double>& grid,
                                   const Dataset& ds, const RuleSet& rules,
                                   const CoverageMatrix& cov, const train::TrainConfig& cfg) {
    std::vector<SweepRow> rows;
    for (double g : grid) {
        SweepRow row;
        row.grid_value = g;
        if (kind == SweepKind::LabeledSize) {
            const Dataset reduced = with_labeled_size(ds, static_cast<std::size_t>(g));
            row.summary = train::replicate(reduced, rules, cov, cfg);
        } else {
            FilterCriterion crit;
            crit.kind = FilterCriterion::PrecisionAbove;
            crit.threshold = g;
            const FilteredRules filtered = filter_rules(rules, cov, ds, crit);
            const Dataset remapped = remap_exemplars(ds, filtered);
            const CoverageMatrix reduced_cov = apply_rules(filtered.kept, remapped);
            train::TrainConfig point_cfg = cfg;
            // no rules left: every method degenerates to plain supervised training
            if (filtered.kept.size() == 0) point_cfg.method = train::Method::OnlyL;
            row.summary = train::replicate(remapped, filtered.kept, reduced_cov, point_cfg);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace rulex::experiments
