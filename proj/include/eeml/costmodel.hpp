#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eeml/layers.hpp"

namespace eeml {

// Sequence/model dimensions the analytic cost formulas are evaluated at.
// T and V are token counts here, not the token matrices.
struct CostConfig {
    std::uint64_t text_len = 1;    // T
    std::uint64_t visual_len = 0;  // V
    std::uint64_t hidden_dim = 1;  // h
    std::uint64_t depth = 1;       // d

    void validate() const;
};

struct FlopsComponents {
    std::uint64_t attention = 0;
    std::uint64_t ffn = 0;
    std::uint64_t aligner = 0;

    std::uint64_t total() const { return attention + ffn + aligner; }
};

// Analytic totals. Baseline: 24(T+V)dh^2 + 4(T+V)^2 dh. Composite ("ee"):
// 2(11T+10V)dh^2 + 4VTdh + 4T^2 dh. Evaluated in 128-bit integers and
// range-checked, so large configs either come out exact or throw.
std::uint64_t flops_baseline_total(const CostConfig& c);
std::uint64_t flops_ee_total(const CostConfig& c);

FlopsComponents flops_baseline_components(const CostConfig& c);
FlopsComponents flops_ee_components(const CostConfig& c);

// ee_total / baseline_total. Both formulas are linear in d, so the ratio is
// evaluated at d = 1 and is exactly d-invariant.
double flops_ratio(const CostConfig& c);

struct FlopsReport {
    CostConfig config;
    std::uint64_t baseline_total = 0;
    std::uint64_t ee_total = 0;
    FlopsComponents baseline_components;
    FlopsComponents ee_components;
    double ratio = 0.0;

    // Filled when a model was instrumented at this config. The counts cover
    // the decoder-layer stack (the formulas' scope); embedding, projector and
    // unembedding matmuls are outside both formulas and excluded.
    bool has_instrumented = false;
    std::uint64_t instrumented_baseline = 0;
    std::uint64_t instrumented_ee = 0;
    std::int64_t instrumented_delta_vs_formula = 0;  // instrumented_ee - ee_total
};

FlopsReport build_flops_report(const CostConfig& c);

struct InstrumentedCounts {
    std::uint64_t baseline = 0;
    std::uint64_t composite = 0;
};

// Runs both decoder stacks on random states with the matmul counter on and
// returns the exact counts (2*m*n*p per product, activations excluded).
InstrumentedCounts instrumented_flops(const Model& model, std::size_t visual_len,
                                      std::size_t text_len);

// build_flops_report + instrumentation with a model whose h/d match c.
FlopsReport build_instrumented_report(const CostConfig& c, const Model& model);

// CSV with header T,V,h,d,baseline_flops,ee_flops,ratio; ratio printed with
// six decimals, rows in grid order, LF line endings.
std::string sweep_to_csv(const std::vector<CostConfig>& grid);

std::string format_flops_report(const FlopsReport& report);

}  // namespace eeml
