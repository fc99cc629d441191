#pragma once

#include <span>

#include "mpc/core_model.hpp"

// SOC quantization error model.
//
// The reported SOC change of a segment, y0 = S_n - S_0, differs from the true
// change by y = dS2 - dS1, where dS1 and dS2 are the fractional residuals of the
// first and last reading. With both residuals uniform on [0, 1) and independent,
// y follows the triangular density on (-1, 1). Every uploaded point of the
// segment bounds the true BPED, which narrows y to [y_min, y_max]; moments of
// the BPED E / (y0 + y) under the conditioned density have closed forms that
// depend on the sign of the interval.

namespace mpc {

enum class QuantCase {
  Degenerate,  // y_min == y_max, a point mass
  Negative,    // y_max <= 0, density 1 + y
  Positive,    // y_min >= 0, density 1 - y
  Straddling,  // y_min < 0 < y_max
};

/// Triangular prior density of the quantization error.
double triangular_pdf(double y);

/// Probability mass of the triangular prior on [y_min, y_max] (a/2, b/2 or c/2).
double triangular_mass(double y_min, double y_max);

QuantCase classify_bounds(const QuantBounds& b);

/// Solves the per-point inequality system for the feasible BPED interval.
/// Throws DataError when the system has no solution.
QuantBounds quant_bounds(std::span<const SegmentPoint> points);
QuantBounds quant_bounds(const ChargingSegment& segment);

/// First moment of E / (y0 + y) under the conditioned density.
double expected_bped(double energy_kwh, const QuantBounds& b);
double expected_bped(const ChargingSegment& segment, const QuantBounds& b);

/// Second moment of E / (y0 + y) under the conditioned density.
double expected_bped_sq(double energy_kwh, const QuantBounds& b);
double expected_bped_sq(const ChargingSegment& segment, const QuantBounds& b);

/// Standard deviation of the BPED due to SOC quantization.
double sigma_quant(double energy_kwh, const QuantBounds& b);
double sigma_quant(const ChargingSegment& segment, const QuantBounds& b);

/// Relative BPED error caused by the residuals of the first and last reading.
double quant_error_naive(double delta_s1, double delta_s2, int s0, int sn);

/// Full per-segment estimate: quantization-corrected expectation scaled by the
/// fixed conversion efficiency, with the quantization, repeatability and
/// conversion-efficiency components combined into sigma_total.
/// When cfg.soc_quantization_model is off the naive BPED is used and the
/// quantization component is zero.
BpedEstimate estimate_segment_bped(const ChargingSegment& segment, const ModelConfig& cfg);

}  // namespace mpc
