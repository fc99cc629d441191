#include "mpc/soc_quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mpc {
namespace {

// y is kept strictly inside the open support (-1, 1).
constexpr double kSupportMargin = 1e-12;
// Intervals narrower than this are treated as a point mass.
constexpr double kDegenerateWidth = 1e-10;

void check_domain(double energy_kwh, const QuantBounds& b) {
  if (!(energy_kwh > 0.0)) throw DomainError("segment energy must be positive");
  if (!(b.y_min <= b.y_max)) throw DomainError("quantization bounds are inverted");
  if (!(b.y0 + b.y_min > 0.0)) throw DomainError("y0 + y_min must be positive");
}

}  // namespace

double triangular_pdf(double y) {
  if (y <= -1.0 || y >= 1.0) return 0.0;
  return y < 0.0 ? 1.0 + y : 1.0 - y;
}

double triangular_mass(double y_min, double y_max) {
  const double w = y_max - y_min;
  if (y_max <= 0.0) return 0.5 * w * (2.0 + y_max + y_min);
  if (y_min >= 0.0) return 0.5 * w * (2.0 - y_max - y_min);
  return 0.5 * (2.0 * w - (y_max * y_max + y_min * y_min));
}

QuantCase classify_bounds(const QuantBounds& b) {
  if (b.y_max - b.y_min <= kDegenerateWidth) return QuantCase::Degenerate;
  if (b.y_max <= 0.0) return QuantCase::Negative;
  if (b.y_min >= 0.0) return QuantCase::Positive;
  return QuantCase::Straddling;
}

QuantBounds quant_bounds(std::span<const SegmentPoint> points) {
  if (points.empty()) throw DomainError("segment has no points beyond its origin");
  const auto& last = points.back();
  if (last.delta_soc_pct < 1) throw DomainError("segment SOC change must be at least 1");
  const double energy = last.delta_energy_kwh;
  if (!(energy > 0.0)) throw DomainError("segment energy must be positive");

  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  for (const auto& p : points) {
    if (p.delta_soc_pct < 0) continue;
    lo = std::max(lo, p.delta_energy_kwh / (p.delta_soc_pct + 1));
    if (p.delta_soc_pct > 1) hi = std::min(hi, p.delta_energy_kwh / (p.delta_soc_pct - 1));
  }
  if (lo > hi) throw DataError("inconsistent segment: SOC/energy inequalities have no solution");

  QuantBounds b;
  b.y0 = last.delta_soc_pct;
  b.e_d_min = lo;
  b.e_d_max = hi;
  b.y_min = energy / hi - b.y0;
  b.y_max = energy / lo - b.y0;
  if (b.y_min < -1.0 + kSupportMargin) {
    b.y_min = -1.0 + kSupportMargin;
    b.e_d_max = energy / (b.y0 + b.y_min);
  }
  if (b.y_max > 1.0 - kSupportMargin) {
    b.y_max = 1.0 - kSupportMargin;
    b.e_d_min = energy / (b.y0 + b.y_max);
  }
  return b;
}

QuantBounds quant_bounds(const ChargingSegment& segment) {
  return quant_bounds(std::span<const SegmentPoint>(segment.point_series));
}

double expected_bped(double energy_kwh, const QuantBounds& b) {
  check_domain(energy_kwh, b);
  const double y0 = b.y0;
  const double lo = b.y_min;
  const double hi = b.y_max;
  const double w = hi - lo;
  switch (classify_bounds(b)) {
    case QuantCase::Degenerate:
      return energy_kwh / (y0 + 0.5 * (lo + hi));
    case QuantCase::Negative: {
      const double a = w * (2.0 + hi + lo);
      const double bracket = w + (1.0 - y0) * std::log1p(w / (y0 + lo));
      return 2.0 * energy_kwh / a * bracket;
    }
    case QuantCase::Positive: {
      const double bb = w * (2.0 - hi - lo);
      const double bracket = -w + (1.0 + y0) * std::log1p(w / (y0 + lo));
      return 2.0 * energy_kwh / bb * bracket;
    }
    case QuantCase::Straddling: {
      const double c = 2.0 * w - (hi * hi + lo * lo);
      const double bracket = (1.0 + y0) * std::log1p(hi / y0) -
                             (1.0 - y0) * std::log1p(lo / y0) - lo - hi;
      return 2.0 * energy_kwh / c * bracket;
    }
  }
  throw InvariantError("unreachable quantization case");
}

double expected_bped(const ChargingSegment& segment, const QuantBounds& b) {
  return expected_bped(segment.delta_energy_kwh, b);
}

double expected_bped_sq(double energy_kwh, const QuantBounds& b) {
  check_domain(energy_kwh, b);
  const double y0 = b.y0;
  const double lo = b.y_min;
  const double hi = b.y_max;
  const double w = hi - lo;
  const double e2 = energy_kwh * energy_kwh;
  switch (classify_bounds(b)) {
    case QuantCase::Degenerate: {
      const double v = energy_kwh / (y0 + 0.5 * (lo + hi));
      return v * v;
    }
    case QuantCase::Negative: {
      const double a = w * (2.0 + hi + lo);
      const double inv_diff = w / ((y0 + lo) * (y0 + hi));
      const double bracket = (1.0 - y0) * inv_diff + std::log1p(w / (y0 + lo));
      return 2.0 * e2 / a * bracket;
    }
    case QuantCase::Positive: {
      const double bb = w * (2.0 - hi - lo);
      const double inv_diff = w / ((y0 + lo) * (y0 + hi));
      const double bracket = (1.0 + y0) * inv_diff - std::log1p(w / (y0 + lo));
      return 2.0 * e2 / bb * bracket;
    }
    case QuantCase::Straddling: {
      const double c = 2.0 * w - (hi * hi + lo * lo);
      const double bracket = (1.0 + lo) / (y0 + lo) - (1.0 - hi) / (y0 + hi) -
                             std::log1p(hi / y0) - std::log1p(lo / y0);
      return 2.0 * e2 / c * bracket;
    }
  }
  throw InvariantError("unreachable quantization case");
}

double expected_bped_sq(const ChargingSegment& segment, const QuantBounds& b) {
  return expected_bped_sq(segment.delta_energy_kwh, b);
}

double sigma_quant(double energy_kwh, const QuantBounds& b) {
  const double m1 = expected_bped(energy_kwh, b);
  const double m2 = expected_bped_sq(energy_kwh, b);
  const double radicand = m2 - m1 * m1;
  if (radicand < -1e-12) throw InvariantError("negative BPED variance from quantization model");
  return radicand > 0.0 ? std::sqrt(radicand) : 0.0;
}

double sigma_quant(const ChargingSegment& segment, const QuantBounds& b) {
  return sigma_quant(segment.delta_energy_kwh, b);
}

double quant_error_naive(double delta_s1, double delta_s2, int s0, int sn) {
  if (!(delta_s1 >= 0.0 && delta_s1 < 1.0 && delta_s2 >= 0.0 && delta_s2 < 1.0)) {
    throw DomainError("SOC residuals must lie in [0, 1)");
  }
  if (sn <= s0) throw DomainError("final SOC must exceed initial SOC");
  return (delta_s2 - delta_s1) / (sn - s0);
}

BpedEstimate estimate_segment_bped(const ChargingSegment& segment, const ModelConfig& cfg) {
  BpedEstimate est;
  est.segment_ref = segment.key();
  const double dsoc = segment.delta_soc_pct;
  double m1 = 0.0;
  if (cfg.soc_quantization_model) {
    const auto bounds = quant_bounds(segment);
    m1 = expected_bped(segment, bounds);
    est.expected_e_d_sq = expected_bped_sq(segment, bounds);
    est.sigma_quant = sigma_quant(segment, bounds);
  } else {
    m1 = compute_bped_naive(segment.delta_energy_kwh, dsoc);
    est.expected_e_d_sq = m1 * m1;
    est.sigma_quant = 0.0;
  }
  est.expected_e_d = cfg.eta_fixed * m1;
  est.sigma_repeat = cfg.bped_rel_repeat * m1 / std::sqrt(dsoc);
  est.sigma_cv = cfg.sigma_r_cv;
  const double rel_sq = (est.sigma_quant * est.sigma_quant + est.sigma_repeat * est.sigma_repeat) /
                        (m1 * m1);
  est.sigma_total = est.expected_e_d * std::sqrt(est.sigma_cv * est.sigma_cv + rel_sq);
  return est;
}

}  // namespace mpc
