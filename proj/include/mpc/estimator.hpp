#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mpc/core_model.hpp"

namespace mpc {

/// Station errors as N(0, sigma^2) restricted to [-half_width, half_width].
struct TruncatedNormalErrorModel {
  double sigma = 0.0162;
  double half_width = 0.0067 / 2.0;

  double pdf(double x) const;
  double variance() const;
};

/// Segments of one EV at one station with matching current and temperature,
/// pooled into a single BPED estimate.
struct SegmentGroup {
  EvId ev_id;
  FcsId fcs_id;
  int index = 0;
  std::vector<std::string> segment_keys;
  double mean_current_a = 0.0;
  double mean_temp_c = 0.0;
  BpedEstimate bped;
};

struct ErrorEstimate {
  double gamma = 0.0;
  double sigma = 0.0;
};

enum class TerminalReason { MaxLength, HitAnotherRcs, DeadEnd };
std::string to_string(TerminalReason r);

struct ChainHop {
  FcsId from_fcs;
  FcsId to_fcs;
  EvId ev_id;
  SegmentGroup from_group;
  SegmentGroup to_group;
};

struct ComparisonChain {
  FcsId root_rcs_id;
  std::vector<ChainHop> hops;
  TerminalReason terminal_reason = TerminalReason::DeadEnd;

  std::vector<FcsId> stations() const;
  std::string path() const;  // "A>B>C"
};

struct Acceptance {
  double probability = 0.0;  // fraction in [0, 1]
  Classification classification = Classification::Unreliable;
};

/// Mean of the estimates; sigma is the root sum of squares over n.
BpedEstimate pool_bped(std::span<const BpedEstimate> estimates);

/// Per-segment estimates grouped by (EV, station) and by current/temperature
/// proximity, then pooled. Output is sorted by (ev, fcs, index).
std::vector<SegmentGroup> build_segment_groups(const std::vector<ChargingSegment>& segments,
                                               const ModelConfig& cfg);

bool groups_comparable(const SegmentGroup& a, const SegmentGroup& b, const ModelConfig& cfg);

/// Symmetric relative difference |a - b| / min(a, b) of two pooled BPEDs.
double pair_rel_error(double e_d_a, double e_d_b);

/// At most one cluster per EV: the largest set of distinct stations whose
/// pooled BPEDs are mutually comparable and agree within l.
std::vector<RcsCluster> find_rcs_clusters(const std::vector<SegmentGroup>& groups,
                                          const ModelConfig& cfg);
std::vector<RcsCluster> find_rcs_clusters(const std::vector<ChargingSegment>& pool,
                                          const ModelConfig& cfg);

/// Monte Carlo probability that all n station errors lie in [-gamma0, gamma0]
/// given that every pairwise difference is at most l. l = infinity drops the
/// condition. Fleets are sampled directly from the conditional law.
double cluster_probability(int n, double gamma0, double l, double sigma,
                           std::uint64_t seed = 20240301, std::size_t fleets = 1'000'000);

/// Standard deviation of the cluster-mean bias, in BPED units.
double rcs_bias_sigma(const TruncatedNormalErrorModel& model, int n, double e_d_true_est);

/// Error of a reference station and its linearized uncertainty.
ErrorEstimate rcs_error(const RcsCluster& cluster, const FcsId& fcs);

/// One comparison step: error of the next station from the previous one.
ErrorEstimate propagate_hop(const ErrorEstimate& prev, const BpedEstimate& prev_bped,
                            const BpedEstimate& next_bped);

/// Station adjacency through shared EVs; for every station pair the most
/// precise comparable group pair is kept.
struct HopLink {
  EvId ev_id;
  SegmentGroup a;  // group at the lexicographically smaller station
  SegmentGroup b;
};
using LinkGraph = std::map<FcsId, std::map<FcsId, HopLink>>;
LinkGraph build_link_graph(const std::vector<SegmentGroup>& groups, const ModelConfig& cfg);

/// Breadth-first expansion from every reference station over non-reference
/// stations. Each root-to-leaf path of the search tree is one chain.
std::vector<ComparisonChain> build_chains(const LinkGraph& graph, const std::set<FcsId>& rcs_ids,
                                          const ModelConfig& cfg);
std::vector<ComparisonChain> build_chains(const std::vector<SegmentGroup>& groups,
                                          const std::vector<RcsCluster>& clusters,
                                          const ModelConfig& cfg);

/// Estimates for the destination of every hop, in hop order. Stops early when
/// a hop cannot be evaluated.
std::vector<ErrorEstimate> chain_propagate(const ComparisonChain& chain, const ErrorEstimate& root);

Acceptance acceptance_probability(double gamma, double sigma_gamma, double gamma_t);

ErrorEstimate combine_inverse_variance(std::span<const ErrorEstimate> estimates);

/// Minimum-variance unbiased combination of correlated estimates of one
/// quantity. Reduces to inverse-variance weighting for a diagonal covariance.
/// Throws DomainError when the covariance is not positive definite.
ErrorEstimate combine_correlated(std::span<const double> values,
                                 const std::vector<std::vector<double>>& cov);

FcsVerdict make_verdict(const FcsId& fcs, const ErrorEstimate& est, Provenance provenance,
                        const ModelConfig& cfg);

struct EstimationOutcome {
  std::vector<RcsCluster> clusters;
  std::vector<ComparisonChain> chains;
  std::set<FcsId> rcs_ids;
  std::vector<FcsVerdict> verdicts;  // sorted by fcs_id
};

EstimationOutcome estimate_errors(const std::vector<SegmentGroup>& groups, const ModelConfig& cfg);

}  // namespace mpc
