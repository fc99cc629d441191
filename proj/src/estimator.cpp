#include "mpc/estimator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <queue>
#include <random>
#include <tuple>

#include <Eigen/Cholesky>

#include "mpc/soc_quant.hpp"

namespace mpc {
namespace {

double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Standard normal restricted to [a, b].
double sample_truncated(std::mt19937_64& rng, double a, double b) {
  std::normal_distribution<double> normal;
  if (b - a > 2.0) {
    while (true) {
      const double z = normal(rng);
      if (z >= a && z <= b) return z;
    }
  }
  std::uniform_real_distribution<double> uni(a, b);
  std::uniform_real_distribution<double> u01;
  const double peak = (a <= 0.0 && b >= 0.0) ? 0.0 : (b < 0.0 ? b : a);
  const double log_peak = -0.5 * peak * peak;
  while (true) {
    const double z = uni(rng);
    if (std::log(u01(rng)) <= -0.5 * z * z - log_peak) return z;
  }
}

// Maximum clique over at most 64 nodes; returns every maximal clique to the
// visitor via Bron-Kerbosch with pivoting.
template <class Visit>
void maximal_cliques(const std::vector<std::uint64_t>& adj, std::uint64_t r, std::uint64_t p,
                     std::uint64_t x, Visit& visit) {
  if (p == 0 && x == 0) {
    visit(r);
    return;
  }
  const std::uint64_t px = p | x;
  const int pivot = std::countr_zero(px);
  std::uint64_t candidates = p & ~adj[static_cast<std::size_t>(pivot)];
  while (candidates) {
    const int v = std::countr_zero(candidates);
    const std::uint64_t bit = std::uint64_t{1} << v;
    candidates &= candidates - 1;
    maximal_cliques(adj, r | bit, p & adj[static_cast<std::size_t>(v)],
                    x & adj[static_cast<std::size_t>(v)], visit);
    p &= ~bit;
    x |= bit;
  }
}

}  // namespace

std::string to_string(TerminalReason r) {
  switch (r) {
    case TerminalReason::MaxLength: return "MaxLength";
    case TerminalReason::HitAnotherRcs: return "HitAnotherRcs";
    case TerminalReason::DeadEnd: return "DeadEnd";
  }
  throw InvariantError("unknown terminal reason");
}

double TruncatedNormalErrorModel::pdf(double x) const {
  if (x < -half_width || x > half_width) return 0.0;
  const double alpha = half_width / sigma;
  const double mass = std::erf(alpha / std::numbers::sqrt2);
  return std_normal_pdf(x / sigma) / sigma / mass;
}

double TruncatedNormalErrorModel::variance() const {
  if (!std::isfinite(half_width)) return sigma * sigma;
  const double alpha = half_width / sigma;
  if (alpha < 1e-3) {
    return half_width * half_width / 3.0 * (1.0 - 2.0 * alpha * alpha / 15.0);
  }
  const double mass = std::erf(alpha / std::numbers::sqrt2);
  return sigma * sigma * (1.0 - 2.0 * alpha * std_normal_pdf(alpha) / mass);
}

std::vector<FcsId> ComparisonChain::stations() const {
  std::vector<FcsId> out{root_rcs_id};
  for (const auto& h : hops) out.push_back(h.to_fcs);
  return out;
}

std::string ComparisonChain::path() const {
  std::string out = root_rcs_id;
  for (const auto& h : hops) out += ">" + h.to_fcs;
  return out;
}

BpedEstimate pool_bped(std::span<const BpedEstimate> estimates) {
  if (estimates.empty()) throw DomainError("cannot pool zero BPED estimates");
  if (estimates.size() == 1) return estimates.front();
  const double n = static_cast<double>(estimates.size());
  BpedEstimate out;
  double ss_total = 0.0, ss_quant = 0.0, ss_repeat = 0.0, ss_cv = 0.0;
  for (const auto& e : estimates) {
    out.expected_e_d += e.expected_e_d;
    out.expected_e_d_sq += e.expected_e_d_sq;
    ss_total += e.sigma_total * e.sigma_total;
    ss_quant += e.sigma_quant * e.sigma_quant;
    ss_repeat += e.sigma_repeat * e.sigma_repeat;
    ss_cv += e.sigma_cv * e.sigma_cv;
    if (!out.segment_ref.empty()) out.segment_ref += '|';
    out.segment_ref += e.segment_ref;
  }
  out.expected_e_d /= n;
  out.expected_e_d_sq /= n;
  out.sigma_total = std::sqrt(ss_total) / n;
  out.sigma_quant = std::sqrt(ss_quant) / n;
  out.sigma_repeat = std::sqrt(ss_repeat) / n;
  out.sigma_cv = std::sqrt(ss_cv) / n;
  return out;
}

bool groups_comparable(const SegmentGroup& a, const SegmentGroup& b, const ModelConfig& cfg) {
  return std::abs(a.mean_current_a - b.mean_current_a) <= cfg.d_current_threshold_a &&
         std::abs(a.mean_temp_c - b.mean_temp_c) <= cfg.d_temperature_threshold_c;
}

double pair_rel_error(double e_d_a, double e_d_b) {
  return std::abs(e_d_a - e_d_b) / std::min(e_d_a, e_d_b);
}

std::vector<SegmentGroup> build_segment_groups(const std::vector<ChargingSegment>& segments,
                                               const ModelConfig& cfg) {
  std::map<std::pair<EvId, FcsId>, std::vector<const ChargingSegment*>> buckets;
  for (const auto& s : segments) buckets[{s.ev_id, s.fcs_id}].push_back(&s);

  std::vector<SegmentGroup> groups;
  for (auto& [key, segs] : buckets) {
    std::sort(segs.begin(), segs.end(), [](const ChargingSegment* a, const ChargingSegment* b) {
      return std::tuple(a->mean_current_a, a->mean_temp_c, a->key()) <
             std::tuple(b->mean_current_a, b->mean_temp_c, b->key());
    });
    int index = 0;
    std::size_t i = 0;
    while (i < segs.size()) {
      double t_lo = segs[i]->mean_temp_c, t_hi = t_lo;
      std::size_t j = i + 1;
      while (j < segs.size()) {
        const double t = segs[j]->mean_temp_c;
        if (segs[j]->mean_current_a - segs[i]->mean_current_a > cfg.d_current_threshold_a) break;
        if (std::max(t_hi, t) - std::min(t_lo, t) > cfg.d_temperature_threshold_c) break;
        t_lo = std::min(t_lo, t);
        t_hi = std::max(t_hi, t);
        ++j;
      }
      SegmentGroup g;
      g.ev_id = key.first;
      g.fcs_id = key.second;
      g.index = index++;
      std::vector<BpedEstimate> estimates;
      for (std::size_t k = i; k < j; ++k) {
        g.segment_keys.push_back(segs[k]->key());
        g.mean_current_a += segs[k]->mean_current_a;
        g.mean_temp_c += segs[k]->mean_temp_c;
        estimates.push_back(estimate_segment_bped(*segs[k], cfg));
      }
      g.mean_current_a /= static_cast<double>(j - i);
      g.mean_temp_c /= static_cast<double>(j - i);
      g.bped = pool_bped(estimates);
      groups.push_back(std::move(g));
      i = j;
    }
  }
  return groups;
}

double rcs_bias_sigma(const TruncatedNormalErrorModel& model, int n, double e_d_true_est) {
  if (n < 1) throw DomainError("cluster size must be positive");
  return std::sqrt(model.variance() / n) * e_d_true_est;
}

std::vector<RcsCluster> find_rcs_clusters(const std::vector<SegmentGroup>& groups,
                                          const ModelConfig& cfg) {
  std::map<EvId, std::vector<const SegmentGroup*>> by_ev;
  for (const auto& g : groups) by_ev[g.ev_id].push_back(&g);

  const TruncatedNormalErrorModel bias_model{cfg.fcs_error_sigma, cfg.rcs_rel_error_threshold_l / 2.0};
  std::vector<RcsCluster> clusters;
  for (auto& [ev, nodes] : by_ev) {
    std::set<FcsId> stations;
    for (const auto* g : nodes) stations.insert(g->fcs_id);
    if (static_cast<int>(stations.size()) < cfg.min_rcs_fcs_count) continue;
    if (nodes.size() > 64) {
      std::stable_sort(nodes.begin(), nodes.end(), [](const SegmentGroup* a, const SegmentGroup* b) {
        return a->segment_keys.size() > b->segment_keys.size();
      });
      nodes.resize(64);
    }
    const std::size_t m = nodes.size();
    std::vector<std::uint64_t> adj(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        const auto& a = *nodes[i];
        const auto& b = *nodes[j];
        if (a.fcs_id == b.fcs_id || !groups_comparable(a, b, cfg)) continue;
        if (pair_rel_error(a.bped.expected_e_d, b.bped.expected_e_d) > cfg.rcs_rel_error_threshold_l) {
          continue;
        }
        adj[i] |= std::uint64_t{1} << j;
        adj[j] |= std::uint64_t{1} << i;
      }
    }

    // Largest clique; ties go to the tightest spread, then to the smallest station list.
    std::uint64_t best = 0;
    int best_size = 0;
    double best_spread = 0.0;
    std::vector<FcsId> best_ids;
    auto visit = [&](std::uint64_t clique) {
      const int size = std::popcount(clique);
      if (size < cfg.min_rcs_fcs_count || size < best_size) return;
      double spread = 0.0;
      std::vector<FcsId> ids;
      for (std::uint64_t c = clique; c; c &= c - 1) {
        const auto i = static_cast<std::size_t>(std::countr_zero(c));
        ids.push_back(nodes[i]->fcs_id);
        for (std::uint64_t d = c & (c - 1); d; d &= d - 1) {
          const auto j = static_cast<std::size_t>(std::countr_zero(d));
          spread = std::max(spread, pair_rel_error(nodes[i]->bped.expected_e_d, nodes[j]->bped.expected_e_d));
        }
      }
      std::sort(ids.begin(), ids.end());
      if (size > best_size || spread < best_spread || (spread == best_spread && ids < best_ids)) {
        best = clique;
        best_size = size;
        best_spread = spread;
        best_ids = std::move(ids);
      }
    };
    const std::uint64_t all = m == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << m) - 1;
    maximal_cliques(adj, 0, all, 0, visit);
    if (best == 0) continue;

    RcsCluster cluster;
    cluster.ev_id = ev;
    cluster.max_pair_rel_error = best_spread;
    double sum = 0.0, ss = 0.0;
    for (std::uint64_t c = best; c; c &= c - 1) {
      const auto* g = nodes[static_cast<std::size_t>(std::countr_zero(c))];
      cluster.fcs_ids.push_back(g->fcs_id);
      cluster.per_fcs_bped[g->fcs_id] = g->bped;
      sum += g->bped.expected_e_d;
      ss += g->bped.sigma_total * g->bped.sigma_total;
    }
    std::sort(cluster.fcs_ids.begin(), cluster.fcs_ids.end());
    const double n = static_cast<double>(best_size);
    cluster.e_d_true_est = sum / n;
    cluster.sigma_e_d_true = std::sqrt(ss) / n;
    cluster.sigma_bias = rcs_bias_sigma(bias_model, best_size, cluster.e_d_true_est);
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

std::vector<RcsCluster> find_rcs_clusters(const std::vector<ChargingSegment>& pool,
                                          const ModelConfig& cfg) {
  return find_rcs_clusters(build_segment_groups(pool, cfg), cfg);
}

double cluster_probability(int n, double gamma0, double l, double sigma, std::uint64_t seed,
                           std::size_t fleets) {
  if (n < 1) throw DomainError("cluster size must be positive");
  if (!(gamma0 > 0.0) || !(l > 0.0) || !(sigma > 0.0)) {
    throw DomainError("cluster probability parameters must be positive");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> u01;
  const double band = gamma0 / sigma;  // standardized units from here on
  const double width = l / sigma;
  const bool conditioned = n > 1 && std::isfinite(width);
  const double peak_mass = conditioned ? std_normal_cdf(width / 2.0) - std_normal_cdf(-width / 2.0) : 1.0;

  std::size_t hits = 0;
  for (std::size_t f = 0; f < fleets; ++f) {
    if (!conditioned) {
      bool inside = true;
      for (int i = 0; i < n; ++i) {
        const double z = normal(rng);
        if (std::abs(z) > band) inside = false;
      }
      hits += inside;
      continue;
    }
    // The fleet minimum has density proportional to phi(x) * (Phi(x + w) - Phi(x))^(n-1);
    // the other members are then i.i.d. on [x, x + w].
    double lo = 0.0;
    while (true) {
      lo = normal(rng);
      const double ratio = (std_normal_cdf(lo + width) - std_normal_cdf(lo)) / peak_mass;
      if (u01(rng) <= std::pow(ratio, n - 1)) break;
    }
    double hi = lo;
    for (int i = 1; i < n; ++i) hi = std::max(hi, sample_truncated(rng, lo, lo + width));
    hits += (lo >= -band && hi <= band);
  }
  return static_cast<double>(hits) / static_cast<double>(fleets);
}

ErrorEstimate rcs_error(const RcsCluster& cluster, const FcsId& fcs) {
  const auto it = cluster.per_fcs_bped.find(fcs);
  if (it == cluster.per_fcs_bped.end()) throw DomainError("station " + fcs + " is not in the cluster");
  const double e1 = cluster.e_d_true_est;
  if (!(e1 > 0.0)) throw DataError("cluster BPED estimate must be positive");
  const double ea = it->second.expected_e_d;
  const double sa = it->second.sigma_total;
  const double n = static_cast<double>(cluster.fcs_ids.size());
  const double cov = sa * sa / n;
  const double e1_2 = e1 * e1;
  const double var = sa * sa / e1_2 +
                     ea * ea * cluster.sigma_e_d_true * cluster.sigma_e_d_true / (e1_2 * e1_2) +
                     ea * ea * cluster.sigma_bias * cluster.sigma_bias / (e1_2 * e1_2) -
                     2.0 * ea / (e1_2 * e1) * cov;
  return {ea / e1 - 1.0, var > 0.0 ? std::sqrt(var) : 0.0};
}

ErrorEstimate propagate_hop(const ErrorEstimate& prev, const BpedEstimate& prev_bped,
                            const BpedEstimate& next_bped) {
  const double ep = prev_bped.expected_e_d;
  const double en = next_bped.expected_e_d;
  if (!(ep > 0.0) || !(en > 0.0)) throw DomainError("hop BPEDs must be positive");
  const double gamma = chain_error(relative_eem_error(en, ep), en, ep, prev.gamma);
  const double d_next = (1.0 + prev.gamma) / ep;
  const double d_prev = (1.0 + prev.gamma) * en / (ep * ep);
  const double d_gamma = en / ep;
  const double var = d_next * d_next * next_bped.sigma_total * next_bped.sigma_total +
                     d_prev * d_prev * prev_bped.sigma_total * prev_bped.sigma_total +
                     d_gamma * d_gamma * prev.sigma * prev.sigma;
  return {gamma, std::sqrt(var)};
}

LinkGraph build_link_graph(const std::vector<SegmentGroup>& groups, const ModelConfig& cfg) {
  std::map<EvId, std::vector<const SegmentGroup*>> by_ev;
  for (const auto& g : groups) by_ev[g.ev_id].push_back(&g);

  struct Candidate {
    double score;
    EvId ev;
    int ia, ib;
    const SegmentGroup* a;
    const SegmentGroup* b;
  };
  std::map<std::pair<FcsId, FcsId>, Candidate> best;
  for (const auto& [ev, nodes] : by_ev) {
    for (const auto* x : nodes) {
      for (const auto* y : nodes) {
        if (!(x->fcs_id < y->fcs_id) || !groups_comparable(*x, *y, cfg)) continue;
        const double rx = x->bped.sigma_total / x->bped.expected_e_d;
        const double ry = y->bped.sigma_total / y->bped.expected_e_d;
        Candidate c{rx * rx + ry * ry, ev, x->index, y->index, x, y};
        auto [it, inserted] = best.try_emplace({x->fcs_id, y->fcs_id}, c);
        if (!inserted && std::tie(c.score, c.ev, c.ia, c.ib) <
                             std::tie(it->second.score, it->second.ev, it->second.ia, it->second.ib)) {
          it->second = c;
        }
      }
    }
  }
  LinkGraph graph;
  for (const auto& [pair, c] : best) {
    HopLink link{c.ev, *c.a, *c.b};
    graph[pair.first][pair.second] = link;
    graph[pair.second][pair.first] = link;
  }
  return graph;
}

std::vector<ComparisonChain> build_chains(const LinkGraph& graph, const std::set<FcsId>& rcs_ids,
                                          const ModelConfig& cfg) {
  struct Node {
    FcsId fcs;
    int parent;
    int depth;
    bool has_child = false;
    bool sees_rcs = false;
  };
  std::vector<ComparisonChain> chains;
  const int max_depth = cfg.max_chain_len_fcs - 1;
  for (const auto& root : rcs_ids) {
    const auto root_it = graph.find(root);
    if (root_it == graph.end()) continue;
    std::vector<Node> nodes{{root, -1, 0}};
    std::set<FcsId> visited{root};
    std::queue<int> frontier;
    frontier.push(0);
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop();
      if (nodes[static_cast<std::size_t>(u)].depth >= max_depth) continue;
      const auto adj = graph.find(nodes[static_cast<std::size_t>(u)].fcs);
      if (adj == graph.end()) continue;
      for (const auto& [v, link] : adj->second) {
        if (v != root && rcs_ids.count(v)) {
          nodes[static_cast<std::size_t>(u)].sees_rcs = true;
          continue;
        }
        if (!visited.insert(v).second) continue;
        nodes[static_cast<std::size_t>(u)].has_child = true;
        nodes.push_back({v, u, nodes[static_cast<std::size_t>(u)].depth + 1});
        frontier.push(static_cast<int>(nodes.size() - 1));
      }
    }

    auto link_group = [&](const FcsId& station, const HopLink& link) -> const SegmentGroup& {
      return link.a.fcs_id == station ? link.a : link.b;
    };
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& leaf = nodes[i];
      if (leaf.has_child) continue;
      ComparisonChain chain;
      chain.root_rcs_id = root;
      if (leaf.depth >= max_depth) chain.terminal_reason = TerminalReason::MaxLength;
      else if (leaf.sees_rcs) chain.terminal_reason = TerminalReason::HitAnotherRcs;
      else chain.terminal_reason = TerminalReason::DeadEnd;
      if (i == 0 && chain.terminal_reason != TerminalReason::HitAnotherRcs) continue;

      std::vector<int> path;
      for (int k = static_cast<int>(i); k >= 0; k = nodes[static_cast<std::size_t>(k)].parent) path.push_back(k);
      std::reverse(path.begin(), path.end());
      for (std::size_t k = 1; k < path.size(); ++k) {
        const auto& from = nodes[static_cast<std::size_t>(path[k - 1])].fcs;
        const auto& to = nodes[static_cast<std::size_t>(path[k])].fcs;
        const auto& link = graph.at(from).at(to);
        chain.hops.push_back({from, to, link.ev_id, link_group(from, link), link_group(to, link)});
      }
      chains.push_back(std::move(chain));
    }
  }
  return chains;
}

std::vector<ComparisonChain> build_chains(const std::vector<SegmentGroup>& groups,
                                          const std::vector<RcsCluster>& clusters,
                                          const ModelConfig& cfg) {
  std::set<FcsId> rcs_ids;
  for (const auto& c : clusters) rcs_ids.insert(c.fcs_ids.begin(), c.fcs_ids.end());
  return build_chains(build_link_graph(groups, cfg), rcs_ids, cfg);
}

std::vector<ErrorEstimate> chain_propagate(const ComparisonChain& chain, const ErrorEstimate& root) {
  std::vector<ErrorEstimate> out;
  ErrorEstimate prev = root;
  for (const auto& hop : chain.hops) {
    try {
      prev = propagate_hop(prev, hop.from_group.bped, hop.to_group.bped);
    } catch (const DomainError&) {
      break;
    }
    out.push_back(prev);
  }
  return out;
}

Acceptance acceptance_probability(double gamma, double sigma_gamma, double gamma_t) {
  if (!(sigma_gamma >= 0.0)) throw DomainError("uncertainty must be non-negative");
  if (!(gamma_t > 0.0)) throw DomainError("acceptable band must be positive");
  Acceptance a;
  if (sigma_gamma == 0.0) {
    a.probability = std::abs(gamma) <= gamma_t ? 1.0 : 0.0;
    a.classification = a.probability > 0.5 ? Classification::Acceptable : Classification::Unacceptable;
    return a;
  }
  const double lo = gamma - sigma_gamma;
  const double hi = gamma + sigma_gamma;
  const double overlap = std::max(0.0, std::min(hi, gamma_t) - std::max(lo, -gamma_t));
  a.probability = std::min(1.0, overlap / (2.0 * sigma_gamma));
  if (lo < -gamma_t && hi > gamma_t) a.classification = Classification::Unreliable;
  else a.classification = a.probability > 0.5 ? Classification::Acceptable : Classification::Unacceptable;
  return a;
}

ErrorEstimate combine_inverse_variance(std::span<const ErrorEstimate> estimates) {
  if (estimates.empty()) throw DomainError("nothing to combine");
  if (estimates.size() == 1) return estimates.front();
  double exact_sum = 0.0;
  int exact = 0;
  for (const auto& e : estimates) {
    if (e.sigma == 0.0) {
      exact_sum += e.gamma;
      ++exact;
    }
  }
  if (exact > 0) return {exact_sum / exact, 0.0};
  double w_sum = 0.0, wg_sum = 0.0;
  for (const auto& e : estimates) {
    const double w = 1.0 / (e.sigma * e.sigma);
    w_sum += w;
    wg_sum += w * e.gamma;
  }
  return {wg_sum / w_sum, std::sqrt(1.0 / w_sum)};
}

ErrorEstimate combine_correlated(std::span<const double> values,
                                 const std::vector<std::vector<double>>& cov) {
  const auto n = static_cast<Eigen::Index>(values.size());
  if (n == 0) throw DomainError("nothing to combine");
  if (cov.size() != values.size()) throw DomainError("covariance size mismatch");
  Eigen::MatrixXd m(n, n);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i) = values[static_cast<std::size_t>(i)];
    const auto& row = cov[static_cast<std::size_t>(i)];
    if (row.size() != values.size()) throw DomainError("covariance size mismatch");
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw DomainError("covariance is not positive definite");
  const Eigen::VectorXd w = llt.solve(Eigen::VectorXd::Ones(n));
  const double precision = w.sum();
  if (!(precision > 0.0) || !std::isfinite(precision)) throw DomainError("degenerate covariance");
  return {w.dot(x) / precision, std::sqrt(1.0 / precision)};
}

FcsVerdict make_verdict(const FcsId& fcs, const ErrorEstimate& est, Provenance provenance,
                        const ModelConfig& cfg) {
  const auto acc = acceptance_probability(est.gamma, est.sigma, cfg.acceptable_gamma_t);
  FcsVerdict v;
  v.fcs_id = fcs;
  v.gamma = est.gamma;
  v.sigma_gamma = est.sigma;
  v.interval = {est.gamma - est.sigma, est.gamma + est.sigma};
  v.p_acceptable = std::round(acc.probability * 1000.0) / 10.0;
  v.classification = acc.classification;
  v.provenance = std::move(provenance);
  return v;
}

EstimationOutcome estimate_errors(const std::vector<SegmentGroup>& groups, const ModelConfig& cfg) {
  EstimationOutcome out;
  out.clusters = find_rcs_clusters(groups, cfg);

  std::map<FcsId, std::vector<ErrorEstimate>> rcs_estimates;
  std::map<FcsId, std::vector<std::string>> rcs_sources;
  for (const auto& cluster : out.clusters) {
    for (const auto& fcs : cluster.fcs_ids) {
      rcs_estimates[fcs].push_back(rcs_error(cluster, fcs));
      rcs_sources[fcs].push_back(cluster.ev_id);
      out.rcs_ids.insert(fcs);
    }
  }
  std::map<FcsId, ErrorEstimate> rcs_combined;
  std::map<FcsId, FcsVerdict> verdicts;
  for (const auto& [fcs, estimates] : rcs_estimates) {
    const auto combined = combine_inverse_variance(estimates);
    rcs_combined[fcs] = combined;
    verdicts[fcs] = make_verdict(fcs, combined, {ProvenanceKind::RcsDirect, rcs_sources[fcs]}, cfg);
  }

  out.chains = build_chains(build_link_graph(groups, cfg), out.rcs_ids, cfg);

  // Every estimate is written as a sum of independent error factors: each
  // reference station's own error, the bias shared by a cluster, and one term
  // per hop. Estimates that share factors are correlated.
  using Loadings = std::map<std::string, double>;
  std::map<FcsId, Loadings> root_loadings;
  for (const auto& [fcs, combined] : rcs_combined) {
    Loadings& l = root_loadings[fcs];
    if (rcs_estimates.at(fcs).size() != 1) {
      l["rcs:" + fcs] = combined.sigma;
      continue;
    }
    const RcsCluster* owner = nullptr;
    for (const auto& c : out.clusters) {
      if (std::binary_search(c.fcs_ids.begin(), c.fcs_ids.end(), fcs)) owner = &c;
    }
    const double e1 = owner->e_d_true_est;
    const double shared = owner->per_fcs_bped.at(fcs).expected_e_d / (e1 * e1) *
                          std::hypot(owner->sigma_e_d_true, owner->sigma_bias);
    const double own_sq = combined.sigma * combined.sigma - shared * shared;
    l["cluster:" + owner->ev_id] = shared;
    l["rcs:" + fcs] = own_sq > 0.0 ? std::sqrt(own_sq) : 0.0;
  }

  struct ChainEstimate {
    ErrorEstimate est;
    std::string path;
    Loadings loadings;
  };
  // One estimate per (station, root): chains from one root share their prefixes.
  std::map<FcsId, std::map<FcsId, ChainEstimate>> chain_estimates;
  for (const auto& chain : out.chains) {
    const auto estimates = chain_propagate(chain, rcs_combined.at(chain.root_rcs_id));
    ChainEstimate entry{rcs_combined.at(chain.root_rcs_id), chain.root_rcs_id, root_loadings.at(chain.root_rcs_id)};
    for (std::size_t k = 0; k < estimates.size(); ++k) {
      const auto& hop = chain.hops[k];
      const double carry = hop.to_group.bped.expected_e_d / hop.from_group.bped.expected_e_d;
      const double own_sq = estimates[k].sigma * estimates[k].sigma - carry * carry * entry.est.sigma * entry.est.sigma;
      for (auto& [factor, loading] : entry.loadings) loading *= carry;
      entry.loadings["hop:" + hop.from_fcs + ">" + hop.to_fcs] = own_sq > 0.0 ? std::sqrt(own_sq) : 0.0;
      entry.est = estimates[k];
      entry.path += ">" + hop.to_fcs;
      chain_estimates[hop.to_fcs].try_emplace(chain.root_rcs_id, entry);
    }
  }
  for (const auto& [fcs, by_root] : chain_estimates) {
    std::vector<ErrorEstimate> estimates;
    std::vector<const Loadings*> loadings;
    Provenance prov{ProvenanceKind::Chain, {}};
    for (const auto& [root, entry] : by_root) {
      estimates.push_back(entry.est);
      loadings.push_back(&entry.loadings);
      prov.sources.push_back(entry.path);
    }
    ErrorEstimate combined = estimates.front();
    const bool exact = std::any_of(estimates.begin(), estimates.end(), [](const auto& e) { return e.sigma == 0.0; });
    if (estimates.size() > 1 && !exact) {
      std::vector<double> values;
      std::vector<std::vector<double>> cov(estimates.size(), std::vector<double>(estimates.size(), 0.0));
      for (std::size_t i = 0; i < estimates.size(); ++i) {
        values.push_back(estimates[i].gamma);
        for (std::size_t j = 0; j < estimates.size(); ++j) {
          if (i == j) {
            cov[i][j] = estimates[i].sigma * estimates[i].sigma;
            continue;
          }
          for (const auto& [factor, loading] : *loadings[i]) {
            const auto it = loadings[j]->find(factor);
            if (it != loadings[j]->end()) cov[i][j] += loading * it->second;
          }
        }
      }
      try {
        combined = combine_correlated(values, cov);
      } catch (const DomainError&) {
        combined = *std::min_element(estimates.begin(), estimates.end(),
                                     [](const auto& a, const auto& b) { return a.sigma < b.sigma; });
      }
    } else if (estimates.size() > 1) {
      combined = combine_inverse_variance(estimates);
    }
    verdicts[fcs] = make_verdict(fcs, combined, std::move(prov), cfg);
  }
  for (auto& [fcs, v] : verdicts) out.verdicts.push_back(std::move(v));
  return out;
}

}  // namespace mpc
