"""Deployable decision rules built from weighted particle clouds.

Three deployment styles share one particle representation.  The stochastic
rule treats x with probability equal to the particle vote share, the majority
vote rule thresholds that share at 1/2, and the batch procedure walks a grid
of cost bins, picking for each bin the vote rule whose estimated cost is
nearest the bin edge and greedily treating the highest-scored untreated
candidates until the ledger hits the edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from pbpolicy.data import FeatureMap, IPWScores
from pbpolicy.smc import WeightedParticles

__all__ = [
    "GibbsRule",
    "MajorityVoteRule",
    "BatchCandidates",
    "BatchPlan",
    "treat_probability",
    "mv_decide",
    "sample_assignments",
    "rule_empirical_cost",
    "rule_empirical_welfare",
    "batch_assign",
]


@dataclass
class GibbsRule:
    """Stochastic rule: treat x with probability equal to the vote share."""

    particles: WeightedParticles
    feature_map: FeatureMap


@dataclass
class MajorityVoteRule(GibbsRule):
    """Deterministic rule: treat when the vote share strictly exceeds 1/2."""


def _vote_shares(rule: GibbsRule, x: np.ndarray) -> np.ndarray:
    feats = rule.feature_map.transform(np.atleast_2d(np.asarray(x, dtype=float)))
    dec = feats @ rule.particles.thetas.T > 0.0
    # rounding in the dot product can spill a hair past the unit interval
    return np.clip(dec @ rule.particles.weights, 0.0, 1.0)


def treat_probability(rule: GibbsRule, x):
    """Particle vote share at x; scalar for one point, array for a matrix."""
    x = np.asarray(x, dtype=float)
    shares = _vote_shares(rule, x)
    return float(shares[0]) if x.ndim == 1 else shares


def mv_decide(rule: MajorityVoteRule, x):
    """1 when the vote share strictly exceeds 1/2, else 0."""
    x = np.asarray(x, dtype=float)
    dec = (_vote_shares(rule, x) > 0.5).astype(int)
    return int(dec[0]) if x.ndim == 1 else dec


def sample_assignments(rule: GibbsRule, x, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli draws of the stochastic rule, one per row of x."""
    shares = _vote_shares(rule, x)
    return (rng.uniform(size=shares.shape[0]) < shares).astype(int)


def _check_aligned(scores: IPWScores, features: np.ndarray):
    if features.shape[0] != scores.n:
        raise ValueError("scores and features have mismatched lengths")


def rule_empirical_cost(rule: GibbsRule, scores: IPWScores, features) -> float:
    """Empirical IPW cost of the stochastic rule on transformed features.

    Equals the particle-weighted average of the per-rule costs exactly, by
    exchanging the two sums.
    """
    features = np.asarray(features, dtype=float)
    _check_aligned(scores, features)
    shares = (features @ rule.particles.thetas.T > 0.0) @ rule.particles.weights
    return float(scores.delta_c @ shares / scores.n)


def rule_empirical_welfare(rule: GibbsRule, scores: IPWScores, features) -> float:
    """Empirical IPW welfare of the stochastic rule on transformed features."""
    features = np.asarray(features, dtype=float)
    _check_aligned(scores, features)
    shares = (features @ rule.particles.thetas.T > 0.0) @ rule.particles.weights
    return float(scores.delta_y @ shares / scores.n)


@dataclass
class BatchCandidates:
    """Target units awaiting assignment: covariates and per-unit costs."""

    x: np.ndarray
    unit_costs: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.unit_costs = np.asarray(self.unit_costs, dtype=float)
        if self.unit_costs.shape != (self.x.shape[0],):
            raise ValueError("unit costs not aligned with candidates")
        if np.any(self.unit_costs < 0):
            raise ValueError("unit costs must be non-negative")

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass
class BatchPlan:
    """Outcome of the binned greedy assignment.

    treated_by_bin holds the cumulative treated mask at the close of each
    bin; assignment_log records (bin index, candidate index) in the order
    treatments were handed out.
    """

    bin_edges: np.ndarray
    selected_u: tuple
    treated_by_bin: tuple
    realized_cost_by_bin: tuple
    assignment_log: tuple

    def __post_init__(self):
        for edge, cost in zip(self.bin_edges, self.realized_cost_by_bin):
            if cost > edge + 1e-9:
                raise ValueError("realized cost exceeds its bin edge")

    @property
    def treated(self) -> np.ndarray:
        return self.treated_by_bin[-1]


def batch_assign(candidates: BatchCandidates,
                 mv_rules_by_u: Mapping[float, tuple],
                 budget: float, n_bins: int,
                 bin_start: float = 0.0) -> BatchPlan:
    """Greedy cost-binned assignment over a shared budget.

    mv_rules_by_u maps each penalty u to (rule, estimated_cost).  For every
    bin edge the rule with estimated cost nearest the edge (absolute
    distance, ties to the smaller u) ranks the untreated candidates by vote
    share, ties broken by ascending candidate index, and treatment proceeds
    down the ranking until the next treatment would push cumulative cost past
    the edge.  Candidates treated in earlier bins stay treated.
    """
    if not mv_rules_by_u:
        raise ValueError("no vote rules to select from")
    if budget <= bin_start:
        raise ValueError("budget must exceed the bin start")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    edges = np.linspace(bin_start, budget, n_bins + 1)[1:]
    us = sorted(mv_rules_by_u)
    est_costs = np.array([float(mv_rules_by_u[u][1]) for u in us])
    # vote shares per rule, computed once
    shares = {u: np.asarray(_vote_shares(mv_rules_by_u[u][0], candidates.x))
              for u in us}

    treated = np.zeros(candidates.n, dtype=bool)
    cum_cost = 0.0
    selected, masks, realized, log = [], [], [], []
    for b, edge in enumerate(edges):
        pick = us[int(np.argmin(np.abs(est_costs - edge)))]
        selected.append(pick)
        score = shares[pick]
        order = np.lexsort((np.arange(candidates.n), -score))
        for idx in order:
            if treated[idx]:
                continue
            nxt = cum_cost + candidates.unit_costs[idx]
            if nxt > edge + 1e-12:
                break
            treated[idx] = True
            cum_cost = nxt
            log.append((b, int(idx)))
        masks.append(treated.copy())
        realized.append(cum_cost)
    return BatchPlan(bin_edges=edges, selected_u=tuple(selected),
                     treated_by_bin=tuple(masks),
                     realized_cost_by_bin=tuple(realized),
                     assignment_log=tuple(log))
