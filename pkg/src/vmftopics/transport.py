"""Entropic optimal transport between topics and keyword groups.

The cost of pairing topic t with keyword group s is the mean negative log
probability the topic's word distribution assigns to the group's words.
A Sinkhorn plan with unit row/column marginals is computed in the log
domain (mandatory at small epsilon), rounded to a hard matching, and
cross-checked against brute-force enumeration at verification time.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CostMatrix",
    "TransportPlan",
    "Matching",
    "cost_matrix",
    "cost_matrix_values",
    "sinkhorn",
    "ot_loss",
    "plan_entropy",
    "round_to_feasible",
    "round_to_matching",
    "brute_force_matching",
    "check_lemma_condition",
]

DEFAULT_EPSILON = 0.01
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000
BRUTE_FORCE_LIMIT = 8


@dataclass(frozen=True)
class CostMatrix:
    """|T| x |S| pairing costs; entry (t, s) = -mean_{x in s} log E[t, x]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise ValueError("cost matrix must be 2-D")
        if not np.all(np.isfinite(v)):
            raise ValueError("cost matrix entries must be finite")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class TransportPlan:
    """Sinkhorn coupling with the settings that produced it."""

    plan: np.ndarray
    epsilon: float
    iterations: int
    converged: bool


@dataclass
class Matching:
    """Hard topic -> group assignment rounded from a plan."""

    assignment: tuple[int, ...]
    plan_gap: float

    def __post_init__(self):
        if sorted(self.assignment) != list(range(len(self.assignment))):
            raise ValueError("assignment must be a permutation")

    def as_dict(self) -> dict[int, int]:
        return {t: s for t, s in enumerate(self.assignment)}


def cost_matrix_values(log_e: np.ndarray, group_indices: list[list[int]]) -> np.ndarray:
    """Raw cost computation from log topic-word probabilities."""
    log_e = np.asarray(log_e, dtype=np.float64)
    rows = []
    for idx in group_indices:
        if not idx:
            raise ValueError("keyword group is empty")
        rows.append(-np.mean(log_e[:, idx], axis=1))
    return np.stack(rows, axis=1)  # (topics, groups)


def cost_matrix(topic_word, groups, vocab) -> CostMatrix:
    """Cost of pairing each topic with each keyword group.

    ``topic_word`` is the row-stochastic M x V matrix, ``groups`` a
    KeywordGroups, ``vocab`` the Vocabulary the matrix columns index.
    Duplicate words in a group count once per occurrence.
    """
    e = np.asarray(topic_word, dtype=np.float64)
    indices = []
    for gi, words in enumerate(groups.groups):
        idx = []
        for w in words:
            if w not in vocab.index:
                raise KeyError(f"keyword {w!r} (group {gi}) is not in the vocabulary")
            idx.append(vocab.index[w])
        indices.append(idx)
    with np.errstate(divide="ignore"):
        log_e = np.log(e)
    return CostMatrix(values=cost_matrix_values(log_e, indices))


def _uniform_marginals(shape) -> tuple[np.ndarray, np.ndarray]:
    m, n = shape
    total = float(min(m, n))
    return np.full(m, total / m), np.full(n, total / n)


def sinkhorn(
    cost,
    epsilon: float = DEFAULT_EPSILON,
    marginals: tuple[np.ndarray, np.ndarray] | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> TransportPlan:
    """Entropic OT plan by log-domain alternating scaling.

    Solves min <P, C> - epsilon h(P) over couplings with the prescribed
    marginals (default: unit row and column sums).  Log-domain updates keep
    the computation stable for epsilon well below the cost scale, and the
    regularization is annealed from the cost scale down to the target
    epsilon; without the annealing the plain iteration can stall at O(1/t)
    on degenerate duals when epsilon is far below the cost gaps.
    """
    c = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if marginals is None:
        r, s = _uniform_marginals(c.shape)
    else:
        r = np.asarray(marginals[0], dtype=np.float64)
        s = np.asarray(marginals[1], dtype=np.float64)
        if r.shape != (c.shape[0],) or s.shape != (c.shape[1],):
            raise ValueError("marginal shapes do not match the cost matrix")
        if np.any(r <= 0) or np.any(s <= 0):
            raise ValueError("marginals must be positive")
        if abs(r.sum() - s.sum()) > 1e-9 * max(r.sum(), 1.0):
            raise ValueError("marginal totals must be equal")

    log_r = np.log(r)
    log_s = np.log(s)
    f = np.zeros(c.shape[0])
    g = np.zeros(c.shape[1])

    schedule = []
    warm = max(float(np.max(c) - np.min(c)), epsilon)
    while warm > epsilon * 1.5:
        schedule.append(warm)
        warm /= 2.0
    schedule.append(epsilon)

    def _sweep(eps_now: float) -> float:
        nonlocal f, g
        f = eps_now * (log_r - _logsumexp((g[None, :] - c) / eps_now, axis=1))
        g = eps_now * (log_s - _logsumexp((f[:, None] - c) / eps_now, axis=0))
        plan_now = np.exp((f[:, None] + g[None, :] - c) / eps_now)
        return max(
            float(np.abs(plan_now.sum(axis=1) - r).max()),
            float(np.abs(plan_now.sum(axis=0) - s).max()),
        )

    total_it = 0
    err = np.inf
    for eps_now in schedule[:-1]:
        for _ in range(20):
            total_it += 1
            if _sweep(eps_now) < tol or total_it >= max_iter:
                break
    while total_it < max_iter:
        total_it += 1
        err = _sweep(epsilon)
        if err < tol:
            break
    plan = np.exp((f[:, None] + g[None, :] - c) / epsilon)
    # Degenerate duals can leave the scaling iteration creeping at O(1/t);
    # when the residual is already small, project onto the exact marginal
    # polytope (entry perturbation is bounded by the residual itself).
    if tol <= err <= 1e-4:
        plan = round_to_feasible(plan, marginals=(r, s))
    final_err = max(
        float(np.abs(plan.sum(axis=1) - r).max()),
        float(np.abs(plan.sum(axis=0) - s).max()),
    )
    return TransportPlan(
        plan=plan, epsilon=epsilon, iterations=total_it, converged=final_err < tol
    )


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    hi = np.max(a, axis=axis, keepdims=True)
    out = hi + np.log(np.sum(np.exp(a - hi), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def round_to_feasible(plan, marginals: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Project a near-feasible plan onto the exact marginal polytope.

    Row scaling, column scaling, then a rank-1 fill of the residual mass.
    The cost perturbation is bounded by the marginal violation, so a
    rounded plan can never undercut the optimal matching cost.
    """
    p = (plan.plan if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)).copy()
    if marginals is None:
        r, s = _uniform_marginals(p.shape)
    else:
        r, s = (np.asarray(m, dtype=np.float64) for m in marginals)
    row = p.sum(axis=1)
    p *= np.minimum(1.0, np.divide(r, row, out=np.ones_like(row), where=row > 0))[:, None]
    col = p.sum(axis=0)
    p *= np.minimum(1.0, np.divide(s, col, out=np.ones_like(col), where=col > 0))[None, :]
    dr = r - p.sum(axis=1)
    dc = s - p.sum(axis=0)
    total = dr.sum()
    if total > 1e-300:
        p += np.outer(dr, dc) / total
    return p


def plan_entropy(plan: np.ndarray) -> float:
    """h(P) = -sum P log P with 0 log 0 = 0."""
    p = np.asarray(plan, dtype=np.float64)
    mask = p > 0
    return float(-np.sum(p[mask] * np.log(p[mask])))


def ot_loss(cost, plan, epsilon: float = DEFAULT_EPSILON) -> float:
    """Transport cost plus entropy penalty: <P, C> - epsilon h(P).

    At a permutation plan the entropy term vanishes, so the value reduces
    to the summed matched costs.  Treating the plan as a constant, the
    gradient with respect to the cost matrix is the plan itself.
    """
    c = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)
    p = plan.plan if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    return float(np.sum(p * c)) - epsilon * plan_entropy(p)


def round_to_matching(plan) -> Matching:
    """Greedy largest-entry rounding with row/column elimination.

    Ties break toward the lowest topic index, then the lowest group index.
    """
    p = plan.plan if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("matching requires a square plan")
    n = p.shape[0]
    work = p.copy()
    assignment = [-1] * n
    for _ in range(n):
        best = np.nanmax(work)
        ts, ss = np.nonzero(work == best)
        t, s = int(ts[0]), int(ss[0])  # np.nonzero is row-major: lowest t, then s
        assignment[t] = s
        work[t, :] = -np.inf
        work[:, s] = -np.inf
    perm = np.zeros_like(p)
    perm[np.arange(n), assignment] = 1.0
    gap = float(np.abs(p - perm).max())
    return Matching(assignment=tuple(assignment), plan_gap=gap)


def brute_force_matching(cost) -> tuple[tuple[int, ...], float]:
    """Exhaustive minimum-cost matching; the oracle for plan rounding."""
    c = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)
    if c.shape[0] != c.shape[1]:
        raise ValueError("brute-force matching requires a square cost matrix")
    n = c.shape[0]
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute-force matching limited to n <= {BRUTE_FORCE_LIMIT}")
    best_perm = None
    best_cost = np.inf
    rows = np.arange(n)
    for perm in itertools.permutations(range(n)):
        total = float(c[rows, perm].sum())
        if total < best_cost - 1e-15:
            best_cost = total
            best_perm = perm
    return tuple(best_perm), best_cost


@dataclass
class ExchangeCheck:
    topic_a: int
    topic_b: int
    margin: float
    holds: bool


def check_lemma_condition(cost, assignment) -> list[ExchangeCheck]:
    """Pairwise exchange condition on a matching.

    For matched pairs (t, s) and (t', s') the matched cost sum must not
    exceed the swapped sum: C[t,s] + C[t',s'] <= C[t,s'] + C[t',s].  Returns
    one record per unordered topic pair with the margin (swapped - matched).
    """
    c = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)
    perm = list(assignment)
    if sorted(perm) != list(range(c.shape[0])) or c.shape[0] != c.shape[1]:
        raise ValueError("assignment must be a permutation matching the cost matrix")
    out = []
    for t_a, t_b in itertools.combinations(range(len(perm)), 2):
        s_a, s_b = perm[t_a], perm[t_b]
        matched = c[t_a, s_a] + c[t_b, s_b]
        swapped = c[t_a, s_b] + c[t_b, s_a]
        margin = float(swapped - matched)
        out.append(ExchangeCheck(topic_a=t_a, topic_b=t_b, margin=margin, holds=margin >= 0.0))
    return out
