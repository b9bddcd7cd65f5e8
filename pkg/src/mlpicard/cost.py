"""Analytic draw-count accounting and cost-vs-accuracy constants.

The estimator consumes, per summand node, one uniform and ``dim``
normals, and ``dim`` normals per terminal-condition sample.  With that
schedule the total number of scalar draws of a depth-``n`` evaluation
satisfies an exact recursion (``rv_recursion``), which is bounded in
closed form by ``dim * (5m)**n`` (``rv_bound``).  The estimator's
measured ledgers must match ``rv_recursion`` exactly; the test suite
enforces this, so the recursion here is the analytic half of a
two-sided check and must not be derived from the estimator code.

Counts are plain Python integers, hence never overflow; callers that
need to ship counts through fixed-width formats can pass
``strict_int64=True`` to fail loudly instead of silently truncating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .problems import Problem

INT64_MAX = 2**63 - 1


class CountOverflowError(OverflowError):
    """A draw count does not fit in a signed 64-bit integer."""


@dataclass(frozen=True)
class CostModel:
    """Scalar-draw prices of the two node kinds of the recursion tree."""

    dim: int
    per_node_scalars: int = 0  # filled from dim: one uniform + dim normals
    g_node_scalars: int = 0  # filled from dim

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        per_node = self.per_node_scalars or self.dim + 1
        g_node = self.g_node_scalars or self.dim
        if per_node != self.dim + 1:
            raise ValueError("per_node_scalars must equal dim + 1")
        if g_node != self.dim:
            raise ValueError("g_node_scalars must equal dim")
        object.__setattr__(self, "per_node_scalars", per_node)
        object.__setattr__(self, "g_node_scalars", g_node)


def _rv_table(dim: int, n: int, m: int) -> list[tuple[int, int]]:
    """(normals, uniforms) totals for depths 0..n."""
    table = [(0, 0)]
    for k in range(1, n + 1):
        normals = dim * m**k
        uniforms = 0
        for level in range(k):
            fan = m ** (k - level)
            sub_n, sub_u = table[level]
            low_n, low_u = table[level - 1] if level >= 1 else (0, 0)
            normals += fan * (dim + sub_n + low_n)
            uniforms += fan * (1 + sub_u + low_u)
        table.append((normals, uniforms))
    return table


def rv_recursion(model: CostModel, n: int, m: int, variant=None, strict_int64: bool = False) -> int:
    """Exact total scalar draws (normals + uniforms) of one evaluation.

    ``variant`` is accepted for symmetry with the estimator but does not
    change the count: under either lower-index rule both halves of a
    telescoping summand are evaluated and each consumes its own subtree
    of draws.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if m < 1:
        raise ValueError("m must be >= 1")
    normals, uniforms = _rv_table(model.dim, n, m)[n]
    total = normals + uniforms
    if strict_int64 and total > INT64_MAX:
        raise CountOverflowError(f"draw count {total} exceeds int64")
    return total


def rv_recursion_split(model: CostModel, n: int, m: int) -> tuple[int, int]:
    """Exact (normals, uniforms) pair; sums to :func:`rv_recursion`."""
    if n < 0 or m < 1:
        raise ValueError("need n >= 0 and m >= 1")
    return _rv_table(model.dim, n, m)[n]


def rv_bound(dim: int, n: int, m: int, strict_int64: bool = False) -> int:
    """Closed-form upper bound ``dim * (5m)**n`` for the draw count."""
    if dim < 1 or n < 1 or m < 1:
        raise ValueError("need dim, n, m >= 1")
    value = dim * (5 * m) ** n
    if strict_int64 and value > INT64_MAX:
        raise CountOverflowError(f"bound {value} exceeds int64")
    return value


def _log_sup_factor(lip: float, horizon: float, delta: float) -> float:
    """log of ``sup_n (4 + 8*lip*horizon)**(n*(2+delta)) / n**(n*delta/2)``.

    The log of the summand, ``h(n) = alpha*n - beta*n*log(n)`` with
    ``alpha = (2+delta) log(4+8*lip*horizon)`` and ``beta = delta/2``, is
    strictly concave in ``n``, so the supremum over the positive integers
    sits at a neighbour of the stationary point ``exp(alpha/beta - 1)``.
    Evaluating there is exact and avoids scanning the (possibly enormous)
    prefix where the summand still grows.
    """
    alpha = (2.0 + delta) * math.log(4.0 + 8.0 * lip * horizon)
    beta = 0.5 * delta
    n_star = math.exp(alpha / beta - 1.0)
    candidates = {1}
    if n_star >= 1.0:
        candidates.add(int(math.floor(n_star)))
        candidates.add(int(math.ceil(n_star)))
    best = -math.inf
    for n in candidates:
        if n >= 1:
            best = max(best, alpha * n - beta * n * math.log(n))
    return best


def log_complexity_constant(
    problem: Problem, delta: float, g_l2: float, f0_norm: float
) -> float:
    """Natural log of the cost-vs-accuracy constant.

    The constant itself,

        C = [exp(lip*T) * (g_l2 + f0_norm)]**(2+delta)
            * sup_n (4 + 8*lip*T)**(n*(2+delta)) / n**(n*delta/2),

    is finite for every ``delta > 0`` but routinely exceeds the float64
    range (the sup factor alone is ``exp(753...)`` already for
    ``lip = 0, T = 1, delta = 1``), so downstream inequality checks work
    on this log scale.  Returns ``-inf`` when ``g_l2 + f0_norm == 0``.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if g_l2 < 0 or f0_norm < 0:
        raise ValueError("g_l2 and f0_norm must be >= 0")
    data = g_l2 + f0_norm
    if data == 0.0:
        return -math.inf
    lt = problem.lip * problem.horizon
    prefactor = (2.0 + delta) * (lt + math.log(data))
    return prefactor + _log_sup_factor(problem.lip, problem.horizon, delta)


def complexity_constant(
    problem: Problem, delta: float, g_l2: float, f0_norm: float
) -> float:
    """The cost-vs-accuracy constant as a float.

    Mathematically finite for every ``delta > 0``; returns ``inf`` when
    the value exceeds the float64 range (use
    :func:`log_complexity_constant` in that regime).
    """
    log_c = log_complexity_constant(problem, delta, g_l2, f0_norm)
    if log_c == -math.inf:
        return 0.0
    try:
        return math.exp(log_c)
    except OverflowError:
        return math.inf
