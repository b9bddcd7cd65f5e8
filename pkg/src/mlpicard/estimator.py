"""Recursive full-history Monte Carlo estimator for the semilinear heat fixed point.

``evaluate`` produces one realization of the depth-``n`` estimator
``U_{n,m}`` at a point ``(t, x)``.  The value is built from

* an average of ``m**n`` terminal-condition samples
  ``g(x + (increment over T - t))``, and
* for each level ``l < n``, an average of ``m**(n-l)`` telescoping
  summands ``f(R, y, U_l(R, y)) - f(R, y, U_{l-1}(R, y))`` weighted by
  ``(T - t)``, where ``R`` is uniform on ``[t, T]`` and
  ``y = x + (increment over R - t)``; the subtraction is dropped at
  ``l = 0`` because ``U_{-1} = U_0 = 0``.

Every draw is addressed by a multi-index: a summand node at level ``l``,
sample ``i``, extends the parent index by ``(l, i)``; terminal samples
extend it by ``(0, -i)``.  The level-``(l-1)`` half of a summand is
evaluated, at the same point ``(R, y)``, under a sub-index chosen by
:class:`LowerIndexRule`: a fresh subtree ``(parent, -l, i)`` or the same
subtree ``(parent, l, i)`` as the level-``l`` half, in which case the
two halves share whatever draws their key schedules have in common.

Accumulation is performed in a canonical order (terminal average first,
then levels ascending, samples ascending within a level) with a
compensated pairwise reduction, so results are bitwise identical for any
worker count or batch layout.  No draw is ever cached or shared across
distinct sub-indices; distinct subtrees must be freshly sampled for the
estimator to stay unbiased, which is also why the measured draw ledgers
reproduce the analytic count recursion exactly.
"""

from __future__ import annotations

import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .problems import Problem
from .streams import (
    MultiIndex,
    absorb,
    normal_from_state,
    path_state,
    seed_state,
    uniform_from_state,
)


class LowerIndexRule(enum.Enum):
    """How the level-``(l-1)`` half of a summand derives its randomness.

    FRESH_SUBTREE extends the parent index with a negated level entry,
    so the two halves of a summand use disjoint stream subtrees.  This
    is the variant the error bound is stated for and the default.

    SHARED_SUBTREE reuses the level-``l`` sub-index, coupling the two
    halves through common draws.  Both rules agree for depth <= 2 (the
    lower half is then identically zero) and in distribution otherwise.

    Values double as the CLI vocabulary for ``--variant``.
    """

    FRESH_SUBTREE = "section3"
    SHARED_SUBTREE = "intro"


@dataclass(frozen=True)
class MlpConfig:
    """Scheme parameters: depth ``n``, Monte Carlo base ``m``, index rule, seed."""

    n: int
    m: int
    variant: LowerIndexRule = LowerIndexRule.FRESH_SUBTREE
    master_seed: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not isinstance(self.variant, LowerIndexRule):
            object.__setattr__(self, "variant", LowerIndexRule(self.variant))


@dataclass
class RvLedger:
    """Exact scalar draw counts consumed by one evaluation."""

    normals: int = 0
    uniforms: int = 0

    @property
    def total(self) -> int:
        return self.normals + self.uniforms


@dataclass(frozen=True)
class Estimate:
    """One realization of the estimator, plus its draw ledger and context."""

    value: float
    ledger: RvLedger
    config: MlpConfig
    eval_point: tuple[float, np.ndarray]


class EvaluationError(ArithmeticError):
    """The terminal condition or nonlinearity produced a non-finite value."""

    def __init__(self, source: str, t: float, x: np.ndarray, v: float | None = None):
        self.source = source
        self.t = t
        self.x = np.array(x)
        self.v = v
        at = f"t={t!r}, x={self.x!r}" + ("" if v is None else f", v={v!r}")
        super().__init__(f"{source} returned a non-finite value at {at}")


def pairwise_sum(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Compensated pairwise reduction along ``axis``.

    Folds adjacent pairs (two-sum, carrying the rounding error in a
    side array) until one column remains.  The reduction tree depends
    only on the length of the axis, never on how rows are batched, which
    is what makes results independent of parallel scheduling.
    """
    v = np.moveaxis(np.asarray(values, dtype=np.float64), axis, -1)
    comp = np.zeros_like(v)
    while v.shape[-1] > 1:
        if v.shape[-1] % 2:
            pad = [(0, 0)] * (v.ndim - 1) + [(0, 1)]
            v = np.pad(v, pad)
            comp = np.pad(comp, pad)
        a, b = v[..., 0::2], v[..., 1::2]
        s = a + b
        bb = s - a
        err = (a - (s - bb)) + (b - bb)
        comp = comp[..., 0::2] + comp[..., 1::2] + err
        v = s
    return v[..., 0] + comp[..., 0]


def _raise_non_finite(source, out, t, x, v=None):
    bad = int(np.flatnonzero(~np.isfinite(np.ravel(out)))[0])
    tb = float(np.ravel(t)[bad]) if np.ndim(t) else float(t)
    xb = np.reshape(x, (-1, np.shape(x)[-1]))[bad]
    vb = None if v is None else float(np.ravel(v)[bad])
    raise EvaluationError(source, tb, xb, vb)


def _normal_block(lo, hi, dim, first_counter, ledger):
    """Standard normals of shape ``lo.shape + (dim,)`` at the given counters."""
    counters = np.arange(first_counter, first_counter + dim, dtype=np.uint64)
    z = normal_from_state(lo[..., None], hi[..., None], counters)
    ledger.normals += z.size
    return z


def _eval_batch(problem, m, rule, level, lo, hi, t, x, ledger):
    """Vectorized recursion: one estimator value per batch row.

    ``lo``/``hi`` hold the stream states of the batch's sub-estimator
    root indices; ``t`` is ``(B,)`` and ``x`` is ``(B, dim)``.  Each row
    is computed exactly as a standalone evaluation would be, so batching
    (and therefore worker layout) never changes any value.
    """
    batch = t.shape[0]
    if level <= 0:
        return np.zeros(batch)
    d = problem.dim
    tau = problem.horizon - t

    # Terminal-condition average over sub-indices (0, -i), i = 1..m**level.
    fan = m**level
    idx = np.arange(1, fan + 1, dtype=np.int64)
    glo, ghi = absorb(lo[:, None], hi[:, None], np.int64(0))
    glo, ghi = absorb(glo, ghi, -idx[None, :])
    z = _normal_block(glo, ghi, d, 0, ledger)
    y = x[:, None, :] + np.sqrt(tau)[:, None, None] * z
    gv = np.asarray(problem.terminal(y), dtype=np.float64)
    if not np.all(np.isfinite(gv)):
        _raise_non_finite("terminal condition", gv, problem.horizon, y)
    value = pairwise_sum(gv, axis=1) / fan

    # Level sums, levels ascending; sub-indices (l, i), i = 1..m**(level-l).
    for l in range(level):
        fan = m ** (level - l)
        idx = np.arange(1, fan + 1, dtype=np.int64)
        flo, fhi = absorb(lo[:, None], hi[:, None], np.int64(l))
        flo, fhi = absorb(flo, fhi, idx[None, :])

        u = uniform_from_state(flo, fhi, np.uint64(0))
        ledger.uniforms += u.size
        r = t[:, None] + tau[:, None] * u
        z = _normal_block(flo, fhi, d, 1, ledger)
        y = x[:, None, :] + np.sqrt(r - t[:, None])[..., None] * z

        rf = r.reshape(-1)
        yf = y.reshape(-1, d)
        sub_lo, sub_hi = flo.reshape(-1), fhi.reshape(-1)
        upper = _eval_batch(problem, m, rule, l, sub_lo, sub_hi, rf, yf, ledger)
        term = np.asarray(problem.nonlinearity(rf, yf, upper), dtype=np.float64)
        if not np.all(np.isfinite(term)):
            _raise_non_finite("nonlinearity", term, rf, yf, upper)

        if l >= 1:
            if rule is LowerIndexRule.FRESH_SUBTREE:
                slo, shi = absorb(lo[:, None], hi[:, None], np.int64(-l))
                slo, shi = absorb(slo, shi, idx[None, :])
                slo, shi = slo.reshape(-1), shi.reshape(-1)
            else:
                slo, shi = sub_lo, sub_hi
            lower = _eval_batch(problem, m, rule, l - 1, slo, shi, rf, yf, ledger)
            low_term = np.asarray(problem.nonlinearity(rf, yf, lower), dtype=np.float64)
            if not np.all(np.isfinite(low_term)):
                _raise_non_finite("nonlinearity", low_term, rf, yf, lower)
            term = term - low_term

        value = value + tau * (pairwise_sum(term.reshape(batch, fan), axis=1) / fan)
    return value


def _check_point(problem: Problem, t: float, x) -> tuple[float, np.ndarray]:
    t = float(t)
    if not 0.0 <= t <= problem.horizon:
        raise ValueError(f"t={t} outside [0, {problem.horizon}]")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape != (problem.dim,):
        raise ValueError(f"x must have length dim={problem.dim}")
    return t, x


def evaluate(
    problem: Problem,
    config: MlpConfig,
    theta: MultiIndex,
    t: float,
    x,
) -> Estimate:
    """One realization of the depth-``config.n`` estimator at ``(t, x)``.

    Deterministic in ``(problem, config, theta, t, x)``: the same inputs
    give bitwise identical values and identical draw ledgers.  Depth 0
    returns 0 without consuming any draws.
    """
    t, x = _check_point(problem, t, x)
    ledger = RvLedger()
    lo, hi = path_state(config.master_seed, theta.path)
    values = _eval_batch(
        problem,
        config.m,
        config.variant,
        config.n,
        np.array([lo]),
        np.array([hi]),
        np.array([t]),
        x[None, :],
        ledger,
    )
    return Estimate(float(values[0]), ledger, config, (t, x))


def _replication_chunk(problem, config, t, x, start, stop):
    """Estimator values for replication ids ``start..stop-1`` (1-based)."""
    ids = np.arange(start, stop, dtype=np.int64)
    lo0, hi0 = seed_state(config.master_seed)
    lo, hi = absorb(lo0, hi0, ids)
    ledger = RvLedger()
    tb = np.full(ids.size, t)
    xb = np.broadcast_to(x, (ids.size, x.size))
    values = _eval_batch(problem, config.m, config.variant, config.n, lo, hi, tb, xb, ledger)
    return values, ledger.normals, ledger.uniforms


def evaluate_replicated(
    problem: Problem,
    config: MlpConfig,
    t: float,
    x,
    reps: int,
    workers: int = 1,
) -> list[Estimate]:
    """``reps`` independent realizations at ``(t, x)``.

    Replication ``r`` runs under root index ``(r)``, a key subtree
    disjoint from every other replication and from the default root
    ``(0,)``.  Values are a pure function of the inputs: any ``workers``
    count (process-based fan-out) returns bitwise identical results.
    With ``workers > 1`` the problem's callables must be picklable, as
    the built-in families are.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    t, x = _check_point(problem, t, x)

    if workers == 1 or reps == 1:
        chunks = [_replication_chunk(problem, config, t, x, 1, reps + 1)]
    else:
        bounds = np.linspace(1, reps + 1, num=min(workers, reps) + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_replication_chunk, problem, config, t, x, int(a), int(b))
                for a, b in zip(bounds[:-1], bounds[1:])
                if b > a
            ]
            chunks = [f.result() for f in futures]

    values = np.concatenate([c[0] for c in chunks])
    normals = sum(c[1] for c in chunks)
    uniforms = sum(c[2] for c in chunks)
    if normals % reps or uniforms % reps:
        raise AssertionError("draw counts must divide evenly across replications")
    per_rep = RvLedger(normals // reps, uniforms // reps)
    return [
        Estimate(float(v), replace(per_rep), config, (t, x)) for v in values
    ]
