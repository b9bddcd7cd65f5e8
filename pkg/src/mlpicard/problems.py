"""Semilinear heat equation instances and the built-in analytic test catalog.

A :class:`Problem` collects everything the estimator needs about the PDE

    du/dt + (1/2) Laplace(u) + f(t, x, u) = 0,   u(T, x) = g(x),

namely the dimension, the horizon ``T``, the terminal condition ``g``, the
nonlinearity ``f`` (Lipschitz in its value argument, independent of the
gradient), the evaluation point ``xi``, and two metadata constants used by
error- and cost-bound formulas.

Callable contract: ``terminal`` maps arrays of shape ``(..., dim)`` to
shape ``(...,)``; ``nonlinearity`` maps ``(t, x, v)`` with shapes
``(...,)``, ``(..., dim)``, ``(...,)`` to ``(...,)``.  Both must be pure,
deterministic, and reentrant; reproducibility of every estimate depends
on it.  Built-in families follow the contract and are picklable, so they
work with process-based parallelism out of the box.

Each built-in family isolates one mechanism of the scheme:

* ``constant``  - averaging of a constant terminal value, zero nonlinearity
  (the estimator must be exact);
* ``quadratic`` - a terminal condition with real variance, still linear
  (exact mean known in every dimension);
* ``explinf``   - a linear-in-value nonlinearity with a closed-form
  solution, exercising the full telescoping recursion;
* ``sine``      - a genuinely nonlinear right-hand side in one dimension,
  where only the deterministic fixed-point oracle provides ground truth.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np


class FamilyTag(enum.Enum):
    """Names of the built-in analytic families (values match the CLI)."""

    CONSTANT_TERMINAL = "constant"
    QUADRATIC_LINEAR = "quadratic"
    EXPONENTIAL_LINEAR_F = "explinf"
    SINE_NONLINEAR = "sine"


@dataclass(frozen=True)
class Problem:
    """One PDE instance. Immutable; safe to share across workers.

    ``lip`` bounds ``|f(t,x,v) - f(t,x,w)| <= lip * |v - w|`` and enters
    every bound formula.  ``growth`` is the declared polynomial growth
    exponent of ``g`` and ``f(.,.,0)``; it is metadata only and is never
    enforced at runtime (use :func:`probe_lipschitz` to spot-check the
    Lipschitz declaration instead).
    """

    dim: int
    horizon: float
    lip: float
    growth: float
    xi: np.ndarray
    terminal: Callable[[np.ndarray], np.ndarray]
    nonlinearity: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        if self.lip < 0 or self.growth < 0:
            raise ValueError("lip and growth must be >= 0")
        xi = np.array(self.xi, dtype=np.float64).reshape(-1)
        if xi.shape != (self.dim,):
            raise ValueError(f"xi must have length dim={self.dim}, got {xi.shape}")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)


@dataclass(frozen=True)
class AnalyticFamily:
    """A problem bundled with its reference solution and moment constants.

    ``exact(t, x)`` evaluates the reference solution; for the sine family
    it is backed by the deterministic fixed-point solver (built lazily on
    first call and cached).  ``g_l2`` is the closed-form value of
    ``(E|g(xi + W_T)|^2)^(1/2)`` and ``f0_norm`` the time-weighted
    L2 norm ``T * ||f(.,.,0)||`` entering the error bound; both are
    ``None`` when no closed form is available (the harness then falls
    back to Monte Carlo).
    """

    problem: Problem
    exact: Callable[[np.ndarray, np.ndarray], np.ndarray]
    tag: FamilyTag
    g_l2: float | None = None
    f0_norm: float | None = None
    params: Mapping[str, float] | None = None


# Terminal conditions and nonlinearities for the built-in families live at
# module level (bound via functools.partial) so Problem objects pickle.

def _constant_terminal(x, c):
    return np.full(np.shape(x)[:-1], float(c))


def _zero_nonlinearity(t, x, v):
    return np.zeros_like(np.asarray(v, dtype=np.float64))


def _squared_norm_terminal(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sum(x * x, axis=-1)


def _exp_terminal(x, a):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(x @ a)


def _linear_nonlinearity(t, x, v, c):
    return float(c) * np.asarray(v, dtype=np.float64)


def _cos_terminal(x):
    x = np.asarray(x, dtype=np.float64)
    return np.cos(x[..., 0])


def _sine_nonlinearity(t, x, v):
    return np.sin(np.asarray(v, dtype=np.float64))


def _constant_exact(t, x, c, dim):
    shape = np.broadcast_shapes(np.shape(t), np.shape(x)[:-1])
    return np.full(shape, float(c))


def _quadratic_exact(t, x, dim, horizon):
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return np.sum(x * x, axis=-1) + dim * (horizon - t)


def _explinf_exact(t, x, a, c, horizon):
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    tau = horizon - t
    return np.exp(c * tau + x @ a + 0.5 * float(a @ a) * tau)


class _SineReference:
    """Lazy fixed-point-solver reference for the sine family.

    Solving is deferred until the first query and the solution is cached
    on the instance, so constructing the family stays cheap.
    """

    def __init__(self, problem: Problem):
        self._problem = problem
        self._solution = None

    def _solve(self):
        if self._solution is None:
            from .oracle import QuadratureGrid, picard_solve

            grid = QuadratureGrid.build(self._problem.dim, space_order=64, time_order=32)
            self._solution = picard_solve(
                self._problem,
                box_radius=8.0 * np.sqrt(self._problem.horizon),
                grid=grid,
                tol=1e-10,
                max_iter=60,
            )
        return self._solution

    def __call__(self, t, x):
        return self._solve()(t, x)


def _as_vector(value, dim, name):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(dim, float(arr))
    if arr.shape != (dim,):
        raise ValueError(f"{name} must be a scalar or length-{dim} vector")
    return arr


def make_family(
    tag: FamilyTag | str,
    dim: int,
    horizon: float,
    params: Mapping[str, float] | None = None,
) -> AnalyticFamily:
    """Build one of the analytic test families.

    ``params`` supplies family coefficients; every family accepts ``xi``
    (evaluation point, scalar broadcast or length-``dim`` vector,
    default 0).  Family-specific keys:

    * constant:  ``c``   terminal value (default 1.0)
    * quadratic: none
    * explinf:   ``a``   exponent direction (default ``1/dim`` per
      coordinate), ``c`` value-coupling coefficient (default 0.5)
    * sine:      none (requires ``dim == 1``)
    """
    tag = FamilyTag(tag)
    params = dict(params or {})
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    xi = _as_vector(params.pop("xi", 0.0), dim, "xi")
    T = float(horizon)

    if tag is FamilyTag.CONSTANT_TERMINAL:
        c = float(params.pop("c", 1.0))
        _reject_unknown(params, tag)
        problem = Problem(
            dim=dim,
            horizon=T,
            lip=0.0,
            growth=0.0,
            xi=xi,
            terminal=functools.partial(_constant_terminal, c=c),
            nonlinearity=_zero_nonlinearity,
        )
        return AnalyticFamily(
            problem=problem,
            exact=functools.partial(_constant_exact, c=c, dim=dim),
            tag=tag,
            g_l2=abs(c),
            f0_norm=0.0,
            params={"c": c},
        )

    if tag is FamilyTag.QUADRATIC_LINEAR:
        _reject_unknown(params, tag)
        problem = Problem(
            dim=dim,
            horizon=T,
            lip=0.0,
            growth=2.0,
            xi=xi,
            terminal=_squared_norm_terminal,
            nonlinearity=_zero_nonlinearity,
        )
        # E |g(xi+W_T)|^2 for g = |x|^2: each coordinate contributes a
        # noncentral chi-square; the cross terms cancel by independence.
        xi2 = float(xi @ xi)
        second_moment = 4.0 * T * xi2 + 2.0 * dim * T * T + (xi2 + dim * T) ** 2
        return AnalyticFamily(
            problem=problem,
            exact=functools.partial(_quadratic_exact, dim=dim, horizon=T),
            tag=tag,
            g_l2=float(np.sqrt(second_moment)),
            f0_norm=0.0,
            params={},
        )

    if tag is FamilyTag.EXPONENTIAL_LINEAR_F:
        a = _as_vector(params.pop("a", 1.0 / dim), dim, "a")
        c = float(params.pop("c", 0.5))
        _reject_unknown(params, tag)
        # The exponential terminal condition is not polynomially bounded,
        # so growth is declared 0 and the bound formulas instead consume
        # the (finite) closed-form moments below.
        problem = Problem(
            dim=dim,
            horizon=T,
            lip=abs(c),
            growth=0.0,
            xi=xi,
            terminal=functools.partial(_exp_terminal, a=a),
            nonlinearity=functools.partial(_linear_nonlinearity, c=c),
        )
        g_l2 = float(np.exp(a @ xi + (a @ a) * T))  # sqrt of E exp(2 a.(xi+W_T))
        return AnalyticFamily(
            problem=problem,
            exact=functools.partial(_explinf_exact, a=a, c=c, horizon=T),
            tag=tag,
            g_l2=g_l2,
            f0_norm=0.0,
            params={"a": a, "c": c},
        )

    if tag is FamilyTag.SINE_NONLINEAR:
        if dim != 1:
            raise ValueError("the sine family is defined for dim == 1 only")
        _reject_unknown(params, tag)
        problem = Problem(
            dim=dim,
            horizon=T,
            lip=1.0,
            growth=0.0,
            xi=xi,
            terminal=_cos_terminal,
            nonlinearity=_sine_nonlinearity,
        )
        # E cos^2(xi + W_T) = (1 + exp(-2T) cos(2 xi)) / 2
        g_sq = 0.5 * (1.0 + np.exp(-2.0 * T) * np.cos(2.0 * xi[0]))
        return AnalyticFamily(
            problem=problem,
            exact=_SineReference(problem),
            tag=tag,
            g_l2=float(np.sqrt(g_sq)),
            f0_norm=0.0,
            params={},
        )

    raise ValueError(f"unknown family tag {tag!r}")


def _reject_unknown(params: dict, tag: FamilyTag):
    if params:
        raise ValueError(f"unknown parameters for {tag.value}: {sorted(params)}")


def probe_lipschitz(problem: Problem, samples: int, seed: int) -> float:
    """Empirical Lipschitz ratio of the nonlinearity in its value slot.

    Draws ``samples`` random tuples ``(t, x, v, w)`` and returns the
    largest observed ``|f(t,x,v) - f(t,x,w)| / |v - w|``.  Compare the
    result against ``problem.lip``; a value above it means the declared
    constant is wrong.  NaNs produced by ``f`` propagate to the result.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, problem.horizon, size=samples)
    x = problem.xi + np.sqrt(problem.horizon) * rng.standard_normal((samples, problem.dim))
    v = 3.0 * rng.standard_normal(samples)
    w = 3.0 * rng.standard_normal(samples)
    gap = np.abs(v - w)
    keep = gap > 1e-12  # avoid 0/0 when v and w collide
    fv = np.asarray(problem.nonlinearity(t, x, v), dtype=np.float64)
    fw = np.asarray(problem.nonlinearity(t, x, w), dtype=np.float64)
    ratios = np.abs(fv[keep] - fw[keep]) / gap[keep]
    return float(np.max(ratios)) if ratios.size else 0.0
