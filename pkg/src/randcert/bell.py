"""Bell scenarios, behaviors and Bell expressions.

Arrays are indexed ``p[a, b, x, y]`` with 0-based outcomes and inputs; the
1-based labels used in text output are ``index + 1``.  For two-outcome
parties outcome index 0 is the ``+1`` outcome and index 1 the ``-1`` one.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import (
    InvalidCorrelatorsError,
    ResourceLimitError,
    StructuralError,
    UnsupportedScenarioError,
)

EXTERNAL_TOL = 1e-9
INTERNAL_TOL = 1e-12
LOCAL_BOUND_CAP = 10**7


@dataclass(frozen=True)
class Scenario:
    """Input counts ``nx, ny`` and output counts ``da, db`` of a bipartite Bell test."""

    nx: int
    ny: int
    da: int
    db: int

    def __post_init__(self):
        for name in ("nx", "ny", "da", "db"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise StructuralError(f"scenario field {name} must be a positive integer, got {v!r}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.da, self.db, self.nx, self.ny)

    @property
    def dim(self) -> int:
        return self.da * self.db * self.nx * self.ny

    def to_dict(self) -> dict[str, int]:
        return {"nx": self.nx, "ny": self.ny, "da": self.da, "db": self.db}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Scenario":
        return cls(int(d["nx"]), int(d["ny"]), int(d["da"]), int(d["db"]))


CHSH_SCENARIO = Scenario(2, 2, 2, 2)


def _frozen(arr, shape, what) -> np.ndarray:
    out = np.array(arr, dtype=float)
    if out.shape != tuple(shape):
        raise StructuralError(f"{what} has shape {out.shape}, expected {tuple(shape)}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Behavior:
    """Joint conditional probabilities ``p(ab|xy)``, possibly unnormalized."""

    scenario: Scenario
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _frozen(self.p, self.scenario.shape, "behavior table"))

    @property
    def traces(self) -> np.ndarray:
        """``sum_ab p(ab|xy)`` for every input pair, shape ``(nx, ny)``."""
        return self.p.sum(axis=(0, 1))

    @property
    def trace(self) -> float:
        return float(self.traces.mean())

    def marginal_a(self) -> np.ndarray:
        """Alice's marginal ``p(a|x)`` averaged over Bob's inputs, shape ``(da, nx)``."""
        return self.p.sum(axis=1).mean(axis=2)

    def marginal_b(self) -> np.ndarray:
        return self.p.sum(axis=0).mean(axis=1)

    def scaled(self, s: float) -> "Behavior":
        return Behavior(self.scenario, s * self.p)

    def __add__(self, other: "Behavior") -> "Behavior":
        _check_same(self.scenario, other.scenario)
        return Behavior(self.scenario, self.p + other.p)

    def __eq__(self, other):
        if not isinstance(other, Behavior):
            return NotImplemented
        return self.scenario == other.scenario and np.array_equal(self.p, other.p)

    __hash__ = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario.to_dict(),
            "p": self.p.tolist(),
            "normalized": bool(abs(self.trace - 1.0) <= EXTERNAL_TOL),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Behavior":
        return cls(Scenario.from_dict(d["scenario"]), np.array(d["p"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Behavior":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class BinaryCorrelators:
    """``<A_x>``, ``<B_y>`` and ``<A_x B_y>`` of a two-outcome scenario."""

    mean_a: np.ndarray
    mean_b: np.ndarray
    corr: np.ndarray

    def __post_init__(self):
        ma = np.atleast_1d(np.array(self.mean_a, dtype=float))
        mb = np.atleast_1d(np.array(self.mean_b, dtype=float))
        object.__setattr__(self, "mean_a", _frozen(ma, ma.shape, "mean_a"))
        object.__setattr__(self, "mean_b", _frozen(mb, mb.shape, "mean_b"))
        object.__setattr__(self, "corr", _frozen(self.corr, (ma.size, mb.size), "corr"))
        for arr in (self.mean_a, self.mean_b, self.corr):
            if np.any(np.abs(arr) > 1 + EXTERNAL_TOL):
                raise InvalidCorrelatorsError("correlators must lie in [-1, 1]")

    @property
    def scenario(self) -> Scenario:
        return Scenario(self.mean_a.size, self.mean_b.size, 2, 2)


@dataclass(frozen=True, eq=False)
class BellExpression:
    """Linear functional ``f.p + constant`` on behaviors."""

    scenario: Scenario
    coeffs: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _frozen(self.coeffs, self.scenario.shape, "coefficient table"))
        object.__setattr__(self, "constant", float(self.constant))

    def __eq__(self, other):
        if not isinstance(other, BellExpression):
            return NotImplemented
        return (self.scenario == other.scenario and np.array_equal(self.coeffs, other.coeffs)
                and self.constant == other.constant)

    __hash__ = None

    def __add__(self, other: "BellExpression") -> "BellExpression":
        _check_same(self.scenario, other.scenario)
        return BellExpression(self.scenario, self.coeffs + other.coeffs, self.constant + other.constant)

    def __mul__(self, s: float) -> "BellExpression":
        return BellExpression(self.scenario, s * self.coeffs, s * self.constant)

    __rmul__ = __mul__

    def to_dict(self) -> dict[str, Any]:
        return {"scenario": self.scenario.to_dict(), "coeffs": self.coeffs.tolist(), "constant": self.constant}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BellExpression":
        return cls(Scenario.from_dict(d["scenario"]), np.array(d["coeffs"], dtype=float), float(d.get("constant", 0.0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "BellExpression":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DeterministicStrategy:
    assign_a: tuple[int, ...]
    assign_b: tuple[int, ...]

    def behavior(self, scenario: Scenario) -> Behavior:
        p = np.zeros(scenario.shape)
        for x, a in enumerate(self.assign_a):
            for y, b in enumerate(self.assign_b):
                p[a, b, x, y] = 1.0
        return Behavior(scenario, p)


@dataclass(frozen=True)
class ValidationReport:
    normalization_residuals: np.ndarray = field(repr=False)
    signaling_a: float
    signaling_b: float
    min_entry: float
    tol: float

    @property
    def normalization_residual(self) -> float:
        return float(np.max(self.normalization_residuals))

    @property
    def passed(self) -> bool:
        return (self.normalization_residual <= self.tol and self.signaling_a <= self.tol
                and self.signaling_b <= self.tol and self.min_entry >= -self.tol)

    def summary(self) -> str:
        return (f"{'PASS' if self.passed else 'FAIL'}: normalization {self.normalization_residual:.3g}, "
                f"signaling A->B {self.signaling_a:.3g}, B->A {self.signaling_b:.3g}, min entry {self.min_entry:.3g}")


def _check_same(s1: Scenario, s2: Scenario):
    if s1 != s2:
        raise StructuralError(f"scenario mismatch: {s1} vs {s2}")


def validate_behavior(p: Behavior, tol: float = EXTERNAL_TOL, normalized: bool = True) -> ValidationReport:
    """Check normalization, no-signaling and positivity of ``p``.

    With ``normalized=False`` the per-input traces are compared with their
    mean instead of with one.
    """
    if p.p.shape != p.scenario.shape:
        raise StructuralError("behavior table does not match its scenario")
    traces = p.traces
    target = 1.0 if normalized else traces.mean()
    # Alice's marginal must not depend on y, Bob's not on x.
    ma = p.p.sum(axis=1)
    mb = p.p.sum(axis=0)
    sig_a = float(np.max(np.abs(ma - ma[:, :, :1]))) if p.scenario.ny > 1 else 0.0
    sig_b = float(np.max(np.abs(mb - mb[:, :1, :]))) if p.scenario.nx > 1 else 0.0
    return ValidationReport(np.abs(traces - target), sig_a, sig_b, float(p.p.min()), tol)


def _pm(n: int) -> np.ndarray:
    return np.array([1.0, -1.0])[:n]


def correlators_from_behavior(p: Behavior) -> BinaryCorrelators:
    s = p.scenario
    if s.da != 2 or s.db != 2:
        raise UnsupportedScenarioError("correlators are defined for two-outcome scenarios only")
    sa, sb = _pm(2), _pm(2)
    corr = np.einsum("a,b,abxy->xy", sa, sb, p.p)
    mean_a = np.einsum("a,abxy->xy", sa, p.p).mean(axis=1)
    mean_b = np.einsum("b,abxy->xy", sb, p.p).mean(axis=0)
    return BinaryCorrelators(mean_a, mean_b, corr)


def behavior_from_correlators(c: BinaryCorrelators, tol: float = EXTERNAL_TOL) -> Behavior:
    s = c.scenario
    sa = _pm(2)
    p = (1.0
         + sa[:, None, None, None] * c.mean_a[None, None, :, None]
         + sa[None, :, None, None] * c.mean_b[None, None, None, :]
         + sa[:, None, None, None] * sa[None, :, None, None] * c.corr[None, None, :, :]) / 4.0
    if p.min() < -tol:
        raise InvalidCorrelatorsError(f"correlators give a negative probability {p.min():.3g}")
    return Behavior(s, p)


def expression_from_correlators(constant: float, mean_a, mean_b, corr) -> BellExpression:
    """Probability-form expression equal to ``c0 + sum cA<A_x> + sum cB<B_y> + sum cAB<A_xB_y>``.

    Marginal terms are spread evenly over the other party's inputs, so the
    value agrees with the correlator form on every no-signaling behavior.
    """
    ca = np.atleast_1d(np.asarray(mean_a, dtype=float))
    cb = np.atleast_1d(np.asarray(mean_b, dtype=float))
    cab = np.asarray(corr, dtype=float).reshape(ca.size, cb.size)
    nx, ny = ca.size, cb.size
    sa = _pm(2)
    f = (sa[:, None, None, None] * sa[None, :, None, None] * cab[None, None, :, :]
         + sa[:, None, None, None] * ca[None, None, :, None] / ny
         + sa[None, :, None, None] * cb[None, None, None, :] / nx) * np.ones((2, 2, nx, ny))
    return BellExpression(Scenario(nx, ny, 2, 2), f, constant)


def chsh_expression() -> BellExpression:
    """``<A1B1> + <A1B2> + <A2B1> - <A2B2>``; local bound 2, quantum bound 2*sqrt(2)."""
    return expression_from_correlators(0.0, [0, 0], [0, 0], [[1, 1], [1, -1]])


def bell_value(f: BellExpression, p: Behavior) -> float:
    _check_same(f.scenario, p.scenario)
    return float(np.sum(f.coeffs * p.p)) + f.constant


def iter_strategies(scenario: Scenario):
    for sa in itertools.product(range(scenario.da), repeat=scenario.nx):
        for sb in itertools.product(range(scenario.db), repeat=scenario.ny):
            yield DeterministicStrategy(sa, sb)


def local_bound_strategy(f: BellExpression, cap: int = LOCAL_BOUND_CAP) -> tuple[float, DeterministicStrategy]:
    """Exact maximum of ``f`` over all deterministic strategies, with a maximizer.

    Ties are broken towards the lexicographically smallest strategy.
    """
    s = f.scenario
    n_a = s.da ** s.nx
    n_b = s.db ** s.ny
    if n_a * n_b > cap:
        raise ResourceLimitError(f"{n_a * n_b} deterministic strategies exceed the cap {cap}")
    strat_a = np.array(list(itertools.product(range(s.da), repeat=s.nx)), dtype=int).reshape(n_a, s.nx)
    strat_b = np.array(list(itertools.product(range(s.db), repeat=s.ny)), dtype=int).reshape(n_b, s.ny)
    best_val, best = -math.inf, None
    chunk = max(1, min(n_a, 2**22 // n_b))
    for start in range(0, n_a, chunk):
        sa = strat_a[start:start + chunk]
        vals = np.zeros((sa.shape[0], n_b))
        for x in range(s.nx):
            for y in range(s.ny):
                vals += f.coeffs[:, :, x, y][sa[:, x][:, None], strat_b[:, y][None, :]]
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        if vals[i, j] > best_val:
            best_val = float(vals[i, j])
            best = DeterministicStrategy(tuple(int(v) for v in sa[i]), tuple(int(v) for v in strat_b[j]))
    return best_val + f.constant, best


def local_bound(f: BellExpression, cap: int = LOCAL_BOUND_CAP) -> float:
    return local_bound_strategy(f, cap)[0]


def uniform_behavior(scenario: Scenario) -> Behavior:
    return Behavior(scenario, np.full(scenario.shape, 1.0 / (scenario.da * scenario.db)))


def pr_box() -> Behavior:
    """``p(ab|xy) = 1/2`` iff ``a XOR b = x AND y`` (0-based labels)."""
    p = np.zeros(CHSH_SCENARIO.shape)
    for a, b, x, y in itertools.product(range(2), repeat=4):
        if (a ^ b) == (x & y):
            p[a, b, x, y] = 0.5
    return Behavior(CHSH_SCENARIO, p)


def mix_with_noise(p: Behavior, v: float) -> Behavior:
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v}")
    return Behavior(p.scenario, v * p.p + (1.0 - v) * uniform_behavior(p.scenario).p)


def min_entropy(g: float) -> float:
    """Min-entropy in bits of a guessing probability."""
    if not g > 0:
        raise ValueError(f"guessing probability must be positive, got {g}")
    return -math.log2(g)
