"""Guessing probability against non-signaling adversaries, by linear programming.

The moment-matrix blocks of :mod:`randcert.digp` are replaced by unnormalized
behaviors constrained only by positivity and the no-signaling equalities.
"""
from __future__ import annotations

import itertools

import numpy as np

from .bell import Behavior, BellExpression, Scenario
from .conic import ProgramBuilder


class NsBlock:
    """An unnormalized no-signaling behavior stored in the nonnegative block.

    Variables ``z[offset + flat(a, b, x, y)]`` are the behavior entries.
    Rows: Alice's marginal for each ``(a, x)`` agrees across Bob's inputs,
    and Bob's for each ``(b, y)`` across Alice's inputs.
    """

    def __init__(self, builder: ProgramBuilder, scenario: Scenario, offset: int, normalized: bool = False):
        self.builder = builder
        self.scenario = scenario
        self.offset = offset
        self.normalized = normalized
        self._flat = np.arange(scenario.dim).reshape(scenario.shape)
        self._add_structure()

    def _add_structure(self):
        s, b, lp = self.scenario, self.builder, self.builder.lp_block
        for a, x, y in itertools.product(range(s.da), range(s.nx), range(1, s.ny)):
            r = b.new_row(0.0)
            for bb in range(s.db):
                b.add(r, lp, self._var(a, bb, x, y), self._var(a, bb, x, y), 1.0)
                b.add(r, lp, self._var(a, bb, x, 0), self._var(a, bb, x, 0), -1.0)
        for bb, y, x in itertools.product(range(s.db), range(s.ny), range(1, s.nx)):
            r = b.new_row(0.0)
            for a in range(s.da):
                b.add(r, lp, self._var(a, bb, x, y), self._var(a, bb, x, y), 1.0)
                b.add(r, lp, self._var(a, bb, 0, y), self._var(a, bb, 0, y), -1.0)
        if self.normalized:
            self.add_terms(b.new_row(1.0), self.trace_terms())

    def _var(self, a, b, x, y) -> int:
        return self.offset + int(self._flat[a, b, x, y])

    @property
    def size(self) -> int:
        return self.scenario.dim

    def component_terms(self, a, b, x, y) -> dict[int, float]:
        return {int(self._flat[a, b, x, y]): 1.0}

    def marginal_a_terms(self, a, x) -> dict[int, float]:
        return {int(self._flat[a, b, x, 0]): 1.0 for b in range(self.scenario.db)}

    def trace_terms(self) -> dict[int, float]:
        return {int(k): 1.0 for k in self._flat[:, :, 0, 0].ravel()}

    def expression_terms(self, f: BellExpression) -> dict[int, float]:
        return {int(k): float(c) for k, c in zip(self._flat.ravel(), f.coeffs.ravel()) if c != 0.0}

    def add_terms(self, row: int, terms: dict[int, float], scale: float = 1.0):
        lp = self.builder.lp_block
        for k, c in terms.items():
            self.builder.add(row, lp, self.offset + k, self.offset + k, scale * c)

    def add_objective_terms(self, terms: dict[int, float], scale: float = 1.0):
        lp = self.builder.lp_block
        for k, c in terms.items():
            self.builder.add_objective(lp, self.offset + k, self.offset + k, scale * c)

    def behavior(self, report) -> Behavior:
        z = report.nonneg[self.offset:self.offset + self.size]
        return Behavior(self.scenario, z.reshape(self.scenario.shape))


def ns_solve(gp, tol=None, settings=None):
    """Non-signaling guessing probability; an LP with the same interface as ``digp.solve``."""
    from . import digp

    return digp.solve(gp, tol=tol, settings=settings, cone="ns")


def ns_certificate(sol, verify: bool = True, tol: float = 1e-6, settings=None):
    """Bell expression read off the LP dual, verified over the non-signaling polytope."""
    from . import certificates

    return certificates.extract_certificate(sol, verify=verify, tol=tol, settings=settings)
