"""Relaxations of the device-independent guessing probability.

An adversary strategy is a split ``p = sum_g p~^g`` of the observed behavior
into unnormalized behaviors, one per guess ``g``; the guess is right when the
device output equals ``g``.  Each block is constrained to a moment-matrix
relaxation of the quantum cone (``cone="npa"``) or to the no-signaling cone
(``cone="ns"``), and the program maximizes the probability of a right guess.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .bell import Behavior, BellExpression, Scenario, bell_value
from .conic import (
    INFEASIBLE,
    ConicProgram,
    ProgramBuilder,
    SolverReport,
    SolverSettings,
    load_settings,
)
from .conic import solve as solve_program
from .errors import InfeasibleProblemError, SolverError, StructuralError
from .npa import LevelSpec, MomentBlock, MomentStructure
from .nslp import NsBlock

DEFAULT_LEVEL = 2
DEGENERATE_TRACE = 1e-10


@dataclass(frozen=True)
class Target:
    """Which outputs are guessed: ``x`` alone (local) or the pair ``(x, y)`` (global); 0-based."""

    x: int
    y: int | None = None

    @property
    def is_global(self) -> bool:
        return self.y is not None

    @classmethod
    def local(cls, x: int) -> "Target":
        return cls(x)

    @classmethod
    def global_(cls, x: int, y: int) -> "Target":
        return cls(x, y)

    @classmethod
    def parse(cls, text: str) -> "Target":
        """``local:1`` or ``global:2,1`` with 1-based inputs."""
        m = re.fullmatch(r"\s*(local|global)\s*:\s*(\d+)\s*(?:,\s*(\d+))?\s*", text)
        if not m or (m.group(1) == "global") != (m.group(3) is not None):
            raise ValueError(f"cannot parse target {text!r}; expected local:x or global:x,y")
        x = int(m.group(2)) - 1
        y = None if m.group(3) is None else int(m.group(3)) - 1
        return cls(x, y)

    def __str__(self):
        return f"global:{self.x + 1},{self.y + 1}" if self.is_global else f"local:{self.x + 1}"

    def check(self, s: Scenario):
        if not 0 <= self.x < s.nx or (self.is_global and not 0 <= self.y < s.ny):
            raise StructuralError(f"target {self} is outside scenario {s}")

    def guesses(self, s: Scenario) -> list[tuple[int, ...]]:
        if self.is_global:
            return list(itertools.product(range(s.da), range(s.db)))
        return [(a,) for a in range(s.da)]


@dataclass(frozen=True)
class FullBehavior:
    p: Behavior


@dataclass(frozen=True)
class BellValues:
    """Constrain only the values of some Bell expressions (plus total probability one).

    With ``at_least=True`` the constraints become ``value(f) >= v``.
    """

    constraints: tuple[tuple[BellExpression, float], ...]
    at_least: bool = False

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple((f, float(v)) for f, v in self.constraints))


ConstraintMode = Union[FullBehavior, BellValues]


@dataclass(frozen=True)
class GuessingProblem:
    scenario: Scenario
    target: Target
    mode: ConstraintMode
    level: LevelSpec = DEFAULT_LEVEL

    def __post_init__(self):
        self.target.check(self.scenario)
        if isinstance(self.mode, FullBehavior):
            if self.mode.p.scenario != self.scenario:
                raise StructuralError("behavior scenario does not match the problem")
        else:
            for f, _ in self.mode.constraints:
                if f.scenario != self.scenario:
                    raise StructuralError("expression scenario does not match the problem")

    @classmethod
    def full(cls, p: Behavior, target: Target, level: LevelSpec = DEFAULT_LEVEL) -> "GuessingProblem":
        return cls(p.scenario, target, FullBehavior(p), level)

    @classmethod
    def bell(cls, constraints, target: Target, level: LevelSpec = DEFAULT_LEVEL,
             at_least: bool = False) -> "GuessingProblem":
        constraints = tuple(constraints)
        return cls(constraints[0][0].scenario, target, BellValues(constraints, at_least), level)

    @property
    def n_blocks(self) -> int:
        return len(self.target.guesses(self.scenario))


@dataclass
class AssembledProgram:
    """A compiled problem plus the bookkeeping needed to read its solution back."""

    program: ConicProgram
    problem: GuessingProblem
    cone: str
    blocks: list = field(repr=False)
    guesses: list
    link_rows: dict = field(default_factory=dict)   # (a,b,x,y) -> row
    bell_rows: list = field(default_factory=list)
    norm_row: int | None = None

    def row_counts(self) -> dict[str, int]:
        return {"link": len(self.link_rows), "bell": len(self.bell_rows),
                "norm": int(self.norm_row is not None), "total": self.program.n_rows}


def guess_terms(block, target: Target, guess: tuple[int, ...]) -> dict[int, float]:
    """Probability that the block's device output equals ``guess`` at the target inputs."""
    if target.is_global:
        return block.component_terms(guess[0], guess[1], target.x, target.y)
    return block.marginal_a_terms(guess[0], target.x)


def _make_blocks(builder: ProgramBuilder, cone: str, s: Scenario, level: LevelSpec, n: int, normalized: bool,
                 lp_offset: int = 0):
    if cone == "npa":
        ms = MomentStructure(s, level, normalized=normalized)
        k = ms.positivity_slots
        return [MomentBlock(builder, ms, g, positivity_lp=lp_offset + g * k) for g in range(n)]
    if cone == "ns":
        return [NsBlock(builder, s, g * s.dim, normalized=normalized) for g in range(n)]
    raise ValueError(f"unknown cone {cone!r}")


def assemble_primal(gp: GuessingProblem, cone: str = "npa") -> AssembledProgram:
    """Compile ``gp`` into a conic program.

    Rows: the structural rows of every block (moment-class merges and
    vanishing entries, or no-signaling equalities), then either one link row
    per behavior component (``sum_g p~^g(ab|xy) = p(ab|xy)``) or one row per
    Bell constraint plus a total-trace row.
    """
    s, target = gp.scenario, gp.target
    guesses = target.guesses(s)
    n = len(guesses)
    bell_mode = isinstance(gp.mode, BellValues)
    n_slack = len(gp.mode.constraints) if bell_mode and gp.mode.at_least else 0
    if cone == "npa":
        ms = MomentStructure(s, gp.level, normalized=False)
        builder = ProgramBuilder((ms.size,) * n, n_slack + n * ms.positivity_slots, "max")
    else:
        builder = ProgramBuilder((), n * s.dim + n_slack, "max")
    # LP block: [ns behaviors] + Bell slacks + [positivity slacks of moment blocks]
    blocks = _make_blocks(builder, cone, s, gp.level, n, normalized=False, lp_offset=n_slack)
    asm = AssembledProgram(program=None, problem=gp, cone=cone, blocks=blocks, guesses=guesses)

    if not bell_mode:
        p = gp.mode.p.p
        for comp in itertools.product(range(s.da), range(s.db), range(s.nx), range(s.ny)):
            r = builder.new_row(float(p[comp]))
            for blk in blocks:
                blk.add_terms(r, blk.component_terms(*comp))
            asm.link_rows[comp] = r
    else:
        slack0 = n * s.dim if cone == "ns" else 0
        for t, (f, value) in enumerate(gp.mode.constraints):
            r = builder.new_row(value - f.constant)
            for blk in blocks:
                blk.add_terms(r, blk.expression_terms(f))
            if n_slack:
                k = slack0 + t
                builder.add(r, builder.lp_block, k, k, -1.0)
            asm.bell_rows.append(r)
        r = builder.new_row(1.0)
        for blk in blocks:
            blk.add_terms(r, blk.trace_terms())
        asm.norm_row = r

    for blk, g in zip(blocks, guesses):
        blk.add_objective_terms(guess_terms(blk, target, g))
    asm.program = builder.build()
    return asm


@dataclass(eq=False)
class Solution:
    value: float
    blocks: list
    eve_marginals: np.ndarray
    report: SolverReport = field(repr=False)
    problem: GuessingProblem = field(repr=False)
    assembled: AssembledProgram = field(repr=False)
    tol: float = 1e-6

    @property
    def guesses(self):
        return self.assembled.guesses

    @property
    def cone(self) -> str:
        return self.assembled.cone

    def to_dict(self) -> dict:
        gp = self.problem
        return {
            "value": self.value,
            "cone": self.cone,
            "level": gp.level if self.cone == "npa" else None,
            "target": str(gp.target),
            "mode": "full" if isinstance(gp.mode, FullBehavior) else "bell",
            "guesses": [[int(v) + 1 for v in g] for g in self.guesses],
            "eve_marginals": self.eve_marginals.tolist(),
            "blocks": [b.to_dict() for b in self.blocks],
            "solver": {
                "status": self.report.status,
                "primal": self.report.primal_value,
                "dual": self.report.dual_value,
                "gap": self.report.gap,
                "primal_residual": self.report.primal_residual,
                "dual_residual": self.report.dual_residual,
                "iterations": self.report.iterations,
                "solve_time": self.report.solve_time,
            },
        }


def solve(gp: GuessingProblem, tol: float | None = None, settings: SolverSettings | None = None,
          cone: str = "npa") -> Solution:
    """Solve the relaxation; raises on proven infeasibility or numerical failure."""
    settings = settings or load_settings()
    tol = settings.tol if tol is None else tol
    asm = assemble_primal(gp, cone)
    rep = solve_program(asm.program, tol=tol, settings=settings)
    if rep.status == INFEASIBLE:
        raise InfeasibleProblemError(
            f"no {'no-signaling' if cone == 'ns' else 'level-' + str(gp.level)} decomposition exists "
            f"({rep.message})", rep)
    if not rep.optimal:
        raise SolverError(f"solver did not reach optimality: {rep.status} ({rep.message})", rep)
    blocks = []
    for blk in asm.blocks:
        beh = blk.behavior(rep)
        if beh.trace < DEGENERATE_TRACE:
            beh = Behavior(beh.scenario, np.zeros(beh.scenario.shape))
        blocks.append(beh)
    traces = np.array([b.trace for b in blocks])
    return Solution(rep.primal_value, blocks, traces, rep, gp, asm, tol)


def strategy_value(blocks: list[Behavior], target: Target, guesses) -> float:
    """Probability of a right guess for an explicit decomposition, computed from the blocks alone."""
    total = 0.0
    for beh, g in zip(blocks, guesses):
        if target.is_global:
            total += beh.p[g[0], g[1], target.x, target.y]
        else:
            total += beh.p[g[0], :, target.x, :].sum(axis=0).mean()
    return float(total)


def strategy_check(sol: Solution, gp: GuessingProblem | None = None) -> float:
    gp = gp or sol.problem
    return strategy_value(sol.blocks, gp.target, gp.target.guesses(gp.scenario))


def trivial_lower_bound(p: Behavior, target: Target) -> float:
    """Value of the strategy that always announces the most likely output."""
    if target.is_global:
        return float(p.p[:, :, target.x, target.y].max())
    return float(p.p[:, :, target.x, :].sum(axis=1).mean(axis=1).max())


def bell_constraints_of(p: Behavior, expressions) -> list[tuple[BellExpression, float]]:
    """Pairs each expression with its value on ``p``."""
    return [(f, bell_value(f, p)) for f in expressions]
