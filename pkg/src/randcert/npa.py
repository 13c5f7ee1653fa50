"""Projector monomials and moment-matrix relaxations of the quantum set.

Each input of each party contributes ``d - 1`` projectors; the projector of
the last outcome is ``1 - sum(others)`` and is recovered linearly.  Moment
matrices are real symmetric, so a moment and the moment of its adjoint are
the same variable.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

from .bell import Behavior, BellExpression, Scenario
from .conic import ProgramBuilder, SolverSettings, solve
from .errors import ResourceLimitError, SolverError, StructuralError

BASIS_CAP = 2000

Letter = tuple[int, int]  # (input, output), both 0-based


@dataclass(frozen=True, order=True)
class OperatorSymbol:
    party: str
    input: int
    output: int

    def __post_init__(self):
        if self.party not in ("A", "B"):
            raise ValueError(f"party must be 'A' or 'B', got {self.party!r}")

    def __str__(self):
        return f"{self.party}{self.output + 1}|{self.input + 1}"


@dataclass(frozen=True, order=True)
class Monomial:
    """Canonical product: Alice's word, then Bob's word, each left to right."""

    a: tuple[Letter, ...] = ()
    b: tuple[Letter, ...] = ()

    @property
    def degree(self) -> int:
        return len(self.a) + len(self.b)

    @property
    def is_identity(self) -> bool:
        return not self.a and not self.b

    def adjoint(self) -> "Monomial":
        return Monomial(self.a[::-1], self.b[::-1])

    def __mul__(self, other: "Monomial") -> "Monomial | None":
        wa = _reduce_word(self.a + other.a)
        if wa is None:
            return None
        wb = _reduce_word(self.b + other.b)
        if wb is None:
            return None
        return Monomial(wa, wb)

    def symbols(self) -> list[OperatorSymbol]:
        return [OperatorSymbol("A", x, a) for x, a in self.a] + [OperatorSymbol("B", y, b) for y, b in self.b]

    def __str__(self):
        if self.is_identity:
            return "1"
        return " ".join(str(s) for s in self.symbols())


IDENTITY = Monomial()


def _reduce_word(word: Sequence[Letter]) -> tuple[Letter, ...] | None:
    """Apply P^2 = P and P_a P_a' = 0 (same input) until nothing changes; None is zero."""
    out: list[Letter] = []
    for letter in word:
        if out and out[-1][0] == letter[0]:
            if out[-1][1] == letter[1]:
                continue
            return None
        out.append(letter)
    return tuple(out)


def canonicalize(symbols: Iterable[OperatorSymbol]) -> Monomial | None:
    """Canonical form of a product of projectors, or ``None`` when it vanishes.

    Alice's operators commute with Bob's, so the product splits into the two
    single-party words, each of which is reduced independently.
    """
    syms = list(symbols)
    wa = _reduce_word([(s.input, s.output) for s in syms if s.party == "A"])
    if wa is None:
        return None
    wb = _reduce_word([(s.input, s.output) for s in syms if s.party == "B"])
    if wb is None:
        return None
    return Monomial(wa, wb)


def _party_words(n_in: int, n_out: int, max_len: int) -> list[list[tuple[Letter, ...]]]:
    """Reduced words grouped by length: consecutive letters have different inputs."""
    letters = [(x, a) for x in range(n_in) for a in range(n_out - 1)]
    by_len = [[()]]
    for _ in range(max_len):
        nxt = [w + (l,) for w in by_len[-1] for l in letters if not w or w[-1][0] != l[0]]
        by_len.append(nxt)
    return by_len


LevelSpec = Union[int, str, Sequence[Monomial]]


def parse_level(level: LevelSpec) -> tuple[int, bool]:
    """``2`` -> (2, False); ``"1+AB"`` -> (1, True)."""
    if isinstance(level, (int, np.integer)):
        return int(level), False
    s = str(level).replace(" ", "").upper()
    if s.endswith("+AB"):
        return int(s[:-3]), True
    return int(s), False


def generate_monomials(s: Scenario, level: LevelSpec, cap: int = BASIS_CAP) -> list[Monomial]:
    """Canonical nonzero monomials of degree at most ``level``, identity first.

    ``level`` may also be ``"k+AB"`` (level k plus every Alice-Bob product) or
    an explicit list of monomials, which is deduplicated and reordered.
    """
    if not isinstance(level, (int, np.integer, str)):
        mons = {m for m in level if m is not None}
        mons.add(IDENTITY)
        basis = sorted(mons, key=_basis_key)
    else:
        k, extra_ab = parse_level(level)
        if k < 1:
            raise ValueError("level must be at least 1")
        wa = _party_words(s.nx, s.da, k)
        wb = _party_words(s.ny, s.db, k)
        mons = set()
        for la in range(k + 1):
            for lb in range(k + 1 - la):
                for u in wa[la]:
                    for v in wb[lb]:
                        mons.add(Monomial(u, v))
                        if len(mons) > cap:
                            raise ResourceLimitError(f"level-{k} basis exceeds the cap of {cap} monomials")
        if extra_ab:
            mons.update(Monomial(u, v) for u in wa[1] for v in wb[1])
        basis = sorted(mons, key=_basis_key)
    if len(basis) > cap:
        raise ResourceLimitError(f"basis of {len(basis)} monomials exceeds the cap of {cap}")
    return basis


def _basis_key(m: Monomial):
    return (m.degree, -len(m.a), m.a, m.b)


class MomentStructure:
    """Level-k moment matrix layout for one scenario.

    ``index[i, j]`` is the moment-variable id of ``<basis[i]^dag basis[j]>``,
    or -1 where that product vanishes.  Variable 0 is ``<1>``, the trace.
    """

    def __init__(self, scenario: Scenario, level: LevelSpec = 2, normalized: bool = True,
                 cap: int = BASIS_CAP):
        self.scenario = scenario
        self.level = level if isinstance(level, (int, np.integer, str)) else "custom"
        self.normalized = normalized
        self.basis = generate_monomials(scenario, level, cap)
        n = len(self.basis)
        ids: dict[Monomial, int] = {IDENTITY: 0}
        self.var_monomials: list[Monomial] = [IDENTITY]
        index = np.full((n, n), -1, dtype=np.int64)
        for i in range(n):
            left = self.basis[i].adjoint()
            for j in range(i, n):
                prod = left * self.basis[j]
                if prod is None:
                    continue
                key = min(prod, prod.adjoint())
                if key not in ids:
                    ids[key] = len(self.var_monomials)
                    self.var_monomials.append(key)
                index[i, j] = index[j, i] = ids[key]
        index.setflags(write=False)
        self.index = index
        self._ids = ids
        self._pos = {m: i for i, m in enumerate(self.basis)}
        for x in range(scenario.nx):
            for a in range(scenario.da - 1):
                if Monomial(((x, a),), ()) not in ids:
                    raise StructuralError("basis does not contain every single projector")
        for y in range(scenario.ny):
            for b in range(scenario.db - 1):
                if Monomial((), ((y, b),)) not in ids:
                    raise StructuralError("basis does not contain every single projector")

    @property
    def size(self) -> int:
        return len(self.basis)

    @property
    def n_vars(self) -> int:
        return len(self.var_monomials)

    @cached_property
    def positivity_implied(self) -> bool:
        """Whether ``Gamma >= 0`` already forces every ``p(ab|xy) >= 0``.

        True when the basis spans each product ``A_{a|x} B_{b|y}``: the
        projector ``P_a Q_b`` is then a combination of basis elements and
        ``p(ab|xy) = <(P_a Q_b)^dag (P_a Q_b)>`` is a diagonal-type moment.
        Pure level 1 lacks the products.
        """
        s = self.scenario
        singles = [Monomial(((x, a),), ()) for x in range(s.nx) for a in range(s.da - 1)]
        singles += [Monomial((), ((y, b),)) for y in range(s.ny) for b in range(s.db - 1)]
        products = [Monomial(((x, a),), ((y, b),)) for x in range(s.nx) for a in range(s.da - 1)
                    for y in range(s.ny) for b in range(s.db - 1)]
        return all(m in self._pos for m in singles + products)

    @property
    def positivity_slots(self) -> int:
        """Nonnegative variables a block needs for explicit ``p(ab|xy) >= 0`` rows."""
        return 0 if self.positivity_implied else self.scenario.dim

    @cached_property
    def classes(self) -> list[list[tuple[int, int]]]:
        """Upper-triangle entries of each moment variable, in row-major scan order."""
        out: list[list[tuple[int, int]]] = [[] for _ in range(self.n_vars)]
        n = self.size
        for i in range(n):
            for j in range(i, n):
                k = self.index[i, j]
                if k >= 0:
                    out[k].append((i, j))
        return out

    @cached_property
    def zero_entries(self) -> list[tuple[int, int]]:
        n = self.size
        return [(i, j) for i in range(n) for j in range(i, n) if self.index[i, j] < 0]

    def rep_entry(self, var: int) -> tuple[int, int]:
        return self.classes[var][0]

    def var_id(self, m: Monomial) -> int:
        key = min(m, m.adjoint())
        try:
            return self._ids[key]
        except KeyError:
            raise StructuralError(f"monomial {m} is not a moment of this structure") from None

    # behavior components as linear combinations of moment variables

    def _proj_terms(self, party_len: int, inp: int, out: int, party: str):
        """Projector as (monomial-letter or None for identity, coeff) pairs."""
        if out < party_len - 1:
            return [((inp, out), 1.0)]
        return [(None, 1.0)] + [((inp, o), -1.0) for o in range(party_len - 1)]

    def component_terms(self, a: int, b: int, x: int, y: int) -> dict[int, float]:
        """``p(ab|xy)`` as ``{moment id: coefficient}``."""
        s = self.scenario
        terms: dict[int, float] = {}
        for la, ca in self._proj_terms(s.da, x, a, "A"):
            for lb, cb in self._proj_terms(s.db, y, b, "B"):
                m = Monomial((la,) if la else (), (lb,) if lb else ())
                k = self.var_id(m)
                terms[k] = terms.get(k, 0.0) + ca * cb
        return terms

    def marginal_a_terms(self, a: int, x: int) -> dict[int, float]:
        terms: dict[int, float] = {}
        for la, ca in self._proj_terms(self.scenario.da, x, a, "A"):
            k = self.var_id(Monomial((la,) if la else (), ()))
            terms[k] = terms.get(k, 0.0) + ca
        return terms

    def marginal_b_terms(self, b: int, y: int) -> dict[int, float]:
        terms: dict[int, float] = {}
        for lb, cb in self._proj_terms(self.scenario.db, y, b, "B"):
            k = self.var_id(Monomial((), (lb,) if lb else ()))
            terms[k] = terms.get(k, 0.0) + cb
        return terms

    @cached_property
    def behavior_map(self) -> dict[tuple[int, int, int, int], dict[int, float]]:
        s = self.scenario
        return {(a, b, x, y): self.component_terms(a, b, x, y)
                for a, b, x, y in itertools.product(range(s.da), range(s.db), range(s.nx), range(s.ny))}

    def expression_terms(self, f: BellExpression) -> dict[int, float]:
        """``f.p`` (without the constant) as moment terms."""
        if f.scenario != self.scenario:
            raise StructuralError("expression scenario does not match the moment structure")
        terms: dict[int, float] = {}
        for comp, ct in self.behavior_map.items():
            w = f.coeffs[comp]
            if w != 0.0:
                for k, c in ct.items():
                    terms[k] = terms.get(k, 0.0) + w * c
        return {k: v for k, v in terms.items() if v != 0.0}

    def moments_from_matrix(self, X: np.ndarray) -> np.ndarray:
        """Moment values read from the representative entry of each class."""
        return np.array([X[self.rep_entry(k)] for k in range(self.n_vars)])

    def behavior_from_moments(self, y: np.ndarray) -> Behavior:
        p = np.zeros(self.scenario.shape)
        for comp, terms in self.behavior_map.items():
            p[comp] = sum(c * y[k] for k, c in terms.items())
        return Behavior(self.scenario, p)

    def dump(self) -> str:
        """Stable text listing of the basis and the merged entry classes."""
        lines = [f"scenario nx={self.scenario.nx} ny={self.scenario.ny} da={self.scenario.da} db={self.scenario.db}",
                 f"level {self.level} normalized {self.normalized}", f"basis {self.size}"]
        lines += [f"  [{i}] {m}" for i, m in enumerate(self.basis)]
        lines.append(f"moments {self.n_vars}")
        for k, m in enumerate(self.var_monomials):
            entries = " ".join(f"({i},{j})" for i, j in self.classes[k])
            lines.append(f"  y{k} <{m}>: {entries}")
        lines.append("zero entries: " + " ".join(f"({i},{j})" for i, j in self.zero_entries))
        return "\n".join(lines) + "\n"


def build_moment_structure(s: Scenario, level: LevelSpec = 2, normalized: bool = True,
                           cap: int = BASIS_CAP) -> MomentStructure:
    return MomentStructure(s, level, normalized, cap)


class MomentBlock:
    """A moment structure placed as PSD block ``blk`` of a program being built.

    With ``positivity_lp`` set, ``ms.positivity_slots`` nonnegative variables
    starting there carry ``p(ab|xy) >= 0`` explicitly, so the block describes
    a subset of the no-signaling cone at every level.
    """

    def __init__(self, builder: ProgramBuilder, ms: MomentStructure, blk: int,
                 shift_lp: int | None = None, shift_const: float = 0.0,
                 positivity_lp: int | None = None):
        self.builder = builder
        self.ms = ms
        self.blk = blk
        self.shift_lp = shift_lp
        self.shift_const = shift_const
        self._add_structure()
        if positivity_lp is not None and ms.positivity_slots:
            self._add_positivity(positivity_lp)

    def _add_positivity(self, offset: int):
        lp = self.builder.lp_block
        for k, terms in enumerate(self.ms.behavior_map.values()):
            r = self.builder.new_row(0.0)
            self.add_terms(r, terms)
            self.builder.add(r, lp, offset + k, offset + k, -1.0)

    def _add_structure(self):
        b, ms, blk = self.builder, self.ms, self.blk
        for entries in ms.classes:
            i0, j0 = entries[0]
            for i, j in entries[1:]:
                r = b.new_row(0.0)
                b.add(r, blk, i, j, 1.0)
                b.add(r, blk, i0, j0, -1.0)
                self._shift(r, [(i, j, 1.0), (i0, j0, -1.0)])
        for i, j in ms.zero_entries:
            r = b.new_row(0.0)
            b.add(r, blk, i, j, 1.0)
            self._shift(r, [(i, j, 1.0)])
        if ms.normalized:
            r = b.new_row(1.0)
            b.add(r, blk, 0, 0, 1.0)
            self._shift(r, [(0, 0, 1.0)])

    def _shift(self, row, entries):
        # the moment matrix is S + (shift_const - w) I with w = z[shift_lp] >= 0
        if self.shift_lp is None:
            return
        d = sum(c for i, j, c in entries if i == j)
        if d:
            self.builder.add(row, self.builder.lp_block, self.shift_lp, self.shift_lp, -d)
            self.builder.rhs[row] -= d * self.shift_const

    @property
    def size(self) -> int:
        return self.ms.size

    def component_terms(self, a, b, x, y) -> dict[int, float]:
        return self.ms.behavior_map[(a, b, x, y)]

    def marginal_a_terms(self, a, x) -> dict[int, float]:
        return self.ms.marginal_a_terms(a, x)

    def trace_terms(self) -> dict[int, float]:
        return {0: 1.0}

    def expression_terms(self, f: BellExpression) -> dict[int, float]:
        return self.ms.expression_terms(f)

    def behavior(self, report) -> Behavior:
        return self.ms.behavior_from_moments(self.ms.moments_from_matrix(report.blocks[self.blk]))

    def add_terms(self, row: int, terms: dict[int, float], scale: float = 1.0):
        for k, c in terms.items():
            i, j = self.ms.rep_entry(k)
            self.builder.add(row, self.blk, i, j, scale * c)
            self._shift(row, [(i, j, scale * c)])

    def add_objective_terms(self, terms: dict[int, float], scale: float = 1.0):
        for k, c in terms.items():
            i, j = self.ms.rep_entry(k)
            self.builder.add_objective(self.blk, i, j, scale * c)


@dataclass(frozen=True)
class MembershipResult:
    feasible: bool
    margin: float        # max(0, -largest t with Gamma - t*I PSD)
    min_eigenvalue: float

    def __bool__(self):
        return self.feasible


def membership_test(p: Behavior, level: LevelSpec = 1, tol: float = 1e-7,
                    settings: SolverSettings | None = None) -> MembershipResult:
    """Decide whether ``p`` (possibly unnormalized) lies in the level-``level`` relaxation.

    Solves ``max t`` subject to ``Gamma - t*I`` PSD, with ``Gamma`` a moment
    matrix whose behavior entries equal ``p``.  The program is always strictly
    feasible, so ``t*`` is well defined; ``p`` is accepted iff ``t* >= -tol``.
    Since ``t* <= Gamma_11 = tr(p)`` the shift is written ``t = tr(p) - w``.
    A negative entry of ``p`` is rejected up front with that entry as margin.
    """
    neg = float(p.p.min())
    if neg < -tol:
        return MembershipResult(False, -neg, float("nan"))
    ms = MomentStructure(p.scenario, level, normalized=False)
    trace = p.trace
    b = ProgramBuilder((ms.size,), 1, "max")
    block = MomentBlock(b, ms, 0, shift_lp=0, shift_const=trace)
    for comp, terms in ms.behavior_map.items():
        r = b.new_row(float(p.p[comp]))
        block.add_terms(r, terms)
    b.add_objective(1, 0, 0, -1.0)
    rep = solve(b.build(), settings=settings)
    if rep.status == "infeasible":
        # only possible when the behavior rows themselves are inconsistent (signaling)
        return MembershipResult(False, float("inf"), float("-inf"))
    if not rep.optimal:
        raise SolverError(f"membership test failed: {rep.status} ({rep.message})", rep)
    t = trace + rep.primal_value
    return MembershipResult(t >= -tol, max(0.0, -t), t)
