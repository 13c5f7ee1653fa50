"""Bell-expression certificates read off the dual of the guessing program.

A certificate is an expression ``f`` with ``p'(g at target) <= f(p')`` for every
guess ``g`` and every normalized ``p'`` in the relaxed set; then ``f(q)`` bounds
the guessing probability of any behavior ``q`` in that set.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .bell import Behavior, BellExpression, Scenario, bell_value, expression_from_correlators
from .conic import ProgramBuilder, SolverSettings, load_settings
from .conic import solve as solve_program
from .digp import FullBehavior, Solution, Target, guess_terms
from .errors import SolverError, UnsupportedScenarioError, UnverifiedCertificateError
from .npa import MomentBlock, MomentStructure
from .nslp import NsBlock


def behavior_hash(p: Behavior) -> str:
    """Content hash of a behavior (scenario and probabilities rounded to 12 digits)."""
    payload = json.dumps({"scenario": p.scenario.to_dict(),
                          "p": np.round(p.p, 12).ravel().tolist()}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(eq=False)
class Certificate:
    expression: BellExpression
    bound: float
    target: Target
    level: object = 2            # moment level, or None for the no-signaling set
    kind: str = "npa"            # "npa" or "ns"
    margins: list = field(default_factory=list)
    verified: bool = False
    source_hash: str | None = None

    @property
    def scenario(self) -> Scenario:
        return self.expression.scenario

    def to_dict(self) -> dict:
        return {
            "expression": self.expression.to_dict(),
            "bound": self.bound,
            "target": str(self.target),
            "level": self.level,
            "kind": self.kind,
            "margins": list(self.margins),
            "verified": self.verified,
            "source_hash": self.source_hash,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        return cls(
            expression=BellExpression.from_dict(d["expression"]),
            bound=float(d["bound"]),
            target=Target.parse(d["target"]),
            level=d.get("level"),
            kind=d.get("kind", "npa"),
            margins=[float(m) for m in d.get("margins", [])],
            verified=bool(d.get("verified", False)),
            source_hash=d.get("source_hash"),
        )

    @classmethod
    def from_json(cls, text: str) -> "Certificate":
        return cls.from_dict(json.loads(text))


def _dual_expression(sol: Solution) -> BellExpression:
    asm = sol.assembled
    y = sol.report.multipliers
    s = sol.problem.scenario
    mode = sol.problem.mode
    if y is None or len(y) != asm.program.n_rows:
        raise SolverError("solver report carries no equality multipliers", sol.report)
    if isinstance(mode, FullBehavior):
        f = np.zeros(s.shape)
        for comp, r in asm.link_rows.items():
            f[comp] = y[r]
        return BellExpression(s, f)
    # Bell-value rows: sum_t lam_t f_t(p) + mu, with mu spread over the normalization
    coeffs = np.full(s.shape, y[asm.norm_row] / (s.nx * s.ny))
    for (expr, _), r in zip(mode.constraints, asm.bell_rows):
        coeffs = coeffs + y[r] * expr.coeffs
    return BellExpression(s, coeffs)


def _hull_functionals(s: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Rows spanning the functionals that are constant on normalized non-signaling behaviors."""
    rows, vals = [], []

    def unit(mask_fn):
        r = np.zeros(s.shape)
        mask_fn(r)
        return r.ravel()

    for x in range(s.nx):
        for y in range(s.ny):
            rows.append(unit(lambda r: r.__setitem__((slice(None), slice(None), x, y), 1.0)))
            vals.append(1.0)
    for x in range(s.nx):
        for y in range(1, s.ny):
            for a in range(s.da):
                def f(r, a=a, x=x, y=y):
                    r[a, :, x, 0] = 1.0
                    r[a, :, x, y] = -1.0
                rows.append(unit(f))
                vals.append(0.0)
    for y in range(s.ny):
        for x in range(1, s.nx):
            for b in range(s.db):
                def g(r, b=b, x=x, y=y):
                    r[:, b, 0, y] = 1.0
                    r[:, b, x, y] = -1.0
                rows.append(unit(g))
                vals.append(0.0)
    return np.array(rows), np.array(vals)


def reduce_expression(f: BellExpression, eps: float = 1e-13) -> BellExpression:
    """Minimum-norm expression agreeing with ``f`` on every normalized non-signaling behavior.

    Dual multipliers are only defined up to normalization and no-signaling
    functionals; removing that part keeps coefficients small and readable.
    """
    s = f.scenario
    N, v = _hull_functionals(s)
    c, *_ = np.linalg.lstsq(N.T, f.coeffs.ravel(), rcond=None)
    rest = f.coeffs.ravel() - N.T @ c
    rest[np.abs(rest) < eps] = 0.0
    return BellExpression(s, rest.reshape(s.shape), f.constant + float(c @ v))


def extract_certificate(sol: Solution, verify: bool = True, tol: float | None = None,
                        settings: SolverSettings | None = None) -> Certificate:
    """Build the certificate from the equality multipliers of a solved instance.

    The overall sign is fixed by requiring ``f(p)`` to match the primal value.
    """
    gp = sol.problem
    f = reduce_expression(_dual_expression(sol))
    if isinstance(gp.mode, FullBehavior):
        bound = bell_value(f, gp.mode.p)
        src = behavior_hash(gp.mode.p)
    else:
        # f(p) is fixed by the constrained values alone
        asm, y = sol.assembled, sol.report.multipliers
        bound = float(y[asm.norm_row]) + sum(
            float(y[r]) * (v - e.constant) for (e, v), r in zip(gp.mode.constraints, asm.bell_rows))
        src = None
    if abs(-bound - sol.value) < abs(bound - sol.value):
        f = f * -1.0
        bound = -bound
    cert = Certificate(f, float(bound), gp.target, gp.level if sol.cone == "npa" else None,
                       sol.cone, source_hash=src)
    if verify:
        cert = verify_certificate(cert, tol=tol if tol is not None else sol.tol, settings=settings)
    return cert


def certificate_margins(cert: Certificate, settings: SolverSettings | None = None,
                        tol: float = 1e-6) -> list[float]:
    """``max_{p'} [p'(g at target) - f(p')]`` over the normalized relaxed set, one per guess."""
    s, target = cert.scenario, cert.target
    margins = []
    for g in target.guesses(s):
        if cert.kind == "npa":
            ms = MomentStructure(s, cert.level, normalized=True)
            b = ProgramBuilder((ms.size,), ms.positivity_slots, "max")
            blk = MomentBlock(b, ms, 0, positivity_lp=0)
        else:
            b = ProgramBuilder((), s.dim, "max")
            blk = NsBlock(b, s, 0, normalized=True)
        blk.add_objective_terms(guess_terms(blk, target, g))
        blk.add_objective_terms(blk.expression_terms(cert.expression), -1.0)
        rep = solve_program(b.build(), tol=tol, settings=settings)
        if not rep.optimal:
            raise SolverError(f"verification solve failed for guess {g}: {rep.status}", rep)
        margins.append(float(rep.primal_value - cert.expression.constant))
    return margins


def verify_certificate(cert: Certificate, level=None, tol: float | None = None,
                       settings: SolverSettings | None = None) -> Certificate:
    """Returns a copy with margins filled in; verified iff every margin is at most ``tol``."""
    settings = settings or load_settings()
    tol = settings.tol if tol is None else tol
    if level is not None:
        cert = replace(cert, level=level)
    margins = certificate_margins(cert, settings, tol)
    return replace(cert, margins=margins, verified=max(margins) <= tol)


def certified_bound(cert: Certificate, q: Behavior) -> float:
    """``f(q)``, an upper bound on the guessing probability of ``q``; needs a verified certificate."""
    if not cert.verified:
        raise UnverifiedCertificateError("certificate has not been verified; call verify_certificate first")
    if q.scenario != cert.scenario:
        raise UnsupportedScenarioError(f"behavior scenario {q.scenario} differs from certificate {cert.scenario}")
    return bell_value(cert.expression, q)


def trivial_certificate(s: Scenario, target: Target, level=2, kind: str = "npa") -> Certificate:
    """``f = 1/(nx ny)`` everywhere, so ``f(p') = 1`` on every normalized behavior."""
    f = BellExpression(s, np.full(s.shape, 1.0 / (s.nx * s.ny)))
    return Certificate(f, 1.0, target, level if kind == "npa" else None, kind)


def correlator_coefficients(f: BellExpression) -> dict[str, np.ndarray | float]:
    """Coefficients of ``f`` in the correlator basis of a binary scenario.

    ``f(p) = c0 + sum_x ca[x] <A_x> + sum_y cb[y] <B_y> + sum_xy cab[x,y] <A_x B_y>``
    holds for every no-signaling ``p``; outcome 0 is the +1 value.
    """
    s = f.scenario
    if s.da != 2 or s.db != 2:
        raise UnsupportedScenarioError("correlator form needs two outcomes per party")
    sign = np.array([1.0, -1.0])
    F = f.coeffs
    return {
        "c0": float(F.sum() / 4 + f.constant),
        "ca": np.einsum("abxy,a->x", F, sign) / 4,
        "cb": np.einsum("abxy,b->y", F, sign) / 4,
        "cab": np.einsum("abxy,a,b->xy", F, sign, sign) / 4,
    }


@dataclass(frozen=True)
class NamedFit:
    """``f ~ scale * (f11 A1B1 + A1B2 + A2B1 - f22 A2B2) + offset``."""

    f11: float
    f22: float
    scale: float
    offset: float
    residual: float      # relative size of the part of f outside the template
    expression: BellExpression


def rescale_to_named_form(cert: Certificate | BellExpression) -> NamedFit:
    """Least-squares fit onto the two-parameter CHSH-like family, in correlator coordinates."""
    f = cert.expression if isinstance(cert, Certificate) else cert
    c = correlator_coefficients(f)
    cab = c["cab"]
    scale = (cab[0, 1] + cab[1, 0]) / 2
    if abs(scale) < 1e-12:
        raise UnsupportedScenarioError("expression has no A1B2 + A2B1 component to normalize by")
    f11, f22 = cab[0, 0] / scale, -cab[1, 1] / scale
    outside = np.concatenate([c["ca"], c["cb"], [(cab[0, 1] - cab[1, 0]) / 2]])
    total = np.concatenate([c["ca"], c["cb"], cab.ravel()])
    residual = float(np.linalg.norm(outside) / np.linalg.norm(total))
    fitted = expression_from_correlators(c["c0"], [0, 0], [0, 0],
                                         scale * np.array([[f11, 1.0], [1.0, -f22]]))
    return NamedFit(float(f11), float(f22), float(scale), c["c0"], residual, fitted)


def chsh_family(f11: float, f22: float) -> BellExpression:
    return expression_from_correlators(0.0, [0, 0], [0, 0], [[f11, 1.0], [1.0, -f22]])


__all__ = [
    "Certificate", "extract_certificate", "verify_certificate", "certificate_margins",
    "certified_bound", "trivial_certificate", "correlator_coefficients", "rescale_to_named_form",
    "NamedFit", "chsh_family", "behavior_hash", "reduce_expression",
]
