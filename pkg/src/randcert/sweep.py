"""Parameter sweeps over the named model families, one CSV row per grid point and mode."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

from . import digp
from .bell import Behavior, BellExpression, bell_value, chsh_expression
from .certificates import extract_certificate, rescale_to_named_form
from .errors import RandcertError
from .models import (
    cglmp_behavior,
    cglmp_expression,
    chsh_noise_behavior,
    i1beta_expression,
    i1beta_for_theta,
    partial_entangled_behavior,
)

EXPERIMENTS = {
    # name: (parameter, default grid, modes, target, level)
    "chsh-noise": ("v", "0.75:1:0.01", ("full", "chsh"), "global:1,1", 2),
    "partial-entangled": ("theta", "pi/40:pi/4:pi/40", ("i1beta", "chsh", "both", "full"), "global:2,1", 3),
    "cglmp": ("alpha", "0.3693:0.7071:0.01", ("full", "cglmp"), "local:1", 2),
}

COLUMNS = ("experiment", "parameter", "value", "mode", "cone", "level", "target",
           "status", "G", "bound", "gap", "f11", "f22", "fit_residual")


def parse_number(text: str) -> float:
    """Decimal, fraction, or a multiple of pi: ``0.42``, ``3/4``, ``27/200pi``, ``pi/4``."""
    t = text.strip().replace(" ", "").replace("*", "")
    if "pi" not in t:
        return float(Fraction(t))
    head, _, tail = t.partition("pi")
    coef = Fraction(head) if head else Fraction(1)
    if tail:
        if not tail.startswith("/"):
            raise ValueError(f"cannot parse number {text!r}")
        coef /= Fraction(tail[1:])
    return float(coef) * math.pi


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (stop included) or a comma-separated list of values."""
    if ":" not in text:
        vals = [parse_number(t) for t in text.split(",") if t.strip()]
    else:
        start, stop, step = (parse_number(t) for t in text.split(":"))
        if step <= 0 or stop < start:
            raise ValueError(f"bad grid {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9))
        vals = [start + i * step for i in range(n + 1)]
        if stop - vals[-1] > 1e-9 * max(1.0, abs(stop)):
            vals.append(stop)
    if not vals:
        raise ValueError("empty grid")
    return vals


@dataclass(frozen=True)
class SweepSpec:
    experiment: str
    grid: tuple[float, ...]
    modes: tuple[str, ...]
    target: str
    level: int | str
    v: float = 0.99          # visibility for the partially entangled family
    ns: bool = False
    tol: float | None = None
    verify: bool = False

    @classmethod
    def default(cls, experiment: str, **kw) -> "SweepSpec":
        if experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {experiment!r}; choose from {sorted(EXPERIMENTS)}")
        _, grid, modes, target, level = EXPERIMENTS[experiment]
        grid = kw.pop("grid", None) or grid
        spec = cls(experiment, tuple(parse_grid(grid) if isinstance(grid, str) else grid),
                   tuple(kw.pop("modes", None) or modes),
                   kw.pop("target", None) or target, kw.pop("level", None) or level, **kw)
        bad = set(spec.modes) - set(EXPERIMENTS[experiment][2])
        if bad:
            raise ValueError(f"modes {sorted(bad)} not available for {experiment}")
        return spec

    def points(self) -> list[tuple[float, str]]:
        return [(x, m) for x in self.grid for m in self.modes]


def experiment_behavior(spec: SweepSpec, x: float) -> Behavior:
    if spec.experiment == "chsh-noise":
        return chsh_noise_behavior(x)
    if spec.experiment == "partial-entangled":
        return partial_entangled_behavior(x, spec.v)
    return cglmp_behavior(x)


def _mode_expressions(spec: SweepSpec, x: float, mode: str) -> list[BellExpression]:
    if spec.experiment == "partial-entangled":
        i1b = i1beta_expression(i1beta_for_theta(x))
        return {"chsh": [chsh_expression()], "i1beta": [i1b], "both": [chsh_expression(), i1b]}[mode]
    if spec.experiment == "cglmp":
        return [cglmp_expression()]
    return [chsh_expression()]


def build_problem(spec: SweepSpec, x: float, mode: str) -> digp.GuessingProblem:
    p = experiment_behavior(spec, x)
    target = digp.Target.parse(spec.target)
    if mode == "full":
        return digp.GuessingProblem.full(p, target, spec.level)
    cons = [(f, bell_value(f, p)) for f in _mode_expressions(spec, x, mode)]
    return digp.GuessingProblem.bell(cons, target, spec.level)


def run_point(spec: SweepSpec, x: float, mode: str) -> dict:
    """Solve one grid point; failures become a row with the status filled in."""
    row = dict.fromkeys(COLUMNS, "")
    row.update(experiment=spec.experiment, parameter=EXPERIMENTS[spec.experiment][0], value=x,
               mode=mode, cone="ns" if spec.ns else "npa", level="" if spec.ns else spec.level,
               target=spec.target)
    try:
        gp = build_problem(spec, x, mode)
        sol = digp.solve(gp, tol=spec.tol, cone=row["cone"])
        cert = extract_certificate(sol, verify=spec.verify, tol=spec.tol)
    except RandcertError as exc:
        row["status"] = getattr(getattr(exc, "report", None), "status", None) or type(exc).__name__
        return row
    except ValueError as exc:
        row["status"] = f"invalid: {exc}"
        return row
    row.update(status="optimal" if not spec.verify or cert.verified else "unverified",
               G=sol.value, bound=cert.bound, gap=sol.report.gap)
    if spec.experiment == "chsh-noise" and mode == "full":
        try:
            fit = rescale_to_named_form(cert)
            row.update(f11=fit.f11, f22=fit.f22, fit_residual=fit.residual)
        except RandcertError:
            pass
    return row


def _run_star(args):
    return run_point(*args)


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[dict]:
    """Rows in grid order (grid value, then mode) whatever the completion order."""
    jobs = [(spec, x, m) for x, m in spec.points()]
    if workers <= 1:
        return [_run_star(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_star, jobs))


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in COLUMNS])
    return buf.getvalue()


def plot_rows(rows: list[dict], path: str, title: str | None = None):
    """Static plot of G against the swept parameter, one curve per mode."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    modes = list(dict.fromkeys(r["mode"] for r in rows))
    for m in modes:
        pts = [(r["value"], r["G"]) for r in rows if r["mode"] == m and r["G"] != ""]
        if pts:
            xs, ys = zip(*pts)
            ax.plot(xs, ys, marker=".", label=m)
    if rows:
        ax.set_xlabel(rows[0]["parameter"])
    ax.set_ylabel("G")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

