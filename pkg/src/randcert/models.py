"""Explicit quantum realizations: states, projective measurements, named expressions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bell import (
    BellExpression,
    Behavior,
    BinaryCorrelators,
    Scenario,
    behavior_from_correlators,
    chsh_expression,
    expression_from_correlators,
)
from .errors import StructuralError

PROJECTOR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class StateVector:
    """Pure state on ``C^dim_a (x) C^dim_b``."""

    amplitudes: np.ndarray
    dim_a: int
    dim_b: int

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).ravel()
        if amp.size != self.dim_a * self.dim_b:
            raise StructuralError(f"state has {amp.size} amplitudes, expected {self.dim_a * self.dim_b}")
        if abs(np.linalg.norm(amp) - 1.0) > 1e-12:
            raise ValueError(f"state is not normalized (norm {np.linalg.norm(amp)!r})")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True, eq=False)
class ProjectiveMeasurement:
    """``projectors[x][a]`` is the projector for outcome ``a`` of setting ``x``."""

    projectors: tuple

    def __post_init__(self):
        projs = tuple(tuple(np.asarray(P, dtype=complex) for P in setting) for setting in self.projectors)
        object.__setattr__(self, "projectors", projs)
        dims = {P.shape for setting in projs for P in setting}
        if len(dims) != 1:
            raise StructuralError("projectors must share one square shape")
        n_out = {len(setting) for setting in projs}
        if len(n_out) != 1:
            raise StructuralError("every setting must have the same number of outcomes")
        self.check()

    @property
    def n_settings(self) -> int:
        return len(self.projectors)

    @property
    def n_outcomes(self) -> int:
        return len(self.projectors[0])

    @property
    def dim(self) -> int:
        return self.projectors[0][0].shape[0]

    def check(self, tol: float = PROJECTOR_TOL):
        eye = np.eye(self.dim)
        for x, setting in enumerate(self.projectors):
            if np.max(np.abs(sum(setting) - eye)) > tol:
                raise ValueError(f"projectors of setting {x} do not sum to identity")
            for a, P in enumerate(setting):
                if np.max(np.abs(P @ P - P)) > tol or np.max(np.abs(P - P.conj().T)) > tol:
                    raise ValueError(f"element {a} of setting {x} is not an orthogonal projector")
                for a2 in range(a + 1, len(setting)):
                    if np.max(np.abs(P @ setting[a2])) > tol:
                        raise ValueError(f"elements {a},{a2} of setting {x} are not orthogonal")

    @classmethod
    def from_bases(cls, bases) -> "ProjectiveMeasurement":
        """One orthonormal basis per setting; columns of each matrix are the basis vectors."""
        projs = []
        for U in bases:
            U = np.asarray(U, dtype=complex)
            projs.append(tuple(np.outer(U[:, k], U[:, k].conj()) for k in range(U.shape[1])))
        return cls(tuple(projs))


def behavior_from_model(state: StateVector, meas_a: ProjectiveMeasurement,
                        meas_b: ProjectiveMeasurement) -> Behavior:
    if meas_a.dim != state.dim_a or meas_b.dim != state.dim_b:
        raise StructuralError("measurement dimensions do not match the state")
    psi = state.amplitudes.reshape(state.dim_a, state.dim_b)
    s = Scenario(meas_a.n_settings, meas_b.n_settings, meas_a.n_outcomes, meas_b.n_outcomes)
    p = np.zeros(s.shape)
    for x, sa in enumerate(meas_a.projectors):
        for y, sb in enumerate(meas_b.projectors):
            for a, Pa in enumerate(sa):
                left = Pa @ psi
                for b, Pb in enumerate(sb):
                    # <psi| Pa (x) Pb |psi> with psi as a dim_a x dim_b matrix
                    p[a, b, x, y] = np.real(np.vdot(psi, left @ Pb.T))
    return Behavior(s, p)


def _qubit_observable_basis(angle: float) -> np.ndarray:
    """Eigenbasis of ``cos(angle) Z + sin(angle) X``; column 0 is the +1 eigenvector."""
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -s], [s, c]])


def qubit_measurement(*angles: float) -> ProjectiveMeasurement:
    """Measurements of ``cos(t) Z + sin(t) X`` in the x-z plane, one per angle."""
    return ProjectiveMeasurement.from_bases([_qubit_observable_basis(t) for t in angles])


def partial_entangled_mu(theta: float) -> float:
    return math.atan(math.sin(2 * theta))


def partial_entangled_correlators(theta: float, v: float = 1.0) -> BinaryCorrelators:
    """Correlators of ``cos t|00> + sin t|11>`` maximally violating I_1^beta, mixed with white noise."""
    if not 0 < theta <= math.pi / 4:
        raise ValueError(f"theta must lie in (0, pi/4], got {theta}")
    if not 0 <= v <= 1:
        raise ValueError(f"v must lie in [0, 1], got {v}")
    mu = partial_entangled_mu(theta)
    s2, c2 = math.sin(2 * theta), math.cos(2 * theta)
    cm, sm = math.cos(mu), math.sin(mu)
    return BinaryCorrelators(
        mean_a=[v * c2, 0.0],
        mean_b=[v * c2 * cm, v * c2 * cm],
        corr=[[v * cm, v * cm], [v * s2 * sm, -v * s2 * sm]],
    )


def partial_entangled_model(theta: float) -> tuple[StateVector, ProjectiveMeasurement, ProjectiveMeasurement]:
    """A_1 = Z, A_2 = X, B_y = cos(mu) Z -+ sin(mu) X on ``cos t|00> + sin t|11>``."""
    mu = partial_entangled_mu(theta)
    state = StateVector([math.cos(theta), 0, 0, math.sin(theta)], 2, 2)
    return state, qubit_measurement(0.0, math.pi / 2), qubit_measurement(mu, -mu)


def i1beta_expression(beta: float) -> BellExpression:
    """CHSH plus ``beta <A_1>``; local bound ``2 + beta``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return expression_from_correlators(0.0, [beta, 0.0], [0.0, 0.0], [[1, 1], [1, -1]])


def i1beta_for_theta(theta: float) -> float:
    s2 = math.sin(2 * theta)
    return 2 * math.cos(2 * theta) / math.sqrt(1 + s2 * s2)


def chsh_model() -> tuple[StateVector, ProjectiveMeasurement, ProjectiveMeasurement]:
    """Maximal CHSH violation; identical to the theta=pi/4 partially entangled model."""
    return partial_entangled_model(math.pi / 4)


# Bob's offsets are listed in the input order that makes cglmp_expression()
# positive on these correlations; in the other order the peaks sit on the
# negative terms of the expression.
CGLMP_ALICE_PHASES = (0.0, 0.5)
CGLMP_BOB_PHASES = (-0.25, 0.25)
CGLMP_SCENARIO = Scenario(2, 2, 3, 3)


def _fourier_basis(d: int, shift: float, sign: int) -> np.ndarray:
    j = np.arange(d)[:, None]
    k = np.arange(d)[None, :]
    return np.exp(sign * 2j * math.pi * j * (k + shift) / d) / math.sqrt(d)


def cglmp_state(alpha: float) -> StateVector:
    if not 0 <= alpha <= 1 / math.sqrt(2) + 1e-15:
        raise ValueError(f"alpha must lie in [0, 1/sqrt(2)], got {alpha}")
    mid = math.sqrt(max(0.0, 1 - 2 * alpha * alpha))
    amp = np.zeros(9)
    amp[0], amp[4], amp[8] = alpha, mid, alpha
    return StateVector(amp, 3, 3)


def cglmp_model(alpha: float) -> tuple[StateVector, ProjectiveMeasurement, ProjectiveMeasurement]:
    """Qutrit state ``a|00> + sqrt(1-2a^2)|11> + a|22>`` with the CGLMP Fourier measurements.

    Alice's basis for setting x is ``|k>_x = sum_j exp(2 pi i j (k + a_x)/3)|j>/sqrt(3)``
    and Bob's is ``|l>_y = sum_j exp(-2 pi i j (l + b_y)/3)|j>/sqrt(3)``, with
    ``a = (0, 1/2)`` and ``b = (-1/4, 1/4)``.
    """
    state = cglmp_state(alpha)
    ma = ProjectiveMeasurement.from_bases([_fourier_basis(3, s, +1) for s in CGLMP_ALICE_PHASES])
    mb = ProjectiveMeasurement.from_bases([_fourier_basis(3, s, -1) for s in CGLMP_BOB_PHASES])
    return state, ma, mb


def cglmp_expression(d: int = 3) -> BellExpression:
    """CGLMP expression ``I_d`` in joint-probability form, local bound 2.

    With 0-based outcomes and ``P(A_x = B_y + k) = sum_j p(j+k mod d, j | x y)``:
    ``I_d = sum_{k < d/2} (1 - 2k/(d-1)) [P(A1=B1+k) + P(B1=A2+k+1) + P(A2=B2+k)
    + P(B2=A1+k) - P(A1=B1-k-1) - P(B1=A2-k) - P(A2=B2-k-1) - P(B2=A1-k-1)]``.
    """
    f = np.zeros((d, d, 2, 2))

    def add(x, y, shift, w):
        # adds w * P(A_x = B_y + shift)
        for b in range(d):
            f[(b + shift) % d, b, x, y] += w

    for k in range(d // 2):
        w = 1 - 2 * k / (d - 1)
        add(0, 0, k, w)
        add(1, 0, -(k + 1), w)   # B1 = A2 + k + 1
        add(1, 1, k, w)
        add(0, 1, -k, w)         # B2 = A1 + k
        add(0, 0, -(k + 1), -w)
        add(1, 0, k, -w)         # B1 = A2 - k
        add(1, 1, -(k + 1), -w)
        add(0, 1, k + 1, -w)     # B2 = A1 - k - 1
    return BellExpression(Scenario(2, 2, d, d), f)


def cglmp_behavior(alpha: float) -> Behavior:
    return behavior_from_model(*cglmp_model(alpha))


def partial_entangled_behavior(theta: float, v: float = 1.0) -> Behavior:
    return behavior_from_correlators(partial_entangled_correlators(theta, v))


def chsh_noise_behavior(v: float) -> Behavior:
    """Maximal-CHSH correlations mixed with white noise at visibility ``v``."""
    return partial_entangled_behavior(math.pi / 4, v)


__all__ = [
    "StateVector", "ProjectiveMeasurement", "behavior_from_model", "qubit_measurement",
    "partial_entangled_correlators", "partial_entangled_model", "partial_entangled_behavior",
    "i1beta_expression", "i1beta_for_theta", "chsh_expression", "chsh_model", "chsh_noise_behavior",
    "cglmp_state", "cglmp_model", "cglmp_expression", "cglmp_behavior",
]
