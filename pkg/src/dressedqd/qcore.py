"""Dense density-matrix engine for small open quantum systems.

Density matrices are vectorized by column stacking, so that
``vec(A X B) = (B^T kron A) vec(X)``.  Liouvillians act on those vectors.
Everything here is independent of the cascade model; the Hamiltonian is
passed in energy units and divided by ``hbar`` when the generator is built.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import expm

log = logging.getLogger(__name__)

HBAR = 658.2119569  # ueV ps

POSITIVITY_WARN = 1e-9
POSITIVITY_FAIL = 1e-6


class ConvergenceError(RuntimeError):
    """Numerical result failed an accuracy or positivity check."""


# ---------------------------------------------------------------------------
# vectorization helpers


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: Optional[int] = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.shape[0])))
    return v.reshape((dim, dim) + v.shape[1:], order="F")


def trace_row(A: np.ndarray) -> np.ndarray:
    """Row vector r with ``r @ vec(X) == Tr(A X)``."""
    return np.asarray(A).reshape(-1)


def spre(A: np.ndarray) -> np.ndarray:
    """Superoperator of X -> A X."""
    return np.kron(np.eye(A.shape[0]), A)


def spost(A: np.ndarray) -> np.ndarray:
    """Superoperator of X -> X A."""
    return np.kron(A.T, np.eye(A.shape[0]))


def sprepost(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Superoperator of X -> A X B."""
    return np.kron(B.T, A)


def dagger(A: np.ndarray) -> np.ndarray:
    return np.conj(A).T


# ---------------------------------------------------------------------------
# building blocks


def dissipator(A: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``2 A rho A^+ - A^+ A rho - rho A^+ A`` (no prefactor)."""
    A = np.asarray(A)
    rho = np.asarray(rho)
    if A.shape != rho.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"dimension mismatch: A{A.shape} vs rho{rho.shape}")
    Ad = dagger(A)
    AdA = Ad @ A
    return 2 * A @ rho @ Ad - AdA @ rho - rho @ AdA


def dissipator_super(A: np.ndarray) -> np.ndarray:
    Ad = dagger(A)
    AdA = Ad @ A
    return 2 * sprepost(A, Ad) - spre(AdA) - spost(AdA)


@dataclass(frozen=True)
class LindbladTerm:
    """``rate * L[collapse]`` with rate in 1/ps."""

    rate: float
    collapse: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"negative Lindblad rate {self.rate} ({self.label})")


@dataclass
class Liouvillian:
    """Generator d vec(rho)/dt = L vec(rho).

    Either a constant ``matrix`` or a ``generator`` callback ``t -> matrix``.
    With both set, ``active_window=(lo, hi)`` marks the interval outside of
    which the callback equals ``matrix``; steps there use exact exponentials.
    """

    dim: int
    matrix: Optional[np.ndarray] = None
    generator: Optional[Callable[[float], np.ndarray]] = None
    active_window: Optional[tuple] = None
    _expm_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def time_dependent(self) -> bool:
        return self.generator is not None

    def at(self, t: float) -> np.ndarray:
        if self.generator is None:
            return self.matrix
        if self.active_window is not None and self.matrix is not None:
            lo, hi = self.active_window
            if t < lo or t > hi:
                return self.matrix
        return self.generator(t)

    def is_constant_on(self, t0: float, t1: float) -> bool:
        if self.generator is None:
            return True
        if self.active_window is None or self.matrix is None:
            return False
        lo, hi = self.active_window
        return t1 <= lo or t0 >= hi

    def propagator(self, h: float) -> np.ndarray:
        """exp(L h) for the constant part, cached per step size."""
        if self.matrix is None:
            raise ValueError("no constant generator available")
        key = round(float(h), 12)
        P = self._expm_cache.get(key)
        if P is None:
            P = expm(self.matrix * h)
            self._expm_cache[key] = P
        return P


def _check_hermitian(H: np.ndarray, tol: float = 1e-12) -> None:
    scale = max(np.linalg.norm(H), 1.0)
    if np.linalg.norm(H - dagger(H)) > tol * scale:
        raise ValueError("Hamiltonian is not Hermitian")


def hamiltonian_super(H: np.ndarray, hbar: float = HBAR) -> np.ndarray:
    return -1j / hbar * (spre(H) - spost(H))


def lindblad_super(terms: Sequence[LindbladTerm], dim: int) -> np.ndarray:
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for term in terms:
        if term.collapse.shape != (dim, dim):
            raise ValueError(f"collapse operator {term.label!r} has wrong shape")
        out += term.rate * dissipator_super(term.collapse)
    return out


def build_liouvillian(H: np.ndarray, terms: Sequence[LindbladTerm] = (),
                      hbar: float = HBAR) -> Liouvillian:
    H = np.asarray(H, dtype=complex)
    _check_hermitian(H)
    dim = H.shape[0]
    L = hamiltonian_super(H, hbar) + lindblad_super(terms, dim)
    return Liouvillian(dim=dim, matrix=L)


# ---------------------------------------------------------------------------
# propagation


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (N, d, d)
    liouvillian: Liouvillian
    maps: list = field(default_factory=list, repr=False)  # step maps, len N-1

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def expect(self, A: np.ndarray) -> np.ndarray:
        return np.einsum("ij,nji->n", A, self.states)

    def population(self, i: int) -> np.ndarray:
        return self.states[:, i, i].real


def _rk4_map(L: Liouvillian, t: float, h: float) -> np.ndarray:
    """One classic RK4 step of a linear ODE, as a matrix."""
    A = L.at(t)
    B = L.at(t + h / 2)
    C = L.at(t + h)
    eye = np.eye(A.shape[0], dtype=complex)
    k1 = A
    k2 = B @ (eye + h / 2 * k1)
    k3 = B @ (eye + h / 2 * k2)
    k4 = C @ (eye + h * k3)
    return eye + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def step_map(L: Liouvillian, t: float, h: float, substep_norm: float = 0.02) -> np.ndarray:
    """Propagator over [t, t+h]; exact when L is constant there."""
    if L.is_constant_on(t, t + h):
        return L.propagator(h)
    norm = max(np.linalg.norm(L.at(t), 2), np.linalg.norm(L.at(t + h), 2))
    n = max(1, int(np.ceil(h * norm / substep_norm)))
    dt = h / n
    P = np.eye(L.dim * L.dim, dtype=complex)
    for k in range(n):
        P = _rk4_map(L, t + k * dt, dt) @ P
    return P


def check_state(rho: np.ndarray, where: str = "") -> float:
    """Return the most negative eigenvalue; raise when beyond tolerance."""
    herm = np.linalg.norm(rho - dagger(rho))
    if herm > 1e-8:
        raise ConvergenceError(f"Hermiticity lost ({herm:.2e}) {where}")
    lam = np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))[0]
    if lam < -POSITIVITY_FAIL:
        raise ConvergenceError(
            f"positivity violated: min eigenvalue {lam:.3e} {where}; reduce the step size")
    if lam < -POSITIVITY_WARN:
        log.warning("small negative eigenvalue %.2e %s", lam, where)
    return lam


def evolve(rho0: np.ndarray, L: Liouvillian, times: Sequence[float],
           keep_maps: bool = True, check: bool = True) -> Trajectory:
    """Propagate rho0 over ``times`` (nonuniform grids allowed)."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")
    d = L.dim
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (d, d):
        raise ValueError("initial state has wrong dimension")
    states = np.empty((len(times), d, d), dtype=complex)
    states[0] = rho0
    x = vec(rho0)
    maps = []
    for j in range(len(times) - 1):
        P = step_map(L, times[j], times[j + 1] - times[j])
        x = P @ x
        states[j + 1] = unvec(x, d)
        if keep_maps:
            maps.append(P)
    if check:
        _check_trajectory(times, states)
    return Trajectory(times=times, states=states, liouvillian=L, maps=maps)


def _check_trajectory(times, states) -> None:
    tr = np.einsum("nii->n", states)
    bad = np.abs(tr - 1)
    if bad.max() > 1e-9:
        raise ConvergenceError(f"trace drift {bad.max():.2e} at t={times[bad.argmax()]:.3f} ps")
    herm = np.abs(states - np.conj(np.transpose(states, (0, 2, 1)))).max()
    if herm > 1e-10:
        raise ConvergenceError(f"Hermiticity defect {herm:.2e}")
    sym = 0.5 * (states + np.conj(np.transpose(states, (0, 2, 1))))
    lam = np.linalg.eigvalsh(sym)[:, 0]
    worst = lam.min()
    if worst < -POSITIVITY_FAIL:
        k = int(lam.argmin())
        raise ConvergenceError(
            f"positivity violated: min eigenvalue {worst:.3e} at t={times[k]:.3f} ps; "
            "reduce the step size")
    if worst < -POSITIVITY_WARN:
        log.warning("small negative eigenvalue %.2e during propagation", worst)


def steady_state(L: Liouvillian) -> np.ndarray:
    """Unique stationary state of a time-independent generator."""
    if L.time_dependent:
        raise ValueError("steady state needs a time-independent Liouvillian")
    M = L.matrix
    d = L.dim
    _, sv, vh = np.linalg.svd(M)
    scale = max(sv[0], 1e-300)
    kernel = int(np.sum(sv < 1e-11 * scale))
    if kernel != 1:
        raise ValueError(f"steady state not unique: kernel dimension {kernel}")
    x = vh[-1].conj()
    rho = unvec(x, d)
    rho = 0.5 * (rho + dagger(rho))
    return rho / np.trace(rho).real


def integrated_state(L: Liouvillian, rho0: np.ndarray, T: float) -> np.ndarray:
    """int_0^T rho(s) ds as a matrix, for a constant generator (Van Loan block)."""
    n = L.dim * L.dim
    big = np.zeros((n + 1, n + 1), dtype=complex)
    big[:n, :n] = L.matrix
    big[:n, n] = vec(rho0)
    E = expm(big * T)
    return unvec(E[:n, n], L.dim)


# ---------------------------------------------------------------------------
# two-time correlations (quantum regression)


@dataclass
class CorrelationGrid:
    t_axis: np.ndarray
    tau_axis: np.ndarray
    values: np.ndarray  # (len(t_axis), len(tau_axis))

    def __post_init__(self):
        for ax in (self.t_axis, self.tau_axis):
            if len(ax) > 1 and np.any(np.diff(ax) <= 0):
                raise ValueError("axes must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("correlation values not finite")

    def integrate(self, squared: bool = False) -> complex:
        f = np.abs(self.values) ** 2 if squared else self.values
        inner = np.trapezoid(f, self.tau_axis, axis=1)
        return np.trapezoid(inner, self.t_axis)


def _source(A: np.ndarray, B: np.ndarray, rho: np.ndarray, sandwich: bool) -> np.ndarray:
    if sandwich:
        return B @ rho @ dagger(B)
    return B @ rho


def two_time(A: np.ndarray, B: np.ndarray, traj: Trajectory,
             tau_axis: Sequence[float], sandwich: bool = False) -> CorrelationGrid:
    """Correlator on the rectangle (trajectory times) x tau_axis.

    sandwich=False: Tr[A e^{L tau}(B rho(t))]        (first order)
    sandwich=True:  Tr[A e^{L tau}(B rho(t) B^+)]    (second order)

    For a time-dependent generator each column is propagated with RK4 steps
    along tau starting from its own absolute time.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    d = traj.dim
    if A.shape != (d, d) or B.shape != (d, d):
        raise ValueError("operator dimension does not match the trajectory")
    tau_axis = np.asarray(tau_axis, dtype=float)
    if tau_axis[0] != 0.0:
        raise ValueError("tau axis must start at 0")
    L = traj.liouvillian
    X = np.stack([vec(_source(A, B, r, sandwich)) for r in traj.states], axis=1)
    row = trace_row(A)
    vals = np.empty((len(traj.times), len(tau_axis)), dtype=complex)
    vals[:, 0] = row @ X
    if not L.time_dependent:
        R = row.astype(complex)
        for m in range(1, len(tau_axis)):
            R = R @ L.propagator(tau_axis[m] - tau_axis[m - 1])
            vals[:, m] = R @ X
    else:
        Y = X.copy()
        for m in range(1, len(tau_axis)):
            h = tau_axis[m] - tau_axis[m - 1]
            for k, t in enumerate(traj.times):
                Y[:, k] = step_map(L, t + tau_axis[m - 1], h) @ Y[:, k]
            vals[:, m] = row @ Y
    return CorrelationGrid(np.asarray(traj.times), tau_axis, vals)


def _trap_weights(times: np.ndarray) -> np.ndarray:
    h = np.diff(times)
    w = np.zeros(len(times))
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def correlation_integral(A: np.ndarray, B: np.ndarray, traj: Trajectory,
                         sandwich: bool = False, squared: bool = False) -> complex:
    """Trapezoidal double integral of a two-time correlator.

    Integrates f(t, tau) = Tr[A U(t+tau, t) S(rho(t))] over t on the
    trajectory grid and tau >= 0 with t + tau inside the grid, using the
    trajectory's own step maps.  ``squared`` integrates |f|^2 instead, by
    propagating in the doubled space (f conj(f) is linear there).  The cost is
    linear in the number of grid points.
    """
    times = traj.times
    if len(traj.maps) != len(times) - 1:
        raise ValueError("trajectory was evolved without keep_maps")
    w = _trap_weights(times)
    h = np.diff(times)
    row = trace_row(A).astype(complex)
    X = [vec(_source(A, B, r, sandwich)) for r in traj.states]
    n = len(times)
    own = np.append(h / 2, 0.0)
    if squared:
        # kron(x, conj x) reshaped row-major is x x^H, and (P kron conj P) acts
        # on it as P (.) P^H, which is far cheaper than the 256x256 product
        X = [np.outer(x, np.conj(x)) for x in X]
        rowc = np.conj(row)
        ev = lambda Z: row @ Z @ rowc
        step = lambda P, Z: P @ Z @ dagger(P)
    else:
        ev = lambda Z: row @ Z
        step = lambda P, Z: P @ Z
    # inner weight for j > k is w[j]; at j == k it is h[k]/2 (0 at the end)
    Z = w[0] * X[0]
    total = w[0] * ev(Z) + w[0] * (own[0] - w[0]) * ev(X[0])
    for j in range(1, n):
        Z = step(traj.maps[j - 1], Z) + w[j] * X[j]
        total += w[j] * ev(Z) + w[j] * (own[j] - w[j]) * ev(X[j])
    return total


def exact_correlation_integral(A: np.ndarray, B: np.ndarray, L: Liouvillian,
                               rho0: np.ndarray, T: float, sandwich: bool = False,
                               squared: bool = False) -> complex:
    """Same double integral on the rectangle [0, T]^2 for a constant generator.

    Uses closed-form integrals of matrix exponentials (Van Loan blocks); it
    shares no quadrature with :func:`correlation_integral` and serves as its
    oracle.
    """
    if L.time_dependent:
        raise ValueError("exact route needs a constant generator")
    d = L.dim
    M = L.matrix
    row = trace_row(A).astype(complex)
    if sandwich:
        S = sprepost(B, dagger(B))
    else:
        S = spre(B)
    r0 = vec(rho0).astype(complex)
    if squared:
        M = np.kron(M, np.eye(d * d)) + np.kron(np.eye(d * d), np.conj(M))
        row = np.kron(row, np.conj(row))
        S = np.kron(S, np.conj(S))
        r0 = np.kron(r0, np.conj(r0))
    n = M.shape[0]
    # int_0^T e^{M t} r0 dt
    big = np.zeros((n + 1, n + 1), dtype=complex)
    big[:n, :n] = M
    big[:n, n] = r0
    v = expm(big * T)[:n, n]
    # row int_0^T e^{M tau} d tau
    big = np.zeros((n + 1, n + 1), dtype=complex)
    big[:n, :n] = M.T
    big[:n, n] = row
    rT = expm(big * T)[:n, n]
    return rT @ (S @ v)
