"""Discrete-time average consensus estimators.

Step functions only use arithmetic and matrix products, so they accept
object arrays (e.g. of ``fractions.Fraction``) as well as floats. Variants
that act through ``I - L`` take an optional Laplacian ``scale``; when it is
``None`` the scale minimising ``||I - scale*L - 11^T/n||_2`` is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .graph import (
    TopologySchedule,
    WeightedDigraph,
    as_schedule,
    disagreement_basis,
    laplacian,
)
from .signals import SignalBundle, divided_difference
from .trajectory import Trajectory

CLUSTER_TOL = 1e-5
DIVERGENCE_LIMIT = 1e100


class DesignError(ValueError):
    """Gain or filter design request outside the supported range."""


# ---------------------------------------------------------------------------
# optimal gains


@dataclass(frozen=True)
class GainReport:
    variant: str
    lambda2: float
    lambdaN: float
    rho: float
    kI: float
    kp: float

    def to_dict(self) -> dict:
        return {"variant": self.variant, "lambda2": self.lambda2, "lambdaN": self.lambdaN,
                "rho": self.rho, "kI": self.kI, "kp": self.kp}


def optimal_rho(variant: str, lam_r: float) -> float:
    """Optimal worst-case rate as a function of ``lambda_2 / lambda_N``."""
    x = lam_r
    if not 0 < x <= 1:
        raise DesignError(f"eigenvalue ratio must lie in (0, 1], got {x}")
    if variant == "P":
        return (1 - x) / (1 + x)
    if variant == "AccelP":
        return (1 - math.sqrt(x)) / (1 + math.sqrt(x))
    if variant == "PI":
        if x <= 3 - math.sqrt(5):
            return (8 - 8 * x + x**2) / (8 - x**2)
        return (math.sqrt((1 - x) * (4 + x**2 * (5 - x))) - x * (1 - x)) / (2 * (1 + x**2))
    if variant == "AccelPI":
        s = math.sqrt(1 - x)
        if x <= 2 * (math.sqrt(2) - 1):
            return (6 - 2 * s + x - 4 * math.sqrt(2 - 2 * s + x)) / (2 + 2 * s - x)
        den = -1 - 2 * s + x
        if den == 0.0:
            # removable singularity at x = 1; the branch equals s / (2 + s)
            return s / (2 + s)
        return (-3 - 2 * s + x + 2 * math.sqrt(2 + 2 * s - x)) / den
    raise DesignError(f"unknown variant {variant!r}")


def gains(variant: str, lambda2: float, lambdaN: float) -> GainReport:
    """Gains minimising the worst-case disagreement rate over ``[lambda2, lambdaN]``."""
    if not (lambda2 > 0 and lambdaN >= lambda2):
        raise DesignError("need 0 < lambda2 <= lambdaN")
    x = lambda2 / lambdaN
    rho = optimal_rho(variant, x)
    kp = 0.0
    if variant == "P":
        kI = 2 / (lambda2 + lambdaN)
    elif variant == "AccelP":
        kI = 4 / (math.sqrt(lambda2) + math.sqrt(lambdaN)) ** 2
    elif variant == "PI":
        kI = (1 - rho) / lambda2
        den = rho + x - 1
        # at x = 1 both rho and den vanish; the limit of kp is 1/lambdaN
        kp = rho * (1 - rho) * x / (lambdaN * den) if den != 0.0 else 1 / lambdaN
    else:
        kI = (1 - rho) ** 2 / lambda2
        kp = (2 + 2 * math.sqrt(1 - x) - x) * kI
    return GainReport(variant, float(lambda2), float(lambdaN), float(rho), float(kI), float(kp))


# ---------------------------------------------------------------------------
# prefilter design


@dataclass(frozen=True)
class RationalFilter:
    """``H(z) = sum b_k z^-k / sum a_k z^-k`` with ``a_0 = 1``."""

    num: tuple[float, ...]
    den: tuple[float, ...]

    def __post_init__(self):
        if not self.den or self.den[0] == 0:
            raise DesignError("leading denominator coefficient must be non-zero")
        a0 = self.den[0]
        object.__setattr__(self, "num", tuple(float(b) / a0 for b in self.num))
        object.__setattr__(self, "den", tuple(float(a) / a0 for a in self.den))

    @property
    def order(self) -> int:
        return max(len(self.num), len(self.den)) - 1

    def response(self, theta) -> np.ndarray:
        zi = np.exp(-1j * np.asarray(theta, dtype=float))
        b = np.polynomial.polynomial.polyval(zi, self.num)
        a = np.polynomial.polynomial.polyval(zi, self.den)
        return b / a

    def advanced(self) -> "RationalFilter":
        """``z * H(z)``; only defined when ``H`` is strictly proper."""
        if self.num[0] != 0.0:
            raise DesignError("filter is not strictly proper")
        return RationalFilter(self.num[1:] or (0.0,), self.den)

    def initial_state(self, n: int) -> np.ndarray:
        return np.zeros((self.order, n))

    def filter_step(self, state: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One sample of the transposed direct-form II recursion."""
        order = self.order
        b = np.zeros(order + 1)
        a = np.zeros(order + 1)
        b[:len(self.num)] = self.num
        a[:len(self.den)] = self.den
        y = b[0] * x + (state[0] if order else 0.0)
        new = np.empty_like(state)
        for i in range(order):
            nxt = state[i + 1] if i + 1 < order else 0.0
            new[i] = nxt + b[i + 1] * x - a[i + 1] * y
        return y, new

    def to_dict(self) -> dict:
        return {"num": list(self.num), "den": list(self.den)}


def _poly_pow(c: Sequence[float], q: int) -> np.ndarray:
    out = np.array([1.0])
    for _ in range(q):
        out = np.convolve(out, c)
    return out


def prefilter_from_pole(q: int, pole: float) -> RationalFilter:
    """``f = 1 - (g/g(inf))`` with ``g`` a cascade of ``q`` one-pole highpass sections at ``pole``."""
    if not -1 < pole < 1:
        raise DesignError("pole must lie strictly inside the unit circle")
    den = _poly_pow([1.0, -pole], q)
    num = den - _poly_pow([1.0, -1.0], q)
    num[0] = 0.0
    return RationalFilter(tuple(num), tuple(den))


def passband_deviation(f: RationalFilter, theta_c: float, samples: int = 2001) -> float:
    theta = np.linspace(0.0, theta_c, samples)
    return float(np.max(np.abs(f.response(theta) - 1.0)))


def design_prefilter(m: int, theta_c: float, q: int = 3, tol: float = 1e-2,
                     pole: float | None = None) -> RationalFilter:
    """Unity-approximating filter ``f`` for the feedforward estimator.

    Without an explicit ``pole`` the largest pole whose passband deviation
    ``max |f - 1|`` on ``[0, theta_c]`` stays within ``tol`` is chosen; larger
    poles mean less high-frequency gain in the prefilter ``[z f(z)]^m``.
    """
    if m < 1 or q < 1:
        raise DesignError("m and q must be at least 1")
    if not 0 < theta_c < math.pi:
        raise DesignError("cutoff must lie in (0, pi)")
    if pole is None:
        # deviation at theta_c decreases monotonically as the pole moves toward -1
        ratio = tol ** (1.0 / q)
        chord = 2 * math.sin(theta_c / 2)
        c, s = math.cos(theta_c), math.sin(theta_c)
        need = chord / ratio
        if need**2 - s**2 < 0:
            pole = c
        else:
            pole = c - math.sqrt(need**2 - s**2)
        if pole <= -1:
            raise DesignError(f"tolerance {tol} is not reachable with {q} sections at cutoff {theta_c}")
    return prefilter_from_pole(q, pole)


# ---------------------------------------------------------------------------
# variants


@dataclass(frozen=True)
class StaticConsensus:
    """``x <- (I - L) x``; optionally restarted from the inputs every ``reinit_every`` steps."""

    reinit_every: int | None = None
    scale: float | None = None
    states = ("x",)

    def init(self, u0):
        return {"x": u0.copy()}

    def output(self, st, L, u, k):
        if self.reinit_every and k % self.reinit_every == 0:
            return u.copy()
        return st["x"]

    def advance(self, st, L, u, k):
        x = self.output(st, L, u, k)
        return {"x": x - L @ x}


@dataclass(frozen=True)
class P:
    kI: float
    states = ("p",)

    def init(self, u0):
        return {"p": u0 * 0}

    def output(self, st, L, u, k):
        return u - st["p"]

    def advance(self, st, L, u, k):
        x = u - st["p"]
        return {"p": st["p"] + self.kI * (L @ x)}


@dataclass(frozen=True)
class AccelP:
    kI: float
    rho: float
    states = ("p", "p_prev")

    def init(self, u0):
        return {"p": u0 * 0, "p_prev": u0 * 0}

    def output(self, st, L, u, k):
        return u - st["p"]

    def advance(self, st, L, u, k):
        p, pp = st["p"], st["p_prev"]
        r2 = self.rho**2
        x = u - p
        return {"p": (1 + r2) * p - r2 * pp + self.kI * (L @ x), "p_prev": p}


@dataclass(frozen=True)
class PI:
    kI: float
    kp: float
    rho: float
    states = ("q", "p")

    def init(self, u0):
        return {"q": u0 * 0, "p": u0 * 0}

    def output(self, st, L, u, k):
        return u - st["q"]

    def advance(self, st, L, u, k):
        q, p = st["q"], st["p"]
        x = u - q
        return {"q": self.rho * q + self.kp * (L @ (x + p)), "p": p + self.kI * (L @ x)}


@dataclass(frozen=True)
class AccelPI:
    kI: float
    kp: float
    rho: float
    states = ("q", "q_prev", "p", "p_prev")

    def init(self, u0):
        z = u0 * 0
        return {"q": z, "q_prev": z, "p": z, "p_prev": z}

    def output(self, st, L, u, k):
        return u - st["q"]

    def advance(self, st, L, u, k):
        q, qp, p, pp = st["q"], st["q_prev"], st["p"], st["p_prev"]
        r = self.rho
        x = u - q
        return {
            "q": 2 * r * q - r**2 * qp + self.kp * (L @ (x + p)),
            "q_prev": q,
            "p": (1 + r**2) * p - r**2 * pp + self.kI * (L @ x),
            "p_prev": p,
        }


@dataclass(frozen=True)
class PolyCascadeZM:
    """Cascade of ``m`` consensus stages driven by the m-th backward difference.

    Tracks the network average of polynomial inputs of degree below ``m``
    exactly, delayed by ``m`` steps. Outputs are NaN until ``m`` input samples
    have been seen.
    """

    m: int
    scale: float | None = None
    states = ("stages", "hist")

    def init(self, u0):
        return {"stages": None, "hist": []}

    def output(self, st, L, u, k):
        if st["stages"] is None:
            return np.full(np.shape(u), np.nan)
        return st["stages"][-1]

    def advance(self, st, L, u, k):
        m = self.m
        hist = st["hist"] + [u]
        if st["stages"] is None:
            if len(hist) < m:
                return {"stages": None, "hist": hist}
            # stage l holds the (m-l)-th difference of the input l steps back
            stages = [divided_difference(hist[0:m - l + 1]) for l in range(1, m + 1)]
            return {"stages": stages, "hist": hist[-m:]}
        stages = st["stages"]
        drive = divided_difference(hist[-(m + 1):])
        new = [stages[0] - L @ stages[0] + drive]
        for l in range(1, m):
            new.append(stages[l] - L @ stages[l] + stages[l - 1])
        return {"stages": new, "hist": hist[-m:]}


@dataclass(frozen=True)
class PolyCascadeP:
    """``m`` nested proportional estimators; tracks degree ``m-1`` polynomials with no delay."""

    m: int
    scale: float | None = None
    states = ("stages",)

    def init(self, u0):
        return {"stages": [u0 * 0 for _ in range(self.m)]}

    def output(self, st, L, u, k):
        return u - sum(st["stages"])

    def advance(self, st, L, u, k):
        ps = st["stages"]
        new = []
        acc = u * 0
        for p in ps:
            acc = acc + p
            new.append(p + L @ (u - acc))
        return {"stages": new}


@dataclass(frozen=True)
class Feedforward:
    """Prefilter ``[z f(z)]^m`` followed by ``m`` pipelined consensus stages."""

    m: int
    prefilter: RationalFilter
    scale: float | None = None
    states = ("filters", "stages")

    def init(self, u0):
        sec = self.prefilter.advanced()
        n = np.shape(u0)[0]
        return {"filters": [sec.initial_state(n) for _ in range(self.m)],
                "stages": [np.zeros(n) for _ in range(self.m)]}

    def output(self, st, L, u, k):
        return st["stages"][-1]

    def advance(self, st, L, u, k):
        sec = self.prefilter.advanced()
        w = u
        filters = []
        for fs in st["filters"]:
            w, fs = sec.filter_step(fs, w)
            filters.append(fs)
        stages = [w - L @ w]
        for s in st["stages"][:-1]:
            stages.append(s - L @ s)
        return {"filters": filters, "stages": stages}


@dataclass(frozen=True)
class EulerDirectedPi:
    """Forward-Euler discretisation of the directed PI estimator with step ``delta``."""

    alpha: float
    beta: float
    delta: float
    states = ("v", "z")

    def init(self, u0):
        return {"v": u0 * 0, "z": u0 * 0}

    def output(self, st, L, u, k):
        return st["z"] + u

    def advance(self, st, L, u, k):
        v, z = st["v"], st["z"]
        Lx = L @ (z + u)
        d, a, b = self.delta, self.alpha, self.beta
        return {"v": v + d * a * b * Lx, "z": z - d * a * z - d * b * Lx - d * v}


DT_VARIANTS = {
    "static": StaticConsensus,
    "p": P,
    "accel_p": AccelP,
    "pi": PI,
    "accel_pi": AccelPI,
    "poly_cascade_zm": PolyCascadeZM,
    "poly_cascade_p": PolyCascadeP,
    "feedforward": Feedforward,
    "euler_directed_pi": EulerDirectedPi,
}

_SCALED = (StaticConsensus, PolyCascadeZM, PolyCascadeP, Feedforward)


@dataclass
class DtState:
    k: int
    vars: dict = field(default_factory=dict)


def initial_state(spec, u0, init: dict | None = None) -> DtState:
    st = spec.init(u0)
    for name, val in (init or {}).items():
        if name not in st:
            raise KeyError(f"unknown state {name!r} for {type(spec).__name__}")
        st[name] = np.asarray(val, dtype=np.asarray(u0).dtype) + u0 * 0
        if name + "_prev" in st:
            st[name + "_prev"] = st[name]
    return DtState(0, st)


def step(spec, state: DtState, L: np.ndarray, u_k) -> DtState:
    """Advance one communication round with input ``u_k`` and (already scaled) Laplacian ``L``."""
    return DtState(state.k + 1, spec.advance(state.vars, L, u_k, state.k))


def output(spec, state: DtState, L: np.ndarray, u_k):
    return spec.output(state.vars, L, u_k, state.k)


def best_scale(L: np.ndarray) -> float:
    """Laplacian scale minimising ``||I - s L - 11^T/n||_2``."""
    n = L.shape[0]
    J = np.ones((n, n)) / n
    lmax = np.max(np.abs(np.linalg.eigvals(L)))
    if lmax == 0:
        raise DesignError("Laplacian is zero")
    res = minimize_scalar(lambda s: np.linalg.norm(np.eye(n) - s * L - J, 2),
                          bounds=(0.0, 2.0 / lmax), method="bounded", options={"xatol": 1e-12})
    return float(res.x)


def scale_for_contraction(L: np.ndarray, target: float) -> float:
    """Smallest scale ``s`` with ``||I - s L - 11^T/n||_2 == target``."""
    n = L.shape[0]
    J = np.ones((n, n)) / n
    s_best = best_scale(L)

    def f(s):
        return np.linalg.norm(np.eye(n) - s * L - J, 2) - target

    if f(s_best) > 0:
        raise DesignError(f"contraction {target} is not reachable on this graph")
    return float(brentq(f, 0.0, s_best, xtol=1e-15))


def effective_scale(spec, L: np.ndarray) -> float:
    if not isinstance(spec, _SCALED):
        return 1.0
    return best_scale(L) if spec.scale is None else spec.scale


def simulate(
    spec,
    topology: WeightedDigraph | TopologySchedule,
    signals: SignalBundle,
    steps: int,
    period: float = 1.0,
    t0: float = 0.0,
    init: dict | None = None,
    reference: SignalBundle | None = None,
) -> Trajectory:
    """Run ``steps`` rounds; round ``k`` sees ``u(t0 + k*period)``."""
    sched = as_schedule(topology)
    if sched.n != signals.n:
        raise ValueError(f"topology has {sched.n} nodes but {signals.n} signals were given")
    t = t0 + period * np.arange(steps + 1)
    U = signals.values(t)
    avg = (reference or signals).values(t).mean(axis=1)
    X = np.empty_like(U)

    gi = sched.index_at(t[0])
    L = laplacian(sched.graphs[gi])
    L = effective_scale(spec, L) * L
    st = initial_state(spec, U[0], init)
    for k in range(steps + 1):
        g_now = sched.index_at(t[k])
        if g_now != gi:
            gi = g_now
            L = laplacian(sched.graphs[gi])
            L = effective_scale(spec, L) * L
        X[k] = output(spec, st, L, U[k])
        if k < steps:
            st = step(spec, st, L, U[k])
            if _diverged(st.vars):
                raise FloatingPointError(f"state diverged at round {k + 1}")
    meta = {"variant": type(spec).__name__, "period": period}
    if isinstance(spec, _SCALED):
        meta["scale"] = effective_scale(spec, laplacian(sched.graphs[0]))
    return Trajectory(t, X, U, avg, {}, meta)


def _diverged(vars_: dict) -> bool:
    for a in _arrays(vars_):
        if a.size and not np.max(np.abs(a)) <= DIVERGENCE_LIMIT:
            return True
    return False


def _arrays(vars_: dict):
    for v in vars_.values():
        if v is None:
            continue
        if isinstance(v, list):
            yield from (np.asarray(a) for a in v)
        else:
            yield np.asarray(v)


# ---------------------------------------------------------------------------
# closed-loop analysis


def state_matrix(spec, L: np.ndarray) -> tuple[np.ndarray, int]:
    """Homogeneous closed-loop matrix and its number of ``n x n`` state blocks."""
    n = L.shape[0]
    I = np.eye(n)
    Z = np.zeros((n, n))
    if isinstance(spec, StaticConsensus):
        return I - L, 1
    if isinstance(spec, P):
        return I - spec.kI * L, 1
    if isinstance(spec, AccelP):
        r2 = spec.rho**2
        return np.block([[(1 + r2) * I - spec.kI * L, -r2 * I], [I, Z]]), 2
    if isinstance(spec, PI):
        return np.block([[spec.rho * I - spec.kp * L, spec.kp * L], [-spec.kI * L, I]]), 2
    if isinstance(spec, AccelPI):
        r, kp, kI = spec.rho, spec.kp, spec.kI
        return np.block([
            [2 * r * I - kp * L, -r**2 * I, kp * L, Z],
            [I, Z, Z, Z],
            [-kI * L, Z, (1 + r**2) * I, -r**2 * I],
            [Z, Z, I, Z],
        ]), 4
    if isinstance(spec, EulerDirectedPi):
        d, a, b = spec.delta, spec.alpha, spec.beta
        return np.block([[I, d * a * b * L], [-d * I, (1 - d * a) * I - d * b * L]]), 2
    if isinstance(spec, PolyCascadeP):
        m = spec.m
        M = np.zeros((m * n, m * n))
        for i in range(m):
            for j in range(i + 1):
                M[i * n:(i + 1) * n, j * n:(j + 1) * n] = (I if i == j else Z) - L
        return M, m
    if isinstance(spec, PolyCascadeZM):
        m = spec.m
        M = np.zeros((m * n, m * n))
        for i in range(m):
            M[i * n:(i + 1) * n, i * n:(i + 1) * n] = I - L
            if i:
                M[i * n:(i + 1) * n, (i - 1) * n:i * n] = I
        return M, m
    raise ValueError(f"no closed-loop matrix for {type(spec).__name__}")


def cluster_centroids(eigs: np.ndarray, tol: float) -> np.ndarray:
    """Merge eigenvalues closer than ``tol`` (single linkage) and return cluster means.

    A defective eigenvalue of multiplicity k splits into a cluster of size
    O(eps^(1/k)) under rounding, while the cluster mean stays O(eps) accurate.
    """
    eigs = np.asarray(eigs)
    unseen = list(range(len(eigs)))
    out = []
    while unseen:
        group = [unseen.pop(0)]
        i = 0
        while i < len(group):
            near = [j for j in unseen if abs(eigs[j] - eigs[group[i]]) < tol]
            for j in near:
                unseen.remove(j)
            group.extend(near)
            i += 1
        out.append(eigs[group].mean())
    return np.array(out)


def closed_loop_disagreement_radius(spec, L: np.ndarray, tol: float = CLUSTER_TOL) -> float:
    """Spectral radius of the closed loop restricted to the disagreement subspace.

    Valid when ``1`` spans the kernels of ``L`` and ``L^T`` (connected
    undirected or weight-balanced graphs).
    """
    M, blocks = state_matrix(spec, L)
    R = disagreement_basis(L.shape[0])
    T = np.kron(np.eye(blocks), R)
    eigs = np.linalg.eigvals(T.T @ M @ T)
    return float(np.max(np.abs(cluster_centroids(eigs, tol * max(1.0, np.max(np.abs(eigs)))))))


def directed_pi_generator(alpha: float, beta: float, L: np.ndarray) -> np.ndarray:
    """Continuous-time generator of the directed PI estimator on ``(v, z)`` in disagreement coordinates."""
    n = L.shape[0]
    R = disagreement_basis(n)
    Lr = R.T @ L @ R
    I = np.eye(n - 1)
    return np.block([[np.zeros((n - 1, n - 1)), alpha * beta * Lr], [-I, -alpha * I - beta * Lr]])


def admissible_stepsize(eigs) -> float:
    """Largest forward-Euler step keeping every ``1 + d*mu`` inside the unit disc."""
    mu = np.asarray(eigs, dtype=complex)
    if np.any(mu.real >= 0):
        raise ValueError("all eigenvalues need negative real part")
    return float(np.min(-2 * mu.real / np.abs(mu) ** 2))
