"""Continuous-time dynamic average consensus.

Each variant stores its internal states as rows of an array shaped
``(len(states), n)`` and exposes ``rhs`` and ``output``. Smooth variants are
integrated with classical RK4 on a fixed step, signum-driven ones with forward
Euler. Inputs are tabulated on the grid (and at half steps for RK4) before the
loop so the per-step cost is a handful of small matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .analysis import iss_sym_bound
from .graph import (
    TopologySchedule,
    WeightedDigraph,
    algebraic_connectivity,
    as_schedule,
    disagreement_basis,
    is_weight_balanced,
    laplacian,
)
from .signals import SampledInputs, SignalBundle, uncommon_rate_bound, uncommon_value_bound
from .trajectory import Trajectory


DIVERGENCE_LIMIT = 1e100


class SimulationError(RuntimeError):
    """Raised when a run cannot proceed (bad step size, divergence, ...)."""


# ---------------------------------------------------------------------------
# variants


@dataclass(frozen=True)
class BasicDac:
    """``p' = L x``, ``x = u - p``."""

    states = ("p",)
    smooth = True
    needs_derivative = False

    def rhs(self, s, L, u, ud):
        return (L @ (u - s[0]))[None]

    def output(self, s, L, u):
        return u - s[0]


@dataclass(frozen=True)
class PiDac:
    """Proportional-integral estimator with input leakage ``alpha``.

    Integral Laplacian is ``beta_scale * L``. Stored as ``(q, p)`` with
    ``p = x - u`` so no input derivative is needed.
    """

    alpha: float
    beta_scale: float = 1.0
    states = ("q", "p")
    smooth = True
    needs_derivative = False

    def rhs(self, s, L, u, ud):
        q, p = s
        x = u + p
        LI = self.beta_scale * L
        return np.stack((-LI @ x, -self.alpha * p - L @ x + LI.T @ q))

    def output(self, s, L, u):
        return u + s[1]


@dataclass(frozen=True)
class FoiDac:
    """First-order-input variant with time scale ``epsilon`` and leakage ``beta``."""

    epsilon: float
    beta: float
    beta_scale: float = 1.0
    states = ("q", "z", "x")
    smooth = True
    needs_derivative = True

    def rhs(self, s, L, u, ud):
        q, z, x = s
        LI = self.beta_scale * L
        dq = -(LI @ z) / self.epsilon
        dz = (-(z + self.beta * u + ud) - L @ z + LI.T @ q) / self.epsilon
        return np.stack((dq, dz, -self.beta * x - z))

    def output(self, s, L, u):
        return s[2].copy()


@dataclass(frozen=True)
class DirectedPiDac:
    """``q' = alpha*beta*L x``, ``x' = -alpha(x-u) - beta L x - q + u'``.

    Stored as ``(q, p)`` with ``p = u - x``. Requires ``sum(q(0)) = 0``.
    """

    alpha: float
    beta: float
    states = ("q", "p")
    smooth = True
    needs_derivative = False

    def rhs(self, s, L, u, ud):
        q, p = s
        Lx = L @ (u - p)
        return np.stack((self.alpha * self.beta * Lx, -self.alpha * p + self.beta * Lx + q))

    def output(self, s, L, u):
        return u - s[1]


def _signed_sum(L, v):
    # sum_j a_ij sgn(v_i - v_j), with a_ij read off the off-diagonal of -L
    a = -L.copy()
    np.fill_diagonal(a, 0.0)
    return (a * np.sign(v[:, None] - v[None, :])).sum(axis=1)


@dataclass(frozen=True)
class SlidingBasic:
    """``p' = kp sum_j a_ij sgn(x_i - x_j)``, ``x = u - p``; undirected graphs."""

    kp: float | None = None
    states = ("p",)
    smooth = False
    needs_derivative = False

    def rhs(self, s, L, u, ud):
        return (self.kp * _signed_sum(L, u - s[0]))[None]

    def output(self, s, L, u):
        return u - s[0]


@dataclass(frozen=True)
class SlidingTwoHop:
    """``p' = kp sgn((L x)_i)``, ``x = u - L p``."""

    kp: float | None = None
    states = ("p",)
    smooth = False
    needs_derivative = False

    def rhs(self, s, L, u, ud):
        x = u - L @ s[0]
        return (self.kp * np.sign(L @ x))[None]

    def output(self, s, L, u):
        return u - L @ s[0]


@dataclass(frozen=True)
class SlidingOneHop:
    """``q' = -alpha q + x``, ``p' = kp sgn((L q)_i)``, ``x = u - L p``."""

    kp: float | None = None
    alpha: float = 1.0
    states = ("q", "p")
    smooth = False
    needs_derivative = False

    def rhs(self, s, L, u, ud):
        q, p = s
        x = u - L @ p
        return np.stack((-self.alpha * q + x, self.kp * np.sign(L @ q)))

    def output(self, s, L, u):
        return u - L @ s[1]


@dataclass(frozen=True)
class SlidingRobust:
    """``p' = -p + kp sum_j a_ij sgn(x_i - x_j)``, ``x = u - p``."""

    kp: float | None = None
    states = ("p",)
    smooth = False
    needs_derivative = False

    def rhs(self, s, L, u, ud):
        p = s[0]
        return (-p + self.kp * _signed_sum(L, u - p))[None]

    def output(self, s, L, u):
        return u - s[0]


CT_VARIANTS = {
    "basic_dac": BasicDac,
    "pi_dac": PiDac,
    "foi_dac": FoiDac,
    "directed_pi_dac": DirectedPiDac,
    "sliding_basic": SlidingBasic,
    "sliding_two_hop": SlidingTwoHop,
    "sliding_one_hop": SlidingOneHop,
    "sliding_robust": SlidingRobust,
}

_SLIDING = (SlidingBasic, SlidingTwoHop, SlidingOneHop, SlidingRobust)


def default_sliding_gain(bundle: SignalBundle, t_end: float, t0: float = 0.0,
                         with_values: bool = False) -> float:
    """``2 * gamma * sqrt(n)`` with ``gamma`` the uncommon input-rate bound.

    The leaky variant also has to dominate the uncommon input values, so with
    ``with_values`` their bound is added to ``gamma``.
    """
    gamma = uncommon_rate_bound(bundle, t_end, 1e-3, t0)
    if with_values:
        gamma += uncommon_value_bound(bundle, t_end, 1e-3, t0)
    return 2.0 * gamma * np.sqrt(bundle.n)


# ---------------------------------------------------------------------------
# membership events


@dataclass(frozen=True)
class Event:
    """Membership or topology change applied at ``time``.

    ``kind`` is ``"depart"``, ``"arrive"`` or ``"switch"``. Arrivals start with
    zero internal states unless ``init`` supplies values per state name.
    """

    time: float
    kind: str
    agent: int | None = None
    graph: WeightedDigraph | None = None
    init: dict = field(default_factory=dict)


def _step_index(t: float, t0: float, dt: float, what: str) -> int:
    k = (t - t0) / dt
    kr = int(round(k))
    if abs(k - kr) > 1e-6:
        raise SimulationError(f"{what} at t={t} is not aligned with the step grid dt={dt}")
    return kr


# ---------------------------------------------------------------------------
# integration


def integrate(
    spec,
    topology: WeightedDigraph | TopologySchedule,
    signals: SignalBundle,
    t_end: float,
    dt: float,
    init: dict[str, np.ndarray] | None = None,
    t0: float = 0.0,
    events: Sequence[Event] = (),
    reference: SignalBundle | None = None,
    active: Sequence[int] | None = None,
    record_states: bool = True,
) -> Trajectory:
    """Fixed-step simulation of ``spec`` from ``t0`` to ``t_end``.

    ``signals`` holds one input per agent slot; ``active`` lists the slots
    present at ``t0`` (all by default). ``reference`` provides the signals the
    tracking error is measured against when they differ from the measured
    inputs, e.g. under sensor perturbations.
    """
    if not dt > 0:
        raise SimulationError("dt must be positive")
    sched = as_schedule(topology)
    n = signals.n
    if sched.n != n:
        raise SimulationError(f"topology has {sched.n} nodes but {n} signals were given")
    reference = reference or signals
    steps = _step_index(t_end, t0, dt, "horizon")
    if steps <= 0:
        raise SimulationError("empty time span")

    if isinstance(spec, _SLIDING) and spec.kp is None:
        spec = replace(spec, kp=default_sliding_gain(signals, t_end, t0, isinstance(spec, SlidingRobust)))

    t = t0 + dt * np.arange(steps + 1)
    tab = SampledInputs.tabulate(signals, t, need_half=spec.smooth)
    u_ref = reference.values(t)

    members = np.zeros(n, dtype=bool)
    members[list(range(n)) if active is None else list(active)] = True

    ns = len(spec.states)
    s = np.zeros((ns, n))
    for name, val in (init or {}).items():
        if name not in spec.states:
            raise SimulationError(f"unknown state {name!r} for {type(spec).__name__}")
        s[spec.states.index(name)] = np.broadcast_to(np.asarray(val, float), (n,))

    pending: dict[int, list] = {}
    for ev in events:
        pending.setdefault(_step_index(ev.time, t0, dt, f"{ev.kind} event"), []).append(ev)
    switch_steps = {_step_index(st, t0, dt, "topology switch"): i
                    for i, st in enumerate(sched.starts) if st > t0}
    base = sched.graph_at(t0)

    x_rec = np.full((steps + 1, n), np.nan)
    st_rec = {name: np.full((steps + 1, n), np.nan) for name in spec.states} if record_states else {}
    avg = np.empty(steps + 1)

    def sub_laplacian():
        idx = np.nonzero(members)[0]
        return idx, laplacian(base.subgraph(idx))

    idx, L = sub_laplacian()
    rk4 = spec.smooth
    for k in range(steps + 1):
        changed = False
        if k in switch_steps:
            base = sched.graphs[switch_steps[k]]
            changed = True
        for ev in pending.get(k, ()):
            if ev.kind == "depart":
                members[ev.agent] = False
                s[:, ev.agent] = 0.0
            elif ev.kind == "arrive":
                members[ev.agent] = True
                s[:, ev.agent] = 0.0
                for name, val in ev.init.items():
                    s[spec.states.index(name), ev.agent] = val
            elif ev.kind == "switch":
                base = ev.graph
            else:
                raise SimulationError(f"unknown event kind {ev.kind!r}")
            changed = True
        if changed:
            idx, L = sub_laplacian()

        sa = s[:, idx]
        x_rec[k, idx] = spec.output(sa, L, tab.u[k, idx])
        avg[k] = u_ref[k, idx].mean()
        for j, name in enumerate(st_rec):
            st_rec[name][k, idx] = sa[j]
        if k == steps:
            break

        u0, ud0 = tab.u[k, idx], tab.ud[k, idx]
        if rk4:
            uh, udh = tab.u_half[k, idx], tab.ud_half[k, idx]
            u1, ud1 = tab.u[k + 1, idx], tab.ud[k + 1, idx]
            k1 = spec.rhs(sa, L, u0, ud0)
            k2 = spec.rhs(sa + 0.5 * dt * k1, L, uh, udh)
            k3 = spec.rhs(sa + 0.5 * dt * k2, L, uh, udh)
            k4 = spec.rhs(sa + dt * k3, L, u1, ud1)
            s[:, idx] = sa + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            s[:, idx] = sa + dt * spec.rhs(sa, L, u0, ud0)
        if not np.all(np.isfinite(s[:, idx])) or np.max(np.abs(s[:, idx]), initial=0.0) > DIVERGENCE_LIMIT:
            raise SimulationError(f"state diverged at t={t[k + 1]:.6g}")

    u_rec = np.where(np.isnan(x_rec), np.nan, tab.u)
    meta = {"variant": type(spec).__name__, "dt": dt, "integrator": "rk4" if rk4 else "euler"}
    if isinstance(spec, _SLIDING):
        meta["kp"] = spec.kp
    return Trajectory(t, x_rec, u_rec, avg, st_rec, meta)


# ---------------------------------------------------------------------------
# invariants and bounds


def conservation_residual(traj: Trajectory, quantity: str = "x-u") -> np.ndarray:
    """Per-step conserved quantity over the agents present at each time.

    ``"x-u"`` gives ``sum(x) - sum(u)``; any state name (``"p"``, ``"q"``)
    gives the sum of that state.
    """
    if quantity == "x-u":
        return np.nansum(traj.x - traj.u, axis=1)
    if quantity not in traj.states:
        raise KeyError(f"trajectory has no state {quantity!r}")
    return np.nansum(traj.states[quantity], axis=1)


def pidac_error_system(g: WeightedDigraph, alpha: float, beta_scale: float = 1.0):
    """State and input matrices of the PiDac error dynamics in disagreement coordinates."""
    n = g.n
    R = disagreement_basis(n)
    L = laplacian(g)
    LI = beta_scale * L
    m = n - 1
    rir = R.T @ LI @ R
    rirt = R.T @ LI.T @ R
    rpr = R.T @ L @ R
    A = np.zeros((2 * m + 1, 2 * m + 1))
    A[:m, m + 1:] = -rir
    A[m, m] = -alpha
    A[m + 1:, :m] = rirt
    A[m + 1:, m + 1:] = -alpha * np.eye(m) - rpr
    B = np.vstack([-alpha * np.linalg.inv(rirt), np.zeros((1, m)), np.eye(m)])
    return A, B


def iss_constants(A: np.ndarray, horizon_factor: float = 30.0, samples: int = 600) -> tuple[float, float, str]:
    """``(kappa, lam)`` with ``||exp(A t)|| <= kappa * exp(-lam t)``.

    Uses the symmetric-part bound (kappa = 1) when ``Sym(A)`` is Hurwitz,
    otherwise fits the pair from matrix-exponential norms on a time grid,
    choosing the decay rate that minimises ``kappa / lam``.
    """
    try:
        kappa, lam = iss_sym_bound(A)
        return kappa, lam, "symmetric"
    except ValueError:
        pass
    abscissa = np.linalg.eigvals(A).real.max()
    if abscissa >= 0:
        raise ValueError("error system is not Hurwitz")
    a = -abscissa
    ts = np.linspace(0.0, horizon_factor / a, samples)
    step = expm(A * ts[1])
    norms = np.empty(samples)
    E = np.eye(A.shape[0])
    for i in range(samples):
        norms[i] = np.linalg.norm(E, 2)
        E = E @ step
    best = None
    for frac in np.linspace(0.05, 0.95, 91):
        lam = frac * a
        kappa = float(np.max(norms * np.exp(lam * ts)))
        if best is None or kappa / lam < best[0] / best[1]:
            best = (kappa, lam)
    return best[0], best[1], "empirical"


def ultimate_bound(spec, g: WeightedDigraph, gamma: float) -> float:
    """Asymptotic tracking-error bound for a given uncommon input-rate bound ``gamma``."""
    if isinstance(spec, BasicDac):
        if not g.is_undirected() and not is_weight_balanced(g):
            raise ValueError("bound requires a weight-balanced graph")
        lam2 = algebraic_connectivity(g)
        if lam2 <= 0:
            raise ValueError("graph is not connected")
        return gamma / lam2
    if isinstance(spec, DirectedPiDac):
        if not is_weight_balanced(g):
            raise ValueError("bound requires a weight-balanced graph")
        lam2 = algebraic_connectivity(g)
        if lam2 <= 0:
            raise ValueError("graph is not connected")
        return gamma / (spec.beta * lam2)
    if isinstance(spec, PiDac):
        if algebraic_connectivity(g) <= 0:
            raise ValueError("graph is not connected")
        A, B = pidac_error_system(g, spec.alpha, spec.beta_scale)
        kappa, lam, _ = iss_constants(A)
        return kappa * np.linalg.norm(B, 2) * gamma / lam
    raise ValueError(f"no analytic bound for {type(spec).__name__}")
