"""Local reference signals and their analytic derivatives.

Every signal kind evaluates on scalars or numpy arrays of times. ``deriv(t, k)``
returns the k-th time derivative; piecewise-constant kinds report zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np


class SignalError(ValueError):
    """Invalid signal description."""


def _zeros_like(t):
    return np.zeros_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t):
        return self.value + _zeros_like(t)

    def deriv(self, t, order: int = 1):
        return _zeros_like(t)


@dataclass(frozen=True)
class Polynomial:
    """``sum_k coeffs[k] * t**k``."""

    coeffs: tuple[float, ...]

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), self.coeffs)

    def deriv(self, t, order: int = 1):
        c = np.polynomial.polynomial.polyder(self.coeffs, order) if len(self.coeffs) > order else [0.0]
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), c)


@dataclass(frozen=True)
class Sinusoid:
    amp: float
    omega: float
    phase: float = 0.0
    offset: float = 0.0

    def __call__(self, t):
        return self.amp * np.sin(self.omega * np.asarray(t, dtype=float) + self.phase) + self.offset

    def deriv(self, t, order: int = 1):
        # d^k/dt^k sin(wt + p) = w^k sin(wt + p + k*pi/2)
        arg = self.omega * np.asarray(t, dtype=float) + self.phase + order * np.pi / 2
        return self.amp * self.omega**order * np.sin(arg)


@dataclass(frozen=True)
class Arctan:
    """``amp * atan(rate * t) + offset``."""

    amp: float
    rate: float
    offset: float = 0.0

    def __call__(self, t):
        return self.amp * np.arctan(self.rate * np.asarray(t, dtype=float)) + self.offset

    def deriv(self, t, order: int = 1):
        s = self.rate * np.asarray(t, dtype=float)
        if order == 1:
            return self.amp * self.rate / (1 + s**2)
        if order == 2:
            return -2 * self.amp * self.rate**2 * s / (1 + s**2) ** 2
        raise SignalError("arctan derivatives are available up to order 2")


@dataclass(frozen=True)
class QuadraticDrift:
    """``(t / t_scale)**2``."""

    t_scale: float

    def __call__(self, t):
        return (np.asarray(t, dtype=float) / self.t_scale) ** 2

    def deriv(self, t, order: int = 1):
        if order == 1:
            return 2 * np.asarray(t, dtype=float) / self.t_scale**2
        if order == 2:
            return 2 / self.t_scale**2 + _zeros_like(t)
        return _zeros_like(t)


@dataclass(frozen=True)
class Sum:
    terms: tuple

    def __call__(self, t):
        out = _zeros_like(t)
        for s in self.terms:
            out = out + s(t)
        return out

    def deriv(self, t, order: int = 1):
        out = _zeros_like(t)
        for s in self.terms:
            out = out + s.deriv(t, order)
        return out


@dataclass(frozen=True)
class Windowed:
    """``inner`` on ``[start, stop)``, zero elsewhere."""

    inner: object
    start: float
    stop: float

    def _mask(self, t):
        t = np.asarray(t, dtype=float)
        return (t >= self.start) & (t < self.stop)

    def __call__(self, t):
        return np.where(self._mask(t), self.inner(t), 0.0)

    def deriv(self, t, order: int = 1):
        return np.where(self._mask(t), self.inner.deriv(t, order), 0.0)


@dataclass(frozen=True)
class ZeroOrderHold:
    """Samples ``inner`` at multiples of ``period`` and holds the value."""

    inner: object
    period: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.inner(np.floor(t / self.period + 1e-9) * self.period)

    def deriv(self, t, order: int = 1):
        return _zeros_like(t)


@lru_cache(maxsize=65536)
def _normal_pair(key: int, index: int) -> tuple[float, float]:
    # Philox keyed by the stream, counter set to the sample index, then Box-Muller.
    bits = np.random.Philox(key=key, counter=index)
    u1, u2 = np.random.Generator(bits).random(2)
    r = math.sqrt(-2.0 * math.log1p(-u1))
    return r * math.cos(2 * math.pi * u2), r * math.sin(2 * math.pi * u2)


def stream_key(seed: int, *labels: str | int) -> int:
    """Derive a 64-bit substream key from the run seed and a label path."""
    words = [abs(hash_label(x)) for x in labels]
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(words))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def hash_label(label: str | int) -> int:
    if isinstance(label, int):
        return label
    # FNV-1a, stable across interpreter runs unlike hash()
    h = 0xCBF29CE484222325
    for ch in label.encode():
        h = ((h ^ ch) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class SampledStochastic:
    """``a * (2 + sin(w_m * t_m + phi_m)) + b`` held over each sample period.

    ``w_m`` and ``phi_m`` are zero-mean Gaussians drawn once per sample index
    ``m`` from the stream identified by ``seed``. Agents sharing a seed see the
    same draws, which is how a common stochastic process is modelled.
    """

    a: float
    b: float
    period: float
    seed: int
    omega_var: float = 0.25
    phase_var: float = (np.pi / 2) ** 2

    def draws(self, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        key = stream_key(self.seed, "sampled_stochastic")
        m = np.asarray(m, dtype=int)
        flat = np.unique(m)
        table = {int(k): _normal_pair(key, int(k)) for k in flat}
        z = np.array([table[int(k)] for k in m.ravel()]).reshape(m.shape + (2,))
        return math.sqrt(self.omega_var) * z[..., 0], math.sqrt(self.phase_var) * z[..., 1]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        m = np.floor(t / self.period + 1e-9).astype(int)
        w, phi = self.draws(m)
        return self.a * (2 + np.sin(w * m * self.period + phi)) + self.b

    def deriv(self, t, order: int = 1):
        return _zeros_like(t)


@dataclass(frozen=True)
class SignalBundle:
    signals: tuple

    def __post_init__(self):
        object.__setattr__(self, "signals", tuple(self.signals))

    @property
    def n(self) -> int:
        return len(self.signals)

    def values(self, t) -> np.ndarray:
        """Shape ``(n,)`` for scalar ``t`` or ``(len(t), n)`` for arrays."""
        return np.stack([np.asarray(s(t), dtype=float) for s in self.signals], axis=-1)

    def derivs(self, t, order: int = 1) -> np.ndarray:
        return np.stack([np.asarray(s.deriv(t, order), dtype=float) for s in self.signals], axis=-1)

    def replace(self, i: int, signal) -> "SignalBundle":
        sigs = list(self.signals)
        sigs[i] = signal
        return SignalBundle(tuple(sigs))


def network_average(bundle: SignalBundle, t, active: Sequence[int] | None = None):
    u = bundle.values(t)
    if active is not None:
        u = u[..., list(active)]
    return u.mean(axis=-1)


def uncommon_rate_bound(bundle: SignalBundle, horizon: float, grid: float = 1e-3,
                        start: float = 0.0) -> float:
    """Grid estimate of ``sup_t || (I - 11^T/n) du/dt ||_2`` on ``[start, horizon]``."""
    if horizon < start:
        raise SignalError("horizon precedes start")
    t = np.arange(start, horizon + 0.5 * grid, grid)
    ud = bundle.derivs(t)
    ud = ud - ud.mean(axis=1, keepdims=True)
    return float(np.max(np.linalg.norm(ud, axis=1)))


def uncommon_value_bound(bundle: SignalBundle, horizon: float, grid: float = 1e-3,
                         start: float = 0.0) -> float:
    """Grid estimate of ``sup_t || (I - 11^T/n) u(t) ||_2`` on ``[start, horizon]``."""
    if horizon < start:
        raise SignalError("horizon precedes start")
    t = np.arange(start, horizon + 0.5 * grid, grid)
    u = bundle.values(t)
    u = u - u.mean(axis=1, keepdims=True)
    return float(np.max(np.linalg.norm(u, axis=1)))


def divided_difference(history: Sequence[float] | np.ndarray) -> np.ndarray:
    """Backward difference of order ``len(history) - 1``; history runs oldest to newest."""
    h = np.asarray(history)
    m = h.shape[0] - 1
    if m < 0:
        raise SignalError("empty history")
    coeffs = [(-1) ** j * math.comb(m, j) for j in range(m + 1)]
    return sum(c * h[m - j] for j, c in enumerate(coeffs))


_KINDS = {
    "constant": Constant,
    "polynomial": Polynomial,
    "sinusoid": Sinusoid,
    "arctan": Arctan,
    "quadratic_drift": QuadraticDrift,
    "sum": Sum,
    "windowed": Windowed,
    "zoh": ZeroOrderHold,
    "sampled_stochastic": SampledStochastic,
}
_NAMES = {cls: name for name, cls in _KINDS.items()}

_FIELDS = {
    "constant": ("value",),
    "polynomial": ("coeffs",),
    "sinusoid": ("amp", "omega", "phase", "offset"),
    "arctan": ("amp", "rate", "offset"),
    "quadratic_drift": ("t_scale",),
    "sum": ("terms",),
    "windowed": ("inner", "start", "stop"),
    "zoh": ("inner", "period"),
    "sampled_stochastic": ("a", "b", "period", "seed", "omega_var", "phase_var"),
}


def signal_to_dict(s) -> dict:
    kind = _NAMES[type(s)]
    out: dict = {"kind": kind}
    for name in _FIELDS[kind]:
        v = getattr(s, name)
        if name == "terms":
            v = [signal_to_dict(x) for x in v]
        elif name == "inner":
            v = signal_to_dict(v)
        elif name == "coeffs":
            v = list(v)
        out[name] = v
    return out


def signal_from_dict(d: dict, path: str = "signal"):
    if not isinstance(d, dict) or "kind" not in d:
        raise SignalError(f"{path}: expected an object with a 'kind' field")
    kind = d["kind"]
    if kind not in _KINDS:
        raise SignalError(f"{path}.kind: unknown signal kind {kind!r}")
    allowed = set(_FIELDS[kind]) | {"kind"}
    extra = set(d) - allowed
    if extra:
        raise SignalError(f"{path}: unknown field(s) {sorted(extra)} for kind {kind!r}")
    kwargs = {}
    for name in _FIELDS[kind]:
        if name not in d:
            continue
        v = d[name]
        if name == "terms":
            v = tuple(signal_from_dict(x, f"{path}.terms[{i}]") for i, x in enumerate(v))
        elif name == "inner":
            v = signal_from_dict(v, f"{path}.inner")
        elif name == "coeffs":
            v = tuple(float(x) for x in v)
        elif name == "seed":
            v = int(v)
        else:
            v = float(v)
        kwargs[name] = v
    try:
        return _KINDS[kind](**kwargs)
    except TypeError as exc:
        raise SignalError(f"{path}: {exc}") from exc


def bundle_to_list(bundle: SignalBundle) -> list[dict]:
    return [signal_to_dict(s) for s in bundle.signals]


def bundle_from_list(items: list[dict], path: str = "signals") -> SignalBundle:
    return SignalBundle(tuple(signal_from_dict(d, f"{path}[{i}]") for i, d in enumerate(items)))


def formation_targets(n: int = 4, drift: bool = True) -> SignalBundle:
    """Moving formation targets ``x_T^l`` for agents ``l = 1..n``."""
    sigs = []
    for l in range(1, n + 1):
        wave = Sinusoid(0.5, 0.35 + 0.05 * l, (5 - l) * np.pi / 5, 4.0 - 2.0 * (l - 1))
        sigs.append(Sum((QuadraticDrift(20.0), wave)) if drift else wave)
    return SignalBundle(tuple(sigs))


def event_triggered_inputs() -> SignalBundle:
    """The five-agent reference set used for the event-triggered comparison."""
    return SignalBundle((
        Sinusoid(0.5, 0.8),
        Sum((Sinusoid(0.5, 0.7), Sinusoid(0.5, 0.6, np.pi / 2))),
        Sinusoid(1.0, 0.2, 0.0, 1.0),
        Arctan(1.0, 0.5),
        Sinusoid(0.1, 2.0, np.pi / 2),
    ))


def sampled_stochastic_bundle(a: Sequence[float], b: Sequence[float], period: float,
                              seed: int) -> SignalBundle:
    return SignalBundle(tuple(SampledStochastic(float(ai), float(bi), period, seed) for ai, bi in zip(a, b)))


@dataclass
class SampledInputs:
    """Inputs tabulated on a uniform grid plus half steps, for fixed-step integrators."""

    t: np.ndarray
    u: np.ndarray
    ud: np.ndarray
    u_half: np.ndarray = field(repr=False)
    ud_half: np.ndarray = field(repr=False)

    @classmethod
    def tabulate(cls, bundle: SignalBundle, t: np.ndarray, need_half: bool = True) -> "SampledInputs":
        dt = t[1] - t[0] if len(t) > 1 else 0.0
        th = t[:-1] + 0.5 * dt
        u, ud = bundle.values(t), bundle.derivs(t)
        if need_half:
            uh, udh = bundle.values(th), bundle.derivs(th)
        else:
            uh = udh = np.empty((0, bundle.n))
        return cls(t, u, ud, uh, udh)
