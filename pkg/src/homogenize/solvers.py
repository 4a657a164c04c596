"""Fast-slow systems driven by deterministic observables and their limit SDEs.

The slow variable of the discrete fast-slow system evolves as::

    X_{j+1} = X_j + n^{-1} a(X_j) + n^{-1/2} b(X_j) v(f^j y)

and its homogenized limit is the Ito SDE

    dX = (a(X) + c(X)) dt + b(X) dW,    cov W(1) = sigma

with correction drift ``c^i = K^{bg} d_a b^{ig} b^{ab}`` (summed), ``K = E``.
Solved in Stratonovich form, the same law needs ``K = E - sigma / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .drivers import as_seed_sequence, open_stream, trajectory_seeds
from .errors import (
    BlowupError,
    DimensionError,
    HorizonMismatchError,
    NonPSDError,
    OffGridError,
    ParameterError,
    WrongKindError,
)

BLOWUP = 1e8
BLOCK = 1024
CHUNK = 512
SCHEMES = ("ito-euler", "strat-heun")


@dataclass(frozen=True)
class SdeSystem:
    """Slow dynamics ``a: (M, d) -> (M, d)`` and ``b: (M, d) -> (M, d, e)``.

    ``db`` returns ``db[m, i, g, a] = d b^{ig} / d x_a``; when absent it is
    approximated by central differences.
    """

    d: int
    e: int
    a: Callable[[np.ndarray], np.ndarray]
    b: Callable[[np.ndarray], np.ndarray]
    db: Callable[[np.ndarray], np.ndarray] | None = None
    xi: np.ndarray | None = None
    name: str = "custom"
    params: Mapping = field(default_factory=dict)

    @property
    def x0(self):
        return np.zeros(self.d) if self.xi is None else np.asarray(self.xi, dtype=float)

    def jacobian_b(self, x):
        if self.db is not None:
            return self.db(x)
        out = np.empty((x.shape[0], self.d, self.e, self.d))
        for k in range(self.d):
            h = np.finfo(float).eps ** (1 / 3) * (1.0 + np.abs(x[:, k]))
            xp, xm = x.copy(), x.copy()
            xp[:, k] += h
            xm[:, k] -= h
            out[..., k] = (self.b(xp) - self.b(xm)) / (2.0 * h)[:, None, None]
        return out

    def describe(self):
        return {"name": self.name, "d": self.d, "e": self.e, **dict(self.params),
                "xi": self.x0.tolist()}


def mcshane_system(xi=None):
    """``dx1 = dW1``, ``dx2 = x1 dW2``; the second coordinate is a Levy-area-type integral."""

    def a(x):
        return np.zeros_like(x)

    def b(x):
        out = np.zeros((x.shape[0], 2, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = x[:, 0]
        return out

    def db(x):
        out = np.zeros((x.shape[0], 2, 2, 2))
        out[:, 1, 1, 0] = 1.0
        return out

    return SdeSystem(2, 2, a, b, db, None if xi is None else np.asarray(xi, float), "mcshane")


def linear_system(A, B, xi=None):
    """``a(x) = A x`` and constant ``b = B``; the correction vanishes."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    d, e = B.shape
    if A.shape != (d, d):
        raise DimensionError(f"A must be {d}x{d}, got {A.shape}")

    def a(x):
        return x @ A.T

    def b(x):
        return np.broadcast_to(B, (x.shape[0], d, e))

    def db(x):
        return np.zeros((x.shape[0], d, e, d))

    return SdeSystem(d, e, a, b, db, None if xi is None else np.asarray(xi, float), "linear",
                     {"A": A.tolist(), "B": B.tolist()})


def make_sde(spec):
    """Build a preset slow system from a mapping with key ``preset``."""
    kind = spec.get("preset")
    xi = spec.get("xi")
    if kind == "mcshane":
        return mcshane_system(xi)
    if kind == "linear":
        return linear_system(spec["A"], spec["B"], xi)
    raise ParameterError("preset", f"unknown slow system {kind!r}")


def correction_drift(sde, K, x):
    """``c^i(x) = sum K^{bg} d_a b^{ig}(x) b^{ab}(x)`` for a batch ``x`` of shape (M, d)."""
    K = np.asarray(K, dtype=float)
    if K.shape != (sde.e, sde.e):
        raise DimensionError(f"K must be {sde.e}x{sde.e}, got {K.shape}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.einsum("bg,migk,mkb->mi", K, sde.jacobian_b(x), sde.b(x))


def noise_factor(sigma):
    """``L`` with ``L L^T = sigma`` after clipping round-off negative eigenvalues."""
    sigma = np.asarray(sigma, dtype=float)
    s = 0.5 * (sigma + sigma.T)
    lam, Q = np.linalg.eigh(s)
    scale = 1.0 + np.linalg.norm(s)
    if lam.size and lam.min() < -1e-10 * scale:
        raise NonPSDError(f"sigma has eigenvalue {lam.min():.3g}; it is not positive semidefinite")
    return Q * np.sqrt(np.clip(lam, 0.0, None))


@dataclass
class TrajectoryEnsemble:
    """Slow-variable paths ``X[k, r, :]`` at ``times[k]`` for ``R`` trajectories."""

    times: np.ndarray
    X: np.ndarray
    scheme: str
    meta: Mapping = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.X.shape[1]

    @property
    def T(self):
        return float(self.times[-1])

    def final(self):
        return self.X[-1]

    def index_of(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise OffGridError(f"time {t} is not a recorded time")
        return i

    def at(self, t):
        return self.X[self.index_of(t)]

    def trajectory(self, r=0):
        return self.X[:, r, :]


def _check_T(T, dt):
    if not T > 0:
        raise ParameterError("T", "must be positive")
    if not dt > 0:
        raise ParameterError("dt", "must be positive")


def _guard(X, step):
    bad = ~np.isfinite(X).all(axis=1) | (np.abs(X).max(axis=1) > BLOWUP)
    if bad.any():
        raise BlowupError(step)


def _record_plan(K, record_every, n_paths):
    # ensembles keep only the endpoints unless asked otherwise
    if record_every is None:
        record_every = 1 if n_paths == 1 else max(K, 1)
    if record_every < 1:
        raise ParameterError("record_every", "must be >= 1")
    return np.unique(np.append(np.arange(0, K + 1, record_every), K))


def _run_blocks(fn, seeds):
    parts = [fn(seeds[i:i + BLOCK]) for i in range(0, len(seeds), BLOCK)]
    return np.concatenate(parts, axis=1)


def _check_dims(sde, obs):
    if obs.dim_e != sde.e:
        raise DimensionError(f"observable has dimension {obs.dim_e}, slow system needs {sde.e}")


def solve_fast_discrete(sde, system, obs, n, T, seed, n_paths=1, record_every=None, burn_in=None):
    """Iterate the discrete fast-slow system for ``[nT]`` steps per trajectory."""
    if not system.is_map:
        raise WrongKindError("solve_fast_discrete needs a map driver")
    _check_dims(sde, obs)
    _check_T(T, 1.0 / n)
    K = int(math.floor(n * T + 1e-9))
    rec = _record_plan(K, record_every, n_paths)
    s = 1.0 / math.sqrt(n)

    def block(seeds):
        stream = open_stream(system, seeds, burn_in)
        M = len(seeds)
        X = np.tile(sde.x0, (M, 1))
        out = np.empty((len(rec), M, sde.d))
        out[0] = X
        ri, k = 1, 0
        while k < K:
            v = obs(stream.take(min(CHUNK, K - k)))
            for vj in v:
                X = X + sde.a(X) / n + s * np.einsum("mie,me->mi", sde.b(X), vj)
                k += 1
                if k % 64 == 0:
                    _guard(X, k)
                if ri < len(rec) and rec[ri] == k:
                    _guard(X, k)
                    out[ri] = X
                    ri += 1
        return out

    X = _run_blocks(block, trajectory_seeds(seed, n_paths))
    return TrajectoryEnsemble(rec / n, X, "fast-discrete",
                              {"n": n, "T": T, "driver": system.describe(),
                               "observable": obs.describe(), "sde": sde.describe()})


def solve_fast_flow(sde, system, obs, n, T, seed, n_paths=1, quad_dt=None, record_every=None,
                    burn_in=None):
    """Heun integration of ``dX/dt = a(X) + n^{1/2} b(X) v(phi_{nt} y)``.

    The slow step is ``quad_dt / n``, so one fast sample per slow step.
    """
    if not system.is_flow:
        raise WrongKindError("solve_fast_flow needs a flow driver")
    _check_dims(sde, obs)
    if quad_dt is None:
        quad_dt = system.dt_internal or 0.01 * system.roof.min_value
    if system.kind == "lorenz" and quad_dt > system.dt_internal * (1 + 1e-12):
        raise ParameterError("quad_dt", "must not exceed dt_internal")
    h = quad_dt / n
    _check_T(T, h)
    K = int(round(T / h))
    rec = _record_plan(K, record_every, n_paths)
    s = math.sqrt(n)

    def F(X, v):
        return sde.a(X) + s * np.einsum("mie,me->mi", sde.b(X), v)

    def block(seeds):
        stream = open_stream(system, seeds, burn_in, h=quad_dt)
        M = len(seeds)
        X = np.tile(sde.x0, (M, 1))
        out = np.empty((len(rec), M, sde.d))
        out[0] = X
        prev = obs(stream.take(1))[0]
        ri, k = 1, 0
        while k < K:
            v = obs(stream.take(min(CHUNK, K - k)))
            for vj in v:
                f0 = F(X, prev)
                X = X + 0.5 * h * (f0 + F(X + h * f0, vj))
                prev = vj
                k += 1
                if k % 64 == 0:
                    _guard(X, k)
                if ri < len(rec) and rec[ri] == k:
                    _guard(X, k)
                    out[ri] = X
                    ri += 1
        return out

    X = _run_blocks(block, trajectory_seeds(seed, n_paths))
    return TrajectoryEnsemble(rec * h, X, "fast-flow",
                              {"n": n, "T": T, "quad_dt": quad_dt, "driver": system.describe(),
                               "observable": obs.describe(), "sde": sde.describe()})


def solve_limit_sde(sde, sigma, E, T, dt, seed, n_paths=1, scheme="ito-euler", corrected=True,
                    record_every=None):
    """Simulate the homogenized SDE.

    ``corrected=False`` drops the correction drift in either scheme, so
    ``strat-heun`` then gives the naive Wong-Zakai limit.
    """
    if scheme not in SCHEMES:
        raise ParameterError("scheme", f"must be one of {SCHEMES}")
    _check_T(T, dt)
    sigma = np.asarray(sigma, dtype=float)
    E = np.asarray(E, dtype=float)
    if sigma.shape != (sde.e, sde.e) or E.shape != (sde.e, sde.e):
        raise DimensionError(f"sigma and E must be {sde.e}x{sde.e}")
    L = noise_factor(sigma)
    K_mat = E if scheme == "ito-euler" else E - 0.5 * sigma
    if not corrected:
        K_mat = np.zeros_like(E)
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ParameterError("dt", "must divide T")
    rec = _record_plan(steps, record_every, n_paths)
    sq = math.sqrt(dt)

    def drift(X):
        return sde.a(X) + correction_drift(sde, K_mat, X)

    def block(seeds):
        rngs = [np.random.default_rng(ss) for ss in seeds]
        M = len(seeds)
        X = np.tile(sde.x0, (M, 1))
        out = np.empty((len(rec), M, sde.d))
        out[0] = X
        ri, k = 1, 0
        while k < steps:
            c = min(4096, steps - k)
            z = np.stack([g.standard_normal((c, sde.e)) for g in rngs], axis=1)
            dW = sq * z @ L.T
            for dw in dW:
                if scheme == "ito-euler":
                    X = X + drift(X) * dt + np.einsum("mie,me->mi", sde.b(X), dw)
                else:
                    a0, b0 = drift(X), np.einsum("mie,me->mi", sde.b(X), dw)
                    Xp = X + a0 * dt + b0
                    X = X + 0.5 * (a0 + drift(Xp)) * dt + 0.5 * (
                        b0 + np.einsum("mie,me->mi", sde.b(Xp), dw))
                k += 1
                if k % 64 == 0:
                    _guard(X, k)
                if ri < len(rec) and rec[ri] == k:
                    _guard(X, k)
                    out[ri] = X
                    ri += 1
        return out

    X = _run_blocks(block, trajectory_seeds(seed, n_paths))
    return TrajectoryEnsemble(rec * dt, X, scheme,
                              {"T": T, "dt": dt, "corrected": bool(corrected),
                               "sigma": sigma.tolist(), "E": E.tolist(),
                               "K": K_mat.tolist(), "sde": sde.describe(),
                               "seed": str(as_seed_sequence(seed).entropy)})


def check_horizons(*ensembles):
    Ts = [ens.T for ens in ensembles]
    if any(abs(t - Ts[0]) > 1e-9 * max(1.0, Ts[0]) for t in Ts):
        raise HorizonMismatchError(f"ensembles end at different times: {Ts}")
