"""Rescaled paths ``W_n`` and their iterated integrals ``WW_n``.

Discrete paths use the left-Riemann convention of the Birkhoff double sum:
``WW_n(k/n) = n^{-1} sum_{0 <= i < j <= k-1} v(f^i x) (x) v(f^j x)``.  The
diagonal ``i == j`` is excluded, so ``WW`` is an Ito-type sum; the
Stratonovich-type companion adds ``(1/2n) sum_j v_j (x) v_j``.

Flow paths integrate ``v`` along the flow with the trapezoid rule on a fast
time step ``quad_dt`` and build ``WW`` with the matching rule, which is exact
for the piecewise-linear interpolant of ``W``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .drivers import as_seed_sequence, open_stream, trajectory_seeds
from .errors import CapExceededError, OffGridError, ParameterError, WrongKindError

CHUNK = 512
BLOCK = 1024
DEFAULT_MAX_STEPS = 10**8


@dataclass
class PathPair:
    """A sampled realization of ``(W_n, WW_n)`` on stored grid points.

    ``steps`` are the stored grid indices; grid time ``k`` is ``k * grid_dt``.
    """

    n: int
    T: float
    grid_dt: float
    steps: np.ndarray
    W: np.ndarray
    WW: np.ndarray
    meta: Mapping = field(default_factory=dict)

    @property
    def times(self):
        return self.steps * self.grid_dt

    @property
    def e(self):
        return self.W.shape[1]

    def index_of(self, t):
        k = int(round(t / self.grid_dt))
        if abs(k * self.grid_dt - t) > 1e-9 * max(1.0, abs(t)):
            raise OffGridError(f"time {t} is not on the grid (dt={self.grid_dt})")
        i = int(np.searchsorted(self.steps, k))
        if i >= len(self.steps) or self.steps[i] != k:
            raise OffGridError(f"time {t} is not a stored grid point")
        return i

    def at(self, t):
        i = self.index_of(t)
        return self.W[i], self.WW[i]


def grid_steps(n, T):
    """``[nT]`` with floor semantics, tolerant to representation error in ``n*T``."""
    return int(math.floor(n * T + 1e-9))


def _record_steps(K, stride=1, record_steps=None):
    if record_steps is not None:
        steps = np.unique(np.concatenate([[0, K], np.asarray(record_steps, dtype=np.int64)]))
        if steps[0] < 0 or steps[-1] > K:
            raise OffGridError("record steps outside [0, K]")
        return steps
    if stride < 1:
        raise ParameterError("stride", "must be >= 1")
    return np.unique(np.append(np.arange(0, K + 1, stride), K))


def _accumulate(chunks, K, M, e, steps, midpoint):
    """Fold increment chunks into ``W`` and ``WW`` stored at ``steps``."""
    W = np.zeros((len(steps), M, e))
    WW = np.zeros((len(steps), M, e, e))
    w0 = np.zeros((M, e))
    ww0 = np.zeros((M, e, e))
    pos = 0
    ri = 1 if steps[0] == 0 else 0
    for dW in chunks:
        c = dW.shape[0]
        csum = np.cumsum(dW, axis=0)
        left = w0[None] + np.concatenate([np.zeros((1, M, e)), csum[:-1]], axis=0)
        base = left + 0.5 * dW if midpoint else left
        wwc = ww0[None] + np.cumsum(base[..., :, None] * dW[..., None, :], axis=0)
        wc = w0[None] + csum
        # values after steps pos+1 .. pos+c
        while ri < len(steps) and steps[ri] <= pos + c:
            j = steps[ri] - pos - 1
            W[ri] = wc[j]
            WW[ri] = wwc[j]
            ri += 1
        w0, ww0 = wc[-1], wwc[-1]
        pos += c
    return W, WW


def _map_chunks(stream, obs, n, K):
    scale = 1.0 / math.sqrt(n)
    done = 0
    while done < K:
        c = min(CHUNK, K - done)
        yield obs(stream.take(c)) * scale
        done += c


def _flow_chunks(stream, obs, n, K, quad_dt):
    scale = 0.5 * quad_dt / math.sqrt(n)
    prev = obs(stream.take(1))[0]
    done = 0
    while done < K:
        c = min(CHUNK, K - done)
        v = obs(stream.take(c))
        both = np.concatenate([prev[None], v], axis=0)
        yield (both[:-1] + both[1:]) * scale
        prev = v[-1]
        done += c


def _seed_label(seed):
    ss = as_seed_sequence(seed)
    return f"{ss.entropy}:{'/'.join(str(k) for k in ss.spawn_key)}"


def _meta(system, obs, kind, seed, **extra):
    return {"driver": system.describe(), "observable": obs.describe(), "path_kind": kind,
            "seed": _seed_label(seed), **extra}


def _check_common(n, T, K, max_steps):
    if n < 1:
        raise ParameterError("n", "must be >= 1")
    if not T > 0:
        raise ParameterError("T", "must be positive")
    if K > max_steps:
        raise CapExceededError(f"[nT] = {K} exceeds the step cap {max_steps}")


def _run_blocks(fn, seeds, threads):
    blocks = [seeds[i:i + BLOCK] for i in range(0, len(seeds), BLOCK)]
    if threads and threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return [p for out in pool.map(fn, blocks) for p in out]
    return [p for b in blocks for p in fn(b)]


def _discrete_block(system, obs, n, T, seeds, steps, burn_in):
    K = grid_steps(n, T)
    stream = open_stream(system, seeds, burn_in)
    W, WW = _accumulate(_map_chunks(stream, obs, n, K), K, len(seeds), obs.dim_e, steps, False)
    return [PathPair(n, T, 1.0 / n, steps, W[:, m], WW[:, m],
                     _meta(system, obs, "discrete", s, n=n, T=T))
            for m, s in enumerate(seeds)]


def _require_map(system):
    if not system.is_map:
        raise WrongKindError(f"discrete paths need a map driver, got {system.kind!r}")


def discrete_path(system, obs, n, T, seed, stride=1, record_steps=None, burn_in=None,
                  max_steps=DEFAULT_MAX_STEPS):
    """Birkhoff-sum path of ``obs`` along one seeded orbit of a map."""
    _require_map(system)
    K = grid_steps(n, T)
    _check_common(n, T, K, max_steps)
    steps = _record_steps(K, stride, record_steps)
    return _discrete_block(system, obs, n, T, [as_seed_sequence(seed)], steps, burn_in)[0]


def discrete_paths(system, obs, n, T, seed, n_paths, stride=None, record_steps=None,
                   burn_in=None, threads=1, max_steps=DEFAULT_MAX_STEPS):
    """Ensemble of discrete paths; member ``i`` uses ``trajectory_seeds(seed)[i]``.

    By default only ``t = 0``, ``t = 1`` (when inside the horizon) and ``t = T``
    are stored.
    """
    _require_map(system)
    K = grid_steps(n, T)
    _check_common(n, T, K, max_steps)
    if stride is None and record_steps is None:
        record_steps = [min(n, K)]
    steps = _record_steps(K, stride or 1, record_steps)
    seeds = trajectory_seeds(seed, n_paths)
    return _run_blocks(lambda b: _discrete_block(system, obs, n, T, b, steps, burn_in),
                       seeds, threads)


def _flow_setup(system, quad_dt):
    if not system.is_flow:
        raise WrongKindError(f"flow paths need a flow driver, got {system.kind!r}")
    if quad_dt is None:
        quad_dt = system.dt_internal or 0.01 * system.roof.min_value
    if not quad_dt > 0:
        raise ParameterError("quad_dt", "must be positive")
    if system.kind == "lorenz" and quad_dt > system.dt_internal * (1 + 1e-12):
        raise ParameterError("quad_dt", "must not exceed dt_internal")
    return quad_dt


def flow_grid_steps(n, T, quad_dt):
    return int(round(n * T / quad_dt))


def _flow_block(system, obs, n, T, quad_dt, seeds, steps, burn_in):
    K = flow_grid_steps(n, T, quad_dt)
    stream = open_stream(system, seeds, burn_in, h=quad_dt)
    W, WW = _accumulate(_flow_chunks(stream, obs, n, K, quad_dt), K, len(seeds), obs.dim_e,
                        steps, True)
    return [PathPair(n, T, quad_dt / n, steps, W[:, m], WW[:, m],
                     _meta(system, obs, "flow", s, n=n, T=T, quad_dt=quad_dt))
            for m, s in enumerate(seeds)]


def flow_path(system, obs, n, T, quad_dt=None, seed=0, stride=1, record_steps=None,
              burn_in=None, max_steps=DEFAULT_MAX_STEPS):
    """Time-integral path ``W_n(t) = n^{-1/2} int_0^{nt} v(phi_s x) ds`` of a flow."""
    quad_dt = _flow_setup(system, quad_dt)
    K = flow_grid_steps(n, T, quad_dt)
    _check_common(n, T, K, max_steps)
    steps = _record_steps(K, stride, record_steps)
    return _flow_block(system, obs, n, T, quad_dt, [as_seed_sequence(seed)], steps, burn_in)[0]


def flow_paths(system, obs, n, T, seed, n_paths, quad_dt=None, stride=None, record_steps=None,
               burn_in=None, threads=1, max_steps=DEFAULT_MAX_STEPS):
    quad_dt = _flow_setup(system, quad_dt)
    K = flow_grid_steps(n, T, quad_dt)
    _check_common(n, T, K, max_steps)
    if stride is None and record_steps is None:
        record_steps = [min(flow_grid_steps(n, 1.0, quad_dt), K)]
    steps = _record_steps(K, stride or 1, record_steps)
    seeds = trajectory_seeds(seed, n_paths)
    return _run_blocks(lambda b: _flow_block(system, obs, n, T, quad_dt, b, steps, burn_in),
                       seeds, threads)


def increment(path, s, t):
    """``(W(s,t), WW(s,t))`` with ``WW(s,t) = WW(t) - WW(s) - W(s) (x) W(s,t)``."""
    if t < s:
        raise OffGridError("increment needs s <= t")
    i, j = path.index_of(s), path.index_of(t)
    dW = path.W[j] - path.W[i]
    return dW, path.WW[j] - path.WW[i] - np.outer(path.W[i], dW)


def chen_defect(path, s, u, t):
    """``WW(s,t) - WW(s,u) - WW(u,t) - W(s,u) (x) W(u,t)``; zero up to rounding."""
    if not s <= u <= t:
        raise OffGridError("chen_defect needs s <= u <= t")
    w_su, ww_su = increment(path, s, u)
    w_ut, ww_ut = increment(path, u, t)
    _, ww_st = increment(path, s, t)
    return ww_st - ww_su - ww_ut - np.outer(w_su, w_ut)
