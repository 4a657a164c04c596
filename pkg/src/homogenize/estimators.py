"""Estimators for the diffusion matrix ``sigma`` and the drift matrices ``E``, ``D``.

Discrete Green-Kubo sums use single-orbit lagged autocovariances
``C_r = int v (x) v(f^r) dmu``::

    sigma = C_0 + sum_{r=1}^{L} (C_r + C_r^T),    E = sum_{r=1}^{L} C_r

Standard errors come from batch means over contiguous orbit segments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .drivers import default_burn_in, open_stream
from .errors import (
    CorrelationTailWarning,
    DimensionError,
    EstimationRefused,
    HeterogeneousEnsembleError,
    InsufficientSamplesError,
    ParameterError,
    WrongKindError,
)
from .pathgen import _seed_label

N_BATCHES = 50
MAX_LAG = 200
QUIET_RUN = 5
TAIL_RATIO = 1e-2
CHUNK = 1 << 16


@dataclass
class DiffusionStats:
    """Estimated ``sigma``, ``E`` and ``D = 2E - sigma`` with standard errors.

    ``D`` is stored raw.  ``D_antisym`` is its antisymmetric part.
    ``residual`` is the symmetric part of ``2E' - sigma`` where ``E'`` is the
    Stratonovich-type drift: ``E`` itself for flows, ``E + C_0/2`` for maps
    (the discrete iterated sum leaves out its diagonal).
    """

    sigma: np.ndarray
    E: np.ndarray
    D: np.ndarray
    stderr_sigma: np.ndarray
    stderr_E: np.ndarray
    lag_L: int
    n_samples: int
    method: str
    clip: float = 0.0
    residual: np.ndarray | None = None
    meta: Mapping = field(default_factory=dict)

    @property
    def D_antisym(self):
        return 0.5 * (self.D - self.D.T)

    @property
    def e(self):
        return self.sigma.shape[0]

    def to_json(self):
        return {
            "method": self.method,
            "sigma": self.sigma.tolist(),
            "E": self.E.tolist(),
            "D": self.D.tolist(),
            "D_antisym": self.D_antisym.tolist(),
            "stderr_sigma": self.stderr_sigma.tolist(),
            "stderr_E": self.stderr_E.tolist(),
            "residual_antisymmetry": (self.residual if self.residual is not None
                                      else np.zeros_like(self.sigma)).tolist(),
            "lag_L": int(self.lag_L),
            "n_samples": int(self.n_samples),
            "clip": float(self.clip),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_json(cls, doc):
        arr = {k: np.asarray(doc[k], dtype=float)
               for k in ("sigma", "E", "D", "stderr_sigma", "stderr_E")}
        return cls(arr["sigma"], arr["E"], arr["D"], arr["stderr_sigma"], arr["stderr_E"],
                   int(doc["lag_L"]), int(doc["n_samples"]), doc["method"],
                   float(doc.get("clip", 0.0)),
                   np.asarray(doc.get("residual_antisymmetry", np.zeros_like(arr["sigma"]))),
                   doc.get("meta", {}))


@dataclass
class InducedData:
    rbar: float
    tilde_sigma: np.ndarray
    tilde_E: np.ndarray
    H_term: np.ndarray


def psd_clip(sigma):
    """Symmetrize, clip negative eigenvalues to zero; return (matrix, clip size)."""
    s = 0.5 * (sigma + sigma.T)
    lam, Q = np.linalg.eigh(s)
    clip = float(max(0.0, -lam.min())) if lam.size else 0.0
    if clip == 0.0:
        return s, 0.0
    out = (Q * np.clip(lam, 0.0, None)) @ Q.T
    return 0.5 * (out + out.T), clip


def drift_matrices(sigma, E):
    """``D = 2E - sigma``."""
    sigma = np.asarray(sigma, dtype=float)
    E = np.asarray(E, dtype=float)
    if sigma.shape != E.shape or sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DimensionError(f"sigma {sigma.shape} and E {E.shape} must be matching squares")
    return 2.0 * E - sigma


def _refuse_if_needed(system):
    if not system.estimable:
        raise EstimationRefused(
            "Pomeau-Manneville map with alpha >= 1/2 is in the nonsummable-correlations "
            "regime; no estimate is defined there")


# ---------------------------------------------------------------------------
# lagged correlations


def _lagged(ext, B, L, e):
    """``C[r, b, g] = B^{-1} sum_{j<B} ext[j, b] ext[j + r, g]`` for r = 0..L."""
    nfft = 1 << int(math.ceil(math.log2(B + L + 1)))
    X = np.fft.rfft(ext[:B, :e], nfft, axis=0)
    Y = np.fft.rfft(ext[:B + L, :e], nfft, axis=0)
    out = np.empty((L + 1, e, e))
    for b in range(e):
        for g in range(e):
            out[:, b, g] = np.fft.irfft(np.conj(X[:, b]) * Y[:, g], nfft)[:L + 1]
    return out / B


def _batched(take, n_batches, B, L, e):
    """Per-batch lagged correlations and per-batch means of trailing columns."""
    corr, extras = [], []
    cur = take(B)
    for b in range(n_batches):
        look = take(B) if b < n_batches - 1 else take(L)
        ext = np.concatenate([cur, look[:L]], axis=0)
        corr.append(_lagged(ext, B, L, e))
        extras.append(cur[:, e:].mean(axis=0))
        cur = look
    return np.array(corr), np.array(extras)


def _chunked_take(fn):
    """Wrap ``fn(k) -> values`` so large requests are built in bounded chunks."""
    def take(k):
        parts = []
        while k > 0:
            c = min(k, CHUNK)
            parts.append(fn(c))
            k -= c
        return np.concatenate(parts, axis=0)
    return take


def choose_lag(C, se, max_lag=MAX_LAG, run=QUIET_RUN):
    """Last lag before ``run`` consecutive lags with every ``|C_r| <= 2 SE(C_r)``.

    Returns ``(L, capped)``.
    """
    quiet = np.all(np.abs(C) <= 2.0 * se, axis=(1, 2))
    top = len(C) - 1
    for r in range(1, top - run + 2):
        if quiet[r:r + run].all():
            return max(1, r - 1), False
    return min(max_lag, top), True


def _lag_weights(L, taper):
    r = np.arange(1, L + 1)
    return 1.0 - r / (L + 1.0) if taper else np.ones(L)


def _assemble_discrete(C, L, taper):
    """Per-batch sigma and E from lagged correlations ``C[..., r, :, :]``."""
    w = _lag_weights(L, taper)[:, None, None]
    Cr = C[..., 1:L + 1, :, :]
    E = (w * Cr).sum(axis=-3)
    sigma = C[..., 0, :, :] + E + np.swapaxes(E, -1, -2)
    return sigma, E


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _finish(sigma_b, E_b, sigma, E, lag_L, n_samples, method, c0=None, meta=None):
    nb = sigma_b.shape[0]
    se_sigma = _sym(sigma_b).std(axis=0, ddof=1) / math.sqrt(nb)
    se_E = E_b.std(axis=0, ddof=1) / math.sqrt(nb)
    sigma, clip = psd_clip(sigma)
    D = drift_matrices(sigma, E)
    strat = E if c0 is None else E + 0.5 * c0
    residual = _sym(2.0 * strat - sigma)
    return DiffusionStats(sigma, E, D, se_sigma, se_E, int(lag_L), int(n_samples), method,
                          clip, residual, meta or {})


def _orbit_len_batches(orbit_len, n_batches, L):
    B = orbit_len // n_batches
    if B < max(2, L):
        raise InsufficientSamplesError(
            f"orbit of length {orbit_len} is too short for {n_batches} batches at lag {L}")
    return B


def green_kubo_discrete(system, obs, lag_L=None, orbit_len=1_000_000, seed=0,
                        n_batches=N_BATCHES, max_lag=MAX_LAG, taper=False, burn_in=None):
    """Green-Kubo estimate of ``sigma`` and ``E`` for a map.

    ``lag_L=None`` selects the truncation lag adaptively (see :func:`choose_lag`).
    """
    if not system.is_map:
        raise WrongKindError(f"green_kubo_discrete needs a map, got {system.kind!r}")
    _refuse_if_needed(system)
    if lag_L is not None and lag_L < 1:
        raise ParameterError("lag_L", "must be >= 1")
    top = lag_L if lag_L is not None else max_lag
    if orbit_len < 100 * top:
        raise InsufficientSamplesError(f"orbit_len must be >= 100 * lag ({100 * top})")
    B = _orbit_len_batches(orbit_len, n_batches, top)
    stream = open_stream(system, [seed], burn_in)
    take = _chunked_take(lambda k: obs(stream.take(k)[:, 0, :]))
    C_b, _ = _batched(take, n_batches, B, top, obs.dim_e)
    return _discrete_from_corr(C_b, lag_L, top, taper, B * n_batches,
                               {"seed": _seed_label(seed), "taper": bool(taper),
                                "n_batches": n_batches, "driver": system.describe(),
                                "observable": obs.describe()})


def _discrete_from_corr(C_b, lag_L, top, taper, n_samples, meta, method="green-kubo-discrete"):
    nb = C_b.shape[0]
    C = C_b.mean(axis=0)
    capped = False
    if lag_L is None:
        se_C = C_b.std(axis=0, ddof=1) / math.sqrt(nb)
        lag_L, capped = choose_lag(C, se_C, top)
    sigma_b, E_b = _assemble_discrete(C_b, lag_L, taper)
    sigma, E = _assemble_discrete(C, lag_L, taper)
    meta = {**meta, "lag_capped": bool(capped)}
    stats = _finish(sigma_b, E_b, sigma, E, lag_L, n_samples, method, C[0], meta)
    stats.meta["correlations"] = C[:lag_L + 1].tolist()
    return stats


def green_kubo_flow(system, obs, t_max=20.0, quad_dt=None, orbit_time=100_000.0, seed=0,
                    n_batches=N_BATCHES, burn_in=None, tail_ratio=TAIL_RATIO):
    """Green-Kubo integrals of the flow correlation function up to ``t_max``.

    ``sigma = int (C + C^T)``, ``D = int (C - C^T)``, ``E = (sigma + D) / 2``,
    with ``C(t) = int v (x) v(phi_t) dnu`` sampled every ``quad_dt`` and
    integrated by the trapezoid rule.
    """
    if not system.is_flow:
        raise WrongKindError(f"green_kubo_flow needs a flow, got {system.kind!r}")
    _refuse_if_needed(system)
    if not t_max > 0:
        raise ParameterError("t_max", "must be positive")
    if quad_dt is None:
        quad_dt = system.dt_internal or 0.01 * system.roof.min_value
    L = int(round(t_max / quad_dt))
    total = int(round(orbit_time / quad_dt))
    B = total // n_batches
    if B < 2 * L:
        raise InsufficientSamplesError(
            f"orbit_time {orbit_time} too short: each of {n_batches} batches must span 2 * t_max")
    stream = open_stream(system, [seed], burn_in, h=quad_dt)
    take = _chunked_take(lambda k: obs(stream.take(k)[:, 0, :]))
    C_b, _ = _batched(take, n_batches, B, L, obs.dim_e)
    w = np.full(L + 1, quad_dt)
    w[0] = w[-1] = 0.5 * quad_dt
    integ_b = np.einsum("r,brij->bij", w, C_b)
    sigma_b = integ_b + np.swapaxes(integ_b, -1, -2)
    E_b = integ_b
    C = C_b.mean(axis=0)
    integ = np.einsum("r,rij->ij", w, C)
    sigma = integ + integ.T
    D = integ - integ.T
    E = 0.5 * (sigma + D)
    window = max(1, int(round(0.05 * L)))
    tail = float(np.abs(C[-window:]).mean(axis=0).max())
    peak = float(np.abs(C).max())
    tail_warning = peak > 0 and tail > tail_ratio * peak
    if tail_warning:
        warnings.warn(f"correlation tail {tail:.3g} exceeds {tail_ratio} of peak {peak:.3g} "
                      f"at t_max={t_max}", CorrelationTailWarning, stacklevel=2)
    meta = {"seed": _seed_label(seed), "t_max": t_max, "quad_dt": quad_dt,
            "orbit_time": orbit_time, "n_batches": n_batches, "tail": tail, "peak": peak,
            "tail_warning": bool(tail_warning), "driver": system.describe(),
            "observable": obs.describe()}
    return _finish(sigma_b, E_b, sigma, E, L, B * n_batches, "green-kubo-flow", None, meta)


def _fiber_quantities(system, obs, pts, nodes, weights):
    """Induced observable, roof and ``int_0^r H (x) v du`` for base points ``pts``."""
    r = system.roof(pts)
    k = pts.shape[0]
    half = 0.5 * (nodes + 1.0)
    u = r[:, None] * half[None, :]
    dim = pts.shape[1]

    def at(x, heights):
        shape = heights.shape
        full = np.empty(shape + (dim + 1,))
        full[..., :dim] = x.reshape((k,) + (1,) * (len(shape) - 1) + (dim,))
        full[..., dim] = heights
        return obs(full)

    v_q = at(pts, u)
    wq = 0.5 * r[:, None] * weights[None, :]
    vtil = np.einsum("kq,kqe->ke", wq, v_q)
    s = u[:, :, None] * half[None, None, :]
    v_qp = at(pts, s)
    H_q = np.einsum("kq,p,kqpe->kqe", 0.5 * u, weights, v_qp)
    I = np.einsum("kq,kqb,kqg->kbg", wq, H_q, v_q)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(vtil))):
        raise ParameterError("roof", "fiber quadrature produced non-finite values")
    return np.concatenate([vtil, r[:, None], I.reshape(k, -1)], axis=1)


def induced_stats(system, obs, orbit_len=1_000_000, seed=0, lag_L=None,
                  n_batches=N_BATCHES, max_lag=MAX_LAG, taper=False, burn_in=None,
                  fiber_nodes=8):
    """Estimate flow ``sigma``, ``E``, ``D`` of a suspension through its base map.

    ``sigma = sigma~ / rbar`` and ``E = E~ / rbar + int H (x) v dnu`` where
    ``sigma~``, ``E~`` are the Green-Kubo matrices of the induced observable
    ``v~(x) = int_0^{r(x)} v(x, u) du`` and ``H(x, u) = int_0^u v(x, s) ds``.
    Returns ``(DiffusionStats, InducedData)``.
    """
    if system.kind != "suspension":
        raise WrongKindError("induced_stats needs a suspension flow")
    _refuse_if_needed(system)
    e = obs.dim_e
    top = lag_L if lag_L is not None else max_lag
    if orbit_len < 100 * top:
        raise InsufficientSamplesError(f"orbit_len must be >= 100 * lag ({100 * top})")
    B = _orbit_len_batches(orbit_len, n_batches, top)
    nodes, weights = np.polynomial.legendre.leggauss(fiber_nodes)
    stream = open_stream(system.base, [seed], burn_in)
    take = _chunked_take(
        lambda k: _fiber_quantities(system, obs, stream.take(k)[:, 0, :], nodes, weights))
    C_b, extra_b = _batched(take, n_batches, B, top, e)
    r_b = extra_b[:, 0]
    I_b = extra_b[:, 1:].reshape(n_batches, e, e)
    C = C_b.mean(axis=0)
    capped = False
    if lag_L is None:
        se_C = C_b.std(axis=0, ddof=1) / math.sqrt(n_batches)
        lag_L, capped = choose_lag(C, se_C, top)
    ts_b, tE_b = _assemble_discrete(C_b, lag_L, taper)
    ts, tE = _assemble_discrete(C, lag_L, taper)
    rbar = float(r_b.mean())
    Ibar = I_b.mean(axis=0)
    sigma_b = ts_b / r_b[:, None, None]
    E_b = (tE_b + I_b) / r_b[:, None, None]
    sigma = ts / rbar
    E = (tE + Ibar) / rbar
    meta = {"seed": _seed_label(seed), "taper": bool(taper), "n_batches": n_batches,
            "lag_capped": bool(capped), "rbar": rbar, "driver": system.describe(),
            "observable": obs.describe()}
    stats = _finish(sigma_b, E_b, sigma, E, lag_L, B * n_batches, "induced", None, meta)
    return stats, InducedData(rbar, ts, tE, Ibar / rbar)


def ensemble_E(paths, min_size=100):
    """Ensemble mean and standard error of ``WW_n(1)``."""
    paths = list(paths)
    if len(paths) < min_size:
        raise InsufficientSamplesError(f"ensemble_E needs >= {min_size} paths, got {len(paths)}")
    ref = paths[0]
    key = (ref.n, ref.T, ref.grid_dt, ref.meta.get("path_kind"),
           repr(ref.meta.get("driver")), repr(ref.meta.get("observable")))
    for p in paths[1:]:
        k = (p.n, p.T, p.grid_dt, p.meta.get("path_kind"),
             repr(p.meta.get("driver")), repr(p.meta.get("observable")))
        if k != key:
            raise HeterogeneousEnsembleError("paths differ in n, T, driver or observable")
    if ref.T < 1.0 - 1e-12:
        raise ParameterError("T", "ensemble_E needs paths with T >= 1")
    ww = np.array([p.at(1.0)[1] for p in paths])
    return ww.mean(axis=0), ww.std(axis=0, ddof=1) / math.sqrt(len(ww))


def stats_from_ensemble(sigma_stats, E, stderr_E, n_paths):
    """Combine a Green-Kubo ``sigma`` with an ensemble estimate of ``E``."""
    sigma = sigma_stats.sigma
    D = drift_matrices(sigma, E)
    return DiffusionStats(sigma, E, D, sigma_stats.stderr_sigma, stderr_E, sigma_stats.lag_L,
                          n_paths, "ensemble", sigma_stats.clip, _sym(D),
                          {"sigma_from": sigma_stats.method})
