"""Comparison of fast-slow and limit ensembles, moment scaling, cohomological shifts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Mapping, NamedTuple

import numpy as np

from .drivers import Observable, map_points, observable, open_stream
from .errors import (
    DimensionError,
    HorizonMismatchError,
    InsufficientSamplesError,
    ParameterError,
    WrongKindError,
)
from .pathgen import discrete_path, discrete_paths, flow_paths


@dataclass(frozen=True)
class Tolerances:
    """Named tolerances cited by every verdict."""

    se_match: float = 3.0
    se_antisym: float = 5.0
    slope_W: float = 0.05
    slope_WW: float = 0.1
    ks_level: float = 0.01
    ks_slack: float = 0.0
    tail_ratio: float = 1e-2
    cohomology_factor: float = 10.0

    @classmethod
    def from_mapping(cls, overrides=None):
        overrides = dict(overrides or {})
        names = {f.name for f in fields(cls)}
        unknown = set(overrides) - names
        if unknown:
            raise ParameterError("tolerances", f"unknown names {sorted(unknown)}")
        if "ks_level" in overrides and overrides["ks_level"] not in (0.05, 0.01):
            raise ParameterError("tolerances.ks_level", "must be 0.05 or 0.01")
        return cls(**{k: float(v) for k, v in overrides.items()})

    def to_json(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# two-sample Kolmogorov-Smirnov

KS_COEF = {0.05: 1.358, 0.01: 1.628}


def ks_critical(level, n, m):
    """Asymptotic two-sample critical value ``c(level) sqrt((n + m) / (n m))``."""
    c = KS_COEF.get(level)
    if c is None:
        c = math.sqrt(-0.5 * math.log(level / 2.0))
    return c * math.sqrt((n + m) / (n * m))


def _kolmogorov_sf(lam):
    if lam < 0.2:
        return 1.0
    k = np.arange(1, 101)
    return float(min(1.0, max(0.0, 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k**2 * lam**2)))))


class KsResult(NamedTuple):
    statistic: np.ndarray
    crit_05: float
    crit_01: float
    pvalue: np.ndarray
    n: int
    m: int


def _as_samples(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def ks_distance(a, b):
    """Per-coordinate two-sample KS statistic with critical values at 5% and 1%.

    Both empirical CDFs are right-continuous and evaluated at the pooled points.
    """
    a, b = _as_samples(a), _as_samples(b)
    if len(a) == 0 or len(b) == 0:
        raise InsufficientSamplesError("KS distance needs two non-empty samples")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"samples have dimensions {a.shape[1]} and {b.shape[1]}")
    n, m = len(a), len(b)
    stats = np.empty(a.shape[1])
    for k in range(a.shape[1]):
        sa, sb = np.sort(a[:, k]), np.sort(b[:, k])
        pts = np.concatenate([sa, sb])
        Fa = np.searchsorted(sa, pts, side="right") / n
        Fb = np.searchsorted(sb, pts, side="right") / m
        stats[k] = np.max(np.abs(Fa - Fb))
    ne = n * m / (n + m)
    pv = np.array([_kolmogorov_sf((math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne)) * d) for d in stats])
    return KsResult(stats, ks_critical(0.05, n, m), ks_critical(0.01, n, m), pv, n, m)


def _abs_pair_sum(x, y_sorted, y_cum):
    # sum_{i,j} |x_i - y_j| with y sorted and y_cum its cumulative sum
    k = np.searchsorted(y_sorted, x, side="right")
    below = np.where(k > 0, y_cum[np.maximum(k - 1, 0)], 0.0)
    total = y_cum[-1]
    m = len(y_sorted)
    return float(np.sum(x * k - below + (total - below) - x * (m - k)))


def energy_distance(a, b):
    """Per-coordinate energy distance ``2E|X-Y| - E|X-X'| - E|Y-Y'|``."""
    a, b = _as_samples(a), _as_samples(b)
    if len(a) == 0 or len(b) == 0:
        raise InsufficientSamplesError("energy distance needs two non-empty samples")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"samples have dimensions {a.shape[1]} and {b.shape[1]}")
    out = np.empty(a.shape[1])
    for k in range(a.shape[1]):
        sa, sb = np.sort(a[:, k]), np.sort(b[:, k])
        ca, cb = np.cumsum(sa), np.cumsum(sb)
        xy = _abs_pair_sum(sa, sb, cb) / (len(sa) * len(sb))
        xx = _abs_pair_sum(sa, sa, ca) / len(sa) ** 2
        yy = _abs_pair_sum(sb, sb, cb) / len(sb) ** 2
        out[k] = 2.0 * xy - xx - yy
    return out


# ---------------------------------------------------------------------------
# moment scaling


class MomentSlope(NamedTuple):
    slope_W: float | None
    slope_WW: float | None
    times: np.ndarray
    norm_W: np.ndarray
    norm_WW: np.ndarray


def _loglog_slope(t, y):
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        return None
    return float(np.polyfit(np.log(t), np.log(y), 1)[0])


def moment_norms(times, W, WW, p=2):
    """Slopes of ``||W(0,t)||_{2p}`` and ``||WW(0,t)||_{2p/3}`` from samples.

    ``W`` has shape (K, R, e) and ``WW`` (K, R, e, e); Euclidean and Frobenius
    norms are used inside the expectations.  A slope is ``None`` when some norm
    vanishes.
    """
    times = np.asarray(times, dtype=float)
    q, r = 2.0 * p, 2.0 * p / 3.0
    nW = np.mean(np.linalg.norm(W, axis=-1) ** q, axis=1) ** (1.0 / q)
    nWW = np.mean(np.linalg.norm(WW, axis=(-2, -1)) ** r, axis=1) ** (1.0 / r)
    return MomentSlope(_loglog_slope(times, nW), _loglog_slope(times, nWW), times, nW, nWW)


def levels_from_samples(X):
    """``W = X - X_0`` and left-point iterated sums ``WW`` from fine samples (K, R, e)."""
    X = np.asarray(X, dtype=float)
    W = X - X[0]
    dW = np.diff(W, axis=0)
    WW = np.zeros(W.shape + (W.shape[-1],))
    WW[1:] = np.cumsum(W[:-1, ..., :, None] * dW[..., None, :], axis=0)
    return W, WW


def moment_slope(system, obs, p, n, t_grid, n_paths, seed, quad_dt=None, threads=1):
    """Log-log slopes of path and iterated-integral moment norms in ``t``."""
    if p < 1:
        raise ParameterError("p", "must be >= 1")
    if n_paths < 1000:
        raise InsufficientSamplesError(f"moment_slope needs >= 1000 paths, got {n_paths}")
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    if t_grid[0] <= 0 or t_grid[-1] / t_grid[0] < 10 - 1e-9:
        raise ParameterError("t_grid", "must be positive and span at least one decade")
    T = float(t_grid[-1])
    if system.is_map:
        steps = np.unique(np.maximum(1, np.round(t_grid * n).astype(np.int64)))
        paths = discrete_paths(system, obs, n, T, seed, n_paths, record_steps=steps,
                               threads=threads)
        dt = 1.0 / n
    else:
        qd = quad_dt or system.dt_internal or 0.01 * system.roof.min_value
        steps = np.unique(np.maximum(1, np.round(t_grid * n / qd).astype(np.int64)))
        paths = flow_paths(system, obs, n, T, seed, n_paths, quad_dt=qd, record_steps=steps,
                           threads=threads)
        dt = qd / n
    idx = np.searchsorted(paths[0].steps, steps)
    W = np.stack([pp.W[idx] for pp in paths], axis=1)
    WW = np.stack([pp.WW[idx] for pp in paths], axis=1)
    return moment_norms(steps * dt, W, WW, p)


# ---------------------------------------------------------------------------
# cohomological shift


@dataclass(frozen=True)
class CohomologyTriple:
    """``v = v_hat + chi o f - chi`` built from ``v_hat`` and the transfer function ``chi``."""

    system: object
    v_hat: Observable
    chi: Callable[[np.ndarray], np.ndarray]
    v: Observable

    def identity_defect(self, points):
        pts = np.asarray(points, dtype=float)
        fx = map_points(self.system, pts)
        return self.v(pts) - (self.v_hat(pts) + self.chi(fx) - self.chi(pts))


def cohomology_triple(system, v_hat, chi, name="cohomologous"):
    if not system.is_map:
        raise WrongKindError("cohomology triples need a map driver")

    def f(p):
        return v_hat(p) + chi(map_points(system, p)) - chi(p)

    v = observable(f, v_hat.dim_e, 0.0, name, {"v_hat": v_hat.describe()})
    return CohomologyTriple(system, v_hat, chi, v)


class CohomologyShift(NamedTuple):
    observed: np.ndarray
    predicted: np.ndarray
    spread: np.ndarray


def _lebesgue_grid(dim, per_axis=None):
    per_axis = per_axis or (1 << 16 if dim == 1 else 512)
    g = (np.arange(per_axis) + 0.5) / per_axis
    if dim == 1:
        return g[:, None]
    mesh = np.meshgrid(*([g] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _shift_integrands(triple, pts):
    fx = map_points(triple.system, pts)
    chi, chi_f = triple.chi(pts), triple.chi(fx)
    a = chi[:, :, None] * triple.v(pts)[:, None, :]
    b = triple.v_hat(pts)[:, :, None] * chi_f[:, None, :]
    return a, b


def predicted_shift(triple, n_samples=10**6, seed=0):
    """``int chi (x) v - int v_hat (x) chi o f`` and the pooled integrand spread.

    Lebesgue-invariant drivers use the midpoint rule on a uniform grid, which
    is exact for trigonometric polynomials of moderate degree; other drivers
    average along an orbit.
    """
    system = triple.system
    if system.lebesgue_invariant:
        pts = _lebesgue_grid(system.state_dim)
    else:
        pts = open_stream(system, [seed]).take(n_samples)[:, 0, :]
    a, b = _shift_integrands(triple, pts)
    pred = a.mean(axis=0) - b.mean(axis=0)
    spread = np.sqrt(a.var(axis=0) + b.var(axis=0))
    return pred, spread


def cohomology_shift(system, triple, n, T, seed):
    """Observed ``(WW_n(T) - WW_hat_n(T)) / T`` along one orbit and its predicted limit."""
    if system.kind != triple.system.kind:
        raise WrongKindError("triple was built for a different driver")
    e = triple.v.dim_e

    def joint(p):
        return np.concatenate([triple.v(p), triple.v_hat(p)], axis=-1)

    both = observable(joint, 2 * e, 0.0, "cohomology-pair")
    path = discrete_path(system, both, n, T, seed, record_steps=[])
    WW = path.WW[-1]
    observed = (WW[:e, :e] - WW[e:, e:]) / T
    pred, spread = predicted_shift(triple, seed=seed)
    return CohomologyShift(observed, pred, spread)


# ---------------------------------------------------------------------------
# convergence report


def _mean_cov(X):
    R = len(X)
    mean = X.mean(axis=0)
    se = X.std(axis=0, ddof=1) / math.sqrt(R)
    cov = np.cov(X, rowvar=False).reshape(X.shape[1], X.shape[1])
    return mean, se, cov


@dataclass
class ComparisonReport:
    """Per-coordinate KS distances of fast ensembles against two limit ensembles."""

    ns: list
    ks_corrected: np.ndarray
    ks_naive: np.ndarray
    crit_05: np.ndarray
    crit_01: np.ndarray
    summaries: dict
    active: int
    verdicts: dict
    tolerances: Tolerances
    provenance: dict = field(default_factory=dict)
    cdfs: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(v["status"] != "FAIL" for v in self.verdicts.values())

    def to_json(self):
        return {
            "ns": list(self.ns),
            "active_coordinate": int(self.active),
            "ks_corrected": self.ks_corrected.tolist(),
            "ks_naive": self.ks_naive.tolist(),
            "crit_05": self.crit_05.tolist(),
            "crit_01": self.crit_01.tolist(),
            "summaries": self.summaries,
            "verdicts": self.verdicts,
            "passed": self.passed,
            "tolerances": self.tolerances.to_json(),
            "provenance": self.provenance,
        }

    def to_text(self):
        d = self.ks_corrected.shape[1]
        head = ["n"] + [f"KS_corr[{k}]" for k in range(d)] + [f"KS_naive[{k}]" for k in range(d)] \
            + ["crit_01"]
        lines = ["  ".join(f"{h:>12}" for h in head)]
        for i, n in enumerate(self.ns):
            row = [f"{n:>12d}"] + [f"{x:12.5f}" for x in self.ks_corrected[i]] \
                + [f"{x:12.5f}" for x in self.ks_naive[i]] + [f"{self.crit_01[i]:12.5f}"]
            lines.append("  ".join(row))
        lines.append("")
        for name, v in self.verdicts.items():
            lines.append(f"{name:<24} {v['status']:<5} [{v['tolerance']}] {v['detail']}")
        return "\n".join(lines)

    def cdf_rows(self):
        """Rows ``(ensemble, coordinate, x, F(x))`` of empirical CDFs on a quantile grid."""
        rows = []
        for label, X in self.cdfs.items():
            for k in range(X.shape[1]):
                xs = np.sort(X[:, k])
                q = np.linspace(0.0, 1.0, 101)
                pts = np.quantile(xs, q)
                F = np.searchsorted(xs, pts, side="right") / len(xs)
                rows.extend((label, k, float(x), float(f)) for x, f in zip(pts, F))
        return rows


def convergence_report(fast_ensembles, sde_corrected, sde_naive, tolerances=None, active=None):
    """Compare fast-slow ensembles ``{n: ensemble}`` with corrected and naive limits.

    Verdicts:
    ``ks_decreasing``: KS against the corrected limit (active coordinate) decreases in n.
    ``corrected_beats_naive``: at the largest n the corrected limit is closer,
    checked only when the two limits differ by more than ``se_antisym`` SEs in mean.
    ``corrected_accepted`` / ``naive_rejected``: active-coordinate KS at the
    largest n against the ``ks_level`` critical value.
    """
    tol = tolerances or Tolerances()
    if len(fast_ensembles) < 2:
        raise ParameterError("fast_ensembles", "need at least two values of n")
    ns = sorted(fast_ensembles)
    ens = [fast_ensembles[n] for n in ns]
    T0 = sde_corrected.T
    for e_ in ens + [sde_naive]:
        if abs(e_.T - T0) > 1e-9 * max(1.0, T0):
            raise HorizonMismatchError(f"ensembles end at {e_.T} and {T0}")
    Yc, Yn = sde_corrected.final(), sde_naive.final()
    d = Yc.shape[1]
    mc, sc, _ = _mean_cov(Yc)
    mn, sn, _ = _mean_cov(Yn)
    gap = np.abs(mc - mn) / np.sqrt(sc**2 + sn**2 + 1e-300)
    if active is None:
        active = int(np.argmax(gap))
    ksc, ksn, c05, c01 = [], [], [], []
    summaries = {}
    for n, e_ in zip(ns, ens):
        X = e_.final()
        if X.shape[1] != d:
            raise DimensionError("fast and limit ensembles differ in dimension")
        rc, rn = ks_distance(X, Yc), ks_distance(X, Yn)
        ksc.append(rc.statistic)
        ksn.append(rn.statistic)
        c05.append(rc.crit_05)
        c01.append(rc.crit_01 if tol.ks_level == 0.01 else rc.crit_05)
        m, se, cov = _mean_cov(X)
        summaries[f"fast_n={n}"] = {"mean": m.tolist(), "se": se.tolist(), "cov": cov.tolist(),
                                    "energy_corrected": energy_distance(X, Yc).tolist(),
                                    "n_paths": int(len(X))}
    for label, Y in (("corrected", Yc), ("naive", Yn)):
        m, se, cov = _mean_cov(Y)
        summaries[label] = {"mean": m.tolist(), "se": se.tolist(), "cov": cov.tolist(),
                            "n_paths": int(len(Y))}
    ksc, ksn = np.array(ksc), np.array(ksn)
    c01 = np.array(c01)
    a = active
    seq = ksc[:, a]
    verdicts = {}
    steps = np.diff(seq)
    dec = bool(np.all(steps < 0) or (tol.ks_slack > 0 and np.all(steps <= tol.ks_slack)))
    verdicts["ks_decreasing"] = {
        "status": "PASS" if dec else "FAIL", "tolerance": "ks_slack",
        "detail": "KS(fast_n, corrected) = " + ", ".join(f"{x:.4f}" for x in seq)}
    distinct = bool(gap.max() > tol.se_antisym)
    if distinct:
        ok = bool(ksc[-1, a] < ksn[-1, a])
        verdicts["corrected_beats_naive"] = {
            "status": "PASS" if ok else "FAIL", "tolerance": "se_antisym",
            "detail": f"coordinate {a}: {ksc[-1, a]:.4f} vs naive {ksn[-1, a]:.4f}"}
    else:
        verdicts["corrected_beats_naive"] = {
            "status": "SKIP", "tolerance": "se_antisym",
            "detail": f"correction indistinguishable (max mean gap {gap.max():.2f} SE)"}
    verdicts["corrected_accepted"] = {
        "status": "PASS" if ksc[-1, a] < c01[-1] else "FAIL", "tolerance": "ks_level",
        "detail": f"KS {ksc[-1, a]:.4f} vs critical {c01[-1]:.4f}"}
    if distinct:
        verdicts["naive_rejected"] = {
            "status": "PASS" if ksn[-1, a] > c01[-1] else "FAIL", "tolerance": "ks_level",
            "detail": f"KS {ksn[-1, a]:.4f} vs critical {c01[-1]:.4f}"}
    prov = {f"fast_n={n}": dict(e_.meta) for n, e_ in zip(ns, ens)}
    prov["corrected"] = dict(sde_corrected.meta)
    prov["naive"] = dict(sde_naive.meta)
    cdfs = {f"fast_n={ns[-1]}": ens[-1].final(), "corrected": Yc, "naive": Yn}
    return ComparisonReport(ns, ksc, ksn, np.array(c05), c01, summaries, a, verdicts, tol,
                            prov, cdfs)
