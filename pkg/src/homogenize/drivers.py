"""Built-in chaotic drivers, their orbit streams, and observables.

Map orbits are generated on the 2**-53 lattice.  Doubling-type branches
(the doubling map and the upper Pomeau-Manneville branch) shift one mantissa
bit out per step, which in plain floating point collapses every orbit onto 0
after about 53 iterations.  The stream kernels therefore refill the lowest
bit from a seeded per-trajectory bit stream, which is exactly the orbit of a
Lebesgue-random initial point.  The cat map is a permutation of the lattice
and needs no refill.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ._core import kernels
from .errors import (
    InsufficientSamplesError,
    NonFiniteStateError,
    ParameterError,
    WrongKindError,
)

TWO53 = float(1 << 53)
MAP_KINDS = ("doubling", "pomeau-manneville", "cat")
FLOW_KINDS = ("lorenz", "suspension")
LORENZ_BOX = np.array([[-20.0, 20.0], [-30.0, 30.0], [0.0, 50.0]])
DEFAULT_MAP_BURN_IN = 10_000
DEFAULT_LORENZ_BURN_IN_TIME = 100.0
PM_ESTIMABLE_ALPHA = 0.5
REJECTION_GAP = 64


# ---------------------------------------------------------------------------
# systems


@dataclass(frozen=True)
class Roof:
    """Roof function of a suspension flow, evaluated on base points."""

    kind: str
    func: Callable[[np.ndarray], np.ndarray]
    min_value: float
    max_value: float
    params: Mapping = field(default_factory=dict)

    def __call__(self, points):
        return np.asarray(self.func(np.asarray(points, dtype=float)), dtype=float)


def constant_roof(value):
    if not value > 0:
        raise ParameterError("roof.value", "roof must be bounded below by a positive constant")
    return Roof("constant", lambda p: np.full(np.shape(p)[:-1], float(value)),
                float(value), float(value), {"value": float(value)})


def affine_roof(c0, c1):
    """``r(x) = c0 + c1 * x_1`` on base states in the unit box."""
    lo, hi = min(c0, c0 + c1), max(c0, c0 + c1)
    if not lo > 0:
        raise ParameterError("roof", "affine roof must stay strictly positive on [0, 1]")
    return Roof("affine", lambda p: c0 + c1 * p[..., 0], float(lo), float(hi),
                {"c0": float(c0), "c1": float(c1)})


def custom_roof(func, min_value, max_value):
    if not (min_value > 0 and max_value >= min_value):
        raise ParameterError("roof", "custom roof needs 0 < min_value <= max_value")
    return Roof("custom", func, float(min_value), float(max_value), {})


@dataclass(frozen=True)
class DriverSystem:
    kind: str
    state_dim: int
    is_flow: bool
    params: Mapping = field(default_factory=dict)
    base: DriverSystem | None = None
    roof: Roof | None = None

    @property
    def estimable(self):
        if self.kind == "pomeau-manneville":
            return self.params["alpha"] < PM_ESTIMABLE_ALPHA
        if self.kind == "suspension":
            return self.base.estimable
        return True

    @property
    def is_map(self):
        return self.kind in MAP_KINDS

    @property
    def dt_internal(self):
        return self.params.get("dt_internal")

    @property
    def lebesgue_invariant(self):
        return self.kind in ("doubling", "cat")

    def describe(self):
        out = {"kind": self.kind, **dict(self.params)}
        if self.kind == "suspension":
            out["base"] = self.base.describe()
            out["roof"] = {"kind": self.roof.kind, **dict(self.roof.params)}
        return out


def _real(spec, key, default=None):
    val = spec.get(key, default)
    if val is None:
        raise ParameterError(key, "required")
    try:
        val = float(val)
    except (TypeError, ValueError):
        raise ParameterError(key, f"expected a real number, got {val!r}") from None
    if not math.isfinite(val):
        raise ParameterError(key, "must be finite")
    return val


def make_roof(spec):
    if isinstance(spec, Roof):
        return spec
    if isinstance(spec, (int, float)):
        return constant_roof(float(spec))
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return constant_roof(_real(spec, "value", 1.0))
    if kind == "affine":
        return affine_roof(_real(spec, "c0"), _real(spec, "c1"))
    if kind == "custom":
        return custom_roof(spec["func"], _real(spec, "min_value"), _real(spec, "max_value"))
    raise ParameterError("roof.kind", f"unknown roof kind {kind!r}")


ALIASES = {"doubling-map": "doubling", "cat-map": "cat", "pm": "pomeau-manneville"}


def make_system(spec):
    """Build a :class:`DriverSystem` from a mapping such as ``{"kind": "doubling"}``.

    Pomeau-Manneville maps with ``alpha >= 1/2`` are constructed but report
    ``estimable == False``; the estimators refuse them.
    """
    if isinstance(spec, DriverSystem):
        return spec
    kind = ALIASES.get(spec.get("kind"), spec.get("kind"))
    if kind == "doubling":
        return DriverSystem("doubling", 1, False)
    if kind == "cat":
        return DriverSystem("cat", 2, False)
    if kind == "pomeau-manneville":
        alpha = _real(spec, "alpha")
        if not 0.0 <= alpha < 1.0:
            raise ParameterError("alpha", f"must lie in [0, 1), got {alpha}")
        return DriverSystem("pomeau-manneville", 1, False, {"alpha": alpha})
    if kind == "lorenz":
        params = {
            "sigma": _real(spec, "sigma", 10.0),
            "rho": _real(spec, "rho", 28.0),
            "beta": _real(spec, "beta", 8.0 / 3.0),
            "dt_internal": _real(spec, "dt_internal", 0.005),
        }
        if not 0.0 < params["dt_internal"] <= 0.05:
            raise ParameterError("dt_internal", "must lie in (0, 0.05]")
        return DriverSystem("lorenz", 3, True, params)
    if kind == "suspension":
        if "base" not in spec:
            raise ParameterError("base", "suspension needs a base map")
        base = make_system(spec["base"])
        if not base.is_map:
            raise ParameterError("base", "suspension base must be a map")
        roof = make_roof(spec.get("roof", 1.0))
        return DriverSystem("suspension", base.state_dim + 1, True, {}, base, roof)
    raise ParameterError("kind", f"unknown driver kind {kind!r}")


# ---------------------------------------------------------------------------
# single-state dynamics


@dataclass(frozen=True)
class DriverState:
    point: np.ndarray
    u: float | None = None

    def as_array(self):
        if self.u is None:
            return np.asarray(self.point, dtype=float)
        return np.append(np.asarray(self.point, dtype=float), self.u)


def _check_point(system, point):
    point = np.asarray(point, dtype=float).reshape(-1)
    if system.kind in ("doubling", "pomeau-manneville", "cat"):
        if point.size != system.state_dim or np.any(point < 0) or np.any(point > 1):
            raise ParameterError("state.point", f"outside the {system.kind} domain")
    return point


def map_points(system, points):
    """Apply one map iteration to an array of points (last axis = state)."""
    p = np.asarray(points, dtype=float)
    if system.kind == "doubling":
        return np.mod(2.0 * p, 1.0)
    if system.kind == "pomeau-manneville":
        a = system.params["alpha"]
        return np.where(p < 0.5, p * (1.0 + 2.0 ** a * p ** a), 2.0 * p - 1.0)
    if system.kind == "cat":
        x, y = p[..., 0], p[..., 1]
        return np.stack([np.mod(2.0 * x + y, 1.0), np.mod(x + y, 1.0)], axis=-1)
    raise WrongKindError(f"{system.kind} is not a map")


def step(system, state):
    """One map iteration; on a suspension, flow to the next roof crossing."""
    if system.kind == "suspension":
        x = map_points(system.base, _check_point(system.base, state.point))
        return DriverState(x, 0.0)
    if system.is_flow:
        raise WrongKindError(f"step() needs a map, got flow {system.kind!r}")
    return DriverState(map_points(system, _check_point(system, state.point)))


def _lorenz_advance(system, state, dt):
    p = system.params
    sub = max(1, math.ceil(dt / p["dt_internal"] - 1e-12))
    buf = np.array(state, dtype=float).reshape(1, 3)
    _, bad = kernels.lorenz_orbit(buf, dt / sub, sub, 1, p["sigma"], p["rho"], p["beta"], False)
    if bad >= 0:
        raise NonFiniteStateError("Lorenz integration produced a non-finite state")
    return buf[0]


def flow_step(system, state, dt):
    """Advance a flow by time ``dt``.

    Lorenz uses fixed-step RK4 with ``ceil(dt / dt_internal)`` equal substeps so
    the step lands exactly on ``t + dt``.  A suspension raises the height and
    applies the base map at every roof crossing.
    """
    if not dt > 0:
        raise ParameterError("dt", "must be positive")
    if system.kind == "lorenz":
        return DriverState(_lorenz_advance(system, state.point, dt))
    if system.kind == "suspension":
        x = _check_point(system.base, state.point)
        u = float(state.u) + dt
        r = float(system.roof(x))
        while u >= r:
            u -= r
            x = map_points(system.base, x)
            r = float(system.roof(x))
        return DriverState(x, u)
    raise WrongKindError(f"flow_step() needs a flow, got map {system.kind!r}")


def lap_number(system, state, t):
    """Number of roof crossings completed by the suspension flow within time t."""
    if system.kind != "suspension":
        raise WrongKindError("lap numbers are defined for suspensions only")
    x = np.asarray(state.point, dtype=float)
    elapsed = float(system.roof(x)) - float(state.u)
    laps = 0
    while elapsed <= t:
        laps += 1
        x = map_points(system.base, x)
        elapsed += float(system.roof(x))
    return laps


# ---------------------------------------------------------------------------
# seeded orbit streams


def as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (tuple, list)):
        return np.random.SeedSequence(int(seed[0]), spawn_key=tuple(int(s) for s in seed[1:]))
    return np.random.SeedSequence(int(seed))


def trajectory_seeds(master, count, start=0):
    """Per-trajectory seed sequences, independent of how many are requested."""
    master = as_seed_sequence(master)
    return [np.random.SeedSequence(master.entropy, spawn_key=master.spawn_key + (i,))
            for i in range(start, start + count)]


class _BitSource:
    """Per-trajectory raw 64-bit words, consumed as one bit per map step."""

    def __init__(self, rngs):
        self.rngs = rngs
        self.words = np.zeros((len(rngs), 0), dtype=np.uint64)
        self.offset = 0

    def take(self, nbits):
        need = -(-(self.offset + nbits) // 64) + 1
        if self.words.shape[1] < need:
            extra = max(need - self.words.shape[1], 64)
            fresh = np.stack([r.bit_generator.random_raw(extra).astype(np.uint64)
                              for r in self.rngs])
            self.words = np.concatenate([self.words, fresh], axis=1)
        w, off = self.words, self.offset
        nwords = -(-nbits // 64)
        if off == 0:
            out = w[:, :nwords]
        else:
            lo = w[:, :nwords] >> np.uint64(off)
            hi = w[:, 1:nwords + 1] << np.uint64(64 - off)
            out = lo | hi
        consumed = self.offset + nbits
        self.words = w[:, consumed // 64:]
        self.offset = consumed % 64
        return np.ascontiguousarray(out)


class MapStream:
    """Batch of map orbits; ``take(k)`` returns points of shape (k, M, state_dim)."""

    def __init__(self, system, lattice, rngs):
        self.system = system
        self.lattice = lattice
        self.bits = _BitSource(rngs) if system.kind != "cat" else None
        self.rngs = rngs

    @property
    def size(self):
        return self.lattice.shape[0]

    def _run(self, k, record):
        kind = self.system.kind
        if kind == "doubling":
            out = kernels.doubling_orbit(self.lattice, self.bits.take(k), k, record)
            return None if out is None else out[:, :, None]
        if kind == "pomeau-manneville":
            out = kernels.pm_orbit(self.lattice, self.bits.take(k), k,
                                   self.system.params["alpha"], record)
            return None if out is None else out[:, :, None]
        return kernels.cat_orbit(self.lattice, k, record)

    def take(self, k):
        return self._run(k, True)

    def advance(self, k):
        if k > 0:
            self._run(k, False)

    def states(self):
        if self.system.kind == "pomeau-manneville":
            return self.lattice[:, None].copy()
        pts = self.lattice.astype(np.float64) / TWO53
        return pts.reshape(self.size, -1)


class LorenzStream:
    """Batch of Lorenz trajectories sampled every ``h`` time units."""

    def __init__(self, system, states, h):
        self.system = system
        self.state = np.ascontiguousarray(states, dtype=float)
        dt_int = system.params["dt_internal"]
        self.substeps = max(1, math.ceil(h / dt_int - 1e-12))
        self.h = h
        self.step_h = h / self.substeps

    @property
    def size(self):
        return self.state.shape[0]

    def _run(self, k, record):
        p = self.system.params
        out, bad = kernels.lorenz_orbit(self.state, self.step_h, self.substeps, k,
                                        p["sigma"], p["rho"], p["beta"], record)
        if bad >= 0:
            raise NonFiniteStateError(f"Lorenz trajectory {bad} became non-finite")
        return out

    def take(self, k):
        return self._run(k, True)

    def advance(self, k):
        if k > 0:
            self._run(k, False)

    def states(self):
        return self.state.copy()


class SuspensionStream:
    """Batch of suspension-flow trajectories sampled every ``h`` time units."""

    def __init__(self, system, base_streams, u0, h):
        self.system = system
        self.base_streams = base_streams
        self.h = h
        self.count = 0
        self.laps_done = np.zeros(len(base_streams), dtype=np.int64)
        self.queues = []
        for bs, u in zip(base_streams, u0):
            x = bs.take(1)[:, 0, :]
            r = self.system.roof(x)
            self.queues.append([x, np.array([-float(u)]), r])

    @property
    def size(self):
        return len(self.base_streams)

    def _extend(self, m, until):
        xs, starts, roofs = self.queues[m]
        rmin = self.system.roof.min_value
        while starts[-1] + roofs[-1] <= until:
            nlap = int((until - starts[-1]) / rmin) + 2
            new = self.base_streams[m].take(nlap)[:, 0, :]
            rn = self.system.roof(new)
            st = starts[-1] + roofs[-1] + np.concatenate([[0.0], np.cumsum(rn[:-1])])
            xs = np.concatenate([xs, new])
            starts = np.concatenate([starts, st])
            roofs = np.concatenate([roofs, rn])
        self.queues[m] = [xs, starts, roofs]

    def take(self, k):
        times = (self.count + np.arange(k)) * self.h
        self.count += k
        dim = self.system.base.state_dim
        out = np.empty((k, self.size, dim + 1))
        for m in range(self.size):
            self._extend(m, times[-1])
            xs, starts, roofs = self.queues[m]
            idx = np.searchsorted(starts, times, side="right") - 1
            out[:, m, :dim] = xs[idx]
            out[:, m, dim] = times - starts[idx]
            keep = idx[-1]
            self.laps_done[m] += keep
            self.queues[m] = [xs[keep:], starts[keep:], roofs[keep:]]
        return out

    def advance(self, k):
        # Sample positions are cheap relative to the flow itself.
        while k > 0:
            c = min(k, 1 << 16)
            self.take(c)
            k -= c

    def states(self):
        t = self.count * self.h
        out = []
        for m in range(self.size):
            self._extend(m, t)
            xs, starts, _ = self.queues[m]
            i = np.searchsorted(starts, t, side="right") - 1
            out.append(np.append(xs[i], t - starts[i]))
        return np.array(out)


def _uniform_lattice(rngs, dim):
    return np.array([r.integers(0, 1 << 53, size=dim, dtype=np.uint64) for r in rngs],
                    dtype=np.uint64).reshape(len(rngs), dim)


def _map_stream(system, seeds, burn_in, states=None):
    rngs = [np.random.default_rng(s) for s in seeds]
    if states is None:
        lattice = _uniform_lattice(rngs, system.state_dim)
    else:
        lattice = np.floor(np.asarray(states, dtype=float).reshape(len(seeds), -1) * TWO53)
        lattice = np.clip(lattice, 0, TWO53 - 1).astype(np.uint64)
    if system.kind == "pomeau-manneville":
        lattice = np.ascontiguousarray(lattice[:, 0].astype(np.float64) / TWO53)
    elif system.kind == "doubling":
        lattice = np.ascontiguousarray(lattice[:, 0])
    else:
        lattice = np.ascontiguousarray(lattice)
    stream = MapStream(system, lattice, rngs)
    stream.advance(burn_in)
    return stream


def open_stream(system, seeds, burn_in=None, h=None, states=None):
    """Start one stream per seed from the invariant-measure sampler.

    ``burn_in`` counts map steps for maps, base-map steps for suspensions and
    ``dt_internal`` steps for Lorenz.  ``h`` is the sampling interval of flows.
    """
    if burn_in is None:
        burn_in = default_burn_in(system)
    if burn_in < 0:
        raise ParameterError("burn_in", "must be non-negative")
    seeds = [as_seed_sequence(s) for s in seeds]
    if system.is_map:
        return _map_stream(system, seeds, burn_in, states)
    if h is None or not h > 0:
        raise ParameterError("h", "flows need a positive sampling interval")
    if system.kind == "lorenz":
        if states is None:
            rngs = [np.random.default_rng(s) for s in seeds]
            states = np.array([LORENZ_BOX[:, 0] + (LORENZ_BOX[:, 1] - LORENZ_BOX[:, 0])
                               * r.random(3) for r in rngs])
        warm = LorenzStream(system, states, system.params["dt_internal"])
        warm.advance(burn_in)
        return LorenzStream(system, warm.states(), h)
    # suspension: base orbit, then an exact draw from mu x Leb / rbar given x ~ mu
    roof = system.roof
    base_streams, u0 = [], []
    for s in seeds:
        rng_seed, base_seed = s.spawn(2)
        rng = np.random.default_rng(rng_seed)
        if states is not None:
            st = np.asarray(states[len(base_streams)], dtype=float)
            bs = _map_stream(system.base, [base_seed], 0, st[None, :-1])
            base_streams.append(bs)
            u0.append(float(st[-1]))
            continue
        bs = _map_stream(system.base, [base_seed], burn_in)
        while True:
            x = bs.states()
            if rng.random() * roof.max_value < float(roof(x)[0]):
                break
            # move far enough that the next trial is (nearly) independent
            bs.advance(REJECTION_GAP)
        base_streams.append(bs)
        u0.append(rng.random() * float(roof(x)[0]))
    return SuspensionStream(system, base_streams, u0, h)


def default_burn_in(system):
    if system.kind == "lorenz":
        return int(round(DEFAULT_LORENZ_BURN_IN_TIME / system.params["dt_internal"]))
    return DEFAULT_MAP_BURN_IN


def default_sample_dt(system):
    if system.kind == "lorenz":
        return system.params["dt_internal"]
    if system.kind == "suspension":
        return 0.05 * system.roof.min_value
    return None


def sample_initial(system, seed, burn_in=None):
    """Uniform draw in the reference box evolved by ``burn_in`` steps."""
    h = default_sample_dt(system)
    stream = open_stream(system, [seed], burn_in, h)
    pt = stream.states()[0]
    if system.kind == "suspension":
        return DriverState(pt[:-1], float(pt[-1]))
    return DriverState(pt)


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observable:
    """Vector observable ``v(points) = raw(points) - centering_offset``.

    ``func`` maps an array of states (last axis = state) to values with a
    trailing axis of length ``dim_e``.
    """

    dim_e: int
    func: Callable[[np.ndarray], np.ndarray]
    centering_offset: np.ndarray
    centering_mode: str = "analytic"
    name: str = "custom"
    params: Mapping = field(default_factory=dict)
    centering_meta: Mapping = field(default_factory=dict)

    def raw(self, points):
        return np.asarray(self.func(np.asarray(points, dtype=float)), dtype=float)

    def __call__(self, points):
        return self.raw(points) - self.centering_offset

    def scaled(self, c):
        f, off = self.func, self.centering_offset
        return Observable(self.dim_e, lambda p: c * f(p), c * off, self.centering_mode,
                          f"{c}*{self.name}", self.params, self.centering_meta)

    def with_offset(self, offset):
        off = np.broadcast_to(np.asarray(offset, dtype=float), (self.dim_e,)).copy()
        return Observable(self.dim_e, self.func, off, "analytic", self.name, self.params)

    def describe(self):
        return {"name": self.name, **dict(self.params), "centering_mode": self.centering_mode,
                "centering_offset": self.centering_offset.tolist(), **dict(self.centering_meta)}


def observable(func, dim_e, offset=0.0, name="custom", params=None):
    off = np.broadcast_to(np.asarray(offset, dtype=float), (dim_e,)).copy()
    return Observable(dim_e, func, off, "analytic", name, params or {})


def trig_observable(freqs, phase="cos"):
    """``v_k(x) = cos(2 pi f_k x)`` on the first coordinate; mean zero for Lebesgue."""
    freqs = np.asarray(freqs, dtype=float)
    trig = np.cos if phase == "cos" else np.sin

    def f(p):
        return trig(2.0 * np.pi * p[..., 0:1] * freqs)

    return observable(f, len(freqs), 0.0, "trig", {"freqs": freqs.tolist(), "phase": phase})


def fourier_observable(components):
    """Trigonometric polynomials in the first coordinate.

    ``components[k]`` is a list of ``[coef, freq, "cos" | "sin"]`` terms and
    ``v_k(x) = sum coef * trig(2 pi freq x)``.  Non-zero integer frequencies
    give mean zero for Lebesgue measure.
    """
    comps = [[(float(c), float(f), str(ph)) for c, f, ph in terms] for terms in components]
    for terms in comps:
        for _, _, ph in terms:
            if ph not in ("cos", "sin"):
                raise ParameterError("phase", f"must be 'cos' or 'sin', got {ph!r}")

    def f(p):
        x = 2.0 * np.pi * p[..., 0]
        out = np.zeros(np.shape(p)[:-1] + (len(comps),))
        for k, terms in enumerate(comps):
            for c, fr, ph in terms:
                out[..., k] += c * (np.cos(fr * x) if ph == "cos" else np.sin(fr * x))
        return out

    return observable(f, len(comps), 0.0, "fourier",
                      {"components": [[list(t) for t in terms] for terms in comps]})


def torus_trig_observable(wavevectors):
    """``v_k(z) = cos(2 pi <k, z>)`` on the 2-torus."""
    K = np.asarray(wavevectors, dtype=float)

    def f(p):
        return np.cos(2.0 * np.pi * (p[..., :2] @ K.T))

    return observable(f, K.shape[0], 0.0, "torus_trig", {"wavevectors": K.tolist()})


def coordinate_observable(indices):
    idx = list(indices)

    def f(p):
        return p[..., idx]

    return observable(f, len(idx), 0.0, "coordinates", {"indices": idx})


def fiber_observable(base_obs):
    """Lift a base-map observable to a suspension: ``v(x, u) = g(x)``."""
    g = base_obs

    def f(p):
        return g(p[..., :-1])

    return Observable(g.dim_e, f, np.zeros(g.dim_e), "analytic", f"fiber({g.name})",
                      {"base": g.describe()})


def constant_observable(value, dim_e=1):
    c = np.broadcast_to(np.asarray(value, dtype=float), (dim_e,)).copy()
    return observable(lambda p: np.broadcast_to(c, np.shape(p)[:-1] + (dim_e,)), dim_e,
                      0.0, "constant", {"value": c.tolist()})


def zero_observable(dim_e=1):
    return constant_observable(0.0, dim_e)


def make_observable(spec):
    """Build a built-in observable from a mapping with key ``kind``."""
    kind = spec.get("kind")
    if kind == "trig":
        return trig_observable(spec["freqs"], spec.get("phase", "cos"))
    if kind == "fourier":
        return fourier_observable(spec["components"])
    if kind == "torus_trig":
        return torus_trig_observable(spec["wavevectors"])
    if kind == "coordinates":
        return coordinate_observable(spec["indices"])
    if kind == "fiber":
        return fiber_observable(make_observable(spec["base"]))
    if kind == "constant":
        return constant_observable(spec["value"], spec.get("dim_e", 1))
    if kind == "zero":
        return zero_observable(spec.get("dim_e", 1))
    raise ParameterError("observable.kind", f"unknown observable kind {kind!r}")


def orbit_average(system, obs_func, n_samples, seed, n_batches=50, burn_in=None, raw=True):
    """Birkhoff average and batch-means standard error along one orbit."""
    h = default_sample_dt(system)
    stream = open_stream(system, [seed], burn_in, h)
    per = n_samples // n_batches
    means = []
    for _ in range(n_batches):
        pts = stream.take(per)[:, 0, :]
        means.append(np.mean(obs_func(pts), axis=0))
    means = np.array(means)
    return means.mean(axis=0), means.std(axis=0, ddof=1) / math.sqrt(n_batches)


def center_observable(system, raw, n_samples=1_000_000, seed=0, mode="empirical"):
    """Return ``raw`` with a centering offset.

    Analytic mode keeps the supplied offset.  Empirical mode replaces it by the
    Birkhoff average of the raw values over one burned-in orbit.
    """
    if mode == "analytic":
        return raw
    if n_samples < 100_000:
        raise InsufficientSamplesError(f"empirical centering needs n_samples >= 1e5, got {n_samples}")
    mean, se = orbit_average(system, raw.raw, n_samples, seed)
    return Observable(raw.dim_e, raw.func, mean, "empirical", raw.name, raw.params,
                      {"n_samples": int(n_samples), "seed": str(seed),
                       "offset_stderr": se.tolist()})
