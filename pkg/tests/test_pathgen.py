import numpy as np
import pytest

from homogenize import drivers, pathgen
from homogenize.drivers import default_burn_in, open_stream
from homogenize.errors import CapExceededError, OffGridError, WrongKindError


def _brute(v, n):
    """Brute-force double sums at every grid point ``k / n``."""
    K, e = v.shape
    W = np.zeros((K + 1, e))
    WW = np.zeros((K + 1, e, e))
    for k in range(1, K + 1):
        W[k] = v[:k].sum(axis=0) / np.sqrt(n)
        acc = np.zeros((e, e))
        for j in range(k):
            for i in range(j):
                acc += np.outer(v[i], v[j])
        WW[k] = acc / n
    return W, WW


def _orbit_values(system, obs, seed, K):
    st = open_stream(system, [drivers.as_seed_sequence(seed)], default_burn_in(system))
    return obs(st.take(K)[:, 0, :])


def test_discrete_path_matches_brute_force(doubling, two_component):
    n = 8
    path = pathgen.discrete_path(doubling, two_component, n, 1.0, seed=3)
    W, WW = _brute(_orbit_values(doubling, two_component, 3, n), n)
    np.testing.assert_allclose(path.W, W, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(path.WW, WW, rtol=1e-12, atol=1e-15)


def test_streaming_matches_brute_force_k_1000(cat):
    obs = drivers.torus_trig_observable([[1, 0], [1, 1]])
    n = 100
    path = pathgen.discrete_path(cat, obs, n, 3.0, seed=4)
    v = _orbit_values(cat, obs, 4, 300)
    # vectorised brute force via prefix sums of outer products
    cum = np.vstack([np.zeros((1, 2)), np.cumsum(v, axis=0)])
    WW = np.zeros((301, 2, 2))
    for k in range(1, 301):
        WW[k] = np.einsum("ib,ig->bg", cum[:k], v[:k]) / n
    scale = 1 + np.abs(WW).max()
    assert np.abs(path.WW - WW).max() <= 1e-10 * scale


def test_scalar_identity(doubling):
    obs = drivers.trig_observable([1])
    n = 200
    path = pathgen.discrete_path(doubling, obs, n, 2.0, seed=5)
    v = _orbit_values(doubling, obs, 5, 400)[:, 0]
    qv = np.concatenate([[0.0], np.cumsum(v**2)]) / n
    np.testing.assert_allclose(path.WW[:, 0, 0], 0.5 * (path.W[:, 0] ** 2 - qv), atol=1e-12)


def test_zero_observable(doubling):
    path = pathgen.discrete_path(doubling, drivers.zero_observable(2), 50, 1.0, seed=1)
    assert not path.W.any() and not path.WW.any()
    susp = drivers.make_system({"kind": "suspension", "base": {"kind": "doubling"}})
    fp = pathgen.flow_path(susp, drivers.zero_observable(1), 10, 1.0, 0.1, seed=1)
    assert not fp.W.any() and not fp.WW.any()


def test_increment_and_chen(doubling, two_component):
    path = pathgen.discrete_path(doubling, two_component, 100, 1.0, seed=7)
    w, ww = pathgen.increment(path, 0.3, 0.3)
    assert not w.any() and not ww.any()
    w, ww = pathgen.increment(path, 0.0, 0.5)
    np.testing.assert_array_equal(w, path.at(0.5)[0])
    np.testing.assert_array_equal(ww, path.at(0.5)[1])
    assert not pathgen.chen_defect(path, 0.2, 0.2, 0.7).any()
    assert not pathgen.chen_defect(path, 0.2, 0.7, 0.7).any()
    with pytest.raises(OffGridError):
        pathgen.increment(path, 0.0, 0.505)
    with pytest.raises(OffGridError):
        pathgen.increment(path, 0.5, 0.2)


def test_wrong_kind_and_cap(doubling):
    lz = drivers.make_system({"kind": "lorenz"})
    with pytest.raises(WrongKindError):
        pathgen.discrete_path(lz, drivers.coordinate_observable([0]), 10, 1.0, seed=0)
    with pytest.raises(WrongKindError):
        pathgen.flow_path(doubling, drivers.trig_observable([1]), 10, 1.0, 0.1, seed=0)
    with pytest.raises(CapExceededError):
        pathgen.discrete_path(doubling, drivers.trig_observable([1]), 10**6, 10.0, seed=0,
                              max_steps=10**6)


def test_flow_path_telescopes_on_unit_roof(doubling):
    """With r = 1 and v constant on fibers, W at integer times is the base Birkhoff sum."""
    susp = drivers.make_system({"kind": "suspension", "base": {"kind": "doubling"}})
    g = drivers.trig_observable([1])
    n = 20
    fp = pathgen.flow_path(susp, drivers.fiber_observable(g), n, 1.0, 0.01, seed=9, burn_in=0)
    st = drivers.open_stream(susp, [drivers.as_seed_sequence(9)], 0, h=1.0)
    pts = st.take(n + 1)[:, 0, :]
    u0 = pts[0, -1]
    # time-integral over [k, k+1) spans the tail of one fiber and the head of the next
    vals = g(pts[:, :-1])[:, 0]
    integral = np.concatenate([[0.0], np.cumsum((1 - u0) * vals[:-1] + u0 * vals[1:])])
    # values jump at roof crossings, so the trapezoid error is O(quad_dt) per crossing
    W_int = fp.W[:: int(round(1 / 0.01)), 0]
    np.testing.assert_allclose(W_int, integral[: len(W_int)] / np.sqrt(n), atol=0.02)


def test_flow_quadrature_second_order():
    lz = drivers.make_system({"kind": "lorenz"})
    obs = drivers.coordinate_observable([0, 1])
    ends = []
    for h in (0.005, 0.0025, 0.00125):
        p = pathgen.flow_path(lz, obs, 1, 1.0, h, seed=12, record_steps=[int(round(1 / h))])
        ends.append(np.concatenate([p.W[-1], p.WW[-1].ravel()]))
    d1 = np.abs(ends[0] - ends[1]).max()
    d2 = np.abs(ends[1] - ends[2]).max()
    assert 3.5 <= d1 / d2 <= 4.5


def test_determinism_and_threads(doubling, two_component):
    a = pathgen.discrete_paths(doubling, two_component, 100, 1.0, 21, 50)
    b = pathgen.discrete_paths(doubling, two_component, 100, 1.0, 21, 50, threads=3)
    for p, q in zip(a, b):
        assert np.array_equal(p.WW, q.WW)
    single = pathgen.discrete_path(doubling, two_component, 100, 1.0,
                                   drivers.trajectory_seeds(21, 50)[17], record_steps=[100])
    assert np.array_equal(single.WW[-1], a[17].WW[-1])
