from functools import lru_cache

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from concatmwpm.circuit import apply_noise, build_memory_circuit
from concatmwpm.decoder_cl import ConcatMatchingDecoderCL, build_context, decode
from concatmwpm.dem import DetectorErrorModel, DetectorInfo, ErrorMechanism, extract_dem
from concatmwpm.lattice import Color
from concatmwpm.montecarlo import count_failures, sample


@lru_cache(maxsize=None)
def _dem(d, T, p=1e-3):
    return extract_dem(apply_noise(build_memory_circuit(d, T), p))


def _single_fault_rows(dem):
    ev = np.zeros((len(dem), dem.num_detectors), dtype=np.uint8)
    obs = np.zeros((len(dem), dem.num_observables), dtype=np.uint8)
    for i, m in enumerate(dem.mechanisms):
        ev[i, list(m.detectors)] = 1
        obs[i, list(m.observables)] = 1
    return ev, obs


def _tiny_dem():
    dets = tuple(DetectorInfo(f, "Z", 0, c) for f, c in enumerate(Color))
    return DetectorErrorModel((ErrorMechanism(0.01, (0,), (0,)),), dets)


def test_empty_events_give_no_correction():
    dec = ConcatMatchingDecoderCL().fit(_dem(3, 2))
    res = dec.decode(np.zeros(dec.dem_.num_detectors, dtype=np.uint8))
    assert res.correction == 0
    assert set(res.weights.values()) == {0.0}
    assert res.chosen is Color.R


def test_single_mechanism_dem_flips_for_every_color():
    # a lone red detector tied to the observable; each color must flip it
    dec = ConcatMatchingDecoderCL().fit(_tiny_dem())
    res = dec.decode([1, 0, 0])
    assert res.corrections == {Color.R: 1, Color.G: 1, Color.B: 1}
    w = np.log(0.99 / 0.01)
    for c in Color:
        assert res.weights[c] == pytest.approx(w, abs=1e-3)


@pytest.mark.parametrize("d,T", [(5, 5), (7, 3)])
def test_every_single_fault_is_corrected(d, T):
    dem = _dem(d, T)
    ev, obs = _single_fault_rows(dem)
    pred = ConcatMatchingDecoderCL().fit(dem).predict(ev)
    assert np.array_equal(pred, obs)


def test_d3_single_fault_misses_are_ambiguous():
    # at d=3, T=1 any miss has a twin mechanism with the same detectors
    dem = _dem(3, 1)
    ev, obs = _single_fault_rows(dem)
    pred = ConcatMatchingDecoderCL().fit(dem).predict(ev)
    by_key = {}
    for m in dem.mechanisms:
        by_key.setdefault(m.detectors, set()).add(m.observables)
    for i in np.flatnonzero((pred != obs).any(axis=1)):
        assert len(by_key[dem.mechanisms[i].detectors]) == 2


def test_noiseless_circuit_is_rejected():
    with pytest.raises(ValueError):
        ConcatMatchingDecoderCL().fit(build_memory_circuit(3, 1))
    with pytest.raises(ValueError):
        build_context(build_memory_circuit(3, 1), p=0.0)


def test_d3_low_noise_success_rate():
    dem = _dem(3, 1, 1e-4)
    dec = ConcatMatchingDecoderCL().fit(dem)
    batch = sample(dem, 100_000, seed=11)
    assert count_failures(dec, batch) / 100_000 <= 1e-3


@pytest.mark.parametrize("d", [3, 5, 7])
def test_random_shots_always_decode(d):
    dem = _dem(d, 3, 5e-3)
    dec = ConcatMatchingDecoderCL().fit(dem)
    batch = sample(dem, 3000, seed=d)
    corr, w, chosen = dec.decode_batch(batch.events)
    assert corr.shape == (3, 3000, 1)
    assert np.isfinite(w).all() and (w >= 0).all()
    assert (w[chosen, np.arange(3000)] == w.min(axis=0)).all()


def test_failure_rate_grows_with_noise():
    rates = []
    for p in (1e-4, 1e-3):
        dem = _dem(5, 5, p)
        dec = ConcatMatchingDecoderCL().fit(dem)
        rates.append(count_failures(dec, sample(dem, 20_000, seed=2)) / 20_000)
    assert rates[0] < rates[1]


def test_deterministic_and_chunk_independent():
    dem = _dem(5, 2, 3e-3)
    ev = sample(dem, 1000, seed=4).events
    a = ConcatMatchingDecoderCL().fit(dem)
    b = ConcatMatchingDecoderCL(chunk_size=77).fit(dem)
    assert np.array_equal(a.predict(ev), a.predict(ev))
    ra, rb = a.decode_batch(ev), b.decode_batch(ev)
    for x, y in zip(ra, rb):
        assert np.array_equal(x, y)


def test_stage1_weight_switch_only_adds():
    dem = _dem(5, 2, 3e-3)
    ev = sample(dem, 500, seed=5).events
    _, w0, _ = ConcatMatchingDecoderCL().fit(dem).decode_batch(ev)
    _, w1, _ = ConcatMatchingDecoderCL(stage1_weight=True).fit(dem).decode_batch(ev)
    assert (w1 >= w0).all()
    assert (w1 > w0).any()


def test_backends_agree_stage_by_stage():
    dem = _dem(3, 2, 3e-3)
    ev = sample(dem, 200, seed=6).events
    a = ConcatMatchingDecoderCL().fit(dem)
    b = ConcatMatchingDecoderCL(backend="networkx").fit(dem)
    for c in Color:
        sa, sb = a.stages_[c], b.stages_[c]
        other = ev * ~sa.own
        s1a, s1b = sa.m1.solve_batch(other), sb.m1.solve_batch(other)
        assert np.array_equal(s1a.astype(np.int64) @ sa.w1, s1b.astype(np.int64) @ sb.w1)
        s2in = np.concatenate([ev * sa.own, s1a.astype(np.uint8)], axis=1)
        assert np.array_equal(sa.m2.solve_batch(s2in).astype(np.int64) @ sa.w2, sb.m2.solve_batch(s2in).astype(np.int64) @ sb.w2)


def test_functional_api_and_estimator_conventions():
    ctx = build_context(build_memory_circuit(3, 1), p=1e-3)
    ev = np.zeros(ctx.dem_.num_detectors, dtype=np.uint8)
    assert decode(ctx, ev).correction == 0
    est = ConcatMatchingDecoderCL(colors="GB", stage1_weight=True)
    assert clone(est).get_params() == est.get_params()
    with pytest.raises(NotFittedError):
        est.predict(ev)
    est.fit(ctx.dem_)
    assert est.colors_ == (Color.G, Color.B)
    with pytest.raises(ValueError):
        est.predict(np.zeros(ctx.dem_.num_detectors + 1))
    with pytest.raises(TypeError):
        ConcatMatchingDecoderCL().fit("not a model")
