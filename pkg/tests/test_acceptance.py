"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
The whole suite takes a few minutes.
"""

from __future__ import annotations

import functools
import itertools
import sys

import numpy as np
import pytest

from concatmwpm.analysis import bias_interval, find_crossing, linear_fit
from concatmwpm.circuit import (
    OPTIMAL_SCHEDULE,
    build_memory_circuit,
    check_determinism,
    enumerate_schedules,
    reduce_by_symmetry,
)
from concatmwpm.decoder2d import (
    ConcatMatchingDecoder2D,
    decode,
    gen_concat_hard_error,
    gen_projection_hard_error,
    is_logical_failure,
    string_operator,
    syndrome_array,
    syndrome_from_error,
)
from concatmwpm.dem import DetectorErrorModel, DetectorInfo, ErrorMechanism, q1
from concatmwpm.lattice import Color, build_triangular
from concatmwpm.matching import MatchingInfeasibleError, solve
from concatmwpm.montecarlo import estimate_pfail, exhaustive_bitflip, run_bitflip, sample, sample_bitflip, wilson_interval

sys.path.insert(0, __file__.rsplit("/", 1)[0])
from test_matching import brute_force, random_graph  # noqa: E402


def criterion(n: int, text: str):
    """Print ``[PASS]`` or ``[FAIL]`` for criterion ``n`` around the test body.

    The body may return a short string of measured values for the line.
    """

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                info = fn(*args, **kwargs)
            except BaseException as e:
                _emit(f"[FAIL] criterion {n}: {text} ({type(e).__name__}: {str(e).splitlines()[0] if str(e) else ''})")
                raise
            _emit(f"[PASS] criterion {n}: {text}" + (f" ({info})" if info else ""))

        return run

    return wrap


RESULTS: list[str] = []


def _emit(line: str) -> None:
    # collected here and printed by the terminal summary hook in conftest.py
    RESULTS.append(line)


# -- 1, 2, 3, 4, 5: bit-flip noise -----------------------------------------------------

BITFLIP_DS = (5, 7, 9, 11)
BITFLIP_PS = np.linspace(0.06, 0.10, 9)


@criterion(1, "bit-flip crossings for d in 5..11 lie in [7.2%, 9.2%]")
def test_bitflip_crossings():
    curves = {d: [(p, run_bitflip(d, p, shots=100_000, seed=1000 + d).pfail) for p in BITFLIP_PS] for d in BITFLIP_DS}
    crossings = {(a, b): find_crossing(curves[a], curves[b]) for a, b in itertools.combinations(BITFLIP_DS, 2)}
    info = ", ".join(f"{a}/{b}: {x:.4f}" for (a, b), x in crossings.items())
    outside = {k: x for k, x in crossings.items() if not 0.072 <= x <= 0.092}
    assert not outside, f"crossings outside the window: {info}"
    return info


@criterion(2, "d=5 sub-threshold slope in [2.3, 3.2]")
def test_bitflip_slope():
    ps = np.geomspace(0.01, 0.03, 5)
    ys = [run_bitflip(5, p, shots=1_000_000, seed=2000 + i).pfail for i, p in enumerate(ps)]
    fit = linear_fit(np.log(ps), np.log(ys))
    assert 2.3 <= fit.slope <= 3.2, f"slope {fit.slope:.3f}"
    return f"slope {fit.slope:.3f}"


@criterion(3, "d=3 exhaustive (weight <= 3 + tail) agrees with Monte Carlo")
def test_exhaustive_vs_monte_carlo():
    parts = []
    for i, p in enumerate((0.005, 0.01, 0.02)):
        value, tail = exhaustive_bitflip(3, p, max_weight=3)
        est = run_bitflip(3, p, shots=1_000_000, seed=3000 + i)
        assert est.ci_lo <= value + tail and value <= est.ci_hi, f"p={p}: exact [{value:.3e}, {value + tail:.3e}] vs MC [{est.ci_lo:.3e}, {est.ci_hi:.3e}]"
        parts.append(f"p={p}: {value:.3e} vs {est.pfail:.3e}")
    return "; ".join(parts)


@criterion(4, "residual syndrome empty for 1e4 random errors at each d in 3..11, p=0.1")
def test_residual_syndrome_empty():
    for d in (3, 5, 7, 9, 11):
        lat = build_triangular(d)
        err = sample_bitflip(lat, 0.1, 10_000, seed=4000 + d)
        syn = syndrome_array(lat, err)
        pred = ConcatMatchingDecoder2D().fit(lat).predict(syn)
        bad = int(syndrome_array(lat, err ^ pred).any(axis=1).sum())
        assert bad == 0, f"d={d}: {bad} invalid corrections"


@criterion(5, "projection-type errors corrected at d=7, 11; weight-12 witness at d=25 fails")
def test_hard_errors():
    for d in (7, 11):
        lat = build_triangular(d)
        for c in Color:
            err = gen_projection_hard_error(lat, c)
            res = decode(lat, syndrome_from_error(lat, err))
            assert not is_logical_failure(lat, err, res.prediction), f"d={d}, color {c.letter}"
    lat, err = gen_concat_hard_error()
    syn = syndrome_from_error(lat, err)
    assert lat.distance == 25 and len(err) == 12
    # three strings of weight 4, one per color, each carrying one violated check
    fr, fg, fb = (next(iter(syn.of_color(c))) for c in Color)
    sg, sb = string_operator(lat, Color.G, fg), string_operator(lat, Color.B, fb)
    sr = err ^ sg ^ sb
    assert (len(sr), len(sg), len(sb)) == (4, 4, 4)
    assert syndrome_from_error(lat, sr).faces == frozenset({fr})
    res = decode(lat, syn)
    assert is_logical_failure(lat, err, res.prediction)
    return f"witness faces {(fr, fg, fb)}, decoder weights {sorted(res.weights.values())}"


# -- 6, 7: schedules -------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _valid7():
    return tuple(enumerate_schedules(7))


@criterion(6, "876 valid length-7 schedules, none shorter, 292 rotation orbits")
def test_schedule_counts():
    n7 = len(_valid7())
    short = {k: len(enumerate_schedules(k)) for k in range(1, 7)}
    orbits = len(reduce_by_symmetry(list(_valid7())))
    assert n7 == 876, n7
    assert not any(short.values()), short
    assert orbits == 292, orbits
    return f"{n7} / {sum(short.values())} / {orbits}"


@criterion(7, "noiseless determinism: all 876 schedules at d=3, optimal schedule at d=3..9")
def test_noiseless_determinism():
    for s in _valid7():
        assert check_determinism(build_memory_circuit(3, 2, s)) == [], str(s)
    for d in (3, 5, 7, 9):
        assert check_determinism(build_memory_circuit(d, 2, OPTIMAL_SCHEDULE)) == [], d


# -- 8, 9, 10: circuit-level noise -----------------------------------------------------


@criterion(8, "d=7, T=7, p=1e-3 failure rate in [1.0e-3, 1.9e-3] and bias consistent with 0")
def test_circuit_spot_value():
    est = estimate_pfail(7, 7, 1e-3, OPTIMAL_SCHEDULE, shots=200_000, seed=8)
    z, x = est.components["Z"], est.components["X"]
    lo, hi = bias_interval(z, x)
    info = f"pfail {est.pfail:.4e} [{est.ci_lo:.3e}, {est.ci_hi:.3e}], Z {z.pfail:.3e}, X {x.pfail:.3e}, bias in [{lo:.3f}, {hi:.3f}]"
    assert 1.0e-3 <= est.pfail <= 1.9e-3, info
    assert lo <= 0 <= hi, info
    return info


@criterion(9, "p=2e-3, T=4: pfail(d=3) > pfail(d=5) > pfail(d=7), disjoint 99% CIs")
def test_circuit_monotone():
    est = {d: estimate_pfail(d, 4, 2e-3, shots=100_000, seed=90 + d) for d in (3, 5, 7)}
    info = ", ".join(f"d={d}: {e.pfail:.3e}" for d, e in est.items())
    assert est[3].ci_lo > est[5].ci_hi, info
    assert est[5].ci_lo > est[7].ci_hi, info
    return info


@criterion(10, "single-qubit depolarizing marginals equal p/3 within 99% CI (1e6 samples, p=1e-2)")
def test_depolarizing_marginals():
    p, n = 1e-2, 1_000_000
    q = q1(p)
    # detector 0 is the X component and detector 1 the Z component of the sampled Pauli
    dets = (DetectorInfo(0, "Z", 0, Color.R), DetectorInfo(1, "Z", 0, Color.G))
    dem = DetectorErrorModel((ErrorMechanism(q, (0,)), ErrorMechanism(q, (0, 1)), ErrorMechanism(q, (1,))), dets, ())
    ev = sample(dem, n, seed=10).events
    counts = {"X": int(((ev[:, 0] == 1) & (ev[:, 1] == 0)).sum()),
              "Y": int(((ev[:, 0] == 1) & (ev[:, 1] == 1)).sum()),
              "Z": int(((ev[:, 0] == 0) & (ev[:, 1] == 1)).sum())}
    for P, k in counts.items():
        lo, hi = wilson_interval(k, n)
        assert lo <= p / 3 <= hi, f"{P}: {k / n:.5f} not within [{lo:.5f}, {hi:.5f}]"
    return ", ".join(f"{P} {k / n:.5f}" for P, k in counts.items()) + f" vs {p / 3:.5f}"


# -- 11: fits --------------------------------------------------------------------------


@criterion(11, "fits recover exact synthetic parameters to 1e-6")
def test_fit_exactness():
    from concatmwpm.analysis import extrapolate_threshold, fit_longterm, fit_subthreshold, longterm_model

    truth = dict(p_star=0.069, alpha=0.12, beta=0.49, eta=8.5)
    pts = [(d, p, truth["alpha"] * (p / truth["p_star"]) ** (truth["beta"] * (d - 17) + truth["eta"]))
           for d in range(9, 27, 2) for p in (0.01, 0.02, 0.03, 0.04)]
    fit = fit_subthreshold(pts)
    assert fit.d0 == 17
    for k, v in truth.items():
        assert getattr(fit, k) == pytest.approx(v, rel=1e-6), k
    lt = [(T, float(longterm_model(T, 0.00455, 1.01, 0.003))) for T in (1, 2, 4, 8, 16, 32)]
    p_lt, gamma = fit_longterm(lt)
    assert p_lt == pytest.approx(0.00455, rel=1e-6) and gamma == pytest.approx(1.01, rel=1e-6)
    ex = extrapolate_threshold([(d, 0.00455 + 0.02 / d) for d in (5, 7, 9, 11)])
    assert ex.threshold == pytest.approx(0.00455, rel=1e-6) and ex.A == pytest.approx(0.02, rel=1e-6)
    ps = np.linspace(0.06, 0.1, 9)
    cross = find_crossing([(p, 0.2 * (p / 0.082) ** 2) for p in ps], [(p, 0.2 * (p / 0.082) ** 4) for p in ps])
    assert cross == pytest.approx(0.082, abs=1e-9)
    return f"p*={fit.p_star:.6g}, p_LT={p_lt:.6g}, gamma={gamma:.6g}"


# -- 12: reproducibility ---------------------------------------------------------------


@criterion(12, "identical seeds give byte-identical CSV and DEM output across runs and worker counts")
def test_reproducibility(tmp_path, monkeypatch):
    from concatmwpm.cli import main

    sim = ["simulate", "--mode", "circuit", "--d", "3,5", "--T", "2", "--p", "2e-3,4e-3", "--shots", "6000", "--seed", "12"]
    bf = ["simulate", "--mode", "bitflip", "--d", "5", "--p", "0.05:0.1:3", "--shots", "9000", "--seed", "12"]
    dem = ["export-dem", "--d", "5", "--T", "3", "--p", "1e-3"]
    outputs = []
    for workers in ("1", "3", "1"):
        monkeypatch.setenv("CONCATMWPM_WORKERS", workers)
        files = []
        for i, argv in enumerate((sim, bf, dem)):
            path = tmp_path / f"{workers}-{len(outputs)}-{i}"
            assert main([*argv, "--out", str(path)]) == 0
            files.append(path.read_bytes())
        outputs.append(files)
    assert outputs[0] == outputs[1] == outputs[2]


# -- 13: matching ----------------------------------------------------------------------


@criterion(13, "1000 random small graphs: matching weight equals brute force")
def test_matching_oracle():
    rng = np.random.default_rng(13)
    feasible = 0
    for _ in range(1000):
        graph, defects = random_graph(rng)
        want = brute_force(graph, defects)
        for backend in ("pymatching", "networkx"):
            if want is None:
                with pytest.raises(MatchingInfeasibleError):
                    solve(graph, defects, backend=backend)
                continue
            got = solve(graph, defects, backend=backend).total_weight
            assert got == pytest.approx(want, abs=1e-9), (backend, defects)
        feasible += want is not None
    return f"{feasible} feasible instances"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
