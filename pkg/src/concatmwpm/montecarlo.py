"""Sampling and logical failure rate estimation.

Randomness is counter based: shots are grouped in fixed blocks of
``BLOCK_SIZE`` and block ``b`` of stream ``s`` draws from a Philox generator
seeded with ``SeedSequence([seed, *s, b])``.  Any shot range can therefore be
regenerated on its own, and the result never depends on how blocks are
spread over workers.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.stats import binomtest

from .circuit import OPTIMAL_SCHEDULE, CnotSchedule, apply_noise, build_memory_circuit, swap_schedule_parts
from .decoder2d import ConcatMatchingDecoder2D
from .decoder_cl import ConcatMatchingDecoderCL
from .dem import DetectorErrorModel, extract_dem
from .lattice import ColorLattice, build_triangular

__all__ = [
    "BLOCK_SIZE",
    "CSV_COLUMNS",
    "ShotBatch",
    "FailureEstimate",
    "wilson_interval",
    "sample",
    "count_failures",
    "estimate_pfail",
    "run_bitflip",
    "exhaustive_bitflip",
    "estimate_rows",
    "write_csv",
    "read_csv",
    "write_events",
    "read_events",
]

BLOCK_SIZE = 4096
CONFIDENCE = 0.99
DEFAULT_MAX_SHOTS = 10**8
DEFAULT_MIN_SHOTS = 10**4
CSV_COLUMNS = ("d", "T", "p", "schedule", "basis", "shots", "failures", "pfail", "ci_lo", "ci_hi", "seed")


def _rng(seed: int, stream: tuple, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *stream, int(block)])))


def default_workers() -> int:
    """Worker count from ``CONCATMWPM_WORKERS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("CONCATMWPM_WORKERS", "1")))
    except ValueError:
        return 1


def _map_blocks(fn, blocks, workers):
    if workers <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def _block_ranges(start: int, shots: int):
    """(block, lo, hi) pieces covering shots ``start .. start + shots``."""
    out = []
    end = start + shots
    b = start // BLOCK_SIZE
    while b * BLOCK_SIZE < end:
        lo = max(start, b * BLOCK_SIZE) - b * BLOCK_SIZE
        hi = min(end, (b + 1) * BLOCK_SIZE) - b * BLOCK_SIZE
        out.append((b, lo, hi))
        b += 1
    return out


# -- statistics ------------------------------------------------------------------------


def wilson_interval(failures: int, shots: int, confidence: float = CONFIDENCE) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if shots <= 0:
        return 0.0, 1.0
    ci = binomtest(int(failures), int(shots)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class FailureEstimate:
    """Logical failure rate with a 99% confidence interval.

    For a combined estimate ``pfail`` is the sum of the per-basis components,
    ``shots`` is the per-basis shot count and the interval adds the
    component half-widths in quadrature.
    """

    failures: int
    shots: int
    pfail: float
    ci_lo: float
    ci_hi: float
    components: dict = field(default_factory=dict)
    budget_exceeded: bool = False

    @classmethod
    def from_counts(cls, failures: int, shots: int, budget_exceeded: bool = False) -> "FailureEstimate":
        lo, hi = wilson_interval(failures, shots)
        p = failures / shots if shots else 0.0
        return cls(int(failures), int(shots), p, min(lo, p), max(hi, p), {}, budget_exceeded)

    @classmethod
    def combine(cls, parts: dict, budget_exceeded: bool = False) -> "FailureEstimate":
        p = sum(e.pfail for e in parts.values())
        lo = p - math.sqrt(sum((e.pfail - e.ci_lo) ** 2 for e in parts.values()))
        hi = p + math.sqrt(sum((e.ci_hi - e.pfail) ** 2 for e in parts.values()))
        shots = min(e.shots for e in parts.values())
        failures = sum(e.failures for e in parts.values())
        return cls(failures, shots, p, max(0.0, lo), hi, dict(parts), budget_exceeded)

    @property
    def half_width(self) -> float:
        return max(self.pfail - self.ci_lo, self.ci_hi - self.pfail)

    def meets(self, target: float, mode: str = "relative") -> bool:
        if mode == "absolute":
            return self.half_width <= target
        if mode == "relative":
            return self.failures > 0 and self.half_width <= target * self.pfail
        raise ValueError(f"unknown CI mode {mode!r}")


# -- sampling --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ShotBatch:
    """Sampled detection events and true observable flips.

    ``seed``, ``stream`` and ``start`` identify the shot range; sampling the
    same DEM again with them reproduces the batch exactly.
    """

    events: np.ndarray
    observables: np.ndarray
    seed: int
    stream: tuple = ()
    start: int = 0

    def __len__(self) -> int:
        return len(self.events)


def _sample_block(dem: DetectorErrorModel, seed: int, stream: tuple, block: int, lo: int, hi: int):
    rng = _rng(seed, stream, block)
    q = dem.probabilities
    counts = rng.binomial(BLOCK_SIZE, q)
    rows, cols = [], []
    for j in np.flatnonzero(counts):
        rows.append(rng.choice(BLOCK_SIZE, size=counts[j], replace=False))
        cols.append(np.full(counts[j], j))
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    keep = (r >= lo) & (r < hi)
    fired = sp.csr_matrix((np.ones(keep.sum(), dtype=np.int32), (r[keep] - lo, c[keep])), shape=(hi - lo, len(q)))
    ev = (fired @ dem.detector_matrix.astype(np.int32)).toarray() % 2
    ob = (fired @ dem.observable_matrix.astype(np.int32)).toarray() % 2
    return ev.astype(np.uint8), ob.astype(np.uint8)


def sample(dem: DetectorErrorModel, shots: int, seed: int, start: int = 0, stream: tuple = (), workers: int = 1) -> ShotBatch:
    """Sample ``shots`` shots (indices ``start ..``) from independent mechanisms.

    Each mechanism fires independently with its probability; detector and
    observable bits are XORs over fired mechanisms.
    """
    shots = int(shots)
    if shots < 0:
        raise ValueError("shots must be non-negative")
    nd, no = dem.num_detectors, dem.num_observables
    if shots == 0 or len(dem) == 0:
        return ShotBatch(np.zeros((shots, nd), np.uint8), np.zeros((shots, no), np.uint8), seed, tuple(stream), start)
    pieces = _map_blocks(lambda t: _sample_block(dem, seed, tuple(stream), *t), _block_ranges(start, shots), workers)
    ev = np.concatenate([p[0] for p in pieces])
    ob = np.concatenate([p[1] for p in pieces])
    return ShotBatch(ev, ob, seed, tuple(stream), start)


def count_failures(decoder: ConcatMatchingDecoderCL, batch: ShotBatch) -> int:
    """Shots whose predicted observable flips differ from the truth."""
    if len(batch) == 0:
        return 0
    pred = decoder.predict(batch.events)
    return int(np.any(pred != batch.observables, axis=1).sum())


# -- circuit-level scenario ------------------------------------------------------------


def _adaptive(run_more, bases, ci_target, mode, shots, min_shots, max_shots) -> FailureEstimate:
    """Grow shot counts (x2) for every basis until the combined CI meets the target."""
    fails = {b: 0 for b in bases}
    done = 0
    total = int(shots) if shots is not None else int(min_shots)
    while True:
        for b in bases:
            fails[b] += run_more(b, done, total - done)
        done = total
        parts = {b: FailureEstimate.from_counts(fails[b], done) for b in bases}
        est = FailureEstimate.combine(parts) if len(bases) > 1 else parts[bases[0]]
        if shots is not None or ci_target is None or est.meets(ci_target, mode):
            return est
        if done >= max_shots:
            return FailureEstimate.combine(parts, True) if len(bases) > 1 else FailureEstimate.from_counts(fails[bases[0]], done, True)
        total = min(2 * done, int(max_shots))


def estimate_pfail(
    d: int,
    T: int,
    p: float,
    schedule: CnotSchedule | str = OPTIMAL_SCHEDULE,
    ci_target: float | None = 0.05,
    seed: int = 0,
    *,
    mode: str = "relative",
    shots: int | None = None,
    min_shots: int = DEFAULT_MIN_SHOTS,
    max_shots: int = DEFAULT_MAX_SHOTS,
    layout: str = "fused",
    workers: int | None = None,
    **decoder_params,
) -> FailureEstimate:
    """Circuit-level logical failure rate ``pfail = pfail_Z + pfail_X``.

    The Z component runs the Z-memory circuit with ``schedule``; the X
    component runs it with the Z and X parts of the schedule swapped.

    Parameters
    ----------
    ci_target : float or None
        Target 99% half-width, absolute or relative to ``pfail`` (``mode``).
    shots : int, optional
        Fixed shot count per basis; disables adaptation.
    """
    if isinstance(schedule, str):
        schedule = CnotSchedule.parse(schedule)
    if not 0 <= p < 0.75:
        raise ValueError("p must lie in [0, 0.75)")
    workers = default_workers() if workers is None else workers
    scheds = {"Z": schedule, "X": swap_schedule_parts(schedule)}
    if p == 0:
        n = int(shots if shots is not None else min_shots)
        return FailureEstimate.combine({b: FailureEstimate.from_counts(0, n) for b in scheds})
    dems = {b: extract_dem(apply_noise(build_memory_circuit(d, T, s, layout=layout), p)) for b, s in scheds.items()}
    decoders = {b: ConcatMatchingDecoderCL(**decoder_params).fit(dems[b]) for b in scheds}
    streams = {"Z": (0,), "X": (1,)}

    def run_more(b, start, n):
        f = 0
        for lo in range(start, start + n, 16 * BLOCK_SIZE):
            m = min(16 * BLOCK_SIZE, start + n - lo)
            f += count_failures(decoders[b], sample(dems[b], m, seed, lo, streams[b], workers))
        return f

    return _adaptive(run_more, ("Z", "X"), ci_target, mode, shots, min_shots, max_shots)


# -- bit-flip scenario -----------------------------------------------------------------


def _bitflip_block(lattice: ColorLattice, p: float, seed: int, block: int, lo: int, hi: int) -> np.ndarray:
    rng = _rng(seed, (2,), block)
    return (rng.random((BLOCK_SIZE, len(lattice.coords))) < p)[lo:hi]


def sample_bitflip(lattice: ColorLattice, p: float, shots: int, seed: int, start: int = 0, workers: int = 1) -> np.ndarray:
    """Independent X errors with probability ``p`` per data qubit, ``(shots, n)`` uint8."""
    pieces = _map_blocks(lambda t: _bitflip_block(lattice, p, seed, *t), _block_ranges(start, int(shots)), workers)
    n = len(lattice.coords)
    return np.concatenate(pieces).astype(np.uint8) if pieces else np.zeros((0, n), np.uint8)


def run_bitflip(
    d: int | ColorLattice,
    p: float,
    shots: int | None = None,
    seed: int = 0,
    *,
    ci_target: float | None = None,
    mode: str = "relative",
    min_shots: int = DEFAULT_MIN_SHOTS,
    max_shots: int = DEFAULT_MAX_SHOTS,
    workers: int | None = None,
    backend: str = "pymatching",
) -> FailureEstimate:
    """Bit-flip noise with perfect syndrome measurement, decoded in 2D.

    Only the Z-type logical can fail, so the estimate has a single
    component.  Pass ``shots`` for a fixed count or ``ci_target`` to adapt.
    """
    lattice = d if isinstance(d, ColorLattice) else build_triangular(int(d))
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if shots is None and ci_target is None:
        raise ValueError("give shots or ci_target")
    workers = default_workers() if workers is None else workers
    dec = ConcatMatchingDecoder2D(backend=backend).fit(lattice)

    def run_more(b, start, n):
        f = 0
        for lo in range(start, start + n, 16 * BLOCK_SIZE):
            m = min(16 * BLOCK_SIZE, start + n - lo)
            err = sample_bitflip(lattice, p, m, seed, lo, workers)
            f += int(dec.logical_failures(err).sum())
        return f

    est = _adaptive(run_more, ("Z",), ci_target, mode, shots, min_shots, max_shots)
    return FailureEstimate(est.failures, est.shots, est.pfail, est.ci_lo, est.ci_hi, {"Z": est}, est.budget_exceeded)


def exhaustive_bitflip(d: int | ColorLattice, p: float, max_weight: int | None = None, backend: str = "pymatching") -> tuple[float, float]:
    """Exact bit-flip failure probability by enumerating error patterns.

    Returns
    -------
    value : float
        Probability mass of failing patterns of weight at most ``max_weight``.
    tail : float
        Total probability of heavier patterns; the true failure rate lies in
        ``[value, value + tail]``.  Zero when every pattern is enumerated.
    """
    lattice = d if isinstance(d, ColorLattice) else build_triangular(int(d))
    n = len(lattice.coords)
    w_max = n if max_weight is None else min(int(max_weight), n)
    dec = ConcatMatchingDecoder2D(backend=backend).fit(lattice)
    value = 0.0
    for w in range(w_max + 1):
        pats = list(itertools.combinations(range(n), w))
        err = np.zeros((len(pats), n), dtype=np.uint8)
        for i, s in enumerate(pats):
            err[i, list(s)] = 1
        value += int(dec.logical_failures(err).sum()) * p**w * (1 - p) ** (n - w)
    tail = sum(math.comb(n, w) * p**w * (1 - p) ** (n - w) for w in range(w_max + 1, n + 1))
    return value, tail


# -- file formats ----------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def estimate_rows(est: FailureEstimate, *, d, T, p, schedule, seed) -> list[dict]:
    """CSV rows: one per basis component plus a combined row when there are several."""
    rows = []
    parts = est.components or {"Z": est}
    for basis, e in parts.items():
        rows.append(dict(d=d, T=T, p=float(p), schedule=str(schedule), basis=basis, shots=e.shots, failures=e.failures,
                         pfail=float(e.pfail), ci_lo=float(e.ci_lo), ci_hi=float(e.ci_hi), seed=seed))
    if len(parts) > 1:
        rows.append(dict(d=d, T=T, p=float(p), schedule=str(schedule), basis="sum", shots=est.shots, failures=est.failures,
                         pfail=float(est.pfail), ci_lo=float(est.ci_lo), ci_hi=float(est.ci_hi), seed=seed))
    return rows


def write_csv(fh, rows, header: str | None = None) -> None:
    """Write rows with ``CSV_COLUMNS``; ``header`` becomes a leading ``#`` line."""
    if header is not None:
        fh.write(f"# {header}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])


def read_csv(fh) -> list[dict]:
    """Parse a CSV written by ``write_csv`` (``#`` lines are skipped).

    Raises
    ------
    ValueError
        If required columns are missing.
    """
    text = fh.read() if hasattr(fh, "read") else str(fh)
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    missing = {"d", "p", "pfail"} - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"CSV is missing columns: {sorted(missing)}")
    rows = []
    for r in reader:
        out = dict(r)
        for k in ("d", "T", "shots", "failures", "seed"):
            if out.get(k) not in (None, ""):
                out[k] = int(out[k])
        for k in ("p", "pfail", "ci_lo", "ci_hi"):
            if out.get(k) not in (None, ""):
                out[k] = float(out[k])
        rows.append(out)
    return rows


def write_events(fh, events) -> None:
    """Little-endian bit-packed rows, each padded to a whole byte."""
    e = np.asarray(events, dtype=np.uint8)
    fh.write(np.packbits(e, axis=1, bitorder="little").tobytes())


def read_events(fh, num_detectors: int) -> np.ndarray:
    """Inverse of ``write_events``."""
    raw = np.frombuffer(fh.read(), dtype=np.uint8)
    width = (num_detectors + 7) // 8
    if width == 0:
        return np.zeros((0, 0), dtype=np.uint8)
    if raw.size % width:
        raise ValueError(f"event file size {raw.size} is not a multiple of the row width {width}")
    rows = raw.reshape(-1, width)
    return np.unpackbits(rows, axis=1, bitorder="little", count=num_detectors)
