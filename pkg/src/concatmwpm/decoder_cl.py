"""Concatenated matching decoder for circuit-level noise.

For every color ``c`` the detector error model is split into a restricted
DEM (non-``c`` detectors) and an only DEM (``c`` detectors plus one virtual
detector per restricted mechanism).  Decoding a shot for color ``c``:

1. match the non-``c`` detection events on the restricted graph;
2. turn every selected restricted mechanism into a virtual detection event;
3. match the ``c`` events together with the virtual events on the only
   graph; the selected mechanisms give an observable correction and a
   total weight ``w_c``.

The correction of the color with the smallest ``w_c`` wins (ties: R, G, B).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .circuit import Circuit, apply_noise
from .dem import DecomposedDEM, DetectorErrorModel, decompose, extract_dem, to_match_graph
from .lattice import Color
from .matching import WEIGHT_SCALE, Matcher

__all__ = ["DecodeResultCL", "ConcatMatchingDecoderCL", "build_context", "decode"]


@dataclass(frozen=True)
class DecodeResultCL:
    corrections: dict
    weights: dict
    chosen: Color

    @property
    def correction(self) -> int:
        """Observable flip bit mask of the chosen color."""
        return self.corrections[self.chosen]


class _Stage:
    def __init__(self, parts: DecomposedDEM, backend: str):
        self.parts = parts
        self.g1 = to_match_graph(parts.restricted)
        self.g2 = to_match_graph(parts.only)
        self.m1 = Matcher(self.g1, backend=backend)
        self.m2 = Matcher(self.g2, backend=backend)
        # integer weights keep sums exact and comparisons platform independent
        self.w1 = np.round(self.g1.weights * WEIGHT_SCALE).astype(np.int64)
        self.w2 = np.round(self.g2.weights * WEIGHT_SCALE).astype(np.int64)
        obs = np.asarray(self.g2.observables, dtype=np.int64)
        n_obs = parts.only.num_observables
        self.obs_bits = ((obs[:, None] >> np.arange(n_obs)) & 1).astype(np.uint8)
        colors = np.array([int(d.color) for d in parts.restricted.detectors], dtype=np.int64)
        self.own = colors == int(parts.color)

    def run(self, events: np.ndarray, stage1_weight: bool):
        own = events * self.own
        other = events * ~self.own
        sel1 = self.m1.solve_batch(other)
        sel2 = self.m2.solve_batch(np.concatenate([own, sel1.astype(np.uint8)], axis=1))
        weight = sel2.astype(np.int64) @ self.w2
        if stage1_weight:
            weight = weight + sel1.astype(np.int64) @ self.w1
        flips = (sel2.astype(np.int64) @ self.obs_bits) % 2
        return flips.astype(np.uint8), weight


class ConcatMatchingDecoderCL(BaseEstimator):
    """Circuit-level concatenated matching decoder (scikit-learn style).

    Parameters
    ----------
    colors : str, default "RGB"
        Sub-decoders to run.
    stage1_weight : bool, default False
        Add the first-stage matching weight to ``w_c``.  By default ``w_c`` is
        the second-stage weight only.
    backend : {"pymatching", "networkx"}
    chunk_size : int, default 4096
        Shots decoded per matcher call (bounds memory use).

    Attributes
    ----------
    dem_ : DetectorErrorModel
    stages_ : dict
        Per-color decomposition and matchers.
    """

    def __init__(self, colors: str = "RGB", stage1_weight: bool = False, backend: str = "pymatching", chunk_size: int = 4096):
        self.colors = colors
        self.stage1_weight = stage1_weight
        self.backend = backend
        self.chunk_size = chunk_size

    def fit(self, X, y=None):
        """Prepare matching graphs from a noisy circuit or a DEM."""
        dem = extract_dem(X) if isinstance(X, Circuit) else X
        if not isinstance(dem, DetectorErrorModel):
            raise TypeError("fit expects a noisy Circuit or a DetectorErrorModel")
        if len(dem) == 0:
            raise ValueError("the detector error model is empty; nothing to decode")
        self.dem_ = dem
        self.colors_ = tuple(sorted({Color.parse(c) for c in self.colors}))
        self.stages_ = {c: _Stage(decompose(dem, c), self.backend) for c in self.colors_}
        return self

    def _check_events(self, events) -> np.ndarray:
        check_is_fitted(self, "stages_")
        e = np.asarray(events)
        if e.ndim == 1:
            e = e[None, :]
        if e.ndim != 2 or e.shape[1] != self.dem_.num_detectors:
            raise ValueError(f"expected event rows of length {self.dem_.num_detectors}")
        return (e != 0).astype(np.uint8)

    def decode_batch(self, events) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Decode many shots.

        Returns
        -------
        corrections : ndarray of uint8, shape (n_colors, shots, n_observables)
        weights : ndarray of float, shape (n_colors, shots)
        chosen : ndarray of int, shape (shots,)
            Index into ``colors_`` of the lightest color per shot.
        """
        e = self._check_events(events)
        n = len(e)
        k = len(self.colors_)
        corr = np.zeros((k, n, self.dem_.num_observables), dtype=np.uint8)
        wint = np.zeros((k, n), dtype=np.int64)
        step = max(1, int(self.chunk_size))
        for lo in range(0, n, step):
            chunk = e[lo : lo + step]
            for i, c in enumerate(self.colors_):
                corr[i, lo : lo + step], wint[i, lo : lo + step] = self.stages_[c].run(chunk, self.stage1_weight)
        chosen = np.argmin(wint, axis=0)
        return corr, wint / WEIGHT_SCALE, chosen

    def predict(self, events) -> np.ndarray:
        """Observable corrections, shape ``(shots, n_observables)``."""
        corr, _, chosen = self.decode_batch(events)
        return corr[chosen, np.arange(corr.shape[1])]

    def decode(self, events) -> DecodeResultCL:
        corr, w, chosen = self.decode_batch(events)
        corrections = {c: int(sum(int(b) << j for j, b in enumerate(corr[i, 0]))) for i, c in enumerate(self.colors_)}
        weights = {c: float(w[i, 0]) for i, c in enumerate(self.colors_)}
        return DecodeResultCL(corrections, weights, self.colors_[int(chosen[0])])


def build_context(circuit: Circuit, p: float | None = None, **params) -> ConcatMatchingDecoderCL:
    """Fitted decoder for ``circuit`` with noise strength ``p`` inserted.

    If ``p`` is None the circuit is used as is (it must already be noisy).
    """
    noisy = circuit if p is None else apply_noise(circuit, p)
    return ConcatMatchingDecoderCL(**params).fit(noisy)


def decode(context: ConcatMatchingDecoderCL, events) -> DecodeResultCL:
    return context.decode(events)
