"""Fixed-point quantization and rectangular M-QAM mapping.

The forward path ``quantize -> modulate`` turns a clipped real parameter
vector into constellation symbols; the reverse path ``decision snap ->
demap`` recovers values from (possibly superposed and averaged) symbols.
Per-axis decision regions are intervals of width ``min_distance`` around
the axis points, so the average of several transmitted symbols can be
snapped back onto the grid and demapped like a single symbol.

All operations are pure; event counts (saturation, off-grid inputs) are
reported through an optional mutable ``ModemCounters``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ModemConfigError",
    "ModemInputError",
    "ModemCounters",
    "Constellation",
    "QuantizerConfig",
    "SymbolFrame",
    "min_distance",
    "quantize",
    "dequantize",
    "levels_to_symbols",
    "symbols_to_levels",
    "modulate",
    "demap",
    "decision_target",
]


class ModemConfigError(ValueError):
    """Inconsistent constellation/quantizer configuration."""


class ModemInputError(ValueError):
    """Rejected input data (non-finite values, bad shapes)."""


@dataclass
class ModemCounters:
    """Mutable event counters threaded through the demodulation path."""

    saturated: int = 0      # averaged value beyond the outermost decision region
    off_grid: int = 0       # demap input not on the grid (snapped first)


def min_distance(order: int, peak_power: float) -> float:
    """Minimum Euclidean distance between two axis points: 2*sqrt(P0)/(sqrt(M)-1)."""
    root = _axis_size(order)
    if peak_power <= 0:
        raise ModemConfigError(f"peak_power must be positive, got {peak_power}")
    return 2.0 * np.sqrt(peak_power) / (root - 1)


def _axis_size(order: int) -> int:
    root = int(round(np.sqrt(order)))
    if order < 4 or root * root != order:
        raise ModemConfigError(f"modulation order must be a perfect square >= 4, got {order}")
    if root & (root - 1):
        raise ModemConfigError(f"sqrt(order) must be a power of two for bit mapping, got {root}")
    return root


class Constellation:
    """Rectangular M-QAM grid with peak per-axis amplitude sqrt(peak_power).

    ``axis_points`` is the sorted amplitude set used on both the in-phase
    and quadrature axes; adjacent points differ by exactly ``min_distance``
    and the set is symmetric about zero.
    """

    def __init__(self, order: int, peak_power: float = 1.0, mapping: str = "natural"):
        if mapping not in ("natural", "gray"):
            raise ModemConfigError(f"mapping must be 'natural' or 'gray', got {mapping!r}")
        self.order = order
        self.peak_power = float(peak_power)
        self.mapping = mapping
        self.axis_size = _axis_size(order)
        self.bits_per_symbol = int(round(np.log2(order)))
        self.bits_per_axis = self.bits_per_symbol // 2
        self.min_distance = min_distance(order, peak_power)
        idx = np.arange(self.axis_size)
        self.axis_points = (2 * idx - (self.axis_size - 1)) / 2.0 * self.min_distance
        # gray label of axis index i is i ^ (i >> 1); invert it for mapping bits -> index
        gray = idx ^ (idx >> 1)
        self._index_of_label = np.empty(self.axis_size, dtype=np.int64)
        self._index_of_label[gray] = idx
        self._label_of_index = gray

    def bits_to_index(self, bits: np.ndarray) -> np.ndarray:
        if self.mapping == "gray":
            return self._index_of_label[bits]
        return bits

    def index_to_bits(self, index: np.ndarray) -> np.ndarray:
        if self.mapping == "gray":
            return self._label_of_index[index]
        return index

    def __repr__(self):
        return (f"Constellation(order={self.order}, peak_power={self.peak_power}, "
                f"mapping={self.mapping!r})")


@dataclass(frozen=True)
class QuantizerConfig:
    """Uniform fixed-point quantizer over [-clip_magnitude, +clip_magnitude].

    ``symmetric=True`` uses 2^alpha - 1 levels so that 0.0 has an exact code;
    the default scale uses all 2^alpha codes per the straight-line formula.
    """

    bits_per_param: int
    clip_magnitude: float
    symmetric: bool = False

    def __post_init__(self):
        if self.bits_per_param < 1:
            raise ModemConfigError(f"bits_per_param must be >= 1, got {self.bits_per_param}")
        if not (self.clip_magnitude > 0):
            raise ModemConfigError(f"clip_magnitude must be positive, got {self.clip_magnitude}")

    @property
    def n_levels(self) -> int:
        return (1 << self.bits_per_param) - (1 if self.symmetric else 0)

    def symbols_per_param(self, constellation: Constellation) -> int:
        return -(-self.bits_per_param // constellation.bits_per_symbol)


@dataclass
class SymbolFrame:
    """Modulated symbol sequence for one device and one round."""

    symbols: np.ndarray
    source_device: int = -1
    round_index: int = -1

    def __len__(self):
        return len(self.symbols)


def quantize(values: np.ndarray, cfg: QuantizerConfig) -> np.ndarray:
    """Map reals to integer levels in [0, n_levels-1], round half up.

    level = round((clamp(v, -c, c) + c) / (2c) * (n_levels - 1)).
    """
    values = np.asarray(values, dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ModemInputError(f"non-finite value at index {i}: {values.flat[i]}")
    c = cfg.clip_magnitude
    x = (np.clip(values, -c, c) + c) / (2.0 * c) * (cfg.n_levels - 1)
    return np.floor(x + 0.5).astype(np.int64)


def dequantize(levels: np.ndarray, cfg: QuantizerConfig) -> np.ndarray:
    """Inverse of :func:`quantize` up to the quantizer step 2c/(n_levels-1)."""
    levels = np.asarray(levels, dtype=np.float64)
    c = cfg.clip_magnitude
    out = levels / (cfg.n_levels - 1) * (2.0 * c) - c
    # snapped symbols can decode to codes outside the quantizer range
    return np.clip(out, -c, c)


def _split_levels(levels: np.ndarray, cfg: QuantizerConfig, constellation: Constellation):
    """Yield per-symbol (i_bits, q_bits) pairs, MSB-first contiguous groups."""
    n_sym = cfg.symbols_per_param(constellation)
    bps = constellation.bits_per_symbol
    half = constellation.bits_per_axis
    if n_sym == 1 and cfg.bits_per_param % 2:
        raise ModemConfigError(
            f"alpha={cfg.bits_per_param} is odd with one symbol per parameter; "
            "cannot split bits between I and Q")
    for j in range(n_sym):
        shift = bps * (n_sym - 1 - j)
        chunk = (levels >> shift) & ((1 << bps) - 1)
        yield chunk >> half, chunk & ((1 << half) - 1)


def levels_to_symbols(levels: np.ndarray, cfg: QuantizerConfig,
                      constellation: Constellation) -> np.ndarray:
    """Map integer levels onto the complex grid, symbols_per_param per entry."""
    levels = np.asarray(levels, dtype=np.int64)
    n_sym = cfg.symbols_per_param(constellation)
    out = np.empty(levels.size * n_sym, dtype=np.complex128)
    for j, (i_bits, q_bits) in enumerate(_split_levels(levels, cfg, constellation)):
        i_pt = constellation.axis_points[constellation.bits_to_index(i_bits)]
        q_pt = constellation.axis_points[constellation.bits_to_index(q_bits)]
        out[j::n_sym] = i_pt + 1j * q_pt
    return out


def modulate(values: np.ndarray, cfg: QuantizerConfig, constellation: Constellation,
             source_device: int = -1, round_index: int = -1) -> SymbolFrame:
    """Digital pre-processing: quantize then map bit groups onto the grid."""
    levels = quantize(values, cfg)
    symbols = levels_to_symbols(levels, cfg, constellation)
    return SymbolFrame(symbols, source_device=source_device, round_index=round_index)


def _snap_axis(values: np.ndarray, constellation: Constellation,
               counters: ModemCounters | None = None,
               count_off_grid: bool = False) -> np.ndarray:
    """Nearest axis-point index with ties breaking toward smaller magnitude.

    Values beyond the outermost decision region are clamped to the extreme
    point (counted as saturation). An exact tie between two points of equal
    magnitude resolves to the negative one.
    """
    pts = constellation.axis_points
    size = constellation.axis_size
    center = (size - 1) / 2.0
    f = (values - pts[0]) / constellation.min_distance
    lo = np.floor(f)
    frac = f - lo
    idx = np.where(frac > 0.5, lo + 1, lo)
    tie = frac == 0.5
    if tie.any():
        # candidates lo and lo+1; pick the one nearer the grid center (smaller
        # magnitude), and the lower index when both sit at equal magnitude
        hi_closer = np.abs(lo + 1 - center) < np.abs(lo - center)
        idx = np.where(tie & hi_closer, lo + 1, idx)
        idx = np.where(tie & ~hi_closer, lo, idx)
    if counters is not None:
        counters.saturated += int(np.count_nonzero((f < -0.5 - 1e-12) | (f > size - 0.5 + 1e-12)))
    idx = np.clip(idx, 0, size - 1).astype(np.int64)
    if counters is not None and count_off_grid:
        tol = 1e-9 * max(constellation.min_distance, 1.0)
        counters.off_grid += int(np.count_nonzero(np.abs(values - pts[idx]) > tol))
    return idx


def decision_target(symbol_sums: np.ndarray, total_count: int,
                    constellation: Constellation,
                    counters: ModemCounters | None = None) -> np.ndarray:
    """Grid point whose decision region contains the averaged superposition.

    Per symbol and per axis, the returned point is the element of the axis
    set within half a minimum distance of sum/total_count, ties toward the
    smaller-magnitude point, out-of-range averages clamped to the extreme
    point (saturation counted).
    """
    if total_count <= 0:
        raise ModemInputError(f"total_count must be positive, got {total_count}")
    avg = np.asarray(symbol_sums, dtype=np.complex128) / total_count
    i_idx = _snap_axis(avg.real, constellation, counters)
    q_idx = _snap_axis(avg.imag, constellation, counters)
    pts = constellation.axis_points
    return pts[i_idx] + 1j * pts[q_idx]


def symbols_to_levels(points: np.ndarray, cfg: QuantizerConfig,
                      constellation: Constellation,
                      counters: ModemCounters | None = None) -> np.ndarray:
    """Invert :func:`levels_to_symbols`; off-grid inputs snap first (counted)."""
    points = np.asarray(points, dtype=np.complex128)
    n_sym = cfg.symbols_per_param(constellation)
    if points.size % n_sym:
        raise ModemInputError(
            f"{points.size} symbols do not divide into groups of {n_sym}")
    bps = constellation.bits_per_symbol
    half = constellation.bits_per_axis
    levels = np.zeros(points.size // n_sym, dtype=np.int64)
    for j in range(n_sym):
        group = points[j::n_sym]
        i_bits = constellation.index_to_bits(
            _snap_axis(group.real, constellation, counters, count_off_grid=True))
        q_bits = constellation.index_to_bits(
            _snap_axis(group.imag, constellation, counters, count_off_grid=True))
        chunk = (i_bits << half) | q_bits
        levels |= chunk << (bps * (n_sym - 1 - j))
    return levels


def demap(points: np.ndarray, cfg: QuantizerConfig, constellation: Constellation,
          counters: ModemCounters | None = None) -> np.ndarray:
    """Digital post-processing: grid points back to numeric parameters."""
    return dequantize(symbols_to_levels(points, cfg, constellation, counters), cfg)
