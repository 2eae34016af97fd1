"""Base-station PRACH receiver: correlation, PDP combining, thresholding, peaks."""

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .waveform import LengthMismatch, PrachConfig, demodulate_prach

N_BINS = 64
BIN_SIZE = 24
DEFAULT_PFA = 1e-3
DEFAULT_MIN_DISTANCE = 3


class ZeroAntennas(ValueError):
    pass


@dataclass(frozen=True)
class PowerDelayProfile:
    power: np.ndarray
    n_bins: int = N_BINS
    bin_size: int = BIN_SIZE

    def __post_init__(self):
        p = np.asarray(self.power, dtype=float)
        if p.ndim != 1 or len(p) != self.n_bins * self.bin_size:
            raise ValueError(f"PDP length {p.shape} != {self.n_bins}*{self.bin_size}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("PDP values must be finite and non-negative")
        object.__setattr__(self, "power", p)


@dataclass(frozen=True)
class DetectedPeak:
    global_index: int
    power: float
    bin_size: int = BIN_SIZE

    @property
    def bin_index(self) -> int:
        return self.global_index // self.bin_size

    @property
    def offset_in_bin(self) -> int:
        return self.global_index % self.bin_size


def nominal_position(v: int, cfg: PrachConfig) -> float:
    """PDP lag at which shift ``v`` appears for a zero-delay arrival.

    Advancing the sequence by ``v*n_cs`` ZC samples moves its correlation peak
    to ``-v*n_cs*pdp_len/n_zc`` (mod ``pdp_len``).
    """
    return (-v * cfg.zc.n_cs * cfg.pdp_len / cfg.zc.n_zc) % cfg.pdp_len


def bin_of_preamble(v: int, cfg: PrachConfig) -> int:
    n_bins = cfg.pdp_len // BIN_SIZE
    return int(math.floor(nominal_position(v, cfg) + 1e-9)) // BIN_SIZE % n_bins


def correlate(received, root, cfg: PrachConfig) -> np.ndarray:
    """Zero-padded frequency-domain correlation for one antenna, length ``pdp_len``.

    Scaled so a clean unit-amplitude preamble yields a unit PDP peak.
    """
    y = demodulate_prach(received, cfg)
    z = np.fft.fft(np.asarray(root, dtype=complex), norm="ortho")
    padded = np.zeros(cfg.pdp_len, dtype=complex)
    padded[cfg.subcarrier_index] = y * np.conj(z) * (cfg.pdp_len / cfg.zc.n_zc)
    return padded


def compute_pdp(received, root, cfg=None) -> PowerDelayProfile:
    """Sum of per-antenna squared correlator magnitudes (non-coherent combining)."""
    cfg = cfg or PrachConfig()
    received = list(received)
    if not received:
        raise ZeroAntennas("at least one antenna is required")
    if len(root) != cfg.zc.n_zc:
        raise LengthMismatch(f"root has {len(root)} samples, expected {cfg.zc.n_zc}")
    power = np.zeros(cfg.pdp_len)
    for r in received:
        power += np.abs(np.fft.ifft(correlate(r, root, cfg))) ** 2
    return PowerDelayProfile(power, cfg.pdp_len // BIN_SIZE, BIN_SIZE)


def estimate_threshold(pdp: PowerDelayProfile, pfa: float = DEFAULT_PFA) -> float:
    """Detection threshold ``median/ln2 * (-ln pfa)`` (exponential noise model)."""
    if not 0 < pfa < 1:
        raise ValueError("pfa must be in (0, 1)")
    noise = float(np.median(pdp.power)) / math.log(2.0)
    if noise == 0.0:
        warnings.warn("degenerate PDP: zero noise floor, threshold set to 0", RuntimeWarning)
        return 0.0
    return noise * -math.log(pfa)


def detect_peaks(pdp: PowerDelayProfile, threshold: float,
                 min_distance: int = DEFAULT_MIN_DISTANCE) -> list:
    if min_distance < 1:
        raise ValueError("min_distance must be >= 1")
    idx = kernels.greedy_peaks(pdp.power, float(threshold), int(min_distance))
    return [DetectedPeak(int(i), float(pdp.power[i]), pdp.bin_size) for i in idx]


def segment_bins(pdp: PowerDelayProfile) -> np.ndarray:
    return pdp.power.reshape(pdp.n_bins, pdp.bin_size)


def write_pdp_csv(pdp: PowerDelayProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "power"])
        for i, p in enumerate(pdp.power):
            w.writerow([i, repr(float(p))])
