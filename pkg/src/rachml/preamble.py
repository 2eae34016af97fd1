"""Zadoff-Chu root sequences and cyclically shifted PRACH preambles."""

from dataclasses import dataclass

import numpy as np


class InvalidConfig(ValueError):
    pass


class ShiftOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class ZcConfig:
    """Root sequence parameters.

    Parameters
    ----------
    n_zc : int
        Sequence length in samples, odd.
    root_u : int
        Root index in ``1..n_zc-1``.
    n_cs : int
        Cyclic-shift stride in samples.
    """

    n_zc: int = 839
    root_u: int = 25
    n_cs: int = 13

    def __post_init__(self):
        if self.n_zc < 3 or self.n_zc % 2 == 0:
            raise InvalidConfig(f"n_zc must be odd and >= 3, got {self.n_zc}")
        if not 1 <= self.root_u <= self.n_zc - 1:
            raise InvalidConfig(f"root_u must be in 1..{self.n_zc - 1}, got {self.root_u}")
        if not 1 <= self.n_cs <= self.n_zc:
            raise InvalidConfig(f"n_cs must be in 1..{self.n_zc}, got {self.n_cs}")

    @property
    def n_shifts(self) -> int:
        return self.n_zc // self.n_cs


def generate_root_sequence(cfg: ZcConfig) -> np.ndarray:
    """Return the length-``n_zc`` root sequence ``exp(-j*pi*u*m*(m+1)/n_zc)``."""
    m = np.arange(cfg.n_zc, dtype=np.int64)
    # reduce the integer phase modulo 2*n_zc first so large m keeps full precision
    phase_num = (cfg.root_u * m * (m + 1)) % (2 * cfg.n_zc)
    return np.exp(-1j * np.pi * phase_num / cfg.n_zc)


def apply_cyclic_shift(z: np.ndarray, v: int, cfg: ZcConfig) -> np.ndarray:
    """Return ``x[m] = z[(m + v*n_cs) mod n_zc]``."""
    z = np.asarray(z)
    if z.shape != (cfg.n_zc,):
        raise InvalidConfig(f"sequence length {z.shape} does not match n_zc={cfg.n_zc}")
    if not 0 <= v <= cfg.n_shifts - 1:
        raise ShiftOutOfRange(f"shift index {v} outside 0..{cfg.n_shifts - 1}")
    return np.roll(z, -v * cfg.n_cs)


def generate_preamble(cfg: ZcConfig, v: int) -> np.ndarray:
    return apply_cyclic_shift(generate_root_sequence(cfg), v, cfg)


def periodic_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Periodic cross-correlation ``r[l] = sum_m a[(m+l) mod N] * conj(b[m])``."""
    return np.fft.ifft(np.fft.fft(a) * np.conj(np.fft.fft(b)))
