"""PRACH transmitter, propagation delay, tapped-delay-line fading and AWGN."""

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .preamble import InvalidConfig, ZcConfig

SPEED_OF_LIGHT = 299_792_458.0

# Doppler * sequence duration below this keeps tap gains constant over a preamble
QUASI_STATIC_LIMIT = 0.1
N_SINUSOIDS = 16


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PrachConfig:
    zc: ZcConfig = field(default_factory=ZcConfig)
    pdp_len: int = 1536
    seq_duration: float = 800e-6
    cp_len: int = 198

    def __post_init__(self):
        if self.pdp_len < self.zc.n_zc:
            raise InvalidConfig("pdp_len must be >= n_zc")
        if not 0 <= self.cp_len < self.pdp_len:
            raise InvalidConfig("cp_len must be in [0, pdp_len)")
        if self.seq_duration <= 0:
            raise InvalidConfig("seq_duration must be positive")

    @property
    def sample_period(self) -> float:
        return self.seq_duration / self.pdp_len

    @property
    def subcarrier_index(self) -> np.ndarray:
        """Grid positions of the ZC DFT bins, a block centred on DC."""
        k = np.arange(self.zc.n_zc)
        return (k - self.zc.n_zc // 2) % self.pdp_len


@dataclass(frozen=True)
class ChannelProfile:
    name: str
    tap_delays: tuple  # ns
    tap_powers: tuple  # dB
    doppler_hz: float = 0.0

    def __post_init__(self):
        if len(self.tap_delays) != len(self.tap_powers) or not self.tap_delays:
            raise InvalidConfig("tap_delays and tap_powers must be non-empty and equal length")
        if self.tap_delays[0] != 0 or list(self.tap_delays) != sorted(self.tap_delays):
            raise InvalidConfig("tap_delays must be ascending and start at 0")
        if self.doppler_hz < 0:
            raise InvalidConfig("doppler_hz must be >= 0")

    @property
    def linear_powers(self) -> np.ndarray:
        p = 10.0 ** (np.asarray(self.tap_powers, dtype=float) / 10.0)
        return p / p.sum()

    def tap_samples(self, cfg: PrachConfig) -> np.ndarray:
        d = np.asarray(self.tap_delays, dtype=float) * 1e-9 / cfg.sample_period
        return np.floor(d + 0.5).astype(np.int64)


EPA = ChannelProfile(
    "EPA", (0, 30, 70, 90, 110, 190, 410), (0.0, -1.0, -2.0, -3.0, -8.0, -17.2, -20.8), 5.0
)
ETU = ChannelProfile(
    "ETU",
    (0, 50, 120, 200, 230, 500, 1600, 2300, 5000),
    (-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0),
    70.0,
)
PROFILES = {"EPA": EPA, "ETU": ETU}


def profile_from_section(section) -> ChannelProfile:
    """Build a profile from a config section with name/delays/powers/doppler keys.

    If only ``name`` is given and it is a built-in profile, the built-in taps
    are used; ``doppler`` may still override the Doppler frequency.
    """
    name = section.get("name", "custom").strip()
    if "delays" not in section and name.upper() in PROFILES:
        base = PROFILES[name.upper()]
        doppler = float(section.get("doppler", base.doppler_hz))
        return ChannelProfile(base.name, base.tap_delays, base.tap_powers, doppler)
    delays = tuple(float(v) for v in section["delays"].replace(",", " ").split())
    powers = tuple(float(v) for v in section["powers"].replace(",", " ").split())
    return ChannelProfile(name, delays, powers, float(section.get("doppler", 0.0)))


def load_profile(path, section="channel") -> ChannelProfile:
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    return profile_from_section(parser[section])


def modulate_prach(x: np.ndarray, cfg: PrachConfig) -> np.ndarray:
    """DFT-spread the preamble onto the PRACH grid and prepend the cyclic prefix.

    Both transforms are unitary, so the CP-free waveform carries the energy of ``x``.
    """
    x = np.asarray(x, dtype=complex)
    if x.shape != (cfg.zc.n_zc,):
        raise LengthMismatch(f"expected {cfg.zc.n_zc} samples, got {x.shape}")
    grid = np.zeros(cfg.pdp_len, dtype=complex)
    grid[cfg.subcarrier_index] = np.fft.fft(x, norm="ortho")
    body = np.fft.ifft(grid, norm="ortho")
    return np.concatenate([body[cfg.pdp_len - cfg.cp_len:], body])


def demodulate_prach(wave: np.ndarray, cfg: PrachConfig) -> np.ndarray:
    """Strip the CP and return the unitary DFT values on the PRACH bins."""
    wave = np.asarray(wave)
    if wave.shape[-1] < cfg.cp_len + cfg.pdp_len:
        raise LengthMismatch(
            f"received waveform has {wave.shape[-1]} samples, need {cfg.cp_len + cfg.pdp_len}"
        )
    body = wave[..., cfg.cp_len:cfg.cp_len + cfg.pdp_len]
    return np.fft.fft(body, norm="ortho")[..., cfg.subcarrier_index]


def delay_to_samples(distance_m: float, cfg: PrachConfig) -> int:
    if distance_m < 0:
        raise ValueError("distance must be non-negative")
    return int(math.floor(distance_m / SPEED_OF_LIGHT / cfg.sample_period + 0.5))


def _tap_gains(profile, n_samples, rng, cfg):
    powers = profile.linear_powers
    n_taps = len(powers)
    if profile.doppler_hz * cfg.seq_duration < QUASI_STATIC_LIMIT:
        g = (rng.standard_normal(n_taps) + 1j * rng.standard_normal(n_taps)) / np.sqrt(2)
        return (np.sqrt(powers) * g)[:, None]
    # sum-of-sinusoids with classical (Jakes) Doppler spectrum, unit variance per tap
    t = np.arange(n_samples) * cfg.sample_period
    n = np.arange(1, N_SINUSOIDS + 1)
    theta = rng.uniform(-np.pi, np.pi, size=(n_taps, 1))
    phi = rng.uniform(-np.pi, np.pi, size=(n_taps, N_SINUSOIDS))
    alpha = (2 * np.pi * n - np.pi + theta) / (4 * N_SINUSOIDS)
    w = 2 * np.pi * profile.doppler_hz
    gains = np.empty((n_taps, n_samples), dtype=complex)
    for k in range(n_taps):
        arg_i = w * np.outer(np.cos(alpha[k]), t) + phi[k][:, None]
        arg_q = w * np.outer(np.sin(alpha[k]), t) + phi[k][:, None]
        gains[k] = (np.cos(arg_i).sum(0) + 1j * np.sin(arg_q).sum(0)) / np.sqrt(N_SINUSOIDS)
    return np.sqrt(powers)[:, None] * gains


def apply_channel(wave, profile, delay_samples, seed, cfg=None, tap_gains=None):
    """Delay ``wave`` by ``delay_samples`` and pass it through one fading realisation.

    The output has ``len(wave) + delay_samples + max_tap_delay`` samples.
    ``tap_gains`` (one complex value per tap) overrides the random draw.
    """
    cfg = cfg or PrachConfig()
    if delay_samples < 0:
        raise ValueError("delay_samples must be non-negative")
    wave = np.asarray(wave, dtype=complex)
    taps = profile.tap_samples(cfg)
    out_len = len(wave) + delay_samples + int(taps[-1])
    if tap_gains is not None:
        gains = np.asarray(tap_gains, dtype=complex).reshape(len(taps), 1)
    else:
        gains = _tap_gains(profile, out_len, np.random.default_rng(seed), cfg)
    out = np.zeros(out_len, dtype=complex)
    for k, tap in enumerate(taps):
        start = delay_samples + int(tap)
        g = gains[k] if gains.shape[1] == 1 else gains[k, start:start + len(wave)]
        out[start:start + len(wave)] += g * wave
    return out


def add_awgn(wave, snr_db, seed):
    """Add circular complex Gaussian noise of power ``10**(-snr_db/10)`` per sample.

    ``snr_db = inf`` disables the noise.
    """
    wave = np.asarray(wave, dtype=complex)
    if math.isinf(snr_db) and snr_db > 0:
        return wave.copy()
    sigma = math.sqrt(10.0 ** (-snr_db / 10.0) / 2.0)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(wave.shape) + 1j * rng.standard_normal(wave.shape)
    return wave + sigma * noise
