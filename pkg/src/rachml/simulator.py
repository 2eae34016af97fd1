"""Event/slot random-access simulation and labelled PDP-bin dataset emission."""

import configparser
import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .preamble import InvalidConfig, generate_preamble, generate_root_sequence
from .receiver import (
    BIN_SIZE,
    PowerDelayProfile,
    bin_of_preamble,
    compute_pdp,
    detect_peaks,
    estimate_threshold,
    segment_bins,
)
from .waveform import (
    EPA,
    ETU,
    ChannelProfile,
    PrachConfig,
    add_awgn,
    apply_channel,
    delay_to_samples,
    modulate_prach,
    profile_from_section,
)

N_FEATURES = BIN_SIZE
HEADER = ["event_id", "slot_id", "bin_index"] + [f"p{i:02d}" for i in range(N_FEATURES)] + ["label"]
N_COLUMNS = len(HEADER)

# SeedSequence spawn keys: (ARRIVALS,) for slot draws, (RAO, index) per opportunity
ARRIVALS, RAO = 0, 1


class SchemaMismatch(ValueError):
    pass


class DatasetParseError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    profile: ChannelProfile = EPA
    cell_radius_m: float = 790.0
    total_ues: int = 2000
    n_preambles: int = 54
    n_antennas: int = 2
    n_raos: int = 200
    snr_db: float = 10.0
    beta_a: float = 3.0
    beta_b: float = 4.0
    seed: int = 7
    label: str = "custom"
    event_id: int = 0
    prach: PrachConfig = field(default_factory=PrachConfig)

    def __post_init__(self):
        n_shifts = min(self.prach.zc.n_shifts, self.prach.pdp_len // BIN_SIZE)
        if not 1 <= self.n_preambles <= n_shifts:
            raise InvalidConfig(f"n_preambles must be in 1..{n_shifts}")
        if self.total_ues < 0 or self.n_raos < 1 or self.cell_radius_m <= 0 or self.n_antennas < 1:
            raise InvalidConfig("invalid scenario sizes")


DS1 = ScenarioConfig(profile=EPA, cell_radius_m=790.0, label="DS1")
DS2 = ScenarioConfig(profile=EPA, cell_radius_m=500.0, label="DS2")
DS3 = ScenarioConfig(profile=ETU, cell_radius_m=790.0, label="DS3")
PRESETS = {"DS1": DS1, "DS2": DS2, "DS3": DS3}


def load_scenario(path) -> ScenarioConfig:
    """Read a ``[scenario]`` section (and optional ``[channel]``) from an INI file."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    sc = parser["scenario"]
    base = PRESETS.get(sc.get("label", "").upper(), ScenarioConfig())
    profile = profile_from_section(parser["channel"]) if parser.has_section("channel") else base.profile
    return replace(
        base,
        profile=profile,
        cell_radius_m=sc.getfloat("cell_radius_m", base.cell_radius_m),
        total_ues=sc.getint("total_ues", base.total_ues),
        n_preambles=sc.getint("n_preambles", base.n_preambles),
        n_antennas=sc.getint("n_antennas", base.n_antennas),
        n_raos=sc.getint("n_raos", base.n_raos),
        snr_db=sc.getfloat("snr_db", base.snr_db),
        beta_a=sc.getfloat("beta_a", base.beta_a),
        beta_b=sc.getfloat("beta_b", base.beta_b),
        seed=sc.getint("seed", base.seed),
        label=sc.get("label", base.label),
        event_id=sc.getint("event_id", base.event_id),
    )


@dataclass
class Dataset:
    """Column-oriented dataset; one row per transmitted PDP bin."""

    event_id: np.ndarray
    slot_id: np.ndarray
    bin_index: np.ndarray
    features: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        self.event_id = np.asarray(self.event_id, dtype=np.int64)
        self.slot_id = np.asarray(self.slot_id, dtype=np.int64)
        self.bin_index = np.asarray(self.bin_index, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=float).reshape(-1, N_FEATURES)
        self.label = np.asarray(self.label, dtype=np.int64)

    def __len__(self):
        return len(self.label)

    def __eq__(self, other):
        return isinstance(other, Dataset) and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("event_id", "slot_id", "bin_index", "features", "label")
        )

    @classmethod
    def empty(cls):
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, np.zeros((0, N_FEATURES)), z)

    @classmethod
    def concat(cls, parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, k) for p in parts])
                     for k in ("event_id", "slot_id", "bin_index", "features", "label")))

    def collision_share(self) -> float:
        return float(self.label.mean()) if len(self) else 0.0


@dataclass
class RaoOutcome:
    multiplicity: np.ndarray   # UE count per pool preamble
    ue_preambles: np.ndarray
    ue_delays: np.ndarray      # samples
    peaks: list
    rows: Dataset
    pdp: PowerDelayProfile = None


def rao_seed(cfg: ScenarioConfig, rao_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(cfg.seed, spawn_key=(RAO, rao_index))


def draw_arrival_slots(cfg: ScenarioConfig) -> np.ndarray:
    """Per-RAO UE counts from independent Beta(a, b) arrival times."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(ARRIVALS,)))
    t = rng.beta(cfg.beta_a, cfg.beta_b, size=cfg.total_ues)
    slots = np.minimum(np.floor(t * cfg.n_raos).astype(np.int64), cfg.n_raos - 1)
    return np.bincount(slots, minlength=cfg.n_raos)


def _uniform_disk_radius(rng, radius, n):
    return radius * np.sqrt(rng.random(n))


def simulate_rao(active_ues, cfg, seed, *, slot_id=0, preambles=None, distances=None,
                 noiseless=False) -> RaoOutcome:
    """Simulate one random-access opportunity and emit its labelled bins.

    ``preambles`` and ``distances`` force the per-UE choices; otherwise each UE
    picks uniformly from the pool and lands uniformly over the cell disk.
    """
    prach = cfg.prach
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    choice_ss, chan_ss, noise_ss = ss.spawn(3)
    rng = np.random.default_rng(choice_ss)
    drawn_pre = rng.integers(0, cfg.n_preambles, size=active_ues)
    drawn_dist = _uniform_disk_radius(rng, cfg.cell_radius_m, active_ues)
    ue_pre = drawn_pre if preambles is None else np.asarray(preambles, dtype=np.int64)
    ue_dist = drawn_dist if distances is None else np.asarray(distances, dtype=float)
    ue_delay = np.array([delay_to_samples(d, prach) for d in ue_dist], dtype=np.int64)

    max_extra = int(ue_delay.max(initial=0)) + int(cfg.profile.tap_samples(prach)[-1])
    n_rx = prach.cp_len + prach.pdp_len + max_extra
    rx = np.zeros((cfg.n_antennas, n_rx), dtype=complex)
    tx_cache = {}
    ue_chan = chan_ss.spawn(active_ues)
    for u in range(active_ues):
        v = int(ue_pre[u])
        if v not in tx_cache:
            tx_cache[v] = modulate_prach(generate_preamble(prach.zc, v), prach)
        for a, ant_ss in enumerate(ue_chan[u].spawn(cfg.n_antennas)):
            y = apply_channel(tx_cache[v], cfg.profile, int(ue_delay[u]), ant_ss, prach)
            rx[a, :len(y)] += y
    if not noiseless:
        for a, ant_ss in enumerate(noise_ss.spawn(cfg.n_antennas)):
            rx[a] = add_awgn(rx[a], cfg.snr_db, ant_ss)

    root = generate_root_sequence(prach.zc)
    pdp = compute_pdp(list(rx), root, prach)
    with warnings.catch_warnings():
        # an all-zero PDP (no UEs, no noise) is expected here
        warnings.simplefilter("ignore", RuntimeWarning)
        thr = estimate_threshold(pdp)
    peaks = detect_peaks(pdp, thr)
    bins = segment_bins(pdp)

    mult = np.bincount(ue_pre, minlength=cfg.n_preambles) if active_ues else np.zeros(cfg.n_preambles, np.int64)
    used = np.flatnonzero(mult)
    bidx = np.array([bin_of_preamble(int(v), prach) for v in used], dtype=np.int64)
    order = np.argsort(bidx, kind="stable")
    used, bidx = used[order], bidx[order]
    n = len(used)
    rows = Dataset(
        np.full(n, cfg.event_id), np.full(n, slot_id), bidx,
        bins[bidx] if n else np.zeros((0, N_FEATURES)),
        (mult[used] >= 2).astype(np.int64),
    )
    return RaoOutcome(mult, ue_pre, ue_delay, peaks, rows, pdp)


def _simulate_chunk(args):
    cfg, items = args
    return [simulate_rao(int(n), cfg, rao_seed(cfg, r), slot_id=r).rows for r, n in items]


def run_scenario(cfg: ScenarioConfig, jobs: int = 1) -> Dataset:
    """Simulate every RAO of one event; results are merged in RAO order."""
    counts = draw_arrival_slots(cfg)
    items = [(r, int(n)) for r, n in enumerate(counts) if n > 0]
    if jobs <= 1 or len(items) < 2:
        parts = _simulate_chunk((cfg, items))
    else:
        size = math.ceil(len(items) / jobs)
        chunks = [(cfg, items[i:i + size]) for i in range(0, len(items), size)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = [rows for chunk in pool.map(_simulate_chunk, chunks) for rows in chunk]
    return Dataset.concat(parts)


def write_dataset(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for i in range(len(data)):
            w.writerow(
                [int(data.event_id[i]), int(data.slot_id[i]), int(data.bin_index[i])]
                + [repr(float(p)) for p in data.features[i]]
                + [int(data.label[i])]
            )


def read_dataset(path) -> Dataset:
    ev, sl, bi, feats, lab = [], [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaMismatch(f"{path}: empty file, expected header with {N_COLUMNS} columns")
        if len(header) != N_COLUMNS:
            raise SchemaMismatch(f"{path}:1: expected {N_COLUMNS} columns, found {len(header)}")
        if header != HEADER:
            raise SchemaMismatch(f"{path}:1: unexpected header")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != N_COLUMNS:
                raise SchemaMismatch(f"{path}:{lineno}: expected {N_COLUMNS} columns, found {len(row)}")
            try:
                ev.append(int(row[0]))
                sl.append(int(row[1]))
                bi.append(int(row[2]))
                feats.append([float(x) for x in row[3:3 + N_FEATURES]])
                label = int(row[-1])
            except ValueError as exc:
                raise DatasetParseError(f"{path}:{lineno}: {exc}") from None
            if label not in (0, 1):
                raise DatasetParseError(f"{path}:{lineno}: label must be 0 or 1, got {label}")
            lab.append(label)
    if not lab:
        return Dataset.empty()
    return Dataset(ev, sl, bi, feats, lab)
