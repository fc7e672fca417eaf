"""Shot-level Monte Carlo of serialized charge/spin sequences over many NVs.

Each NV carries a charge state (NV0 or NV-) and, while in NV-, a spin state
with m_s = +1 and -1 merged into one level since spin-to-charge conversion
does not tell them apart.  Shots are simulated in blocks of a fixed size; every
block draws from its own counter-derived random stream so results depend only
on the seed, never on the number of worker threads.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, is_dataclass
import hashlib
import json
import math

import numpy as np

from ..errors import ConfigError, InvalidArgumentError
from ..physics import CrosstalkModel, MicrowaveDrive, SpinEchoModel, flip_probability, spin_echo_signal, spin_repolarization_prob
from ..rng import substream
from ..statmodels import BimodalChargeModel, ChargeState, SkewNormalParams, optimal_threshold, sample_skew_normal

ORIENTATIONS = ("A", "B", "C", "D")
BRIGHT_ORIENTATIONS = ("A", "B")
MS0, MS1 = 0, 1
NO_SPIN = -1

DEFAULT_BRIGHTNESS = BimodalChargeModel(0.5, SkewNormalParams(40.0, 8.0, 2.0), SkewNormalParams(110.0, 12.0, -1.0))


@dataclass(frozen=True)
class NvCenter:
    id: int
    position_um: tuple
    orientation: str
    resonance_low_hz: float
    resonance_high_hz: float
    scc_fidelity_given_ms0: float = 0.8
    scc_fidelity_given_ms1: float = 0.6
    c13_osc_freqs: tuple = ()
    brightness_model: BimodalChargeModel = DEFAULT_BRIGHTNESS

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise InvalidArgumentError(f"orientation must be one of {ORIENTATIONS}")
        for name in ("scc_fidelity_given_ms0", "scc_fidelity_given_ms1"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidArgumentError(f"{name} must be a probability")
        if len(self.position_um) != 2:
            raise InvalidArgumentError("position_um must be a 2-vector")
        if len(self.c13_osc_freqs) not in (0, 2):
            raise InvalidArgumentError("c13_osc_freqs: none or two frequencies")

    @property
    def usable(self):
        """Only orientations aligned with the readout polarization are bright enough."""
        return self.orientation in BRIGHT_ORIENTATIONS

    def to_dict(self):
        d = asdict(self)
        d["position_um"] = list(self.position_um)
        d["c13_osc_freqs"] = list(self.c13_osc_freqs)
        d["brightness_model"] = self.brightness_model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = _strict_fields(cls, d)
        if "brightness_model" in d:
            d["brightness_model"] = BimodalChargeModel.from_dict(d["brightness_model"])
        d["position_um"] = tuple(d["position_um"])
        d["c13_osc_freqs"] = tuple(d.get("c13_osc_freqs", ()))
        return cls(**d)


@dataclass(frozen=True)
class RatesConfig:
    """Readout fidelities, readout survival and initialization success.

    ``survival_nvm`` is the bookkeeping survival used by the closed-form
    conditional-initialization model: the probability that an NV read
    correctly as NV- is read as NV- again by the next readout is
    ``survival_nvm * fidelity_nvm``.
    """

    fidelity_nvm: float
    fidelity_nv0: float
    survival_nvm: float = 1.0
    init_success: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{f.name} must be in [0, 1], got {v}")
        if self.fidelity_nvm + self.fidelity_nv0 <= 1.0:
            raise InvalidArgumentError("fidelity_nvm + fidelity_nv0 must exceed 1")

    @property
    def physical_survival(self):
        """Per-readout probability that NV- is not ionized.

        An NV ionized during one readout is misread as NV- by the next with
        probability ``1 - f0``; solving
        ``s f- + (1 - s)(1 - f0) = a f-`` for ``s`` makes the Monte Carlo
        reproduce the four-term bookkeeping exactly.
        """
        fm, f0, a = self.fidelity_nvm, self.fidelity_nv0, self.survival_nvm
        s = (a * fm + f0 - 1.0) / (fm + f0 - 1.0)
        if s < 0:
            raise InvalidArgumentError("survival_nvm * fidelity_nvm must be >= 1 - fidelity_nv0")
        return min(s, 1.0)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**_strict_fields(cls, d))


# ---------------------------------------------------------------------------
# sequence steps

@dataclass(frozen=True)
class ChargePolarizeSerial:
    targets: tuple
    success_prob: float = 0.77


@dataclass(frozen=True)
class Ionize:
    targets: tuple
    success_prob: float = 1.0


@dataclass(frozen=True)
class SpinPolarizeGlobal:
    fidelity: float = 1.0


@dataclass(frozen=True)
class MicrowavePulse:
    """Global pulse, one tone per target orientation (or one explicit tone)."""

    targets: tuple = ("A", "B")
    angle: float = math.pi
    random: bool = False
    frequency_hz: float = None
    rabi_hz: float = 8e6


@dataclass(frozen=True)
class SpinEcho:
    """Echo block; every NV uses its own 13C oscillation frequencies."""

    total_evolution_s: float
    baseline: float = 0.5
    collapse_time_s: float = 10e-6
    revival_time_s: float = 75e-6
    revival_amps: tuple = (0.4, 0.3)


@dataclass(frozen=True)
class SccSerial:
    """Serialized spin-to-charge conversion.

    ``inserted_pi_pulses`` holds ``(position, targets)`` pairs: a pi pulse on
    ``targets`` is applied just before the NV at ``ordering[position]`` is
    converted.  ``relaxation_time_s`` enables 1/e spin-contrast decay with
    elapsed time ``position * step_time_s``.
    """

    ordering: tuple
    inserted_pi_pulses: tuple = ()
    crosstalk: CrosstalkModel = field(default_factory=CrosstalkModel)
    step_time_s: float = 10e-6
    relaxation_time_s: float = None
    rabi_hz: float = 8e6


@dataclass(frozen=True)
class Readout:
    exposure_ms: float = 50.0
    rates: RatesConfig = None
    survival: float = None

    @property
    def survival_prob(self):
        if self.survival is not None:
            return self.survival
        if self.rates is not None:
            return self.rates.survival_nvm
        return 1.0


STEP_TYPES = {cls.__name__: cls for cls in (ChargePolarizeSerial, Ionize, SpinPolarizeGlobal, MicrowavePulse, SpinEcho, SccSerial, Readout)}


def _jsonable(value):
    if is_dataclass(value):
        return {f.name: _jsonable(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _tupleize(value):
    if isinstance(value, list):
        return tuple(_tupleize(v) for v in value)
    return value


def _strict_fields(cls, d):
    if not isinstance(d, dict):
        raise ConfigError(f"{cls.__name__}: expected a mapping")
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown keys {sorted(unknown)}")
    return dict(d)


def step_to_dict(step):
    return {"step": type(step).__name__, **_jsonable(step)}


def step_from_dict(d):
    d = dict(d)
    kind = d.pop("step", None)
    if kind not in STEP_TYPES:
        raise ConfigError(f"unknown sequence step {kind!r}")
    cls = STEP_TYPES[kind]
    d = _strict_fields(cls, d)
    if cls is SccSerial and d.get("crosstalk") is not None:
        d["crosstalk"] = CrosstalkModel(**_strict_fields(CrosstalkModel, d["crosstalk"]))
    if cls is Readout and d.get("rates") is not None:
        d["rates"] = RatesConfig.from_dict(d["rates"])
    if cls is SccSerial and "inserted_pi_pulses" in d:
        d["inserted_pi_pulses"] = tuple((int(p), tuple(t)) for p, t in d["inserted_pi_pulses"])
    return cls(**{k: _tupleize(v) for k, v in d.items()})


@dataclass(frozen=True)
class SequenceConfig:
    steps: tuple
    drive_frequencies_hz: tuple = ()

    def to_dict(self):
        return {
            "steps": [step_to_dict(s) for s in self.steps],
            "drive_frequencies_hz": [list(p) for p in self.drive_frequencies_hz],
        }

    @classmethod
    def from_dict(cls, d):
        d = _strict_fields(cls, d)
        steps = tuple(step_from_dict(s) for s in d["steps"])
        drives = tuple((str(o), float(f)) for o, f in d.get("drive_frequencies_hz", ()))
        return cls(steps, drives)

    @property
    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @property
    def readout(self):
        return next(s for s in self.steps if isinstance(s, Readout))

    def validate(self, nvs):
        ids = {nv.id for nv in nvs}
        by_id = {nv.id: nv for nv in nvs}
        n_readout = sum(isinstance(s, Readout) for s in self.steps)
        if n_readout != 1:
            raise ConfigError(f"sequence needs exactly one Readout, found {n_readout}")
        if not isinstance(self.steps[-1], Readout):
            raise ConfigError("Readout must be the last step")
        for s in self.steps:
            targets = getattr(s, "targets", None)
            if isinstance(s, (ChargePolarizeSerial, Ionize)):
                unknown = set(targets) - ids
                if unknown:
                    raise ConfigError(f"{type(s).__name__} targets unknown NVs {sorted(unknown)}")
                if not 0.0 <= s.success_prob <= 1.0:
                    raise ConfigError("success_prob must be a probability")
            if isinstance(s, MicrowavePulse):
                bad = set(targets) - set(ORIENTATIONS)
                if bad:
                    raise ConfigError(f"MicrowavePulse targets unknown orientations {sorted(bad)}")
            if isinstance(s, SccSerial):
                order = list(s.ordering)
                if len(set(order)) != len(order):
                    raise ConfigError("SccSerial ordering repeats an NV")
                unknown = set(order) - ids
                if unknown:
                    raise ConfigError(f"SccSerial ordering names unknown NVs {sorted(unknown)}")
                unusable = [i for i in order if not by_id[i].usable]
                if unusable:
                    raise ConfigError(f"NVs {unusable} have a dim orientation and cannot be read out")
                for pos, tg in s.inserted_pi_pulses:
                    if not 0 <= pos <= len(order):
                        raise ConfigError(f"inserted pi pulse position {pos} outside ordering")
                    if set(tg) - set(ORIENTATIONS):
                        raise ConfigError("inserted pi pulse targets unknown orientation")


# ---------------------------------------------------------------------------
# records

@dataclass
class ShotRecord:
    shot_index: int
    nv_ids: tuple
    counts: np.ndarray
    charge_bit: np.ndarray
    true_charge: np.ndarray
    spin_prep: np.ndarray
    crosstalk_reset: np.ndarray
    random_flag: int
    sequence_hash: str
    seed: int


@dataclass
class ShotRecords:
    """Columnar store of many shots; arrays are ``(n_shots, n_nvs)``."""

    nv_ids: np.ndarray
    counts: np.ndarray
    charge_bit: np.ndarray
    true_charge: np.ndarray
    spin_prep: np.ndarray
    crosstalk_reset: np.ndarray
    random_flag: np.ndarray
    thresholds: np.ndarray
    seed: int = 0
    sequence_hash: str = ""

    def __len__(self):
        return self.counts.shape[0]

    @property
    def n_nvs(self):
        return self.counts.shape[1]

    def shot(self, i):
        return ShotRecord(
            int(i), tuple(int(v) for v in self.nv_ids), self.counts[i], self.charge_bit[i], self.true_charge[i],
            self.spin_prep[i], self.crosstalk_reset[i], int(self.random_flag[i]), self.sequence_hash, self.seed,
        )

    def __getitem__(self, i):
        return self.shot(i)

    def column(self, nv_id):
        return int(np.nonzero(self.nv_ids == nv_id)[0][0])

    def select(self, mask):
        return ShotRecords(self.nv_ids, self.counts[mask], self.charge_bit[mask], self.true_charge[mask],
                           self.spin_prep[mask], self.crosstalk_reset[mask], self.random_flag[mask],
                           self.thresholds, self.seed, self.sequence_hash)

    @classmethod
    def concatenate(cls, parts):
        first = parts[0]
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
        return cls(first.nv_ids, cat("counts"), cat("charge_bit"), cat("true_charge"), cat("spin_prep"),
                   cat("crosstalk_reset"), cat("random_flag"), first.thresholds, first.seed, first.sequence_hash)


# ---------------------------------------------------------------------------
# engine

def default_drive_frequencies(nvs):
    out = {}
    for o in ORIENTATIONS:
        fs = [nv.resonance_low_hz for nv in nvs if nv.orientation == o]
        if fs:
            out[o] = float(np.mean(fs))
    return out


class _Engine:
    def __init__(self, nvs, seq, thresholds):
        self.nvs = list(nvs)
        self.seq = seq
        self.index = {nv.id: k for k, nv in enumerate(self.nvs)}
        self.n = len(self.nvs)
        self.res = np.array([nv.resonance_low_hz for nv in self.nvs])
        self.drives = default_drive_frequencies(self.nvs)
        self.drives.update(dict(seq.drive_frequencies_hz))
        pos = np.array([nv.position_um for nv in self.nvs], dtype=float)
        self.dist = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1))
        self.thresholds = thresholds
        self._flip_cache = {}

    def flip_probs(self, freq_hz, rabi_hz, angle):
        key = (freq_hz, rabi_hz, angle)
        if key not in self._flip_cache:
            self._flip_cache[key] = np.array(
                [flip_probability(MicrowaveDrive(r, freq_hz, rabi_hz), angle) for r in self.res]
            )
        return self._flip_cache[key]

    def tones(self, targets, frequency_hz):
        if frequency_hz is not None:
            return [frequency_hz]
        missing = [o for o in targets if o not in self.drives]
        if missing:
            raise ConfigError(f"no drive frequency for orientation(s) {missing}")
        return [self.drives[o] for o in targets]

    def apply_tones(self, rng, spin, targets, frequency_hz, rabi_hz, angle, active=None):
        for f in self.tones(targets, frequency_hz):
            p = self.flip_probs(f, rabi_hz, angle)
            flip = rng.random(spin.shape) < p
            if active is not None:
                flip &= active[:, None]
            spin ^= flip.astype(np.int8)

    def run_block(self, rng, n_shots):
        n = self.n
        charge = np.zeros((n_shots, n), dtype=np.int8)
        spin = np.zeros((n_shots, n), dtype=np.int8)
        spin_prep = np.full((n_shots, n), NO_SPIN, dtype=np.int8)
        reset = np.zeros((n_shots, n), dtype=bool)
        random_flag = np.full(n_shots, -1, dtype=np.int8)
        counts = None
        for step in self.seq.steps:
            if isinstance(step, ChargePolarizeSerial):
                idx = [self.index[i] for i in step.targets]
                charge[:, idx] = rng.random((n_shots, len(idx))) < step.success_prob
                # freshly created NV- has an unpolarized spin
                spin[:, idx] = (rng.random((n_shots, len(idx))) >= 1.0 / 3.0).astype(np.int8)
            elif isinstance(step, Ionize):
                idx = [self.index[i] for i in step.targets]
                hit = rng.random((n_shots, len(idx))) < step.success_prob
                charge[:, idx] = np.where(hit, 0, charge[:, idx])
            elif isinstance(step, SpinPolarizeGlobal):
                spin[:] = (rng.random(spin.shape) >= step.fidelity).astype(np.int8)
            elif isinstance(step, MicrowavePulse):
                active = None
                if step.random:
                    coin = rng.random(n_shots) < 0.5
                    if (random_flag < 0).all():
                        random_flag[:] = coin
                    active = coin
                self.apply_tones(rng, spin, step.targets, step.frequency_hz, step.rabi_hz, step.angle, active)
            elif isinstance(step, SpinEcho):
                for k, nv in enumerate(self.nvs):
                    model = SpinEchoModel(step.baseline, step.collapse_time_s, step.revival_time_s,
                                          tuple(step.revival_amps), tuple(nv.c13_osc_freqs))
                    p = float(np.clip(spin_echo_signal(step.total_evolution_s, model), 0.0, 1.0))
                    spin[:, k] ^= (rng.random(n_shots) < p).astype(np.int8)
            elif isinstance(step, SccSerial):
                spin_prep[:] = np.where(charge == 1, spin, NO_SPIN)
                self.scc(rng, step, charge, spin, reset)
            elif isinstance(step, Readout):
                a = step.survival_prob
                if a < 1.0:
                    ionized = rng.random(charge.shape) >= a
                    charge[ionized] = 0
                counts = np.empty((n_shots, n))
                for k, nv in enumerate(self.nvs):
                    model = nv.brightness_model
                    bright = charge[:, k] == ChargeState.NVM
                    c0 = sample_skew_normal(model.mode_nv0, rng, n_shots)
                    c1 = sample_skew_normal(model.mode_nvm, rng, n_shots)
                    counts[:, k] = np.where(bright, c1, c0)
        bits = (counts > self.thresholds).astype(np.int8)
        return counts, bits, charge, spin_prep, reset, random_flag

    def scc(self, rng, step, charge, spin, reset):
        order = [self.index[i] for i in step.ordering]
        pulses = {}
        for pos, tg in step.inserted_pi_pulses:
            pulses.setdefault(pos, []).append(tuple(tg))
        xt = step.crosstalk
        n_shots = charge.shape[0]
        for pos, k in enumerate(order):
            for tg in pulses.get(pos, ()):
                self.apply_tones(rng, spin, tg, None, step.rabi_hz, math.pi)
            if step.relaxation_time_s:
                q = -math.expm1(-pos * step.step_time_s / step.relaxation_time_s)
                relax = rng.random(n_shots) < q
                thermal = (rng.random(n_shots) >= 1.0 / 3.0).astype(np.int8)
                spin[:, k] = np.where(relax, thermal, spin[:, k])
            nv = self.nvs[k]
            u = rng.random(n_shots)
            lose = np.where(spin[:, k] == MS0, u >= nv.scc_fidelity_given_ms0, u < nv.scc_fidelity_given_ms1)
            charge[:, k] = np.where((charge[:, k] == 1) & lose, 0, charge[:, k])
            if xt is not None and xt.repolarization_prob > 0:
                later = np.array(order[pos + 1:], dtype=int)
                if later.size:
                    p = spin_repolarization_prob(self.dist[k, later], xt)
                    sel = p > 1e-12
                    if sel.any():
                        cols = later[sel]
                        hit = rng.random((n_shots, cols.size)) < p[sel]
                        spin[:, cols] = np.where(hit, MS0, spin[:, cols])
                        reset[:, cols] |= hit
        for tg in pulses.get(len(order), ()):
            self.apply_tones(rng, spin, tg, None, step.rabi_hz, math.pi)


def default_thresholds(nvs):
    return np.array([optimal_threshold(nv.brightness_model).threshold for nv in nvs])


def run_shots(nvs, seq, n_shots, rng_seed, thresholds=None, block_size=8192, threads=1):
    """Simulate ``n_shots`` repetitions of ``seq`` on ``nvs``.

    Parameters
    ----------
    nvs : list of NvCenter
    seq : SequenceConfig
    n_shots : int
    rng_seed : int
        Master seed; block ``j`` draws from ``substream(seed, "shots", j)``.
    thresholds : array_like, optional
        Per-NV count thresholds for ``charge_bit``.  Defaults to the optimal
        threshold of each NV's brightness model.
    block_size : int
        Shots per random-stream block.  Part of the reproducibility contract.
    threads : int
        Worker threads; has no effect on the output.

    Returns
    -------
    ShotRecords
    """
    seq.validate(nvs)
    if n_shots < 1:
        raise ConfigError("n_shots must be >= 1")
    thr = default_thresholds(nvs) if thresholds is None else np.asarray(thresholds, dtype=float)
    engine = _Engine(nvs, seq, thr)
    blocks = [(j, min(block_size, n_shots - j * block_size)) for j in range(math.ceil(n_shots / block_size))]

    def work(job):
        j, m = job
        return engine.run_block(substream(rng_seed, "shots", j), m)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    counts, bits, charge, spin_prep, reset, flags = (np.concatenate(x) for x in zip(*parts))
    return ShotRecords(
        nv_ids=np.array([nv.id for nv in nvs]),
        counts=counts,
        charge_bit=bits,
        true_charge=charge,
        spin_prep=spin_prep,
        crosstalk_reset=reset,
        random_flag=flags,
        thresholds=thr,
        seed=int(rng_seed),
        sequence_hash=seq.hash,
    )
