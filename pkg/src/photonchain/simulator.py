"""Monte-Carlo generator of synthetic measurement-chain data.

One protocol trial is simulated branch by branch:

1. the qubit starts excited with probability ``p_excited_init`` (sets the
   pre-readout flag);
2. amplifier leakage populates the cavity with thermally distributed
   backaction photons of mean nbar = (1/4) L (G - 1), added on top of the
   intended cavity photon number (1 for photon trials, 0 for control trials);
3. the preparation pulse fails with probability ``p_pulse_fail`` (no intended
   photon, qubit left unexcited);
4. every cavity photon exits through the output port with probability
   kappa_out / kappa, otherwise it is lost internally;
5. the qubit loses its excitation during the emission window with the
   exponential-race probability 1 / (1 + kappa T1); a decay clears the
   post-readout flag and detunes the intended photon out of the analyzed mode;
6. one quadrature value is drawn from the phase-averaged marginal of the
   emitted photon number, imprinted on the mode function, and buried in white
   noise plus a slowly drifting dc offset and readout-plateau segments.

The white-noise level is referred so that the noise recovered by the standard
mode extraction equals N_add / 2 = (N_jpa + N_hemt / G_jpa) / 2 quadrature
variance, i.e. the chain's added noise is defined per extracted mode quantum.
Readout plateaus are rendered only as dc segments (the qubit readout itself is
an ideal classifier).  All randomness flows from one master seed through the
named substreams ``trial``, ``noise``, ``drift``, and ``sweep``; datasets are
byte-reproducible for a fixed seed and configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .characterize import nbar_from_gain, planck_occupation
from .errors import EmptyDatasetError
from .fock import sample_fock_marginal
from .modes import (
    TemporalModeParams,
    TraceGrid,
    background_window,
    mode_shape,
    mode_window_overlap,
)

TWO_PI = 2.0 * math.pi
MODE_SUPPORT_US = (-1.0, 8.0)  # photon window relative to t0
_SUBSTREAMS = {"trial": 0, "noise": 1, "drift": 2, "sweep": 3}


def substream(seed: int, name: str) -> np.random.Generator:
    """Named child generator of the master seed; drawing order is part of the contract."""
    return np.random.default_rng(np.random.SeedSequence((int(seed), _SUBSTREAMS[name])))


def derive_set_seed(master_seed: int, set_index: int) -> int:
    """Stable per-set master seed for multi-set acquisitions."""
    words = np.random.SeedSequence((int(master_seed), 101, int(set_index))).generate_state(2)
    return int(words[0]) << 32 | int(words[1])


@dataclass(frozen=True)
class ProtocolConfig:
    """Pulse-sequence parameters plus spectroscopic metadata.

    ``qubit_freq_ghz``, ``cavity_freq_ghz`` and ``chi_mhz`` are carried as
    metadata only; no dynamics depend on them.  Two inconsistent recorded
    values of the qubit frequency exist (3.495 and 4.385 GHz); reports flag
    this and default to the former.
    """

    t1_qubit_us: float = 10.0
    p_excited_init: float = 0.06
    p_pulse_fail: float = 0.0
    drive_duration_ns: float = 150.0
    kappa_khz: float = 410.0
    kappa_out_khz: float = 300.0
    qubit_freq_ghz: float = 3.495
    cavity_freq_ghz: float = 5.804
    chi_mhz: float = -1.0
    trace_length_us: float = 56.0
    t0_us: float = 20.0
    readout_intervals_us: tuple = ((2.0, 12.0), (40.0, 50.0))

    def __post_init__(self):
        for name in ("p_excited_init", "p_pulse_fail"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} = {p} outside [0, 1]")
        if self.t1_qubit_us <= 0:
            raise ValueError("T1 must be positive")
        if not 0 < self.kappa_out_khz <= self.kappa_khz:
            raise ValueError("rates must satisfy 0 < kappa_out <= kappa")
        if not 0 < self.t0_us < self.trace_length_us:
            raise ValueError("t0 must lie inside the trace")
        object.__setattr__(
            self,
            "readout_intervals_us",
            tuple((float(a), float(b)) for a, b in self.readout_intervals_us),
        )

    @property
    def kappa_rad_per_us(self) -> float:
        return TWO_PI * self.kappa_khz * 1e-3

    @property
    def branching_ratio(self) -> float:
        return self.kappa_out_khz / self.kappa_khz


def qubit_decay_probability(protocol: ProtocolConfig) -> float:
    """Exponential race of T1 decay against cavity emission: 1 / (1 + kappa T1)."""
    if math.isinf(protocol.t1_qubit_us):
        return 0.0
    return 1.0 / (1.0 + protocol.kappa_rad_per_us * protocol.t1_qubit_us)


def default_protocol(post_pulse_rejection: float = 0.26, **overrides) -> ProtocolConfig:
    """Reference protocol with the pulse-failure probability solved from the
    aggregate post-pulse rejection: (1 - p_fail)(1 - p_decay) = 1 - rejection.

    The split between pulse infidelity and T1 decay is a modeling choice; the
    decay share is computed from T1 and kappa, the remainder is assigned to
    pulse infidelity.  The manifest records both.
    """
    base = ProtocolConfig(**overrides)
    p_decay = qubit_decay_probability(base)
    retained = 1.0 - post_pulse_rejection
    p_fail = 1.0 - retained / (1.0 - p_decay)
    return replace(base, p_pulse_fail=min(max(p_fail, 0.0), 1.0))


@dataclass(frozen=True)
class ChainConfig:
    """Measurement-chain parameters: amplifier gain/noise, leakage, and plumbing."""

    g_jpa_db: float = 29.0
    n_jpa: float = 0.39
    n_hemt: float = 18.0
    isolation_l: float = 2.1e-4
    apparatus_gain: float = 1.0  # volt*sqrt(us) per quadrature unit
    dc_drift_amp_v: float | None = None  # None -> 5% of the photon-mode peak
    dc_drift_tau_us: float = 200.0
    gain_bandwidth_mhz: float = 43.0
    sample_dt_us: float = 0.01
    readout_plateau_v: float = 1.0
    post_jpa_gain_db: float = 40.0  # rest-of-chain gain, thermal sweeps only

    def __post_init__(self):
        if not 0.0 <= self.g_jpa_db <= 40.0:
            raise ValueError(f"JPA gain {self.g_jpa_db} dB outside [0, 40]")
        if self.isolation_l < 0:
            raise ValueError("isolation fraction must be >= 0")
        if self.apparatus_gain <= 0:
            raise ValueError("apparatus gain must be positive")
        if self.n_jpa < 0 or self.n_hemt < 0:
            raise ValueError("added-noise contributions must be >= 0")
        if self.sample_dt_us <= 0 or self.dc_drift_tau_us <= 0:
            raise ValueError("sample interval and drift time must be positive")

    @property
    def g_jpa_linear(self) -> float:
        return 10.0 ** (self.g_jpa_db / 10.0)

    @property
    def added_noise(self) -> float:
        return self.n_jpa + self.n_hemt / self.g_jpa_linear

    @property
    def efficiency(self) -> float:
        return 1.0 / (2.0 * self.added_noise + 1.0)


@dataclass(frozen=True, eq=False)
class TrialRecord:
    """One simulated protocol iteration with its hidden emission label."""

    trace: np.ndarray | None
    pre_readout_ground: bool
    post_readout_excited: bool
    truth_emitted_n: int
    mode_kind: str

    @property
    def retained(self) -> bool:
        return self.pre_readout_ground and self.post_readout_excited


def default_grid(protocol: ProtocolConfig, chain: ChainConfig) -> TraceGrid:
    n = int(round(protocol.trace_length_us / chain.sample_dt_us))
    return TraceGrid(chain.sample_dt_us, n, protocol.t0_us)


def default_mode_params(protocol: ProtocolConfig, chain: ChainConfig) -> TemporalModeParams:
    """Mode family defaults: rise = drive duration, decay = kappa, bandwidth
    from the gain-bandwidth product divided by the amplitude gain."""
    bandwidth = chain.gain_bandwidth_mhz / math.sqrt(chain.g_jpa_linear)
    return TemporalModeParams(protocol.drive_duration_ns, protocol.kappa_khz, bandwidth)


def mode_support(grid: TraceGrid) -> tuple:
    return (grid.t0_us + MODE_SUPPORT_US[0], grid.t0_us + MODE_SUPPORT_US[1])


class TrialEngine:
    """Precomputed kinematics for one (kind, protocol, chain) combination.

    ``sample_quadrature=False`` suppresses the per-trial quadrature draw
    entirely (including vacuum fluctuations); this is an unphysical plumbing
    mode used to exercise trace assembly and extraction in isolation.
    """

    def __init__(self, kind, protocol: ProtocolConfig, chain: ChainConfig, *, sample_quadrature=True):
        if kind not in ("photon", "control"):
            raise ValueError(f"kind must be 'photon' or 'control', got {kind!r}")
        self.kind = kind
        self.protocol = protocol
        self.chain = chain
        self.sample_quadrature = sample_quadrature

        self.grid = default_grid(protocol, chain)
        self.mode_params = default_mode_params(protocol, chain)
        self.mode = mode_shape(self.mode_params, self.grid, support_us=mode_support(self.grid))
        self.window = background_window(self.grid, protocol.readout_intervals_us)
        self.overlap = mode_window_overlap(self.mode, self.window)

        self.t_out = protocol.branching_ratio
        self.nbar = nbar_from_gain(chain.isolation_l, chain.g_jpa_db)
        self.p_decay = qubit_decay_probability(protocol)

        overlap_correction = 1.0 - self.overlap**2
        self.noise_sigma = chain.apparatus_gain * math.sqrt(
            chain.added_noise * overlap_correction / (2.0 * self.grid.dt_us)
        )
        peak = chain.apparatus_gain * float(self.mode.samples.max())
        self.drift_amp = 0.05 * peak if chain.dc_drift_amp_v is None else chain.dc_drift_amp_v
        self.drift_alpha = math.exp(-self.grid.dt_us / chain.dc_drift_tau_us)

        t = self.grid.times()
        self.plateau_masks = [
            (t >= a) & (t < b) for a, b in protocol.readout_intervals_us
        ]

    def draw_trials(self, n, rng):
        """All per-trial scalar randomness, drawn in a fixed documented order."""
        from .fock import MAX_FOCK

        excited_start = rng.random(n) < self.protocol.p_excited_init
        # thermal counts; the clip truncates an astronomically rare tail that
        # the marginal sampler does not support
        backaction = np.minimum(rng.geometric(1.0 / (1.0 + self.nbar), n) - 1, MAX_FOCK - 1)
        pulse_ok = rng.random(n) >= self.protocol.p_pulse_fail
        u_emit = rng.random(n)
        decay = rng.random(n) < self.p_decay
        back_emitted = rng.binomial(backaction, self.t_out)

        intended = (~excited_start) & pulse_ok & (self.kind == "photon")
        intended_emitted = intended & (u_emit < self.t_out) & (~decay)
        truth = back_emitted + intended_emitted.astype(int)
        pre_ground = ~excited_start
        post_excited = (~excited_start) & pulse_ok & (~decay)

        x = np.zeros(n)
        if self.sample_quadrature:
            for value in np.unique(truth):
                idx = truth == value
                x[idx] = sample_fock_marginal(int(value), int(idx.sum()), rng)
        return {
            "excited_start": excited_start,
            "pulse_ok": pulse_ok,
            "decay": decay,
            "pre_ground": pre_ground,
            "post_excited": post_excited,
            "truth": truth,
            "quadrature": x,
        }

    def run(self, n, rng_trial, rng_noise, rng_drift, *, keep_traces="kept", chunk_size=2048):
        """Simulate ``n`` trials; ``keep_traces`` is 'all', 'kept', or 'none'."""
        draws = self.draw_trials(n, rng_trial)
        kept = draws["pre_ground"] & draws["post_excited"]

        dt = self.grid.dt_us
        f = self.mode.samples
        fw = f * dt
        bw = self.window.samples * dt
        denom = 1.0 - self.overlap**2
        signal = self.chain.apparatus_gain * draws["quadrature"]

        plateau = self.chain.readout_plateau_v
        levels = []
        if plateau > 0 and self.plateau_masks:
            states = [draws["excited_start"], draws["post_excited"]]
            for i, _ in enumerate(self.plateau_masks):
                state = states[i] if i < 2 and len(self.plateau_masks) == 2 else draws["excited_start"]
                levels.append(np.where(state, plateau, -plateau))

        vq = np.empty(n)
        blocks = []
        drift_state = self.drift_amp * rng_drift.normal() if self.drift_amp > 0 else 0.0
        step_sigma = self.drift_amp * math.sqrt(max(1.0 - self.drift_alpha**2, 0.0))

        for start in range(0, n, chunk_size):
            sl = slice(start, min(start + chunk_size, n))
            m = sl.stop - sl.start
            if self.noise_sigma > 0:
                block = rng_noise.normal(0.0, self.noise_sigma, (m, self.grid.n_samples))
            else:
                block = np.zeros((m, self.grid.n_samples))
            if self.drift_amp > 0:
                eps = rng_drift.normal(0.0, 1.0, m * self.grid.n_samples)
                drift, zf = lfilter(
                    [step_sigma], [1.0, -self.drift_alpha], eps, zi=[self.drift_alpha * drift_state]
                )
                drift_state = drift[-1]
                block += drift.reshape(m, self.grid.n_samples)
            block += signal[sl, None] * f[None, :]
            for mask, level in zip(self.plateau_masks, levels):
                block[:, mask] += level[sl, None]

            vq[sl] = (block @ fw - (block @ bw) * self.overlap) / denom
            if keep_traces == "all":
                blocks.append(block)
            elif keep_traces == "kept":
                blocks.append(block[kept[sl]])

        traces = np.vstack(blocks) if blocks else None
        return draws, kept, vq, traces


@dataclass(frozen=True, eq=False)
class SimulatedDataset:
    """Post-selected synthetic measurement set plus per-trial records and tallies."""

    kind: str
    protocol: ProtocolConfig
    chain: ChainConfig
    seed: int
    grid: TraceGrid
    mode_params: TemporalModeParams
    quadratures: object  # tomography.QuadratureDataset
    traces: np.ndarray | None  # post-selected trace matrix
    records: tuple | None  # every trial, retained or not
    truth_emitted: np.ndarray  # retained trials only
    tallies: dict

    @property
    def retained_fraction(self) -> float:
        return self.tallies["n_retained"] / self.tallies["n_trials"]


def _tallies(draws, kept):
    pre_fail = ~draws["pre_ground"]
    pulse_fail = draws["pre_ground"] & ~draws["pulse_ok"]
    decayed = draws["pre_ground"] & draws["pulse_ok"] & draws["decay"]
    return {
        "n_trials": int(kept.size),
        "n_retained": int(kept.sum()),
        "retained_fraction": float(kept.mean()),
        "rejected_pre_readout": int(pre_fail.sum()),
        "rejected_pulse_failure": int(pulse_fail.sum()),
        "rejected_qubit_decay": int(decayed.sum()),
    }


def simulate_trial(kind, protocol, chain, rng, *, sample_quadrature=True) -> TrialRecord:
    """One protocol iteration; all randomness comes from the supplied generator."""
    engine = TrialEngine(kind, protocol, chain, sample_quadrature=sample_quadrature)
    draws, _, _, traces = engine.run(1, rng, rng, rng, keep_traces="all")
    return TrialRecord(
        trace=traces[0],
        pre_readout_ground=bool(draws["pre_ground"][0]),
        post_readout_excited=bool(draws["post_excited"][0]),
        truth_emitted_n=int(draws["truth"][0]),
        mode_kind=kind,
    )


def simulate_dataset(
    kind,
    n_trials,
    protocol: ProtocolConfig,
    chain: ChainConfig,
    seed: int,
    *,
    keep_traces=True,
    keep_records=True,
    sample_quadrature=True,
    chunk_size=2048,
) -> SimulatedDataset:
    """Simulate a full measurement set and apply the double post-selection filter
    (pre-readout ground AND post-readout excited).

    Quadrature values are produced by the standard extraction applied to every
    retained trace, so the returned dataset went through the same reduction a
    real acquisition would.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    engine = TrialEngine(kind, protocol, chain, sample_quadrature=sample_quadrature)
    draws, kept, vq, traces = engine.run(
        n_trials,
        substream(seed, "trial"),
        substream(seed, "noise"),
        substream(seed, "drift"),
        keep_traces="kept" if keep_traces else "none",
        chunk_size=chunk_size,
    )
    if int(kept.sum()) == 0:
        raise EmptyDatasetError("post-selection retained no trials")

    from .tomography import QuadratureDataset  # local import avoids a module cycle

    quadratures = QuadratureDataset(vq[kept], calibrated=False, set_id=f"{kind}:seed={seed}")

    records = None
    if keep_records:
        kept_index = np.cumsum(kept) - 1
        records = tuple(
            TrialRecord(
                trace=traces[kept_index[i]] if (keep_traces and kept[i]) else None,
                pre_readout_ground=bool(draws["pre_ground"][i]),
                post_readout_excited=bool(draws["post_excited"][i]),
                truth_emitted_n=int(draws["truth"][i]),
                mode_kind=kind,
            )
            for i in range(n_trials)
        )

    return SimulatedDataset(
        kind=kind,
        protocol=protocol,
        chain=chain,
        seed=int(seed),
        grid=engine.grid,
        mode_params=engine.mode_params,
        quadratures=quadratures,
        traces=traces,
        records=records,
        truth_emitted=draws["truth"][kept],
        tallies=_tallies(draws, kept),
    )


@dataclass(frozen=True)
class ThermalSweepPoint:
    temperature_mk: float
    gain_db: float
    s_in_quanta: float
    s_out: float


def simulate_thermal_sweep(
    temperatures_mk,
    gains_db,
    chain: ChainConfig,
    scatter: float = 0.0,
    seed: int = 0,
    frequency_ghz: float = 5.8,
):
    """Noise-power points S_out = G (S_in + N_add) with multiplicative scatter.

    S_in follows the Planck law (plus the half-quantum floor) at the source
    frequency; iteration order is gains outer, temperatures inner.
    """
    rng = substream(seed, "sweep")
    rows = []
    for gain_db in gains_db:
        n_add = chain.n_jpa + chain.n_hemt / 10.0 ** (gain_db / 10.0)
        g_chain = 10.0 ** ((gain_db + chain.post_jpa_gain_db) / 10.0)
        for t_mk in temperatures_mk:
            s_in = planck_occupation(t_mk, frequency_ghz)
            s_out = g_chain * (s_in + n_add) * (1.0 + scatter * rng.normal())
            rows.append(ThermalSweepPoint(float(t_mk), float(gain_db), s_in, float(s_out)))
    return rows


@dataclass(frozen=True)
class DephasingPoint:
    gain_db: float
    gamma_khz: float


def simulate_dephasing_data(
    gains_db,
    isolation_l,
    gamma0_khz,
    kappa_khz,
    scatter: float = 0.0,
    seed: int = 0,
    gain_range_db=(17.0, 33.0),
):
    """Qubit dephasing rate versus gain with multiplicative Gaussian scatter."""
    lo, hi = gain_range_db
    for g in gains_db:
        if not lo <= g <= hi:
            raise ValueError(f"gain {g} dB outside configured range {gain_range_db}")
    rng = substream(seed, "sweep")
    from .characterize import dephasing_rate_khz

    rows = []
    for g in gains_db:
        gamma = dephasing_rate_khz(g, isolation_l, gamma0_khz, kappa_khz)
        rows.append(DephasingPoint(float(g), float(gamma * (1.0 + scatter * rng.normal()))))
    return rows
