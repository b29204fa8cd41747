"""Synthetic multiband array data: Nyquist streams, coset decimation, snapshots.

The snapshot assembly includes the receiver's coset phase alignment: a branch
sampling at offsets n*L + c_p carries a known extra phase exp(j*2*pi*f*c_p*T_N)
relative to the aligned (constant-B) model, where f is the in-band frequency.
A digital front end removes it with an all-pass per-branch filter; here the
generator applies the exact per-source equivalent, so noiseless snapshots lie
exactly in the span of the joint steering columns. The noise path is honest
decimation of white Nyquist-rate streams (the alignment filter is all-pass, so
it leaves white noise white).
"""

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .model import (
    ArrayGeometry,
    MultiCosetPattern,
    build_G_selected,
    phase_from_doa,
    selected_channel_columns,
)

__all__ = [
    "SourceTruth",
    "ScenarioConfig",
    "SnapshotSet",
    "synthesize_streams",
    "multicoset_sample",
    "assemble_snapshots",
    "assemble_full_snapshots",
    "dump_snapshots",
    "load_snapshots",
]

ENVELOPE_KINDS = ("tone", "noise")


@dataclass(frozen=True)
class SourceTruth:
    """One narrowband far-field source.

    `envelope` is "tone" (constant unit envelope) or "noise" (unit-power
    low-pass filtered circular Gaussian of the given one-sided bandwidth,
    occupying [f_c, f_c + bandwidth)).
    """

    theta: float
    f_c: float
    amplitude: complex = 1.0 + 0.0j
    envelope: str = "tone"
    bandwidth: float = 0.0

    def __post_init__(self):
        if not -np.pi / 2 < self.theta < np.pi / 2:
            raise ConfigError(f"DOA must lie in (-pi/2, pi/2), got {self.theta}")
        if self.envelope not in ENVELOPE_KINDS:
            raise ConfigError(f"unknown envelope kind {self.envelope!r}")
        if self.envelope == "tone" and self.bandwidth != 0.0:
            raise ConfigError("pure-tone sources must have zero bandwidth")
        if self.envelope == "noise" and self.bandwidth <= 0.0:
            raise ConfigError("filtered-noise sources need a positive bandwidth")

    @property
    def power(self) -> float:
        return abs(self.amplitude) ** 2


@dataclass(frozen=True)
class ScenarioConfig:
    """Full experiment description for one Monte Carlo trial."""

    geom: ArrayGeometry
    pattern: MultiCosetPattern
    sources: tuple[SourceTruth, ...]
    snr_db: float | None = 10.0
    n_snapshots: int = 4096
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        K = len(self.sources)
        M, P, L = self.geom.M, self.pattern.P, self.pattern.L
        if K >= M:
            raise ConfigError(f"need K < M, got K={K}, M={M}")
        if K > M + P - 2:
            raise ConfigError(f"need K <= M+P-2, got K={K}, M+P-2={M + P - 2}")
        if self.n_snapshots < 2 * (M + P - 1):
            raise ConfigError(
                f"need n_snapshots >= {2 * (M + P - 1)} for covariance "
                f"estimation, got {self.n_snapshots}"
            )
        f_N = self.pattern.f_N
        for k, src in enumerate(self.sources):
            if not 0 <= src.f_c < f_N:
                raise ConfigError(
                    f"source {k}: carrier {src.f_c} outside [0, f_N={f_N})"
                )
            lo = int(np.floor(src.f_c * L / f_N))
            hi = int(np.floor((src.f_c + src.bandwidth) * L / f_N))
            if lo != hi:
                raise ConfigError(
                    f"source {k}: occupancy [{src.f_c}, {src.f_c + src.bandwidth})"
                    f" straddles bands {lo} and {hi}; sources must sit inside"
                    " one band"
                )

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @property
    def sigma2(self) -> float:
        """Noise power per Nyquist sample; 0 for the noiseless case."""
        if self.snr_db is None:
            return 0.0
        mean_power = float(np.mean([s.power for s in self.sources])) if self.sources else 1.0
        return mean_power / 10.0 ** (self.snr_db / 10.0)

    def band_of(self, k: int) -> int:
        return int(np.floor(self.sources[k].f_c * self.pattern.L / self.pattern.f_N))

    def residual_of(self, k: int) -> float:
        return self.sources[k].f_c - self.band_of(k) * self.pattern.f_s

    def phases(self) -> np.ndarray:
        return np.array(
            [phase_from_doa(s.theta, s.f_c, self.geom) for s in self.sources]
        )

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, rng_seed=int(seed))


@dataclass(frozen=True)
class SnapshotSet:
    """Simplified-receiver output W plus its two standard views."""

    W: np.ndarray = field(repr=False)
    f_s: float
    M: int
    P: int

    @property
    def n_snapshots(self) -> int:
        return self.W.shape[1]

    @property
    def Q(self) -> np.ndarray:
        """Branch 1 of all sensors (M x N), sensor 1 first."""
        return np.vstack([self.W[:1], self.W[self.P:]])

    @property
    def Y1(self) -> np.ndarray:
        """All branches of sensor 1 (P x N)."""
        return self.W[: self.P]


def _draw_envelopes(config: ScenarioConfig, rng: np.random.Generator):
    """Fine-grid DFT coefficients per source (None for pure tones)."""
    n_fine = config.n_snapshots * config.pattern.L
    coeffs = []
    for src in config.sources:
        if src.envelope == "tone":
            coeffs.append(None)
            continue
        n_bins = int(np.floor(src.bandwidth * n_fine / config.pattern.f_N))
        if n_bins < 1:
            raise ConfigError(
                f"bandwidth {src.bandwidth} below the frequency resolution "
                f"{config.pattern.f_N / n_fine} of this snapshot length"
            )
        g = rng.standard_normal(n_bins) + 1j * rng.standard_normal(n_bins)
        coeffs.append(g / np.sqrt(2.0 * n_bins))
    return coeffs


def _envelope_series(coeff, n_points: int) -> np.ndarray:
    """Evaluate the trig-polynomial envelope g[n] = sum_k c_k e^{j2pi k n / n_points}.

    Sampling the fine-grid envelope every (n_fine / n_points) samples folds the
    coefficient index modulo n_points, so one zero-padded IFFT serves both the
    Nyquist grid and the coarse snapshot grid exactly.
    """
    if coeff is None:
        return np.ones(n_points, dtype=complex)
    buf = np.zeros(n_points, dtype=complex)
    np.add.at(buf, np.arange(coeff.size) % n_points, coeff)
    return np.fft.ifft(buf) * n_points


def _draw_noise(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """White circular Gaussian Nyquist-rate streams, one row per sensor."""
    M = config.geom.M
    n_fine = config.n_snapshots * config.pattern.L
    sigma2 = config.sigma2
    if sigma2 == 0.0:
        return np.zeros((M, n_fine), dtype=complex)
    scale = np.sqrt(sigma2 / 2.0)
    return scale * (
        rng.standard_normal((M, n_fine)) + 1j * rng.standard_normal((M, n_fine))
    )


def synthesize_streams(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Nyquist-rate sensor streams x_m[n], shape (M, n_snapshots * L)."""
    geom, pattern = config.geom, config.pattern
    n_fine = config.n_snapshots * pattern.L
    coeffs = _draw_envelopes(config, rng)
    t_idx = np.arange(n_fine)
    streams = np.zeros((geom.M, n_fine), dtype=complex)
    phis = config.phases()
    for k, src in enumerate(config.sources):
        g = _envelope_series(coeffs[k], n_fine)
        carrier = np.exp(2j * np.pi * src.f_c * t_idx * pattern.T_N)
        a = np.exp(-1j * phis[k] * np.arange(geom.M))
        streams += np.outer(a, src.amplitude * g * carrier)
    streams += _draw_noise(config, rng)
    return streams


def multicoset_sample(stream: np.ndarray, pattern: MultiCosetPattern,
                      n_snapshots: int | None = None) -> np.ndarray:
    """Decimate one Nyquist stream into its P coset branches (P x N)."""
    stream = np.asarray(stream)
    if n_snapshots is None:
        n_snapshots = stream.shape[-1] // pattern.L
    if stream.shape[-1] < n_snapshots * pattern.L:
        raise ConfigError(
            f"stream of length {stream.shape[-1]} too short for "
            f"{n_snapshots} snapshots at L={pattern.L}"
        )
    return np.stack(
        [stream[c::pattern.L][:n_snapshots] for c in pattern.offsets]
    )


def _assemble(config: ScenarioConfig):
    """Aligned signal matrix over all M*P channels plus raw noise streams."""
    geom, pattern = config.geom, config.pattern
    N = config.n_snapshots
    L = pattern.L
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.rng_seed)))
    coeffs = _draw_envelopes(config, rng)
    noise = _draw_noise(config, rng)

    K = config.n_sources
    if K:
        coarse_idx = np.arange(N) * L
        base = np.zeros((K, N), dtype=complex)
        for k, src in enumerate(config.sources):
            g = _envelope_series(coeffs[k], N)
            base[k] = src.amplitude * g * np.exp(
                2j * np.pi * src.f_c * coarse_idx * pattern.T_N
            )
        bands = [config.band_of(k) for k in range(K)]
        G_S = build_G_selected(config.phases(), bands, geom, pattern)
        signal_full = np.sqrt(L) * (G_S @ base)
    else:
        signal_full = np.zeros((geom.M * pattern.P, N), dtype=complex)
    return signal_full, noise


def _channel_rows(signal_full, noise, config: ScenarioConfig, channels):
    pattern = config.pattern
    N = config.n_snapshots
    rows = np.empty((len(channels), N), dtype=complex)
    for r, flat in enumerate(channels):
        m, p = divmod(flat, pattern.P)
        rows[r] = signal_full[flat] + noise[m, pattern.offsets[p]::pattern.L][:N]
    return rows


def assemble_snapshots(config: ScenarioConfig) -> SnapshotSet:
    """Simplified receiver output W ((M+P-1) x N), deterministic in rng_seed."""
    signal_full, noise = _assemble(config)
    channels = selected_channel_columns(config.geom.M, config.pattern.P)
    W = _channel_rows(signal_full, noise, config, channels)
    return SnapshotSet(W=W, f_s=config.pattern.f_s,
                       M=config.geom.M, P=config.pattern.P)


def assemble_full_snapshots(config: ScenarioConfig) -> np.ndarray:
    """Full-structure output (M*P x N), sensor-major channel order.

    Rows selected by the J matrix agree bit-exactly with
    `assemble_snapshots(config).W` for the same seed.
    """
    signal_full, noise = _assemble(config)
    channels = np.arange(config.geom.M * config.pattern.P)
    return _channel_rows(signal_full, noise, config, channels)


_MAGIC = b"SNYQ"
_HEADER = struct.Struct("<4sIIIQ")  # magic, rows, cols, reserved, seed


def dump_snapshots(W: np.ndarray, seed: int, path) -> None:
    """Write snapshots as little-endian interleaved re/im float64, row-major,
    after a 24-byte header (magic "SNYQ", u32 rows, u32 cols, u32 pad, u64 seed).
    """
    W = np.ascontiguousarray(W, dtype=complex)
    rows, cols = W.shape
    inter = np.empty((rows, cols, 2))
    inter[..., 0] = W.real
    inter[..., 1] = W.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, rows, cols, 0, seed & (2**64 - 1)))
        fh.write(inter.astype("<f8").tobytes())


def load_snapshots(path) -> tuple[np.ndarray, int]:
    """Inverse of `dump_snapshots`; returns (W, seed)."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        magic, rows, cols, _, seed = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ConfigError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols * 2:
        raise ConfigError(f"{path}: truncated payload")
    inter = data.reshape(rows, cols, 2)
    return inter[..., 0] + 1j * inter[..., 1], seed
