"""Signal expansion by noise injection and blocked feature dataset assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RawSignal:
    """A 1-D signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).ravel()
        if self.samples.size < 1:
            raise ValueError("signal must contain at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("signal contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")


@dataclass
class NoiseSpec:
    noise: RawSignal
    snr_db: float


@dataclass
class SourceDomain:
    """Unlabeled blocks (B, H0, N) that kernel learning trains on."""

    blocks: np.ndarray
    h0: int
    n: int

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks, dtype=float)
        if self.blocks.ndim != 3:
            raise ValueError("blocks must be a (B, H0, N) array")
        if self.blocks.size and not np.all(np.isfinite(self.blocks)):
            raise ValueError("source blocks contain non-finite values")


def signal_power(x: np.ndarray) -> float:
    """Mean squared amplitude over the whole signal."""
    x = np.asarray(x, dtype=float)
    return float((x ** 2).mean())


def mix_noise_at_snr(signal: RawSignal, noise: RawSignal, snr_db: float) -> RawSignal:
    """Add noise to a signal at a target whole-signal SNR in decibels.

    Noise shorter than the signal is tiled cyclically; longer noise is
    truncated.  The gain solves 10*log10(P_signal / P_scaled_noise) =
    snr_db for the mean-power P of each addend.
    """
    if not np.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}")
    p_sig = signal_power(signal.samples)
    if p_sig == 0.0:
        raise ValueError("signal has zero power")
    tiled = np.resize(noise.samples, signal.samples.size)
    p_noise = signal_power(tiled)
    if p_noise == 0.0:
        raise ValueError("noise has zero power over the mixed span")
    gain = np.sqrt(p_sig / (p_noise * 10.0 ** (snr_db / 10.0)))
    return RawSignal(signal.samples + gain * tiled, signal.sample_rate)


def expand_dataset(signals: list[RawSignal], noise_bank: list[NoiseSpec]) -> list[RawSignal]:
    """Mix every signal with every noise spec, signal-major ordering."""
    if not noise_bank:
        raise ValueError("noise bank must not be empty")
    return [mix_noise_at_snr(sig, spec.noise, spec.snr_db) for sig in signals for spec in noise_bank]


def extract_toy_features(signal: RawSignal, n_features: int, frame_len: int = 256, hop: int = 128) -> np.ndarray:
    """Deterministic frame-statistic feature row of exactly ``n_features`` values.

    Features, in order: mean per-frame energy, variance of per-frame
    energy, zero-crossing rate (strict sign changes per sample step),
    then mean magnitudes of contiguous spectral bands of the average
    frame spectrum.  Band values cycle if more are requested than there
    are spectrum bins.
    """
    if n_features < 1:
        raise ValueError("n_features must be >= 1")
    x = signal.samples
    if x.size < frame_len:
        raise ValueError(f"signal of length {x.size} is shorter than one analysis frame ({frame_len})")
    n_frames = 1 + (x.size - frame_len) // hop
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx]
    energy = (frames ** 2).mean(axis=1)
    signs = np.sign(x)
    zcr = float(np.count_nonzero(signs[1:] * signs[:-1] < 0)) / max(x.size - 1, 1)
    stats = [float(energy.mean()), float(energy.var()), zcr]
    if n_features <= 3:
        return np.asarray(stats[:n_features])
    spectrum = np.abs(np.fft.rfft(frames, axis=1)).mean(axis=0)
    n_bands = n_features - 3
    if n_bands <= spectrum.size:
        bands = [float(chunk.mean()) for chunk in np.array_split(spectrum, n_bands)]
    else:
        bands = [float(spectrum[i % spectrum.size]) for i in range(n_bands)]
    return np.asarray(stats + bands)


def build_source_domain(rows, h0: int) -> SourceDomain:
    """Group consecutive feature rows into H0-row blocks, dropping the remainder."""
    if h0 < 1:
        raise ValueError("h0 must be >= 1")
    rows = [np.asarray(r, dtype=float).ravel() for r in rows]
    if rows:
        n = rows[0].size
        for i, r in enumerate(rows):
            if r.size != n:
                raise ValueError(f"row {i} has length {r.size}, expected {n}")
    else:
        n = 0
    n_blocks = len(rows) // h0
    if n_blocks == 0:
        return SourceDomain(np.zeros((0, h0, n)), h0, n)
    stacked = np.stack(rows[: n_blocks * h0])
    return SourceDomain(stacked.reshape(n_blocks, h0, n), h0, n)
