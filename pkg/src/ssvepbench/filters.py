"""Butterworth bandpass design and zero-phase forward-backward filtering.

The digital filter is obtained from the analog Butterworth prototype by a
lowpass-to-bandpass transform followed by the bilinear transform with
prewarped band edges, and is applied per channel as a Direct Form II
transposed section with odd-reflection padding at both ends. All arithmetic
(design, state, accumulators) runs in the selected precision so the
single-precision arm of the fidelity study demotes the whole stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AcquisitionConfig, Epoch
from .errors import FilterError

BINARY32 = "binary32"
BINARY64 = "binary64"
PRECISIONS = (BINARY32, BINARY64)


def real_dtype(precision: str):
    if precision == BINARY32:
        return np.float32
    if precision == BINARY64:
        return np.float64
    raise FilterError(f"unknown precision {precision!r}")


def _complex_dtype(precision: str):
    return np.complex64 if precision == BINARY32 else np.complex128


@dataclass(frozen=True)
class FilterSpec:
    sample_rate_hz: float
    order: int = 3
    low_hz: float = 2.0
    high_hz: float = 45.0

    def __post_init__(self):
        if self.order < 1:
            raise FilterError(f"order must be >= 1, got {self.order}")
        if not (0 < self.low_hz < self.high_hz < self.sample_rate_hz / 2):
            raise FilterError(
                f"band edges must satisfy 0 < low < high < fs/2, got "
                f"({self.low_hz}, {self.high_hz}) at fs={self.sample_rate_hz}"
            )


@dataclass(frozen=True)
class IirCoefficients:
    """Transfer-function coefficients b/a, a[0] = 1, stable by construction."""

    b: np.ndarray
    a: np.ndarray
    precision: str
    sample_rate_hz: float

    def __post_init__(self):
        b = np.asarray(self.b)
        a = np.asarray(self.a)
        if b.shape != a.shape or b.ndim != 1:
            raise FilterError("b and a must be equal-length 1-D arrays")
        if a[0] != 1.0:
            raise FilterError("denominator must be normalized (a[0] = 1)")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(a))):
            raise FilterError("non-finite filter coefficients")
        roots = np.roots(np.asarray(a, dtype=np.float64))
        if np.any(np.abs(roots) >= 1.0):
            raise FilterError("unstable filter: denominator root on or outside the unit circle")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", a)

    @property
    def pad_length(self) -> int:
        # 3 x (tap count - 1): 18 samples per end for a 3rd-order bandpass
        return 3 * (len(self.b) - 1)


def _poly_from_roots(roots, cdtype) -> np.ndarray:
    coeffs = np.array([1.0], dtype=cdtype)
    for r in roots:
        coeffs = np.convolve(coeffs, np.array([1.0, -r], dtype=cdtype))
    return coeffs


def design_butterworth_bandpass(spec: FilterSpec, precision: str = BINARY64) -> IirCoefficients:
    """Design the digital Butterworth bandpass for the given spec.

    Returns a single b/a pair of length 2*order + 1. The -3 dB points land
    exactly on low_hz/high_hz thanks to edge prewarping.
    """
    rdt = real_dtype(precision)
    cdt = _complex_dtype(precision)
    fs = rdt(spec.sample_rate_hz)
    n = spec.order

    fs2 = rdt(2.0) * fs
    w1 = fs2 * np.tan(rdt(np.pi) * rdt(spec.low_hz) / fs)
    w2 = fs2 * np.tan(rdt(np.pi) * rdt(spec.high_hz) / fs)
    bw = w2 - w1
    w0_sq = w1 * w2

    # analog lowpass prototype poles on the unit circle, left half plane
    k = np.arange(1, n + 1)
    proto = np.exp(1j * np.pi * (2 * k + n - 1) / (2 * n)).astype(cdt)

    # lowpass -> bandpass: each prototype pole splits into a conjugate pair
    poles = []
    for p in proto:
        half = p * cdt(bw) / cdt(2.0)
        disc = np.sqrt(half * half - cdt(w0_sq))
        poles.append(half + disc)
        poles.append(half - disc)
    zeros = [cdt(0.0)] * n  # n analog zeros at the origin (plus n at infinity)
    gain = rdt(bw) ** n

    # bilinear transform; zeros at infinity map to z = -1
    z_poles = [(cdt(fs2) + p) / (cdt(fs2) - p) for p in poles]
    z_zeros = [(cdt(fs2) + z) / (cdt(fs2) - z) for z in zeros] + [cdt(-1.0)] * n
    num = np.prod([cdt(fs2) - z for z in zeros]).astype(cdt)
    den = np.prod([cdt(fs2) - p for p in poles]).astype(cdt)
    k_digital = (cdt(gain) * num / den).real.astype(rdt)

    b = (k_digital * _poly_from_roots(z_zeros, cdt).real).astype(rdt)
    a = _poly_from_roots(z_poles, cdt).real.astype(rdt)
    a = (a / a[0]).astype(rdt)
    a[0] = rdt(1.0)
    return IirCoefficients(b=b, a=a, precision=precision, sample_rate_hz=float(spec.sample_rate_hz))


def frequency_response(coeffs: IirCoefficients, freq_hz: float) -> complex:
    """H(e^{j 2 pi f / fs}) evaluated from the b/a polynomials."""
    fs = coeffs.sample_rate_hz
    if not (0 <= freq_hz <= fs / 2):
        raise FilterError(f"frequency {freq_hz} outside [0, fs/2]")
    w = 2.0 * np.pi * freq_hz / fs
    zinv = np.exp(-1j * w * np.arange(len(coeffs.b)))
    num = np.dot(np.asarray(coeffs.b, dtype=np.float64), zinv)
    den = np.dot(np.asarray(coeffs.a, dtype=np.float64), zinv)
    return complex(num / den)


def _steady_state_zi(b: np.ndarray, a: np.ndarray) -> np.ndarray:
    """DF2T state that makes the filter start in steady state for a unit
    step; scaled by the first padded sample it suppresses the start-up
    transient that padding alone cannot absorb."""
    n = len(a) - 1
    companion_t = np.zeros((n, n), dtype=b.dtype)
    companion_t[:, 0] = -a[1:]
    companion_t[:-1, 1:] = np.eye(n - 1, dtype=b.dtype)
    rhs = b[1:] - a[1:] * b[0]
    return np.linalg.solve(np.eye(n, dtype=b.dtype) - companion_t, rhs).astype(b.dtype)


def _df2t(b: np.ndarray, a: np.ndarray, x: np.ndarray, zi: np.ndarray) -> np.ndarray:
    """Direct Form II transposed, vectorized across channels. x is (C, N);
    zi is the per-unit initial state, scaled by each channel's first sample."""
    taps = len(b)
    z = zi[:, np.newaxis] * x[:, 0]
    y = np.empty_like(x)
    for i in range(x.shape[1]):
        xi = x[:, i]
        yi = b[0] * xi + z[0]
        for j in range(taps - 2):
            z[j] = b[j + 1] * xi + z[j + 1] - a[j + 1] * yi
        z[taps - 2] = b[taps - 1] * xi - a[taps - 1] * yi
        y[:, i] = yi
    return y


def _odd_pad(x: np.ndarray, pad: int) -> np.ndarray:
    left = 2.0 * x[:, :1] - x[:, pad:0:-1]
    right = 2.0 * x[:, -1:] - x[:, -2 : -pad - 2 : -1]
    return np.concatenate([left.astype(x.dtype), x, right.astype(x.dtype)], axis=1)


def filtfilt(coeffs: IirCoefficients, epoch: Epoch) -> Epoch:
    """Zero-phase filtering: odd-reflection pad, filter, reverse, filter,
    reverse, strip. Output length equals input length."""
    pad = coeffs.pad_length
    if not math.isclose(epoch.config.sample_rate_hz, coeffs.sample_rate_hz, rel_tol=1e-6):
        raise FilterError(
            f"epoch sample rate {epoch.config.sample_rate_hz} Hz does not match "
            f"filter design rate {coeffs.sample_rate_hz} Hz"
        )
    if epoch.sample_count <= 3 * pad:
        raise FilterError(
            f"epoch too short for padding: need > {3 * pad} samples, got {epoch.sample_count}"
        )
    dt = real_dtype(coeffs.precision)
    b = np.asarray(coeffs.b, dtype=dt)
    a = np.asarray(coeffs.a, dtype=dt)
    x = epoch.samples.astype(dt)
    zi = _steady_state_zi(b, a)
    xp = _odd_pad(x, pad)
    fwd = _df2t(b, a, xp, zi)
    rev = np.ascontiguousarray(fwd[:, ::-1])
    bwd = _df2t(b, a, rev, zi)
    out = bwd[:, ::-1][:, pad:-pad]
    return Epoch(epoch.config, out.astype(np.float64))
