"""Training-free CCA frequency recognition.

For each candidate frequency the canonical correlation between the EEG
segment and a sinusoidal reference basis is obtained by reducing the
generalized eigenvalue problem to a standard one: with Cxx, Cyy the auto
covariances and Cxy the cross covariance, the dominant eigenvalue of
Cxx^-1 Cxy Cyy^-1 Cxy^T equals rho^2. Inversion is Gauss-Jordan with
partial pivoting; the dominant eigenvalue comes from power iteration.
Everything runs in a selectable precision with fixed-capacity buffers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Epoch, TrialRecording
from .errors import CcaError
from .filters import BINARY32, BINARY64, real_dtype

DEFAULT_FREQUENCIES = (7.0, 7.5, 8.0, 8.5, 9.0, 11.0)
DEFAULT_HARMONICS = 2

_POWER_TOL = {BINARY64: 1e-10, BINARY32: 1e-6}
_PIVOT_REL_TOL = 1e-12


@dataclass(frozen=True)
class ReferenceBank:
    """Per target frequency, a sample_count x (2*harmonics) matrix of
    [sin(2 pi k f t), cos(2 pi k f t)] columns, k = 1..harmonics."""

    target_frequencies_hz: tuple
    harmonics: int
    sample_count: int
    sample_rate_hz: float
    bases: tuple  # one (N, 2*harmonics) array per target, same order
    precision: str


def build_reference_bank(
    frequencies: Sequence[float],
    harmonics: int,
    sample_count: int,
    sample_rate_hz: float,
    precision: str = BINARY64,
) -> ReferenceBank:
    if harmonics < 1:
        raise CcaError(f"harmonics must be >= 1, got {harmonics}")
    if not frequencies:
        raise CcaError("at least one target frequency required")
    fmax = max(frequencies)
    if harmonics * fmax >= sample_rate_hz / 2:
        raise CcaError(
            f"aliasing: harmonic {harmonics} of {fmax} Hz is at or above Nyquist ({sample_rate_hz / 2} Hz)"
        )
    dt = real_dtype(precision)
    t = np.arange(sample_count, dtype=np.float64) / sample_rate_hz
    bases = []
    for f in frequencies:
        cols = []
        for k in range(1, harmonics + 1):
            phase = 2.0 * np.pi * k * f * t
            cols.append(np.sin(phase))
            cols.append(np.cos(phase))
        bases.append(np.column_stack(cols).astype(dt))
    return ReferenceBank(
        target_frequencies_hz=tuple(float(f) for f in frequencies),
        harmonics=harmonics,
        sample_count=sample_count,
        sample_rate_hz=float(sample_rate_hz),
        bases=tuple(bases),
        precision=precision,
    )


def invert_gauss_jordan(matrix, precision: str = BINARY64) -> np.ndarray:
    """Invert a square matrix by Gauss-Jordan elimination with partial
    pivoting (largest absolute pivot). Raises on a degenerate pivot."""
    dt = real_dtype(precision)
    a = np.array(matrix, dtype=dt)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise CcaError(f"matrix must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise CcaError("matrix contains non-finite entries")
    n = a.shape[0]
    scale = dt(max(np.max(np.abs(a)), 1e-300))
    inv = np.eye(n, dtype=dt)
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(a[col:, col])))
        pivot = a[pivot_row, col]
        if abs(pivot) < _PIVOT_REL_TOL * scale:
            raise CcaError(f"degenerate covariance: pivot {pivot} in column {col}")
        if pivot_row != col:
            a[[col, pivot_row]] = a[[pivot_row, col]]
            inv[[col, pivot_row]] = inv[[pivot_row, col]]
        piv = a[col, col]
        a[col] /= piv
        inv[col] /= piv
        for row in range(n):
            if row != col:
                factor = a[row, col]
                if factor != 0:
                    a[row] -= factor * a[col]
                    inv[row] -= factor * inv[col]
    return inv


def dominant_eigenvalue_power_iteration(
    matrix,
    tol: Optional[float] = None,
    max_iters: int = 20000,
    precision: str = BINARY64,
) -> tuple[float, int]:
    """Rayleigh-quotient power iteration from a normalized all-ones vector.

    Returns (lambda, iterations). Raises if the relative change has not
    dropped below tol within max_iters; the error message carries the last
    estimate.
    """
    dt = real_dtype(precision)
    if tol is None:
        tol = _POWER_TOL[precision]
    a = np.asarray(matrix, dtype=dt)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise CcaError(f"matrix must be square, got shape {a.shape}")
    n = a.shape[0]
    v = np.ones(n, dtype=dt) / dt(np.sqrt(n))
    lam_prev = None
    for it in range(1, max_iters + 1):
        w = a @ v
        lam = float(v @ w)
        norm = float(np.sqrt(w @ w))
        if norm == 0.0:
            return 0.0, it
        v = (w / dt(norm)).astype(dt)
        if lam_prev is not None:
            denom = max(abs(lam), 1e-300)
            if abs(lam - lam_prev) / denom < tol:
                return lam, it
        lam_prev = lam
    raise CcaError(
        f"power iteration did not converge in {max_iters} iterations (last estimate {lam_prev})"
    )


@dataclass(frozen=True)
class Decision:
    """Per-frequency canonical correlations plus the argmax verdict."""

    correlations: tuple  # (target_hz, rho) pairs in bank order
    predicted_hz: float
    rho_peak: float
    margin: float


class CcaWorkspace:
    """Fixed-capacity scratch buffers for classify; one per thread."""

    def __init__(self, channel_count: int, sample_count: int, harmonics: int, precision: str = BINARY64):
        dt = real_dtype(precision)
        self.precision = precision
        self.channel_count = channel_count
        self.sample_count = sample_count
        self.harmonics = harmonics
        self.xm = np.zeros((channel_count, sample_count), dtype=dt)
        self.cxx = np.zeros((channel_count, channel_count), dtype=dt)
        self.cxy = np.zeros((channel_count, 2 * harmonics), dtype=dt)
        self.cyy = np.zeros((2 * harmonics, 2 * harmonics), dtype=dt)
        self.m = np.zeros((channel_count, channel_count), dtype=dt)


def classify(
    epoch: Epoch,
    bank: ReferenceBank,
    workspace: Optional[CcaWorkspace] = None,
    ridge: float = 0.0,
) -> Decision:
    """CCA decision for one (already filtered) epoch against the bank.

    Ties break toward the lower frequency. rho is clamped to [0, 1] before
    the square root; binary32 rounding can push lambda slightly outside.
    """
    if epoch.sample_count != bank.sample_count:
        raise CcaError(
            f"epoch has {epoch.sample_count} samples, bank expects {bank.sample_count}"
        )
    precision = bank.precision
    dt = real_dtype(precision)
    if workspace is None:
        workspace = CcaWorkspace(epoch.channel_count, epoch.sample_count, bank.harmonics, precision)
    elif workspace.precision != precision:
        raise CcaError("workspace precision does not match bank precision")

    n = epoch.sample_count
    x = epoch.samples.astype(dt)
    np.subtract(x, x.mean(axis=1, keepdims=True, dtype=dt), out=workspace.xm)
    xm = workspace.xm
    np.matmul(xm, xm.T, out=workspace.cxx)
    workspace.cxx /= dt(n)
    if ridge:
        workspace.cxx += dt(ridge) * np.eye(epoch.channel_count, dtype=dt)
    cxx_inv = invert_gauss_jordan(workspace.cxx, precision)

    rhos = []
    for y in bank.bases:
        np.matmul(xm, y, out=workspace.cxy)
        workspace.cxy /= dt(n)
        np.matmul(y.T, y, out=workspace.cyy)
        workspace.cyy /= dt(n)
        if ridge:
            workspace.cyy += dt(ridge) * np.eye(2 * bank.harmonics, dtype=dt)
        cyy_inv = invert_gauss_jordan(workspace.cyy, precision)
        np.matmul(cxx_inv @ workspace.cxy, cyy_inv @ workspace.cxy.T, out=workspace.m)
        lam, _ = dominant_eigenvalue_power_iteration(workspace.m, precision=precision)
        rho = float(np.sqrt(min(max(lam, 0.0), 1.0)))
        rhos.append(rho)

    order = sorted(range(len(rhos)), key=lambda i: bank.target_frequencies_hz[i])
    best = order[0]
    for i in order[1:]:
        if rhos[i] > rhos[best]:
            best = i
    sorted_rhos = sorted(rhos, reverse=True)
    margin = sorted_rhos[0] - sorted_rhos[1] if len(rhos) > 1 else 0.0
    return Decision(
        correlations=tuple(zip(bank.target_frequencies_hz, rhos)),
        predicted_hz=bank.target_frequencies_hz[best],
        rho_peak=rhos[best],
        margin=margin,
    )


WINDOW_POLICIES = ("first_4s", "final_4s", "full_5s")


def select_analysis_window(trial: TrialRecording, policy: str) -> Epoch:
    """Slice the trial by exact sample indices: first_4s = [0, 4 fs),
    final_4s = [N - 4 fs, N), full_5s = everything."""
    epoch = trial.epoch_full
    fs = epoch.config.sample_rate_hz
    n = epoch.sample_count
    if policy == "full_5s":
        return epoch
    if policy not in WINDOW_POLICIES:
        raise CcaError(f"unknown window policy {policy!r}")
    win = int(round(4 * fs))
    if n < win:
        raise CcaError(f"trial has {n} samples, shorter than the 4 s window ({win})")
    if policy == "first_4s":
        sel = epoch.samples[:, :win]
    else:
        sel = epoch.samples[:, n - win :]
    return Epoch(epoch.config, sel)
