"""Redundancy diagnostics: correlation structure, shift, and sensitivity.

Three questions about a dataset, answered numerically: how strongly are
variates linearly related (Pearson matrix and per-variate maxima), how much
does that relation drift across window positions (correlation shift), and
how do the reduction knobs k and gs trade tokens for accuracy (sweep).
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .dataset import MultivariateWindow, SeriesTable, WindowBatch
from .errors import ParameterError
from .model import (
    TrainSettings,
    initialize_params,
    train_epoch,
    validation_loss,
)

__all__ = [
    "CorrelationMatrix",
    "RedundancyProfile",
    "ShiftReport",
    "SweepCell",
    "SweepResult",
    "pearson_matrix",
    "redundancy_profile",
    "correlation_shift",
    "sensitivity_sweep",
]


@dataclass(frozen=True)
class CorrelationMatrix:
    """Pearson matrix with constant variates flagged rather than NaN.

    A constant variate has an undefined correlation (zero variance); its row,
    column and diagonal entry are set to 0 and its flag in ``degenerate`` is
    True, which keeps downstream histograms total.
    """

    rho: np.ndarray
    degenerate: tuple[bool, ...]

    def __post_init__(self) -> None:
        rho = self.rho
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ParameterError(f"correlation matrix must be square, got {rho.shape}")
        if len(self.degenerate) != rho.shape[0]:
            raise ParameterError("degenerate flags do not match matrix size")
        if not np.all(np.isfinite(rho)):
            raise ParameterError("correlation matrix has non-finite entries")
        if np.max(np.abs(rho - rho.T)) > 1e-12:
            raise ParameterError("correlation matrix is not symmetric")
        if np.any(np.abs(rho) > 1.0 + 1e-12):
            raise ParameterError("correlation entries outside [-1, 1]")
        for i, deg in enumerate(self.degenerate):
            expected = 0.0 if deg else 1.0
            if rho[i, i] != expected:
                raise ParameterError(
                    f"diagonal entry {i} is {rho[i, i]!r}, expected {expected}"
                )

    @property
    def n_variates(self) -> int:
        return self.rho.shape[0]


def pearson_matrix(window: MultivariateWindow) -> CorrelationMatrix:
    """Pairwise Pearson correlation of the window's variate rows.

    Standard centered product-moment formula. Exactly-constant rows are
    degenerate: they correlate 0 with everything, diagonal included.
    """
    data = window.data
    centered = data - data.mean(axis=1, keepdims=True)
    ssq = np.sum(centered * centered, axis=1)
    degenerate = ssq == 0.0
    norms = np.where(degenerate, 1.0, np.sqrt(ssq))
    unit = centered / norms[:, None]
    rho = unit @ unit.T
    rho = (rho + rho.T) / 2.0
    rho[degenerate, :] = 0.0
    rho[:, degenerate] = 0.0
    np.fill_diagonal(rho, np.where(degenerate, 0.0, 1.0))
    return CorrelationMatrix(rho=rho, degenerate=tuple(bool(d) for d in degenerate))


@dataclass(frozen=True)
class RedundancyProfile:
    """Per-variate strongest off-diagonal correlation and the strong fraction.

    The maximum is over signed values, not magnitudes: anticorrelation is
    not redundancy.
    """

    threshold: float
    max_corr: tuple[float, ...]
    strong_frac: float


def redundancy_profile(matrix: CorrelationMatrix, threshold: float) -> RedundancyProfile:
    """Fraction of variates whose best off-diagonal correlation meets threshold."""
    if not -1.0 <= threshold <= 1.0:
        raise ParameterError(f"threshold must be in [-1, 1], got {threshold}")
    rho = matrix.rho
    n = matrix.n_variates
    if n == 1:
        # No partners to correlate with; floor at -1 so nothing counts as strong.
        return RedundancyProfile(threshold=threshold, max_corr=(-1.0,), strong_frac=0.0)
    off = rho.copy()
    np.fill_diagonal(off, -np.inf)
    max_corr = off.max(axis=1)
    strong_frac = float(np.mean(max_corr >= threshold))
    return RedundancyProfile(
        threshold=threshold,
        max_corr=tuple(float(m) for m in max_corr),
        strong_frac=strong_frac,
    )


@dataclass(frozen=True)
class ShiftReport:
    """How inter-variate correlation moves across window positions.

    ``pair_shift[i, j]`` is the largest absolute difference of ``rho[i, j]``
    between any two windows; ``mean_frobenius`` averages the Frobenius
    distance between consecutive windows' matrices (0 for a single window).
    """

    starts: tuple[int, ...]
    lookback: int
    pair_shift: np.ndarray
    max_shift: float
    mean_frobenius: float


def correlation_shift(
    table: SeriesTable, lookback: int, starts: Sequence[int]
) -> ShiftReport:
    """Correlation drift of the table across the windows at ``starts``."""
    if lookback < 2:
        raise ParameterError(f"lookback must be >= 2, got {lookback}")
    starts = tuple(int(s) for s in starts)
    if not starts:
        raise ParameterError("correlation shift needs at least one start")
    for s in starts:
        if s < 0 or s + lookback > table.length:
            raise ParameterError(
                f"window [{s}, {s + lookback}) outside table of length {table.length}"
            )
    mats = np.stack(
        [
            pearson_matrix(
                MultivariateWindow(data=table.values[:, s : s + lookback], start=s)
            ).rho
            for s in starts
        ]
    )
    pair_shift = mats.max(axis=0) - mats.min(axis=0)
    if len(starts) > 1:
        consecutive = np.linalg.norm(
            (mats[1:] - mats[:-1]).reshape(len(starts) - 1, -1), axis=1
        )
        mean_frobenius = float(consecutive.mean())
    else:
        mean_frobenius = 0.0
    return ShiftReport(
        starts=starts,
        lookback=lookback,
        pair_shift=pair_shift,
        max_shift=float(pair_shift.max()),
        mean_frobenius=mean_frobenius,
    )


@dataclass(frozen=True)
class SweepCell:
    """Result of one (k, gs) training run: mean delta and final val loss."""

    k: int
    gs: int
    delta: float
    val_loss: float


@dataclass(frozen=True)
class SweepResult:
    """Grid of sweep cells, ordered k-major then gs."""

    records: tuple[SweepCell, ...]


def sensitivity_sweep(
    train_batches: list[WindowBatch],
    val_batches: list[WindowBatch],
    ks: Sequence[int],
    gss: Sequence[int],
    *,
    epochs: int,
    lr: float,
    epsilon: int,
    embed_dim: int,
    attn_dim: int,
    seed: int,
    normalize_windows: bool = False,
) -> SweepResult:
    """Train one model per (k, gs) cell and record mean delta and val loss.

    Every cell starts from the same seeded initialization and sees the same
    batches, so cells differ only in the reduction knobs. Mean delta is
    averaged over every batch of every epoch; the loss is the dense
    validation MSE of the final parameters. Deterministic given the seed.
    """
    if epochs < 1:
        raise ParameterError(f"epochs must be >= 1, got {epochs}")
    if not ks or not gss:
        raise ParameterError("sweep needs at least one k and one gs")
    if not train_batches:
        raise ParameterError("sweep needs training batches")
    lookback = train_batches[0].lookback
    horizon = train_batches[0].horizon_length
    if horizon < 1:
        raise ParameterError("sweep training batches must carry horizons")

    records = []
    for k in ks:
        for gs in gss:
            config = TrainSettings(
                k=int(k),
                epsilon=epsilon,
                gs=int(gs),
                lr=lr,
                seed=seed,
                vardrop_on=True,
                normalize_windows=normalize_windows,
            )
            params = initialize_params(lookback, horizon, embed_dim, attn_dim, seed)
            deltas = []
            for epoch in range(epochs):
                params, metrics = train_epoch(train_batches, params, config, epoch)
                deltas.extend(m.delta for m in metrics)
            records.append(
                SweepCell(
                    k=int(k),
                    gs=int(gs),
                    delta=float(np.mean(deltas)),
                    val_loss=validation_loss(params, val_batches),
                )
            )
    return SweepResult(records=tuple(records))
