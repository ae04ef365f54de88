"""One-dimensional sweeps of the distillation losses over the logit scale alpha.

For a fixed student/teacher logit batch, :func:`scan_alpha` evaluates the
batch-mean KL and CE losses and their alpha-derivatives on a grid. The
derivatives are increasing in alpha, so each loss curve has at most one
interior minimum; :func:`count_sign_changes` and :func:`verify_limits`
check that numerically.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import losses
from .metrics import fmt

LANDSCAPE_COLUMNS = ("alpha", "kl", "ce", "kl_deriv_true", "kl_deriv_paper", "ce_deriv")
SMALL_ALPHA = 1e-6
LARGE_ALPHA = 1e6


def default_grid(n: int = 400, lo: float = 1e-3, hi: float = 1e3) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), n)


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 1 or len(g) < 1 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
        raise ValueError("alpha grid must be strictly increasing and positive")
    return g


@dataclass
class GapCurve:
    grid: np.ndarray
    kl_values: np.ndarray
    ce_values: np.ndarray
    kl_deriv_true: np.ndarray
    kl_deriv_paper: np.ndarray
    ce_deriv: np.ndarray

    @property
    def argmin_kl(self) -> float:
        return float(self.grid[np.argmin(self.kl_values)])

    @property
    def argmin_ce(self) -> float:
        return float(self.grid[np.argmin(self.ce_values)])

    @property
    def min_kl(self) -> float:
        return float(self.kl_values.min())

    @property
    def min_ce(self) -> float:
        return float(self.ce_values.min())

    def columns(self) -> tuple[np.ndarray, ...]:
        return (self.grid, self.kl_values, self.ce_values, self.kl_deriv_true, self.kl_deriv_paper, self.ce_deriv)


def scan_alpha(z_s, z_t, labels, temperature: float, grid=None) -> GapCurve:
    """Batch-mean losses and derivatives at every grid alpha.

    ``z_s``/``z_t`` are ``(n, m)`` (or a single ``(m,)`` sample) and alpha
    scales the student logits only.
    """
    zs = np.atleast_2d(np.asarray(z_s, dtype=np.float64))
    zt = np.atleast_2d(np.asarray(z_t, dtype=np.float64))
    k = np.atleast_1d(np.asarray(labels))
    if zs.shape[0] == 0:
        raise ValueError("empty batch")
    if zs.shape != zt.shape:
        raise ValueError(f"student {zs.shape} and teacher {zt.shape} logits differ in shape")
    g = default_grid() if grid is None else _check_grid(grid)

    return GapCurve(g.copy(), *_sweep_sums(zs, zt, k, temperature, g) / zs.shape[0])


def _sweep_sums(zs, zt, k, temperature, grid) -> np.ndarray:
    """Per-grid-point sums over the batch of the five curve quantities."""
    out = np.empty((5, len(grid)))
    # keep each (chunk, n) temporary around a few MB
    chunk = max(1, min(len(grid), 400_000 // zs.shape[0]))
    for start in range(0, len(grid), chunk):
        sl = slice(start, start + chunk)
        out[:, sl] = losses.alpha_sweep(zs, zt, k, temperature, grid[sl]).sum(axis=-1)
    return out


class CurveAccumulator:
    """Sample-weighted mean curve over many batches, e.g. one training epoch.

    Batches are buffered and swept together when :meth:`curve` is called.
    """

    def __init__(self, temperature: float, grid=None):
        self.temperature = temperature
        self.grid = default_grid() if grid is None else _check_grid(grid)
        self._parts: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    def add(self, z_s, z_t, labels) -> None:
        zs = np.atleast_2d(np.array(z_s, dtype=np.float64))
        zt = np.atleast_2d(np.array(z_t, dtype=np.float64))
        self._parts.append((zs, zt, np.atleast_1d(np.array(labels))))

    def curve(self) -> GapCurve:
        if not self._parts:
            raise ValueError("empty batch")
        zs, zt, k = (np.concatenate(x) for x in zip(*self._parts))
        return scan_alpha(zs, zt, k, self.temperature, self.grid)


def count_sign_changes(values, zero_tol: float = 1e-12) -> int:
    """Strict sign flips in a sequence, skipping entries with |v| <= zero_tol."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) < 2:
        raise ValueError("need at least two samples")
    signs = np.sign(v[np.abs(v) > zero_tol])
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def nondecreasing_violations(values, slack: float = 1e-9) -> int:
    return int(np.count_nonzero(np.diff(np.asarray(values)) < -slack))


@dataclass
class LimitCheck:
    name: str
    alpha: float
    value: float
    expected: float

    def passed(self, tol: float = 1e-3) -> bool:
        return abs(self.value - self.expected) <= tol


@dataclass
class LimitReport:
    checks: list[LimitCheck]
    tol: float = 1e-3

    @property
    def passed(self) -> bool:
        return all(c.passed(self.tol) for c in self.checks)

    def failures(self) -> list[LimitCheck]:
        return [c for c in self.checks if not c.passed(self.tol)]


def verify_limits(z_s, z_t, label: int, temperature: float, tol: float = 1e-3) -> LimitReport:
    """Compare alpha-derivatives at alpha = 1e-6 and 1e6 with their closed-form limits.

    As alpha -> 0 the weighted mean logit tends to the plain average of z_s;
    as alpha -> inf it tends to the maximum.
    """
    zs = np.asarray(z_s, dtype=np.float64)
    zt = np.asarray(z_t, dtype=np.float64)
    if zs.ndim != 1:
        raise ValueError("verify_limits takes a single sample")
    if losses.is_degenerate(zs):
        raise ValueError("degenerate logits (all equal) have no alpha dependence")
    T = temperature
    pt = losses.soften(zt, T)
    z_avg, z_max, zk = zs.mean(), zs.max(), zs[label]
    checks = [
        LimitCheck("ce_small", SMALL_ALPHA, losses.grad_alpha_ce(zs, label, SMALL_ALPHA), z_avg - zk),
        LimitCheck("ce_large", LARGE_ALPHA, losses.grad_alpha_ce(zs, label, LARGE_ALPHA), z_max - zk),
        LimitCheck("kl_paper_small", SMALL_ALPHA, losses.grad_alpha_kl_paper(zs, zt, T, SMALL_ALPHA),
                   T * float((pt**2 * (z_avg - zs)).sum())),
        LimitCheck("kl_paper_large", LARGE_ALPHA, losses.grad_alpha_kl_paper(zs, zt, T, LARGE_ALPHA),
                   T * float((pt**2 * (z_max - zs)).sum())),
        LimitCheck("kl_true_small", SMALL_ALPHA, losses.grad_alpha_kl_true(zs, zt, T, SMALL_ALPHA),
                   T * float((pt * (z_avg - zs)).sum())),
        LimitCheck("kl_true_large", LARGE_ALPHA, losses.grad_alpha_kl_true(zs, zt, T, LARGE_ALPHA),
                   T * float((pt * (z_max - zs)).sum())),
    ]
    return LimitReport(checks, tol)


@dataclass
class GapMinimum:
    epoch: int
    argmin_kl: float
    min_kl: float
    argmin_ce: float
    min_ce: float


def gap_minima_trajectory(curves, epochs=None) -> list[GapMinimum]:
    """Minimum loci of each per-epoch curve; all curves must share one grid."""
    curves = list(curves)
    if not curves:
        return []
    epochs = list(range(len(curves))) if epochs is None else list(epochs)
    ref = curves[0].grid
    rows = []
    for e, c in zip(epochs, curves):
        if c.grid.shape != ref.shape or not np.array_equal(c.grid, ref):
            raise ValueError("curves do not share a grid")
        rows.append(GapMinimum(e, c.argmin_kl, c.min_kl, c.argmin_ce, c.min_ce))
    return rows


def write_curve(path, curve: GapCurve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LANDSCAPE_COLUMNS)
        for row in zip(*curve.columns()):
            w.writerow([fmt(v) for v in row])


def read_curve(path) -> GapCurve:
    with open(Path(path), newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != LANDSCAPE_COLUMNS:
            raise ValueError(f"{path}: unexpected landscape header {header}")
        data = np.array([[float(x) for x in row] for row in reader])
    return GapCurve(*data.T.copy())


def write_minima(path, minima: list[GapMinimum]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("epoch", "argmin_kl", "min_kl", "argmin_ce", "min_ce"))
        for r in minima:
            w.writerow([r.epoch, fmt(r.argmin_kl), fmt(r.min_kl), fmt(r.argmin_ce), fmt(r.min_ce)])
