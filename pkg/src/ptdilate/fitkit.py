"""One-parameter least-squares estimation of the non-Hermiticity strength.

Fits sampled P0(t) curves to the closed-form population model of the PT
family by a coarse grid scan plus golden-section refinement (the model's
r-derivative is singular at r = 1, so derivative-based optimizers are
avoided), and converts fitted strengths into the eigenvalue bifurcation
curve E+- = +-sqrt(1 - r^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ptmodel import analytic_p0, pt_eigenvalues

__all__ = [
    "GRID_STEP",
    "REFINE_TOL",
    "FitResult",
    "fit_r",
    "sse",
    "eigen_curve",
    "fit_table_to_csv",
]

GRID_STEP = 1e-3
REFINE_TOL = 1e-6
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
# Step for the central-difference curvature of the SSE at the minimum.
_CURVATURE_STEP = 1e-4


@dataclass
class FitResult:
    """Fitted strength, its curvature-based standard error, and E+-.

    ``stderr`` follows the asymptotic least-squares convention
    sqrt(2 SSE / (n - 2) / d2SSE/dr2); when the curvature is not
    positive the fit is flagged ``degenerate`` and stderr is infinite.
    """

    r_exp: float
    stderr: float
    sse: float
    n_samples: int
    e_plus: complex
    e_minus: complex
    degenerate: bool = False


def sse(r: float, t: np.ndarray, p0: np.ndarray) -> float:
    """Sum of squared residuals of the population model at strength r."""
    return float(np.sum((analytic_p0(r, t) - p0) ** 2))


def _golden_section(f, lo: float, hi: float, tol: float) -> float:
    """Minimum of a unimodal f on [lo, hi] to within tol."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit_r(
    samples, r_range: tuple[float, float] = (0.0, 2.0)
) -> FitResult:
    """Least-squares strength estimate from (t, P0) samples.

    Scans ``r_range`` on a 1e-3 grid, refines the best bracket by
    golden section to 1e-6, and reports the curvature-based standard
    error.  ``samples`` is a sequence of (t, P0) pairs or a (n, 2)
    array.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"samples must be (n, 2) pairs of (t, P0), got {arr.shape}")
    n = arr.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 samples, got {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples contain non-finite values; filter them first")
    lo, hi = float(r_range[0]), float(r_range[1])
    if not (0.0 <= lo < hi <= 2.0):
        raise ValueError(f"r_range must satisfy 0 <= lo < hi <= 2, got {r_range}")
    t, p0 = arr[:, 0], arr[:, 1]

    grid = np.arange(lo, hi + GRID_STEP / 2.0, GRID_STEP)
    grid[-1] = min(grid[-1], hi)
    scores = np.array([sse(r, t, p0) for r in grid])
    k = int(np.argmin(scores))
    blo = grid[max(k - 1, 0)]
    bhi = grid[min(k + 1, len(grid) - 1)]
    if bhi > blo:
        r_best = _golden_section(lambda r: sse(r, t, p0), blo, bhi, REFINE_TOL)
    else:
        r_best = float(grid[k])
    best = sse(r_best, t, p0)
    # Golden section assumes unimodality within the bracket; keep the
    # grid minimum if refinement somehow did worse.
    if scores[k] < best:
        r_best, best = float(grid[k]), float(scores[k])

    h = _CURVATURE_STEP
    r_minus = max(r_best - h, 0.0)
    d2 = (sse(r_best + h, t, p0) - 2.0 * best + sse(r_minus, t, p0)) / (
        (r_best + h - r_minus) / 2.0
    ) ** 2
    dof = max(n - 2, 1)
    if d2 > 0:
        stderr = math.sqrt(2.0 * best / dof / d2)
        degenerate = False
    else:
        stderr = math.inf
        degenerate = True
    e_plus, e_minus = pt_eigenvalues(r_best)
    return FitResult(
        r_exp=float(r_best),
        stderr=stderr,
        sse=best,
        n_samples=n,
        e_plus=e_plus,
        e_minus=e_minus,
        degenerate=degenerate,
    )


def eigen_curve(r_values, fits) -> np.ndarray:
    """Bifurcation table: rows (r_nominal, Re E+, Im E+, Re E-, Im E-).

    Im E vanishes for fitted strengths <= 1 and Re E vanishes above 1;
    both vanish at the coalescence point.
    """
    r_values = list(r_values)
    fits = list(fits)
    if len(r_values) != len(fits):
        raise ValueError(
            f"need one fit per r value, got {len(r_values)} vs {len(fits)}"
        )
    rows = [
        (
            float(r),
            fit.e_plus.real,
            fit.e_plus.imag,
            fit.e_minus.real,
            fit.e_minus.imag,
        )
        for r, fit in zip(r_values, fits)
    ]
    return np.array(rows)


def fit_table_to_csv(fh, r_values, fits) -> None:
    """Write the fit summary with header r_nominal,r_exp,stderr,reE_plus,imE_plus."""
    fh.write("r_nominal,r_exp,stderr,reE_plus,imE_plus\n")
    for r, fit in zip(r_values, fits):
        vals = (float(r), fit.r_exp, fit.stderr, fit.e_plus.real, fit.e_plus.imag)
        fh.write(",".join(repr(float(v)) for v in vals) + "\n")
