"""Alternating minimization of

    ||y - h * x||^2 + lam1 * ||c . y - x||^2 + lam2 * ||h||^2

over the latent image ``x`` and a small kernel ``h``. Both half-steps are
exact minimizers of a convex quadratic, so the objective can never go up;
``run_am`` checks that on every half-step.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, cg

from .errors import SolverError
from .image import (
    BOUNDARIES,
    Kernel,
    adjoint_convolve_same,
    as_image,
    check_same_shape,
    convolve_same,
    shifted_copies,
)

log = logging.getLogger(__name__)

X_SOLVERS = ("conjugate_gradient", "frequency_closed_form")


@dataclass(frozen=True)
class AMConfig:
    lambda1: float = 1.2
    lambda2: float = 0.4
    p: int = 5
    max_outer_iters: int = 50
    outer_tol: float = 1e-4
    inner_tol: float = 1e-8
    x_solver: str = "conjugate_gradient"
    boundary: str = "replicate"
    max_cg_iters: int = 5000

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise SolverError("invalid-config", "lambda1 and lambda2 must be >= 0")
        if int(self.p) != self.p or self.p < 1 or self.p % 2 == 0:
            raise SolverError("invalid-config", f"kernel size p must be odd and >= 1, got {self.p}")
        if self.max_outer_iters < 1 or self.max_cg_iters < 1:
            raise SolverError("invalid-config", "iteration caps must be >= 1")
        if not (self.outer_tol > 0 and self.inner_tol > 0):
            raise SolverError("invalid-config", "tolerances must be > 0")
        if self.x_solver not in X_SOLVERS:
            raise SolverError("invalid-config", f"unknown x_solver {self.x_solver!r}")
        if self.boundary not in BOUNDARIES:
            raise SolverError("invalid-config", f"unknown boundary {self.boundary!r}")
        if self.x_solver == "frequency_closed_form" and self.boundary != "circular":
            raise SolverError(
                "invalid-config", "frequency_closed_form needs boundary='circular'"
            )


class Objective(NamedTuple):
    total: float
    fidelity: float
    physics: float
    kernel_term: float


@dataclass
class AMTrace:
    """Per-iteration record of the objective and the relative x-change.

    ``initial`` is the objective at the starting point and ``half_steps`` the
    totals right after each x-update, so descent can be audited on every
    half-step.
    """

    initial: Objective | None = None
    records: list = field(default_factory=list)
    rel_change: list = field(default_factory=list)
    half_steps: list = field(default_factory=list)
    x_residuals: list = field(default_factory=list)
    converged: bool = False

    COLUMNS = ("iter", "total", "fidelity", "physics", "kernel_term", "rel_change")

    def __len__(self):
        return len(self.records)

    @property
    def totals(self):
        return [r.total for r in self.records]

    def sequence(self):
        """All totals in evaluation order: start, then (x-step, h-step) pairs."""
        seq = [self.initial.total]
        for half, full in zip(self.half_steps, self.records):
            seq.extend((half, full.total))
        return seq

    def rows(self):
        for i, (rec, rel) in enumerate(zip(self.records, self.rel_change), start=1):
            yield (i, rec.total, rec.fidelity, rec.physics, rec.kernel_term, rel)

    def write_csv(self, fh, slice_index=None, header=True):
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow(self.COLUMNS if slice_index is None else ("slice",) + self.COLUMNS)
        for row in self.rows():
            writer.writerow(row if slice_index is None else (slice_index,) + row)


def objective(y, x, c, h: Kernel, lambda1: float, lambda2: float) -> Objective:
    y = as_image(y)
    x = as_image(x)
    c = as_image(c)
    check_same_shape(y, x, c)
    r = y - convolve_same(x, h)
    fidelity = float(np.sum(r * r))
    d = c * y - x
    physics = lambda1 * float(np.sum(d * d))
    kernel_term = lambda2 * h.norm2()
    return Objective(fidelity + physics + kernel_term, fidelity, physics, kernel_term)


def _normal_op(h: Kernel, lambda1: float):
    def apply(v):
        return adjoint_convolve_same(convolve_same(v, h), h) + lambda1 * v

    return apply


def x_rhs(y, c, h: Kernel, lambda1: float) -> np.ndarray:
    return adjoint_convolve_same(y, h) + lambda1 * (c * y)


def normal_residual(x, y, c, h: Kernel, lambda1: float) -> float:
    """Relative residual of the x-step normal equations at ``x``."""
    rhs = x_rhs(y, c, h, lambda1)
    res = _normal_op(h, lambda1)(x) - rhs
    scale = np.linalg.norm(rhs)
    return float(np.linalg.norm(res) / scale) if scale > 0 else float(np.linalg.norm(res))


def _kernel_transform(h: Kernel, shape):
    kh, kw = h.shape
    ry, rx = kh // 2, kw // 2
    kk = np.zeros(shape)
    for a in range(kh):
        for b in range(kw):
            kk[(a - ry) % shape[0], (b - rx) % shape[1]] += h.taps[a, b]
    return np.fft.rfft2(kk)


def _x_frequency(y, c, h: Kernel, lambda1: float):
    if h.boundary != "circular":
        raise SolverError("boundary-mismatch", "frequency solve needs a circular kernel")
    K = _kernel_transform(h, y.shape)
    den = (K.real**2 + K.imag**2) + lambda1
    if den.max() <= 0 or den.min() <= 1e-12 * den.max():
        raise SolverError("ill-posed-x-step", "normal operator is numerically singular")
    num = np.conj(K) * np.fft.rfft2(y) + lambda1 * np.fft.rfft2(c * y)
    return np.fft.irfft2(num / den, s=y.shape)


def _x_cg(y, c, h: Kernel, lambda1: float, tol: float, maxiter: int, x0=None):
    if lambda1 == 0 and h.norm2() < 1e-24:
        raise SolverError("ill-posed-x-step", "zero kernel with lambda1 = 0")
    shape = y.shape
    apply = _normal_op(h, lambda1)
    op = LinearOperator(
        (y.size, y.size), matvec=lambda v: apply(v.reshape(shape)).ravel(), dtype=np.float64
    )
    rhs = x_rhs(y, c, h, lambda1).ravel()
    if not np.any(rhs):
        return np.zeros(shape)
    guess = None if x0 is None else np.asarray(x0, dtype=np.float64).ravel()
    # scipy tracks the recursive residual; restart until the true one is small
    for _ in range(3):
        sol, info = cg(op, rhs, x0=guess, rtol=tol * 0.5, atol=0.0, maxiter=maxiter)
        x = sol.reshape(shape)
        if normal_residual(x, y, c, h, lambda1) <= tol:
            return x
        guess = sol
    code = "ill-posed-x-step" if lambda1 == 0 else "x-step-not-converged"
    raise SolverError(code, f"CG stopped above inner_tol={tol}")


def x_step(y, c, h: Kernel, lambda1: float, cfg: AMConfig = AMConfig(), x0=None) -> np.ndarray:
    """Minimize over ``x`` with ``h`` fixed.

    Solves ``(H^T H + lam1 I) x = H^T y + lam1 (c . y)`` either in closed form
    in the Fourier domain (circular boundary only) or by conjugate gradients
    on the spatial operators. ``x0`` warm-starts CG.
    """
    y = as_image(y)
    c = as_image(c)
    check_same_shape(y, c)
    if cfg.x_solver == "frequency_closed_form":
        x = _x_frequency(y, c, h, lambda1)
        if normal_residual(x, y, c, h, lambda1) > cfg.inner_tol:
            raise SolverError("ill-posed-x-step", "closed-form solve missed inner_tol")
        return x
    return _x_cg(y, c, h, lambda1, cfg.inner_tol, cfg.max_cg_iters, x0)


def kernel_normal_matrix(y, x, p: int, boundary: str = "replicate", valid_only: bool = False):
    """Gram matrix ``G`` and right-hand side for the kernel least squares.

    Entry ``G[(a,b), (a',b')]`` is the inner product of the shifted copies of
    ``x`` that taps ``(a,b)`` and ``(a',b')`` multiply. With ``valid_only``
    the sums skip a margin of ``p // 2`` pixels, where the boundary rule
    would enter.
    """
    y = as_image(y)
    x = as_image(x)
    check_same_shape(y, x)
    if p > min(x.shape):
        raise SolverError("kernel-too-large", f"p={p} exceeds image {x.shape}")
    S = shifted_copies(x, p, boundary)
    if valid_only:
        r = p // 2
        S = S[:, r : x.shape[0] - r, r : x.shape[1] - r]
        y = y[r : x.shape[0] - r, r : x.shape[1] - r]
    A = S.reshape(p * p, -1)
    return A @ A.T, A @ y.ravel()


def h_step(y, x, lambda2: float, p: int, boundary: str = "replicate", valid_only: bool = False) -> Kernel:
    """Ridge least-squares kernel: minimize ``||y - h * x||^2 + lam2 ||h||^2``."""
    G, rhs = kernel_normal_matrix(y, x, p, boundary, valid_only)
    M = G + lambda2 * np.eye(p * p)
    eig = np.linalg.eigvalsh(M)
    if eig[-1] <= 0 or eig[0] <= 1e-12 * eig[-1]:
        raise SolverError("ill-posed-h-step", "kernel normal matrix is numerically singular")
    taps = scipy.linalg.solve(M, rhs, assume_a="pos")
    return Kernel(taps.reshape(p, p), boundary)


def run_am(y, c, cfg: AMConfig = AMConfig()):
    """Alternate x- and h-updates from ``x = c . y``, ``h = delta``.

    Stops once ``||x_k - x_{k-1}|| / ||x_{k-1}|| <= outer_tol`` or after
    ``max_outer_iters`` iterations.

    Returns
    -------
    (x, h, trace)
    """
    y = as_image(y)
    c = as_image(c)
    check_same_shape(y, c)
    lam1, lam2 = cfg.lambda1, cfg.lambda2
    h = Kernel.delta(cfg.p, cfg.boundary)
    x = c * y
    trace = AMTrace(initial=objective(y, x, c, h, lam1, lam2))
    # absolute floor only matters when the starting objective is exactly 0
    slack = 1e-9 * trace.initial.total + 1e-15 * float(np.sum(y * y))
    prev = trace.initial.total

    for it in range(1, cfg.max_outer_iters + 1):
        x_new = x_step(y, c, h, lam1, cfg, x0=x)
        trace.x_residuals.append(normal_residual(x_new, y, c, h, lam1))
        half = objective(y, x_new, c, h, lam1, lam2).total
        _check_descent(half, prev, slack, it, "x")
        h = h_step(y, x_new, lam2, cfg.p, cfg.boundary)
        full = objective(y, x_new, c, h, lam1, lam2)
        _check_descent(full.total, half, slack, it, "h")

        norm_prev = np.linalg.norm(x)
        diff = np.linalg.norm(x_new - x)
        rel = float(diff / norm_prev) if norm_prev > 0 else (0.0 if diff == 0 else float("inf"))
        trace.half_steps.append(half)
        trace.records.append(full)
        trace.rel_change.append(rel)
        x, prev = x_new, full.total
        log.debug("AM iter %d: total=%.6g rel_change=%.3g", it, full.total, rel)
        if rel <= cfg.outer_tol:
            trace.converged = True
            break
    return x, h, trace


def _check_descent(value, previous, slack, it, which):
    if not np.isfinite(value):
        raise SolverError("diverged", f"non-finite objective after {which}-step {it}")
    if value > previous + slack:
        raise SolverError(
            "non-monotone",
            f"objective rose from {previous!r} to {value!r} at {which}-step of iteration {it}",
        )
