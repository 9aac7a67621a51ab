"""Basis pursuit denoising by spectral projected gradient.

Solves::

    minimize ||c||_1  subject to  ||A c - b||_2 <= sigma

by root-finding on the Pareto curve ``phi(tau) = min {||A c - b||_2 : ||c||_1 <= tau}``.
Each point of the curve is a LASSO subproblem solved by projected gradient
with a Barzilai-Borwein step and a nonmonotone (GLL) line search; ``tau`` is
moved by Newton steps using ``phi'(tau) = -||A^T r||_inf / ||r||_2``.

The solver only touches the operator through forward and adjoint products,
so any :class:`scipy.sparse.linalg.LinearOperator` can stand in for the
dense dictionary.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, aslinearoperator

logger = logging.getLogger(__name__)

_STEP_MIN = 1e-10
_STEP_MAX = 1e10
_GAMMA = 1e-4
_N_PREV = 10
_MAX_LINE_ITERS = 10


class SolverError(RuntimeError):
    """Raised when the iteration produces non-finite values."""


class CountingOperator:
    """Wraps a linear operator and counts forward/adjoint applications."""

    def __init__(self, op):
        # scipy's adjoint of a dense real matrix copies it (``A.T.conj()``) on
        # every call; apply plain arrays directly instead
        self.dense = isinstance(op, np.ndarray) and not np.iscomplexobj(op)
        self.op = np.asarray(op, dtype=float) if self.dense else aslinearoperator(op)
        self.shape = self.op.shape
        self.n_matvec = 0
        self.n_rmatvec = 0
        self.time_matvec = 0.0

    def matvec(self, x):
        t0 = time.perf_counter()
        y = self.op @ x if self.dense else self.op.matvec(x)
        self.time_matvec += time.perf_counter() - t0
        self.n_matvec += 1
        return y

    def rmatvec(self, y):
        t0 = time.perf_counter()
        x = self.op.T @ y if self.dense else self.op.rmatvec(y)
        self.time_matvec += time.perf_counter() - t0
        self.n_rmatvec += 1
        return x

    @property
    def count(self) -> int:
        return self.n_matvec + self.n_rmatvec


@dataclass
class BpdnProblem:
    """``min ||c||_1  s.t.  ||operator @ c - target||_2 <= sigma_bound``."""

    operator: LinearOperator | np.ndarray
    target: np.ndarray
    sigma_bound: float = 0.0

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float)
        if self.sigma_bound < 0:
            raise ValueError(f"sigma_bound must be >= 0, got {self.sigma_bound}")
        m, _ = aslinearoperator(self.operator).shape
        if m != self.target.size:
            raise ValueError(
                f"operator has {m} rows but target has length {self.target.size}"
            )

    @property
    def n_coefficients(self) -> int:
        return aslinearoperator(self.operator).shape[1]


@dataclass
class SparseSolution:
    coefficients: np.ndarray
    residual_norm: float
    dual_norm: float
    iterations: int
    matvec_count: int
    converged: bool
    tau: float = 0.0
    message: str = ""
    matvec_time: float = 0.0
    trace: list[tuple[int, float, float, float, int]] = field(default_factory=list)
    pareto: list[tuple[float, float]] = field(default_factory=list)

    @property
    def l1_norm(self) -> float:
        return float(np.abs(self.coefficients).sum())

    def write_trace(self, path) -> None:
        """Write the iteration trace as ``iter,tau,residual_norm,dual_norm,matvecs``."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "tau", "residual_norm", "dual_norm", "matvecs"])
            for it, tau, rn, dn, mv in self.trace:
                w.writerow([it, repr(tau), repr(rn), repr(dn), mv])


def project_l1(v, tau: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto the l1 ball of radius ``tau``.

    Sort-based soft thresholding, O(n log n). Ties in magnitude are ordered
    by index so the output is deterministic.
    """
    v = np.asarray(v, dtype=float)
    if tau < 0:
        raise ValueError("tau must be non-negative")
    a = np.abs(v)
    if a.sum() <= tau:
        return v.copy()
    if tau <= 0:
        return np.zeros_like(v)
    order = np.argsort(-a, kind="stable")
    u = a[order]
    css = np.cumsum(u) - tau
    k = np.arange(1, u.size + 1)
    # largest k with u_k > (sum_{j<=k} u_j - tau)/k; k = 1 always qualifies,
    # rounding aside
    hits = np.nonzero(u * k > css)[0]
    rho = hits[-1] if hits.size else 0
    theta = css[rho] / (rho + 1.0)
    w = np.sign(v) * np.maximum(a - theta, 0.0)
    # cancellation in a - theta can overshoot the radius by a few ulps
    s = np.abs(w).sum()
    if s > tau:
        w *= tau / s
    return w


def _line_search(op, b, x, g, gstep, fmax, tau):
    """Projected backtracking along the projection arc ``P(x - s*gstep*g)``."""
    step = 1.0
    scale = 1.0
    snorm = 0.0
    nsafe = 0
    n = x.size
    for it in range(_MAX_LINE_ITERS + 1):
        xnew = project_l1(x - step * scale * gstep * g, tau)
        r = b - op.matvec(xnew)
        f = 0.5 * float(r @ r)
        s = xnew - x
        gts = scale * float(g @ s)
        if gts >= 0:
            return xnew, r, f, False
        if f < fmax + _GAMMA * step * gts:
            return xnew, r, f, True
        step *= 0.5
        snorm_old = snorm
        snorm = np.linalg.norm(s) / np.sqrt(n)
        if abs(snorm - snorm_old) <= 1e-6 * snorm:
            gnorm = np.linalg.norm(gstep * g) / np.sqrt(n)
            scale = snorm / gnorm / 2.0**nsafe
            nsafe += 1
    return xnew, r, f, False


class _SPG:
    """State of a projected-gradient run on the l1 ball, shared by both modes."""

    def __init__(self, op: CountingOperator, b: np.ndarray, x0, tau: float):
        self.op = op
        self.b = b
        self.tau = tau
        n = op.shape[1]
        x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
        self.x = project_l1(x, tau)
        self._refresh()
        self.last_f = np.full(_N_PREV, -np.inf)
        self.last_f[0] = self.f
        dx = project_l1(self.x - self.g, tau) - self.x
        dxn = np.abs(dx).max() if dx.size else 0.0
        self.gstep = _STEP_MAX if dxn < 1.0 / _STEP_MAX else min(_STEP_MAX, max(_STEP_MIN, 1.0 / dxn))
        self.line_errors = 0

    def _refresh(self):
        self.r = self.b - self.op.matvec(self.x)
        self.g = -self.op.rmatvec(self.r)
        self.f = 0.5 * float(self.r @ self.r)

    @property
    def rnorm(self) -> float:
        return float(np.sqrt(2.0 * self.f))

    @property
    def gnorm(self) -> float:
        return float(np.abs(self.g).max()) if self.g.size else 0.0

    def gap(self) -> float:
        """Relative duality gap of the LASSO subproblem at the current tau."""
        gap = float(self.r @ (self.r - self.b)) + self.tau * self.gnorm
        return abs(gap) / max(1.0, self.f)

    def set_tau(self, tau: float):
        shrink = tau < self.tau
        self.tau = tau
        if shrink:
            self.x = project_l1(self.x, tau)
            self._refresh()
            self.last_f = np.full(_N_PREV, -np.inf)
            self.last_f[0] = self.f

    def step(self, k: int, record: bool = True):
        x_old, g_old, f_old = self.x, self.g, self.f
        xnew, r, f, ok = _line_search(
            self.op, self.b, self.x, self.g, self.gstep, self.last_f.max(), self.tau
        )
        if not ok:
            # fall back to a plain backtracking along the feasible direction
            d = project_l1(self.x - self.gstep * self.g, self.tau) - self.x
            gtd = float(self.g @ d)
            xnew, r, f, ok = self.x, self.r, self.f, False
            if gtd < 0:
                s = 1.0
                fmax = self.last_f.max()
                for _ in range(_MAX_LINE_ITERS + 1):
                    xt = self.x + s * d
                    rt = self.b - self.op.matvec(xt)
                    ft = 0.5 * float(rt @ rt)
                    if ft < fmax + _GAMMA * s * gtd:
                        xnew, r, f, ok = xt, rt, ft, True
                        break
                    s *= 0.5
        if not np.all(np.isfinite(xnew)) or not np.isfinite(f):
            raise SolverError(f"non-finite iterate at iteration {k}")
        if ok:
            self.x, self.r, self.f = xnew, r, f
            self.g = -self.op.rmatvec(self.r)
            s = self.x - x_old
            y = self.g - g_old
            sts = float(s @ s)
            sty = float(s @ y)
            self.gstep = _STEP_MAX if sty <= 0 else min(_STEP_MAX, max(_STEP_MIN, sts / sty))
        else:
            self.line_errors += 1
            self.gstep = max(_STEP_MIN, self.gstep / 10.0)
        if record:
            self.last_f[k % _N_PREV] = self.f
        return f_old


def solve_lasso(problem: BpdnProblem, tau: float, c0=None, max_iter: int = 1000,
                tol: float = 1e-6) -> SparseSolution:
    """Minimize ``||A c - b||_2`` over the l1 ball of radius ``tau``."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    op = CountingOperator(problem.operator)
    b = problem.target
    spg = _SPG(op, b, c0, tau)
    best_x, best_f = spg.x.copy(), spg.f
    trace = []
    it = 0
    converged = False
    while True:
        trace.append((it, tau, spg.rnorm, spg.gnorm, op.count))
        if spg.gap() <= tol or spg.rnorm <= tol * max(np.linalg.norm(b), 1e-300):
            converged = True
            break
        if it >= max_iter or spg.line_errors > 10:
            break
        it += 1
        spg.step(it)
        if spg.f < best_f:
            best_x, best_f = spg.x.copy(), spg.f
    if spg.f > best_f:
        spg.x = best_x
        spg._refresh()
    return SparseSolution(
        coefficients=spg.x,
        residual_norm=spg.rnorm,
        dual_norm=spg.gnorm,
        iterations=it,
        matvec_count=op.count,
        converged=converged,
        tau=tau,
        message="optimal" if converged else "iteration limit",
        matvec_time=op.time_matvec,
        trace=trace,
    )


def solve_bpdn(problem: BpdnProblem, max_iter: int = 1000, tol_feas: float = 1e-4,
               tol_gap: float = 1e-5, dec_tol: float = 1e-4) -> SparseSolution:
    """Solve the BPDN problem by Newton root-finding on the Pareto curve.

    Parameters
    ----------
    problem : BpdnProblem
    max_iter : int
        Budget of projected-gradient iterations over all subproblems.
    tol_feas : float
        Relative tolerance on ``|residual_norm - sigma_bound|``.
    tol_gap : float
        Relative duality-gap tolerance for each LASSO subproblem.
    dec_tol : float
        Relative objective decrease below which tau is updated before the
        subproblem is fully solved.

    Returns
    -------
    SparseSolution
        ``converged`` is False when the budget ran out; the iterate closest
        to the target residual is returned in that case.
    """
    op = CountingOperator(problem.operator)
    b = problem.target
    sigma = float(problem.sigma_bound)
    bnorm = float(np.linalg.norm(b))
    n = op.shape[1]

    if bnorm <= sigma:
        return SparseSolution(
            coefficients=np.zeros(n), residual_norm=bnorm,
            dual_norm=float(np.abs(op.rmatvec(b)).max()) if n else 0.0,
            iterations=0, matvec_count=op.count, converged=True, tau=0.0,
            message="sigma >= ||b||; zero solution",
        )

    spg = _SPG(op, b, None, 0.0)
    trace = []
    pareto = []
    it = 0
    converged = False
    message = "iteration limit"
    f_prev = spg.f
    updated_last = False
    best = None

    def _score(rn):
        return abs(rn - sigma)

    while True:
        rnorm = spg.rnorm
        gnorm = spg.gnorm
        trace.append((it, spg.tau, rnorm, gnorm, op.count))
        if best is None or _score(rnorm) < best[0] or (
            _score(rnorm) == best[0] and spg.tau < best[3]
        ):
            best = (_score(rnorm), spg.x.copy(), rnorm, spg.tau, gnorm)

        rgap = spg.gap()
        rerr = abs(rnorm - sigma) / max(sigma, 1e-300) if sigma > 0 else rnorm / bnorm
        rerr2 = abs(spg.f - 0.5 * sigma**2) / max(1.0, spg.f)
        if rerr <= tol_feas and rgap <= tol_gap:
            converged = True
            message = "root found"
            break
        if gnorm <= 1e-12 * rnorm:
            message = "least-squares solution; sigma not attainable"
            break

        fchange = abs(spg.f - f_prev)
        near_opt = rgap <= max(tol_gap, rerr2)
        stalled = (fchange <= dec_tol * spg.f and rnorm > 2 * sigma) or (
            fchange <= 1e-1 * spg.f * abs(rnorm - sigma) and rnorm <= 2 * sigma
        )
        if (near_opt or stalled or it == 0) and not updated_last:
            pareto.append((spg.tau, rnorm))
            new_tau = max(0.0, spg.tau + rnorm * (rnorm - sigma) / gnorm)
            spg.set_tau(new_tau)
            updated_last = True
        else:
            updated_last = False

        if it >= max_iter or spg.line_errors > 10:
            break
        it += 1
        f_prev = spg.f
        spg.step(it, record=spg.f > 0.5 * sigma**2)

    if converged:
        x, rnorm, tau, gnorm = spg.x, spg.rnorm, spg.tau, spg.gnorm
    else:
        _, x, rnorm, tau, gnorm = best
        logger.warning("BPDN did not converge after %d iterations (%s)", it, message)
    return SparseSolution(
        coefficients=np.array(x, copy=True),
        residual_norm=float(np.linalg.norm(b - (op.op @ x if op.dense else op.op.matvec(x)))),
        dual_norm=float(gnorm),
        iterations=it,
        matvec_count=op.count,
        converged=converged,
        tau=tau,
        message=message,
        matvec_time=op.time_matvec,
        trace=trace,
        pareto=pareto,
    )
