"""Primal-dual interior-point method for small block-Hermitian SDPs.

Solves the inequality-form problem

    maximize    sum_j <C_j, X_j>
    subject to  sum_j <A_ij, X_j> <= b_i,   i = 1..m
                X_j >= 0 (Hermitian PSD),   j = 1..p

and its dual

    minimize    b^T y
    subject to  Z_j = sum_i y_i A_ij - C_j >= 0,   y >= 0,

with the HKM search direction and Mehrotra predictor-corrector steps.  The
Schur complement is only ``m x m``, so problems with a handful of scalar
constraints and moderately sized blocks solve in milliseconds.

Primal infeasibility is reported only with a Farkas certificate: a ray
``y >= 0`` with ``b^T y < 0`` and ``sum_i y_i A_ij >= 0`` for every block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"
FAILED = "failed"


@dataclass
class IPMResult:
    status: str
    x: list
    y: np.ndarray
    z: list
    primal_objective: float
    dual_objective: float
    iterations: int
    gap: float
    primal_residual: float
    dual_residual: float


def _herm(m):
    return 0.5 * (m + m.conj().T)


def _ip(a, b) -> float:
    return float(np.vdot(a, b).real)


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    """Largest ``t`` with ``x + t*dx >= 0`` (PSD), ``inf`` if unbounded."""
    try:
        chol = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        return 0.0
    linv = np.linalg.inv(chol)
    lam = np.linalg.eigvalsh(_herm(linv @ dx @ linv.conj().T)).min()
    return np.inf if lam >= 0 else -1.0 / lam


def _inv_pd(z: np.ndarray) -> np.ndarray:
    linv = np.linalg.inv(np.linalg.cholesky(z))
    return linv.conj().T @ linv


def _max_step_vec(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    return float(np.min(-v[neg] / dv[neg])) if np.any(neg) else np.inf


def solve_sdp(
    c: list,
    a: list,
    b: np.ndarray,
    *,
    tol_gap: float = 1e-10,
    tol_feas: float = 1e-10,
    max_iter: int = 150,
    relaxed: float = 10.0,
) -> IPMResult:
    """``c[j]`` are the objective blocks; ``a[i][j]`` the constraint blocks (``None`` for zero).

    Iterations stop once gap and residuals are below ``tol_gap``/``tol_feas``.
    If progress stalls first, the best iterate is returned and still counts as
    optimal when it is within ``relaxed`` times those tolerances.
    """
    p = len(c)
    m = len(b)
    b = np.asarray(b, dtype=float)
    dims = [blk.shape[0] for blk in c]
    zero = [np.zeros((d, d), complex) for d in dims]
    a = [[zero[j] if a[i][j] is None else np.asarray(a[i][j], complex) for j in range(p)] for i in range(m)]
    c = [np.asarray(blk, complex) for blk in c]
    # unit-norm constraint rows keep the dual multipliers O(1)
    row_norm = np.array([np.sqrt(sum(_ip(aij, aij) for aij in row)) for row in a])
    row_norm[row_norm == 0] = 1.0
    a = [[aij / row_norm[i] for aij in a[i]] for i in range(m)]
    b = b / row_norm

    def a_op(xs):
        return np.array([sum(_ip(a[i][j], xs[j]) for j in range(p)) for i in range(m)])

    def a_adj(y):
        return [sum(y[i] * a[i][j] for i in range(m)) for j in range(p)]

    norm_b = 1.0 + np.linalg.norm(b)
    norm_c = 1.0 + np.sqrt(sum(_ip(cj, cj) for cj in c))
    # starting point as in SDPT3 (Toh, Todd, Tutuncu)
    x0 = max(10.0, max((1.0 + abs(b[i])) for i in range(m)))
    z0 = max(10.0, norm_c)
    xs = [np.eye(d, dtype=complex) * max(x0, np.sqrt(d), d * x0 / 2) for d in dims]
    zs = [np.eye(d, dtype=complex) * max(z0, np.sqrt(d)) for d in dims]
    s = np.full(m, 10.0)
    y = np.full(m, 10.0)
    nu = sum(dims) + m

    status = MAX_ITER
    best = None
    it = 0
    for it in range(1, max_iter + 1):
        aty = a_adj(y)
        rp = b - a_op(xs) - s
        rd = [c[j] - aty[j] + zs[j] for j in range(p)]
        pobj = sum(_ip(c[j], xs[j]) for j in range(p))
        dobj = float(b @ y)
        mu = (sum(_ip(xs[j], zs[j]) for j in range(p)) + s @ y) / nu
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pres = np.linalg.norm(rp) / norm_b
        dres = np.sqrt(sum(_ip(r, r) for r in rd)) / norm_c
        merit = max(gap / tol_gap, pres / tol_feas, dres / tol_feas)
        if best is None or merit < best[0]:
            best = (merit, it, [xj.copy() for xj in xs], y.copy(), [zj.copy() for zj in zs], s.copy())
        if merit <= 1.0:
            status = OPTIMAL
            break
        if it - best[1] >= 15:
            # no progress for several iterations: numerical floor reached
            break
        if _farkas(a, b, y, p, m):
            status = INFEASIBLE
            break

        try:
            zinv = [_inv_pd(zj) for zj in zs]
        except np.linalg.LinAlgError:
            status = FAILED
            break
        # Schur complement  M_ik = sum_j Re tr(A_ij X_j A_kj Z_j^{-1})
        xa = [[xs[j] @ a[k][j] @ zinv[j] for j in range(p)] for k in range(m)]
        schur = np.array([[sum(_ip(a[i][j], xa[k][j]) for j in range(p)) for k in range(m)] for i in range(m)])
        schur += np.diag(s / y)
        try:
            factor = np.linalg.cholesky(0.5 * (schur + schur.T))
        except np.linalg.LinAlgError:
            status = FAILED
            break

        def direction(sigma_mu, corr_x=None, corr_sy=None):
            # corr_x[j] = dX_aff dZ_aff Z^{-1}, corr_sy = ds_aff * dy_aff
            targ = [sigma_mu * zinv[j] - xs[j] + xs[j] @ rd[j] @ zinv[j] for j in range(p)]
            if corr_x is not None:
                targ = [targ[j] - corr_x[j] for j in range(p)]
            comp = sigma_mu - s * y
            if corr_sy is not None:
                comp = comp - corr_sy
            rhs = a_op(targ) + comp / y - rp
            dy = np.linalg.solve(factor.T, np.linalg.solve(factor, rhs))
            dz = [sum(dy[i] * a[i][j] for i in range(m)) - rd[j] for j in range(p)]
            dx = [_herm(targ[j] - xs[j] @ (dz[j] + rd[j]) @ zinv[j]) for j in range(p)]
            ds = (comp - s * dy) / y
            return dx, dy, dz, ds

        def steps(dx, dy, dz, ds):
            ap = min([_max_step(xs[j], dx[j]) for j in range(p)] + [_max_step_vec(s, ds)])
            ad = min([_max_step(zs[j], dz[j]) for j in range(p)] + [_max_step_vec(y, dy)])
            return ap, ad

        # predictor
        dx, dy, dz, ds = direction(0.0)
        ap, ad = steps(dx, dy, dz, ds)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = (
            sum(_ip(xs[j] + ap * dx[j], zs[j] + ad * dz[j]) for j in range(p)) + (s + ap * ds) @ (y + ad * dy)
        ) / nu
        sigma = min(1.0, (mu_aff / mu) ** 3)
        # corrector
        corr_x = [dx[j] @ dz[j] @ zinv[j] for j in range(p)]
        dx, dy, dz, ds = direction(sigma * mu, corr_x, ds * dy)
        ap, ad = steps(dx, dy, dz, ds)
        frac = 0.9 + 0.09 * min(1.0, ap, ad)
        ap, ad = min(1.0, frac * ap), min(1.0, frac * ad)
        xs = [_herm(xs[j] + ap * dx[j]) for j in range(p)]
        s = s + ap * ds
        zs = [_herm(zs[j] + ad * dz[j]) for j in range(p)]
        y = y + ad * dy

    if status != OPTIMAL and status != INFEASIBLE and best is not None:
        _, _, xs, y, zs, s = best
        if best[0] <= relaxed:
            status = OPTIMAL
    pobj = sum(_ip(c[j], xs[j]) for j in range(p))
    dobj = float(b @ y)
    aty = a_adj(y)
    return IPMResult(
        status=status,
        x=xs,
        y=y,
        z=zs,
        primal_objective=pobj,
        dual_objective=dobj,
        iterations=it,
        gap=abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)),
        primal_residual=float(np.linalg.norm(b - a_op(xs) - s) / norm_b),
        dual_residual=float(np.sqrt(sum(_ip(r, r) for r in [c[j] - aty[j] + zs[j] for j in range(p)])) / norm_c),
    )


def _farkas(a, b, y, p, m, tol: float = 1e-9) -> bool:
    """True when ``y`` (normalised) certifies primal infeasibility."""
    ny = np.linalg.norm(y)
    if not np.isfinite(ny) or ny == 0:
        return False
    yh = y / ny
    if b @ yh > -1e-6 * (1.0 + np.linalg.norm(b)):
        return False
    for j in range(p):
        blk = sum(yh[i] * a[i][j] for i in range(m))
        if np.linalg.eigvalsh(_herm(blk)).min() < -tol * (1.0 + np.abs(blk).max()):
            return False
    return True
