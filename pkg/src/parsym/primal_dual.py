"""Chambolle-Pock iterations for the kinked functional, used as a cross-check.

The problem ``min_x sum_K w_K phi(|A_K x + c_K|) - m.x`` is split as
``F(B x + b) + G(x)`` with ``B = diag(w) A``, ``F_K(z) = w_K phi(|z| / w_K)``
and ``G(x) = -m.x``; folding the weights into the operator keeps primal and
dual variables on comparable scales. Step sizes follow the diagonal
preconditioning of Pock and Chambolle (row/column absolute sums), with one
scalar dual step per element so the prox of ``F*`` stays isotropic.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import NonConvergenceError
from .profile import Kind


def _prox_radial(z_norm, t, profile):
    """Minimiser ``r >= 0`` of ``t*phi(r) + (r - |z|)**2 / 2`` for the integrand ``phi``."""
    a = profile.fprime_at_zero
    if profile.kind == Kind.LINEAR_PLUS_POWER and profile.params["p"] == 2:
        return np.maximum(z_norm - t * a, 0.0) / (1.0 + t)
    # r + t*f'(r) = |z| on r > 0 (f' increasing), zero when |z| <= t*a
    lo = np.zeros_like(z_norm)
    hi = np.maximum(z_norm, 0.0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        big = mid + t * profile.fprime(mid) > z_norm
        hi = np.where(big, mid, hi)
        lo = np.where(big, lo, mid)
    return np.where(z_norm > t * a, 0.5 * (lo + hi), 0.0)


def chambolle_pock(prob, x0, cfg, history, check_every=25):
    """Run preconditioned primal-dual iterations on a ``solver._Problem``.

    Returns ``(x, iterations, last_step)``. Energies are recorded every
    ``check_every`` iterations; they are not monotone for this method.
    """
    w = prob.w
    W = sp.diags(w)
    Bx, By = (W @ prob.Ax).tocsr(), (W @ prob.Ay).tocsr()
    BxT, ByT = Bx.T.tocsr(), By.T.tocsr()
    bx0, by0 = w * prob.cx, w * prob.cy
    absx, absy = abs(Bx), abs(By)
    row = np.maximum(np.asarray(absx.sum(axis=1)).ravel(), np.asarray(absy.sum(axis=1)).ravel())
    col = np.asarray(absx.sum(axis=0)).ravel() + np.asarray(absy.sum(axis=0)).ravel()
    sig = 1.0 / np.maximum(row, 1e-300)
    tau = 1.0 / np.maximum(col, 1e-300)
    x = np.array(x0, dtype=float)
    xbar = x.copy()
    yx = np.zeros(len(w))
    yy = np.zeros(len(w))
    E_prev = prob.energy(x)
    scale_tol = cfg.rel_tol
    # absolute floors so that a vanishing minimiser can still stop
    h = prob.mesh.domain.h
    e_floor = h * h * float(w.sum())
    x_floor = h * h
    step = np.inf
    for it in range(1, cfg.max_iter * 200 + 1):
        # dual: prox of sigma F* by Moreau
        qx = yx + sig * (Bx @ xbar + bx0)
        qy = yy + sig * (By @ xbar + by0)
        zx, zy = qx / sig, qy / sig
        zn = np.hypot(zx, zy)
        # prox of (1/sig) F_K at z is w r z/|z| with r + f'(r)/(sig w) = |z|/w
        rn = w * _prox_radial(zn / w, 1.0 / (sig * w), prob.profile)
        ratio = np.where(zn > 0, rn / np.where(zn > 0, zn, 1.0), 0.0)
        yx = qx - sig * ratio * zx
        yy = qy - sig * ratio * zy
        # primal: prox of tau G with G linear
        xn = x - tau * (BxT @ yx + ByT @ yy - prob.md)
        xbar = 2 * xn - x
        step = float(np.max(np.abs(xn - x)))
        x = xn
        if it % check_every == 0:
            E = prob.energy(x)
            history.append(E)
            scale = max(float(np.max(np.abs(x), initial=0.0)), x_floor)
            if abs(E_prev - E) <= scale_tol * max(abs(E), e_floor) and step <= 1e3 * scale_tol * scale:
                return x, it, step
            E_prev = E
    raise NonConvergenceError(
        "primal-dual iterations did not converge", {"iterations": it, "energy": E_prev, "step": step}
    )
