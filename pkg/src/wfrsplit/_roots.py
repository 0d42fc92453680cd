"""Vectorised safeguarded Newton for monotone scalar equations."""

from __future__ import annotations

import numpy as np


class RootFindingError(RuntimeError):
    pass


def solve_increasing(fun, lo, hi, x0=None, atol=1e-12, max_newton=60, max_bisect=200):
    """Find roots of increasing functions, elementwise, inside ``[lo, hi]``.

    ``fun(x, idx)`` returns ``(f, df)`` for the entries selected by the integer
    index array ``idx``. The brackets must satisfy ``f(lo) <= 0 <= f(hi)``.
    A Newton step is taken whenever it stays strictly inside the current
    bracket; otherwise (and after ``max_newton`` steps) the bracket is bisected.
    ``atol`` may be an array. Entries whose bracket collapses to adjacent
    floats are accepted as converged.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    lo, hi = np.broadcast_arrays(lo, hi)
    lo, hi = lo.copy(), hi.copy()
    x = 0.5 * (lo + hi) if x0 is None else np.clip(np.array(x0, dtype=float), lo, hi)
    atol = np.broadcast_to(np.asarray(atol, dtype=float), x.shape)

    active = np.arange(x.size)
    xf, lof, hif, tolf = x.ravel(), lo.ravel(), hi.ravel(), atol.ravel()
    for it in range(max_newton + max_bisect):
        if active.size == 0:
            break
        xa = xf[active]
        f, df = fun(xa, active)
        done = np.abs(f) <= tolf[active]
        neg = f < 0
        lof[active] = np.where(neg, xa, lof[active])
        hif[active] = np.where(neg, hif[active], xa)
        la, ha = lof[active], hif[active]
        if it < max_newton:
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                step = xa - f / df
            ok = np.isfinite(step) & (step > la) & (step < ha)
            xn = np.where(ok, step, 0.5 * (la + ha))
        else:
            xn = 0.5 * (la + ha)
        collapsed = (ha - la) <= 4 * np.finfo(float).eps * np.maximum(np.abs(ha), 1e-300)
        xf[active] = np.where(done, xa, xn)
        active = active[~(done | collapsed)]
    if active.size:
        raise RootFindingError(f"{active.size} scalar problems did not converge")
    return xf.reshape(x.shape)
