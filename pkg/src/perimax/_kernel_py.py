"""Pure-numpy fallback for the Runge-Kutta stepping kernel.

Identical arithmetic to the compiled version: classical fourth-order
Runge-Kutta with two substeps of size h/2 per grid step (stage data on a
mesh of spacing h/4), jointly propagating the fundamental matrix and,
optionally, a forced particular solution.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"


def segment_propagate(F: np.ndarray, g, h: float):
    """Propagate W' = F(t) W, W(0) = I (and psi' = F psi + g, psi(0) = 0).

    Parameters
    ----------
    F : (4K+1, d, d) complex
        Stage matrices on a uniform mesh of spacing h/4 across the segment.
    g : (4K+1, d) complex or None
        Stage forcing on the same mesh; None solves the homogeneous system only.
    h : float
        Grid step; values are recorded every h (K+1 records including t=0).

    Returns
    -------
    (Phi, psi) : ((K+1, d, d), (K+1, d) or None)
    """
    nstage = F.shape[0]
    if nstage < 5 or (nstage - 1) % 4:
        raise ValueError(f"stage count must be 4K+1 with K >= 1, got {nstage}")
    nout = (nstage - 1) // 4
    d = F.shape[1]
    forced = g is not None

    Phi = np.empty((nout + 1, d, d), dtype=complex)
    W = np.eye(d, dtype=complex)
    Phi[0] = W
    psi = None
    p = None
    if forced:
        psi = np.empty((nout + 1, d), dtype=complex)
        p = np.zeros(d, dtype=complex)
        psi[0] = p

    hh = 0.5 * h
    for j in range(2 * nout):
        F0 = F[2 * j]
        Fm = F[2 * j + 1]
        F1 = F[2 * j + 2]
        k1 = F0 @ W
        k2 = Fm @ (W + (0.5 * hh) * k1)
        k3 = Fm @ (W + (0.5 * hh) * k2)
        k4 = F1 @ (W + hh * k3)
        W = W + (hh / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if forced:
            g0 = g[2 * j]
            gm = g[2 * j + 1]
            g1 = g[2 * j + 2]
            q1 = F0 @ p + g0
            q2 = Fm @ (p + (0.5 * hh) * q1) + gm
            q3 = Fm @ (p + (0.5 * hh) * q2) + gm
            q4 = F1 @ (p + hh * q3) + g1
            p = p + (hh / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4)
        if j % 2 == 1:
            Phi[j // 2 + 1] = W
            if forced:
                psi[j // 2 + 1] = p
    return Phi, psi
