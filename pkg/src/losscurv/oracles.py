"""Coordinate-formula curvature computed by finite differences.

These routines never use the graph-specific closed forms for the quantity
they compute; they build it from the generic textbook definitions so they
can serve as independent checks of :mod:`losscurv.geometry`.
"""

import numpy as np

from .geometry import christoffel_at, metric_at


def _central(fn, x, h):
    x = np.asarray(x, dtype=float)
    out = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out.append((fn(x + e) - fn(x - e)) / (2.0 * h))
    return np.array(out)


def christoffel_from_metric(field, x, h=1e-5):
    """Gamma^k_{ij} = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij), metric differentiated numerically."""
    dg = _central(lambda y: metric_at(field, y).g, x, h)  # dg[l, i, j] = d_l g_ij
    g_inv = metric_at(field, x).g_inv
    # bracket[i, j, l] = d_i g_jl + d_j g_il - d_l g_ij
    bracket = dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0)
    return 0.5 * np.einsum("kl,ijl->kij", g_inv, bracket)


def riemann_from_christoffel(field, x, h=1e-5, christoffel=christoffel_at):
    """R^i_{jkm} = d_k G^i_{jm} - d_m G^i_{jk} + G^i_{rk} G^r_{jm} - G^i_{rm} G^r_{jk}."""
    d_gamma = _central(lambda y: christoffel(field, y), x, h)  # [n, i, j, k] = d_n G^i_{jk}
    gam = christoffel(field, x)
    deriv = np.einsum("kijm->ijkm", d_gamma) - np.einsum("mijk->ijkm", d_gamma)
    quad = np.einsum("irk,rjm->ijkm", gam, gam) - np.einsum("irm,rjk->ijkm", gam, gam)
    return deriv + quad


def scalar_curvature_from_riemann(riemann, g_inv):
    """Sc = g^{jm} R^i_{jim}."""
    ricci = np.einsum("ijim->jm", riemann)
    return float(np.einsum("jm,jm->", g_inv, ricci))


def log_sqrt_det_gradient(field, x, h=1e-5):
    """d_k log sqrt(det g), numerically."""
    return _central(lambda y: 0.5 * np.log(metric_at(field, y).det_g), x, h)
