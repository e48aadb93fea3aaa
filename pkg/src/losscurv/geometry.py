"""Intrinsic geometry of the graph of a loss function.

The graph ``{(x, f(x))}`` carries the pulled-back metric ``g = I + df df^T``.
Every curvature quantity here is a closed form in the gradient ``p`` and the
Hessian ``H`` of ``f`` with ``beta = 1 / (1 + |p|^2)``.  Index conventions:

* ``christoffel[i, k, l]`` is Gamma^i_{kl}
* ``riemann[i, j, k, m]`` is R^i_{jkm}, antisymmetric in ``(k, m)``;
  Ricci is the contraction ``R_jm = R^i_{jim}``.
"""

from dataclasses import dataclass, field as dc_field
import math
from typing import NamedTuple, Optional
import warnings

import numpy as np

from .errors import EvaluationFailure, ExpansionFitWarning, GeodesicFailure, InvalidInput
from .linalg import as_sym, eig_sym, psd_tolerance


@dataclass(frozen=True)
class MetricAtPoint:
    g: np.ndarray
    g_inv: np.ndarray
    beta: float
    det_g: float
    grad: np.ndarray


@dataclass(frozen=True)
class CurvatureReport:
    point: np.ndarray
    value: float
    beta: float
    grad_norm: float
    trace_h: float
    trace_h2: float
    nuclear_h: float
    frobenius_h: float
    scalar_curvature: float
    at_critical_point: bool
    hessian_psd: bool

    def as_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["point"] = [float(v) for v in self.point]
        return out


class NormIdentityCheck(NamedTuple):
    sc: float
    norm_form: Optional[float]  # nuclear^2 - frobenius^2, only for PSD input
    applicable: bool


def grad_tolerance(value):
    return 1e-8 * (1.0 + abs(value))


# --- closed forms on raw derivatives (batched over leading axes) -----------

def metric_from_gradient(p):
    p = np.asarray(p, dtype=float)
    q = p.shape[-1]
    sq = np.sum(p * p, axis=-1)
    beta = 1.0 / (1.0 + sq)
    outer = p[..., :, None] * p[..., None, :]
    g = np.eye(q) + outer
    g_inv = np.eye(q) - beta[..., None, None] * outer
    return g, g_inv, beta, 1.0 + sq


def scalar_curvature(p, h):
    """Sc = beta (tr(H)^2 - tr(H^2)) + 2 beta^2 p^T (H^2 - tr(H) H) p."""
    p = np.asarray(p, dtype=float)
    h = np.asarray(h, dtype=float)
    beta = 1.0 / (1.0 + np.sum(p * p, axis=-1))
    tr = np.trace(h, axis1=-2, axis2=-1)
    tr2 = np.sum(h * h, axis=(-2, -1))
    hp = np.einsum("...ij,...j->...i", h, p)
    php = np.sum(p * hp, axis=-1)
    h2p = np.sum(hp * hp, axis=-1)
    return beta * (tr * tr - tr2) + 2.0 * beta**2 * (h2p - tr * php)


def christoffel_from_derivatives(p, h):
    beta = 1.0 / (1.0 + p @ p)
    return beta * np.einsum("i,kl->ikl", p, h)


def riemann_from_derivatives(p, h):
    beta = 1.0 / (1.0 + p @ p)
    hp = h @ p
    gauss = np.einsum("ik,jm->ijkm", h, h) - np.einsum("im,jk->ijkm", h, h)
    tail = np.einsum("i,k,jm->ijkm", p, hp, h) - np.einsum("i,m,jk->ijkm", p, hp, h)
    return beta * gauss - beta**2 * tail


def ricci_from_derivatives(p, h):
    beta = 1.0 / (1.0 + p @ p)
    hp = h @ p
    ric = beta * (np.trace(h) * h - h @ h) - beta**2 * ((p @ hp) * h - np.outer(hp, hp))
    return 0.5 * (ric + ric.T)


# --- point-wise API over fields ---------------------------------------------

def _derivatives(field, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (field.dim,):
        raise InvalidInput(f"point must have shape ({field.dim},), got {x.shape}")
    p = field.gradient(x)
    h = as_sym(field.hessian(x), "Hessian")
    return x, p, h


def metric_at(field, x):
    x = np.asarray(x, dtype=float)
    p = field.gradient(x)
    if not np.all(np.isfinite(p)):
        raise EvaluationFailure("non-finite gradient")
    g, g_inv, beta, det_g = metric_from_gradient(p)
    return MetricAtPoint(g=g, g_inv=g_inv, beta=float(beta), det_g=float(det_g), grad=p)


def christoffel_at(field, x):
    _, p, h = _derivatives(field, x)
    return christoffel_from_derivatives(p, h)


def christoffel_contraction(field, x):
    """Gamma^i_{ki} for each k, i.e. beta (H grad f)_k = d_k log sqrt(det g)."""
    _, p, h = _derivatives(field, x)
    return (h @ p) / (1.0 + p @ p)


def riemann_at(field, x):
    _, p, h = _derivatives(field, x)
    return riemann_from_derivatives(p, h)


def lower_riemann(riemann, g):
    """R_{ijkm} = g_{ia} R^a_{jkm}."""
    return np.einsum("ia,ajkm->ijkm", g, riemann)


def ricci_at(field, x):
    _, p, h = _derivatives(field, x)
    return ricci_from_derivatives(p, h)


def scalar_curvature_at(field, x):
    x, p, h = _derivatives(field, x)
    value = field.value(x)
    evals = eig_sym(h).eigenvalues
    grad_norm = float(np.linalg.norm(p))
    return CurvatureReport(
        point=x,
        value=float(value),
        beta=float(1.0 / (1.0 + p @ p)),
        grad_norm=grad_norm,
        trace_h=float(np.trace(h)),
        trace_h2=float(np.sum(h * h)),
        nuclear_h=float(np.sum(np.abs(evals))),
        frobenius_h=float(np.sqrt(np.sum(h * h))),
        scalar_curvature=float(scalar_curvature(p, h)),
        at_critical_point=grad_norm <= grad_tolerance(value),
        hessian_psd=bool(evals[0] >= -psd_tolerance(h)),
    )


def scalar_curvature_at_min(h):
    """tr(H)^2 - tr(H^2): the scalar curvature where the gradient vanishes."""
    h = as_sym(h, "Hessian")
    tr = float(np.trace(h))
    return tr * tr - float(np.sum(h * h))


def norm_identity(h):
    """Critical-point curvature with its nuclear/Frobenius form when that form is valid.

    ``|H|_*^2 - |H|_F^2`` only coincides with ``tr(H)^2 - tr(H^2)`` when H
    is positive semidefinite; for indefinite H ``norm_form`` is ``None``.
    """
    h = as_sym(h, "Hessian")
    sc = scalar_curvature_at_min(h)
    evals = eig_sym(h).eigenvalues
    if evals[0] < -psd_tolerance(h):
        return NormIdentityCheck(sc, None, False)
    nuclear = float(np.sum(np.abs(evals)))
    return NormIdentityCheck(sc, nuclear * nuclear - float(np.sum(h * h)), True)


def reparam_hessian(jac_phi, hess_phi_components, grad_f, hess_f):
    """Hessian of f o phi: J^T H(f) J + sum_k (df)_k H(phi^k)."""
    jac = np.asarray(jac_phi, dtype=float)
    hess_f = as_sym(hess_f, "hess_f")
    grad_f = np.asarray(grad_f, dtype=float)
    q_out = hess_f.shape[0]
    if jac.ndim != 2 or jac.shape[0] != q_out or grad_f.shape != (q_out,):
        raise InvalidInput("jacobian, gradient and Hessian dimensions disagree")
    comps = [np.asarray(c, dtype=float) for c in hess_phi_components]
    q_in = jac.shape[1]
    if len(comps) != q_out or any(c.shape != (q_in, q_in) for c in comps):
        raise InvalidInput("need one (q_in, q_in) Hessian per output coordinate of phi")
    out = jac.T @ hess_f @ jac
    for gk, hk in zip(grad_f, comps):
        out = out + gk * hk
    return 0.5 * (out + out.T)


# --- geodesics ----------------------------------------------------------------

STEPS_PER_UNIT = 512
RENORM_EVERY = 32


def _geodesic_acceleration(field, xs, vs):
    # Gamma^i_{kl} v^k v^l = beta f_i (v^T H v)
    p = field.gradient(xs)
    h = field.hessian(xs)
    beta = 1.0 / (1.0 + np.sum(p * p, axis=-1))
    vhv = np.einsum("...i,...ij,...j->...", vs, h, vs)
    return -(beta * vhv)[..., None] * p


def _g_speed_sq(field, xs, vs):
    p = field.gradient(xs)
    return np.sum(vs * vs, axis=-1) + np.sum(p * vs, axis=-1) ** 2


def n_geodesic_steps(r):
    return STEPS_PER_UNIT * max(1, math.ceil(r))


def integrate_geodesics(field, x0, v0, t_final, n_steps=None, renorm_every=RENORM_EVERY,
                        on_node=None):
    """Classical RK4 integration of a batch of geodesics.

    ``x0`` and ``v0`` have shape ``(n, q)``.  The g-norm of every velocity is
    reset to its initial value every ``renorm_every`` steps.  ``on_node(k, t,
    xs, vs)`` is called at every node ``k = 0..n_steps``.
    """
    xs = np.array(x0, dtype=float)
    vs = np.array(v0, dtype=float)
    n_steps = n_geodesic_steps(t_final) if n_steps is None else int(n_steps)
    dt = t_final / n_steps
    if t_final > 0 and (dt <= 0 or not np.isfinite(dt) or t_final + dt == t_final):
        raise GeodesicFailure("integration step underflow")

    def accel(x, v):
        try:
            a = _geodesic_acceleration(field, x, v)
        except EvaluationFailure as exc:
            raise GeodesicFailure(f"field evaluation failed along geodesic: {exc}") from exc
        return a

    try:
        speed0 = _g_speed_sq(field, xs, vs)
    except EvaluationFailure as exc:
        raise GeodesicFailure(str(exc)) from exc
    if on_node is not None:
        on_node(0, 0.0, xs, vs)
    for k in range(1, n_steps + 1):
        a1 = accel(xs, vs)
        x2, v2 = xs + 0.5 * dt * vs, vs + 0.5 * dt * a1
        a2 = accel(x2, v2)
        x3, v3 = xs + 0.5 * dt * v2, vs + 0.5 * dt * a2
        a3 = accel(x3, v3)
        x4, v4 = xs + dt * v3, vs + dt * a3
        a4 = accel(x4, v4)
        xs = xs + dt / 6.0 * (vs + 2.0 * v2 + 2.0 * v3 + v4)
        vs = vs + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(vs))):
            raise GeodesicFailure(f"geodesic state became non-finite at step {k}")
        if renorm_every and k % renorm_every == 0:
            speed = _g_speed_sq(field, xs, vs)
            scale = np.sqrt(np.where(speed > 0, speed0 / np.where(speed > 0, speed, 1.0), 1.0))
            vs = vs * scale[..., None]
        if on_node is not None:
            on_node(k, k * dt, xs, vs)
    return xs, vs


def exp_map(field, x, v, r, n_steps=None):
    """Follow the geodesic from ``x`` with unit g-norm velocity ``v`` for arc length ``r``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if r < 0:
        raise InvalidInput("arc length must be non-negative")
    speed = float(_g_speed_sq(field, x, v))
    if abs(speed - 1.0) > 1e-8:
        raise InvalidInput(f"initial velocity must have unit g-norm (got {math.sqrt(speed):.6g})")
    if r == 0:
        return x.copy()
    xs, _ = integrate_geodesics(field, x[None], v[None], r, n_steps=n_steps)
    return xs[0]


def unit_g_direction(field, x, w):
    """Map a Euclidean unit vector to a unit g-norm tangent vector at x."""
    return np.asarray(w, dtype=float) @ inverse_sqrt_metric(field.gradient(np.asarray(x, float)))


def inverse_sqrt_metric(p):
    """g^{-1/2} for g = I + p p^T, in closed form."""
    p = np.asarray(p, dtype=float)
    sq = p @ p
    if sq == 0.0:
        return np.eye(p.size)
    factor = 1.0 / math.sqrt(1.0 + sq) - 1.0
    return np.eye(p.size) + factor * np.outer(p, p) / sq


# --- geodesic balls -------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """Direction sampling for geodesic-ball volumes.

    q = 2 uses ``n_directions`` equally spaced angles (default 256); q >= 3
    draws ``n_directions`` seeded uniform directions (default 4096).
    """
    n_directions: Optional[int] = None
    seed: int = 0
    steps_per_unit: int = STEPS_PER_UNIT
    fd_step: float = 1e-5
    renorm_every: int = RENORM_EVERY

    def directions(self, q):
        if q == 1:
            return np.array([[1.0], [-1.0]]), False
        if q == 2:
            n = self.n_directions or 256
            theta = 2.0 * np.pi * np.arange(n) / n
            return np.stack([np.cos(theta), np.sin(theta)], axis=1), False
        n = self.n_directions or 4096
        rng = np.random.Generator(np.random.Philox(key=self.seed))
        w = rng.standard_normal((n, q))
        return w / np.linalg.norm(w, axis=1, keepdims=True), True


class BallVolume(NamedTuple):
    volume: float
    euclidean_volume: float
    ratio: float
    std_error: float  # of the ratio; zero for deterministic quadrature


def _sphere_area(q):
    return 2.0 * math.pi ** (q / 2) / math.gamma(q / 2)


def _complement_bases(dirs):
    """Orthonormal bases of the complements of unit vectors, shape (n, q-1, q)."""
    n, q = dirs.shape
    if q == 1:
        return np.zeros((n, 0, 1))
    # Householder reflection sending e_0 to each direction; its other columns span the complement
    e0 = np.zeros(q)
    e0[0] = 1.0
    u = e0 - dirs
    norm = np.linalg.norm(u, axis=1, keepdims=True)
    near = norm[:, 0] < 1e-12
    u = np.where(near[:, None], 0.0, u / np.where(norm > 0, norm, 1.0))
    refl = np.eye(q) - 2.0 * u[:, :, None] * u[:, None, :]
    return np.transpose(refl, (0, 2, 1))[:, 1:, :]


def geodesic_ball_volume(field, x, r, quadrature=None):
    """Riemannian volume of the geodesic ball of radius ``r`` about ``x``.

    Works in geodesic polar coordinates: for each unit direction the
    exponential-map Jacobian is assembled from the geodesic velocity (radial
    column) and forward differences of neighbouring geodesics (angular
    columns), weighted by ``sqrt(det g)`` and integrated radially with
    Simpson's rule.
    """
    quadrature = quadrature or QuadratureSpec()
    x = np.asarray(x, dtype=float)
    q = field.dim
    if r <= 0:
        raise InvalidInput("radius must be positive")
    dirs, random_dirs = quadrature.directions(q)
    n_dirs = dirs.shape[0]
    comp = _complement_bases(dirs)
    h = quadrature.fd_step
    root = inverse_sqrt_metric(field.gradient(x))

    # trajectory 0 is the base direction, trajectories 1..q-1 are perturbed
    w0 = np.concatenate([dirs[:, None, :], dirs[:, None, :] + h * comp], axis=1)
    v0 = (w0 @ root).reshape(-1, q)
    x0 = np.broadcast_to(x, v0.shape)
    n_steps = quadrature.steps_per_unit * max(1, math.ceil(r))
    n_steps += n_steps % 2
    dt = r / n_steps
    acc = np.zeros(n_dirs)

    def on_node(k, t, xs, vs):
        pos = xs.reshape(n_dirs, q, q)
        if k == 0:
            density = np.ones(n_dirs)
        else:
            radial = vs.reshape(n_dirs, q, q)[:, 0, :]
            angular = (pos[:, 1:, :] - pos[:, :1, :]) / (t * h)
            jac = np.concatenate([radial[:, None, :], angular], axis=1)
            p = field.gradient(pos[:, 0, :])
            density = np.abs(np.linalg.det(jac)) * np.sqrt(1.0 + np.sum(p * p, axis=1))
        weight = 1.0 if k in (0, n_steps) else (4.0 if k % 2 else 2.0)
        acc[:] += weight * t ** (q - 1) * density

    integrate_geodesics(field, x0, v0, r, n_steps=n_steps,
                        renorm_every=quadrature.renorm_every, on_node=on_node)
    radial_integrals = acc * dt / 3.0
    per_dir_ratio = radial_integrals * q / r**q
    ratio = float(np.mean(per_dir_ratio))
    std_error = float(np.std(per_dir_ratio, ddof=1) / math.sqrt(n_dirs)) if random_dirs else 0.0
    euclid = _sphere_area(q) * r**q / q
    return BallVolume(ratio * euclid, euclid, ratio, std_error)


@dataclass
class VolumeDeficitFit:
    sc_estimate: float
    k: float
    quartic: float
    fit: str
    radii: list
    ratios: list
    std_errors: list
    rms_residual: float
    warning: bool = False
    message: str = dc_field(default="")

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def volume_deficit_coefficient(field, x, radii, quadrature=None, fit="quartic",
                               residual_tol=0.1):
    """Fit the small-ball volume ratio and return ``Sc ~ 6 (q + 2) k``.

    ``fit="quadratic"`` fits ``vol_g / vol_e = 1 - k r^2``; the default
    ``fit="quartic"`` adds a nuisance ``r^4`` term so the next even order of
    the expansion does not leak into ``k`` at radii of a few tenths.  A
    warning is attached (and emitted) when the RMS residual exceeds
    ``residual_tol`` times the largest fitted deficit.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size < 3 or np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise InvalidInput("need at least three positive ascending radii")
    if fit not in ("quadratic", "quartic"):
        raise InvalidInput(f"unknown fit {fit!r}")
    balls = [geodesic_ball_volume(field, x, r, quadrature) for r in radii]
    ratios = np.array([b.ratio for b in balls])
    deficit = 1.0 - ratios
    r2 = radii**2
    design = r2[:, None] if fit == "quadratic" else np.stack([r2, -r2**2], axis=1)
    coef = np.linalg.lstsq(design, deficit, rcond=None)[0]
    k = float(coef[0])
    quartic = float(coef[1]) if fit == "quartic" else 0.0
    model = design @ coef
    rms = float(np.sqrt(np.mean((deficit - model) ** 2)))
    scale = float(np.max(np.abs(model)))
    warn = rms > residual_tol * scale + 1e-8
    msg = ""
    if warn:
        msg = f"volume-ratio fit residual {rms:.3g} is large relative to deficit {scale:.3g}"
        warnings.warn(msg, ExpansionFitWarning, stacklevel=2)
    return VolumeDeficitFit(
        sc_estimate=6.0 * (field.dim + 2) * k, k=k, quartic=quartic, fit=fit,
        radii=radii.tolist(), ratios=ratios.tolist(),
        std_errors=[b.std_error for b in balls], rms_residual=rms, warning=warn, message=msg,
    )
