"""Desk-scale experiments: weight perturbations, OU escape, minibatch curvature, saddle grid."""

from dataclasses import dataclass, field as dc_field
import math

import numpy as np

from .errors import EvaluationFailure, IntegrationUnstable, InvalidInput
from .fields import make_saddle_field
from .geometry import scalar_curvature, scalar_curvature_at_min
from .linalg import as_sym, eig_sym, sqrt_psd


def _stream(seed):
    return np.random.Generator(np.random.Philox(key=int(seed) % 2**64))


def _asdict(obj, skip=()):
    out = {}
    for k in obj.__dataclass_fields__:
        if k in skip:
            continue
        v = getattr(obj, k)
        out[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return out


# --- weight perturbations --------------------------------------------------------

@dataclass
class PerturbationReport:
    mode: str
    epsilon: float
    sigma: float
    n_directions: int
    seed: int
    grad_norm: float
    trace_h2: float
    bound: float  # epsilon^4 / 4 * tr(H^2)
    slack: float
    deltas: np.ndarray = dc_field(repr=False)
    perturbation_norms: np.ndarray = dc_field(repr=False)
    violations: int = 0
    failures: int = 0
    max_ratio: float = 0.0  # max delta / per-sample bound
    mean_delta: float = 0.0

    def as_dict(self):
        return _asdict(self, skip=("deltas", "perturbation_norms"))


def unit_directions(n, q, seed):
    """Uniform directions on the unit sphere (normalised Gaussians)."""
    w = _stream(seed).standard_normal((n, q))
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def perturbation_sweep(field, x_min, epsilon=0.01, n_directions=1000, mode="unit-sphere",
                       sigma=0.1, seed=0, trace_h2=None, slack=None):
    """Squared loss changes under weight perturbations around ``x_min``.

    ``mode="unit-sphere"`` moves by ``epsilon * d`` with ``d`` uniform on the
    unit sphere; ``mode="gaussian"`` adds pointwise ``N(0, sigma^2)`` noise.
    Each squared delta is compared with ``|delta_x|^4 / 4 * tr(H^2)`` times
    ``1 + slack`` (default slack ``10 * |delta_x|``).  Points where the field
    cannot be evaluated are counted in ``failures`` and dropped.
    """
    x_min = np.asarray(x_min, dtype=float)
    q = x_min.size
    if mode not in ("unit-sphere", "gaussian"):
        raise InvalidInput(f"unknown perturbation mode {mode!r}")
    if mode == "unit-sphere" and not epsilon > 0:
        raise InvalidInput("epsilon must be positive")
    if mode == "gaussian" and not sigma > 0:
        raise InvalidInput("sigma must be positive")
    if trace_h2 is None:
        h = as_sym(field.hessian(x_min), "Hessian")
        trace_h2 = float(np.sum(h * h))

    if mode == "unit-sphere":
        steps = epsilon * unit_directions(n_directions, q, seed)
    else:
        steps = sigma * _stream(seed).standard_normal((n_directions, q))
    norms = np.linalg.norm(steps, axis=1)

    f0 = field.value(x_min)
    deltas = np.full(n_directions, np.nan)
    for i, step in enumerate(steps):
        try:
            deltas[i] = (field.value(x_min + step) - f0) ** 2
        except EvaluationFailure:
            pass
    try:
        grad_norm = float(np.linalg.norm(field.gradient(x_min)))
    except EvaluationFailure:
        grad_norm = math.nan
    ok = np.isfinite(deltas)
    per_bound = 0.25 * norms**4 * trace_h2
    slack_arr = 10.0 * norms if slack is None else np.full(n_directions, float(slack))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(per_bound > 0, deltas / per_bound, np.where(deltas > 0, np.inf, 0.0))
    violations = int(np.sum(ok & (deltas > per_bound * (1.0 + slack_arr))))
    eps_nominal = float(epsilon) if mode == "unit-sphere" else float(sigma)
    return PerturbationReport(
        mode=mode, epsilon=eps_nominal, sigma=float(sigma), n_directions=int(n_directions),
        seed=int(seed), grad_norm=grad_norm,
        trace_h2=float(trace_h2), bound=0.25 * eps_nominal**4 * float(trace_h2),
        slack=float(10.0 * eps_nominal if slack is None else slack),
        deltas=deltas[ok], perturbation_norms=norms[ok], violations=violations,
        failures=int(np.sum(~ok)),
        max_ratio=float(np.max(ratios[ok])) if np.any(ok) else math.nan,
        mean_delta=float(np.mean(deltas[ok])) if np.any(ok) else math.nan,
    )


# --- Ornstein-Uhlenbeck escape ---------------------------------------------------

@dataclass
class EscapeReport:
    t: float
    dt: float
    n_paths: int
    seed: int
    empirical_escape: float
    std_error: float
    predicted: float  # t / 2 * tr(H^2)
    exact: float  # exact OU expectation of the quadratic loss
    rel_error: float  # |empirical - predicted| / predicted
    sqrt_clamped: bool
    escapes: np.ndarray = dc_field(repr=False, default=None)

    def as_dict(self):
        return _asdict(self, skip=("escapes",))


def ou_exact_escape(h, t):
    """E[x_t^T H x_t / 2] for dx = -H x dt + H^(1/2) dW, x_0 = 0.

    The covariance is ``int_0^t exp(-Hs) H exp(-Hs) ds``, diagonal in the
    eigenbasis of H with entries ``(1 - exp(-2 lambda t)) / 2``.
    """
    evals = np.clip(eig_sym(h).eigenvalues, 0.0, None)
    var = np.where(evals > 0, -np.expm1(-2.0 * evals * t) / 2.0, 0.0)
    return float(0.5 * np.sum(evals * var))


def ou_escape(h, t, dt, n_paths=100_000, seed=0, keep_paths=False):
    """Euler-Maruyama simulation of the OU surrogate of SGD near a minimum.

    Simulates ``dx = -H x dt + H^(1/2) dW`` from the minimum and measures
    the mean rise of the quadratic loss ``x^T H x / 2`` at time ``t``.
    """
    h = as_sym(h, "Hessian")
    root = sqrt_psd(h)
    lam_max = float(eig_sym(h).eigenvalues[-1])
    if t < 0 or dt <= 0:
        raise InvalidInput("need t >= 0 and dt > 0")
    if lam_max > 0 and dt > 0.1 / lam_max * (1 + 1e-12):
        raise InvalidInput(f"dt={dt} exceeds the stability limit 0.1/lambda_max={0.1 / lam_max:.3g}")
    n_steps = int(round(t / dt))
    if abs(n_steps * dt - t) > 1e-9 * max(t, dt):
        raise InvalidInput("t must be a multiple of dt")

    q = h.shape[0]
    rng = _stream(seed)
    x = np.zeros((n_paths, q))
    sq_dt = math.sqrt(dt)
    limit = 1e6 * (1.0 + math.sqrt(max(t, 0.0) * q))
    for k in range(n_steps):
        noise = rng.standard_normal((n_paths, q))
        x = x - dt * (x @ h) + sq_dt * (noise @ root.root)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > limit:
            raise IntegrationUnstable(f"OU paths diverged at step {k + 1}")
    escapes = 0.5 * np.einsum("ni,ij,nj->n", x, h, x)
    empirical = float(np.mean(escapes))
    se = float(np.std(escapes, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else math.inf
    predicted = 0.5 * t * float(np.sum(h * h))
    rel = abs(empirical - predicted) / predicted if predicted > 0 else abs(empirical)
    return EscapeReport(
        t=float(t), dt=float(dt), n_paths=int(n_paths), seed=int(seed),
        empirical_escape=empirical, std_error=se, predicted=predicted,
        exact=ou_exact_escape(h, t), rel_error=float(rel), sqrt_clamped=root.clamped,
        escapes=escapes if keep_paths else None,
    )


# --- minibatches -------------------------------------------------------------------

@dataclass
class MinibatchReport:
    k: int
    per_batch_traces: list
    per_batch_sc: list
    full_trace: float
    full_sc: float
    mean_batch_sc: float
    trace_gap: float
    sc_gap: float
    full_hessian: np.ndarray = dc_field(repr=False)

    def as_dict(self):
        return _asdict(self, skip=("full_hessian",))


def minibatch_analysis(per_batch_hessians):
    """Trace is linear over minibatches; critical-point curvature is not."""
    hs = [as_sym(h, "batch Hessian") for h in per_batch_hessians]
    if len(hs) < 2:
        raise InvalidInput("need at least two minibatches")
    if len({h.shape for h in hs}) != 1:
        raise InvalidInput("batch Hessians have different dimensions")
    full = np.mean(hs, axis=0)
    traces = [float(np.trace(h)) for h in hs]
    scs = [scalar_curvature_at_min(h) for h in hs]
    full_trace = float(np.trace(full))
    full_sc = scalar_curvature_at_min(full)
    mean_sc = float(np.mean(scs))
    return MinibatchReport(
        k=len(hs), per_batch_traces=traces, per_batch_sc=scs, full_trace=full_trace,
        full_sc=full_sc, mean_batch_sc=mean_sc,
        trace_gap=abs(full_trace - float(np.mean(traces))), sc_gap=abs(full_sc - mean_sc),
        full_hessian=full,
    )


# --- saddle grid ---------------------------------------------------------------------

@dataclass
class SaddleGrid:
    c: float
    u: np.ndarray
    v: np.ndarray
    f: np.ndarray
    trace: np.ndarray
    sc: np.ndarray

    def columns(self):
        return {"u": self.u, "v": self.v, "f": self.f, "trace": self.trace, "sc": self.sc}


def saddle_grid(c=0.1, u_range=(0.0, 6.0), v_range=(0.0, 2 * math.pi), resolution=121):
    """Value, Hessian trace and scalar curvature of the saddle field on a grid (u-major rows)."""
    nu, nv = (resolution, resolution) if np.isscalar(resolution) else resolution
    if nu < 2 or nv < 2:
        raise InvalidInput("resolution must be at least 2 per axis")
    field = make_saddle_field(c)
    uu, vv = np.meshgrid(np.linspace(*u_range, int(nu)), np.linspace(*v_range, int(nv)),
                         indexing="ij")
    pts = np.stack([uu.ravel(), vv.ravel()], axis=1)
    grad = field.gradient(pts)
    hess = field.hessian(pts)
    return SaddleGrid(
        c=float(c), u=pts[:, 0], v=pts[:, 1], f=field.value(pts),
        trace=np.trace(hess, axis1=1, axis2=2), sc=scalar_curvature(grad, hess),
    )
