"""Scalar fields over parameter space and finite-difference validators.

A :class:`ScalarField` bundles whatever exact derivatives are known for a
function ``f: R^q -> R`` and falls back to finite differences for the rest.
Built-in analytic fields accept batched input of shape ``(..., q)``, which
the geodesic integrator relies on to advance many directions at once.
"""

import numpy as np

from .errors import EvaluationFailure, InvalidInput
from .linalg import as_sym

EPS = np.finfo(float).eps
GRAD_STEP = EPS ** (1 / 3)
HESS_STEP = EPS ** (1 / 4)


def _finite(arr, what):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationFailure(f"non-finite {what}")
    return arr


class ScalarField:
    """A differentiable function with optional exact derivative evaluators.

    ``value``, ``gradient``, ``hessian`` and ``hvp`` are callables; any of
    the derivative ones may be ``None``, in which case a finite-difference
    fallback is used.  When ``batched`` is true the callables broadcast over
    leading axes of ``x``.
    """

    def __init__(self, dim, value, gradient=None, hessian=None, hvp=None,
                 name="field", batched=False, smooth=True, params=None):
        if int(dim) < 1:
            raise InvalidInput("field dimension must be >= 1")
        self.dim = int(dim)
        self.name = name
        self.batched = batched
        self.smooth = smooth
        self.params = dict(params or {})
        self._value = value
        self._gradient = gradient
        self._hessian = hessian
        self._hvp = hvp

    def __repr__(self):
        return f"ScalarField({self.name!r}, dim={self.dim})"

    @property
    def exact_grad(self):
        return self._gradient is not None

    @property
    def exact_hess(self):
        return self._hessian is not None

    @property
    def exact_hvp(self):
        return self._hvp is not None or self._hessian is not None

    def _point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise InvalidInput(f"expected points with last axis {self.dim}, got shape {x.shape}")
        return x

    def value(self, x):
        x = self._point(x)
        if x.ndim > 1 and not self.batched:
            return np.array([self.value(row) for row in x.reshape(-1, self.dim)]).reshape(x.shape[:-1])
        out = _finite(self._value(x), "value")
        return float(out) if out.ndim == 0 else out

    def gradient(self, x):
        x = self._point(x)
        if x.ndim > 1 and not self.batched:
            rows = [self.gradient(row) for row in x.reshape(-1, self.dim)]
            return np.array(rows).reshape(x.shape)
        if self._gradient is None:
            return finite_diff_gradient(self, x)
        return _finite(self._gradient(x), "gradient")

    def hessian(self, x):
        x = self._point(x)
        if x.ndim > 1 and not self.batched:
            rows = [self.hessian(row) for row in x.reshape(-1, self.dim)]
            return np.array(rows).reshape(x.shape + (self.dim,))
        if self._hessian is not None:
            return _finite(self._hessian(x), "Hessian")
        if self._gradient is not None:
            return hessian_from_gradient(self, x)
        return finite_diff_hessian(self, x)

    def hvp(self, x, v):
        """Hessian-vector product; ``v`` may be a stack of vectors ``(n, q)``."""
        x = self._point(x)
        v = np.asarray(v, dtype=float)
        if v.shape[-1:] != (self.dim,):
            raise InvalidInput("vector dimension mismatch")
        if self._hvp is not None:
            return _finite(self._hvp(x, v), "HVP")
        if self._hessian is not None:
            return v @ self.hessian(x)
        if v.ndim > 1:
            return np.array([self.hvp(x, row) for row in v.reshape(-1, self.dim)]).reshape(v.shape)
        return _hvp_by_gradient_difference(self, x, v)


def _hvp_by_gradient_difference(field, x, v):
    vnorm = np.linalg.norm(v)
    if vnorm == 0.0:
        return np.zeros_like(v)
    h = 1e-5 * (1.0 + np.linalg.norm(x)) / (vnorm + 1e-300)
    return (field.gradient(x + h * v) - field.gradient(x - h * v)) / (2.0 * h)


def _steps(x, h, base):
    if h is None:
        return base * np.maximum(1.0, np.abs(x))
    if h <= 0:
        raise InvalidInput("finite-difference step must be positive")
    return np.full(x.shape, float(h))


def finite_diff_gradient(field, x, h=None):
    """Central-difference gradient using only ``field.value``.

    With ``h=None`` each coordinate uses ``eps**(1/3) * max(1, |x_i|)``.
    """
    x = np.asarray(x, dtype=float)
    steps = _steps(x, h, GRAD_STEP)
    grad = np.empty(x.shape)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = steps[i]
        grad[i] = (field.value(x + e) - field.value(x - e)) / (2.0 * steps[i])
    return _finite(grad, "finite-difference gradient")


def finite_diff_hessian(field, x, h=None):
    """Symmetrised central second differences of ``field.value``."""
    x = np.asarray(x, dtype=float)
    q = x.size
    steps = _steps(x, h, HESS_STEP)
    f0 = field.value(x)
    hess = np.empty((q, q))
    for i in range(q):
        ei = np.zeros(q)
        ei[i] = steps[i]
        hess[i, i] = (field.value(x + ei) - 2.0 * f0 + field.value(x - ei)) / steps[i] ** 2
        for j in range(i + 1, q):
            ej = np.zeros(q)
            ej[j] = steps[j]
            val = (field.value(x + ei + ej) - field.value(x + ei - ej)
                   - field.value(x - ei + ej) + field.value(x - ei - ej)) / (4.0 * steps[i] * steps[j])
            hess[i, j] = hess[j, i] = val
    return _finite(hess, "finite-difference Hessian")


def hessian_from_gradient(field, x, h=None):
    """Hessian columns by central differences of an exact gradient, then symmetrised."""
    x = np.asarray(x, dtype=float)
    q = x.size
    steps = _steps(x, h, GRAD_STEP)
    cols = np.empty((q, q))
    for i in range(q):
        e = np.zeros(q)
        e[i] = steps[i]
        cols[i] = (field.gradient(x + e) - field.gradient(x - e)) / (2.0 * steps[i])
    return _finite(0.5 * (cols + cols.T), "Hessian")


# --- built-in fields -------------------------------------------------------

def make_quadratic_field(a, center=None):
    """f(x) = 1/2 (x - center)^T a (x - center)."""
    a = as_sym(a, "quadratic matrix")
    q = a.shape[0]
    center = np.zeros(q) if center is None else np.asarray(center, dtype=float)
    if center.shape != (q,):
        raise InvalidInput(f"center has shape {center.shape}, expected ({q},)")

    def value(x):
        d = x - center
        return 0.5 * np.einsum("...i,ij,...j->...", d, a, d)

    def gradient(x):
        return (x - center) @ a

    def hessian(x):
        return np.broadcast_to(a, x.shape[:-1] + (q, q)).copy()

    return ScalarField(q, value, gradient, hessian, hvp=lambda x, v: v @ a,
                       name="quadratic", batched=True,
                       params={"a": a.tolist(), "center": center.tolist()})


def make_paraboloid_field(q=2):
    """The rotation paraboloid f = |x|^2 / 2."""
    field = make_quadratic_field(np.eye(q))
    field.name = "paraboloid"
    return field


def make_flat_field(q=2, level=0.0):
    def value(x):
        return np.full(x.shape[:-1], float(level))

    return ScalarField(q, value,
                       gradient=lambda x: np.zeros(x.shape),
                       hessian=lambda x: np.zeros(x.shape[:-1] + (q, q)),
                       name="flat", batched=True, params={"level": level})


def make_linear_field(b):
    b = np.asarray(b, dtype=float)
    q = b.size
    return ScalarField(q, lambda x: x @ b,
                       gradient=lambda x: np.broadcast_to(b, x.shape).copy(),
                       hessian=lambda x: np.zeros(x.shape[:-1] + (q, q)),
                       name="linear", batched=True, params={"b": b.tolist()})


def make_saddle_field(c=0.1):
    """f(u, v) = exp(-c u) sin(u) sin(v), a decaying egg-crate of saddles."""
    if not c > 0:
        raise InvalidInput("decay constant c must be positive")

    def value(x):
        u, v = x[..., 0], x[..., 1]
        return np.exp(-c * u) * np.sin(u) * np.sin(v)

    def gradient(x):
        u, v = x[..., 0], x[..., 1]
        e = np.exp(-c * u)
        fu = e * (np.cos(u) - c * np.sin(u)) * np.sin(v)
        fv = e * np.sin(u) * np.cos(v)
        return np.stack([fu, fv], axis=-1)

    def hessian(x):
        u, v = x[..., 0], x[..., 1]
        fuu, fuv, fvv = _saddle_second_derivatives(u, v, c)
        return np.stack([np.stack([fuu, fuv], -1), np.stack([fuv, fvv], -1)], -2)

    return ScalarField(2, value, gradient, hessian, name="saddle", batched=True,
                       params={"c": float(c)})


def _saddle_second_derivatives(u, v, c):
    e = np.exp(-c * u)
    fuu = e * ((c * c - 1.0) * np.sin(u) - 2.0 * c * np.cos(u)) * np.sin(v)
    fuv = e * (np.cos(u) - c * np.sin(u)) * np.cos(v)
    fvv = -e * np.sin(u) * np.sin(v)
    return fuu, fuv, fvv


def saddle_analytics(u, v, c):
    """Closed-form Hessian trace and scalar curvature of the saddle field.

    For a two-dimensional graph the scalar curvature is twice the Gauss
    curvature, ``2 det(H) / (1 + |grad f|^2)^2``.  Inputs broadcast.
    """
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    e = np.exp(-c * u)
    trace = e * ((c * c - 2.0) * np.sin(u) - 2.0 * c * np.cos(u)) * np.sin(v)
    fuu, fuv, fvv = _saddle_second_derivatives(u, v, c)
    fu = e * (np.cos(u) - c * np.sin(u)) * np.sin(v)
    fv = e * np.sin(u) * np.cos(v)
    sc = 2.0 * (fuu * fvv - fuv * fuv) / (1.0 + fu * fu + fv * fv) ** 2
    if trace.ndim == 0:
        return float(trace), float(sc)
    return trace, sc


def make_random_smooth_field(q, seed, n_terms=3, quad_scale=1.0, wave_scale=1.0):
    """Random test field: a random quadratic plus a few plane-wave sines.

    ``f(x) = 1/2 x^T A x + sum_k a_k sin(w_k . x + b_k)`` with exact
    gradient and Hessian; used as a generic sample for invariant checks.
    """
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(q, q))
    a_mat = quad_scale * 0.5 * (m + m.T)
    amps = wave_scale * rng.normal(size=n_terms)
    freqs = rng.normal(size=(n_terms, q))
    phases = rng.uniform(0, 2 * np.pi, size=n_terms)

    def value(x):
        arg = x @ freqs.T + phases
        return 0.5 * np.einsum("...i,ij,...j->...", x, a_mat, x) + np.sin(arg) @ amps

    def gradient(x):
        arg = x @ freqs.T + phases
        return x @ a_mat + (np.cos(arg) * amps) @ freqs

    def hessian(x):
        arg = x @ freqs.T + phases
        weights = -np.sin(arg) * amps
        return a_mat + np.einsum("...k,ki,kj->...ij", weights, freqs, freqs)

    return ScalarField(q, value, gradient, hessian, name="random-smooth", batched=True,
                       params={"q": q, "seed": seed, "n_terms": n_terms})
