"""Matrix-free Hutchinson estimators of tr(H) and tr(H^2).

Probe ``i`` is a Rademacher vector drawn from its own Philox stream keyed by
``seed + i``, so any prefix of probes is reproducible and probes may be
evaluated on several threads; reductions always run in probe order.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
import math

import numpy as np

from .errors import DegenerateTrace, InvalidInput
from .geometry import grad_tolerance
from .linalg import as_sym

UINT64 = 2**64


@dataclass
class TraceEstimate:
    mean: float
    std_error: float
    n_probes: int
    seed: int
    samples: np.ndarray = dc_field(repr=False, compare=False, default=None)

    def as_dict(self):
        return {"mean": self.mean, "std_error": self.std_error,
                "n_probes": self.n_probes, "seed": self.seed}


@dataclass
class ScMinEstimate:
    sc: float
    trace: TraceEstimate
    trace_sq: TraceEstimate
    grad_norm: float
    near_critical: bool

    def as_dict(self):
        return {"sc": self.sc, "trace": self.trace.as_dict(), "trace_sq": self.trace_sq.as_dict(),
                "grad_norm": self.grad_norm, "near_critical": self.near_critical}


def rademacher_probe(seed, index, q):
    rng = np.random.Generator(np.random.Philox(key=(int(seed) + int(index)) % UINT64))
    return rng.integers(0, 2, size=q).astype(float) * 2.0 - 1.0


def rademacher_probes(seed, start, stop, q):
    return np.array([rademacher_probe(seed, i, q) for i in range(start, stop)]).reshape(-1, q)


def _chunk_samples(field, x, seed, start, stop):
    probes = rademacher_probes(seed, start, stop, field.dim)
    hv = np.asarray(field.hvp(x, probes)).reshape(probes.shape)
    return np.sum(probes * hv, axis=1), np.sum(hv * hv, axis=1)


def probe_samples(field, x, n_probes, seed, threads=1, chunk=1024):
    """Per-probe ``v^T H v`` and ``|H v|^2`` for probes ``0..n_probes-1``."""
    if n_probes < 1:
        raise InvalidInput("n_probes must be >= 1")
    x = np.asarray(x, dtype=float)
    bounds = [(s, min(s + chunk, n_probes)) for s in range(0, n_probes, chunk)]
    if threads and threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _chunk_samples(field, x, seed, *b), bounds))
    else:
        parts = [_chunk_samples(field, x, seed, *b) for b in bounds]
    quad = np.concatenate([p[0] for p in parts])
    sq = np.concatenate([p[1] for p in parts])
    return quad, sq


def _summarise(samples, seed):
    n = samples.size
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return TraceEstimate(float(np.mean(samples)), se, n, int(seed), samples)


def hutchinson_trace(field, x, n_probes, seed, threads=1):
    """Unbiased estimate of tr(H(x)) from Rademacher probes; std_error is inf for one probe."""
    quad, _ = probe_samples(field, x, n_probes, seed, threads)
    return _summarise(quad, seed)


def trace_h2_estimate(field, x, n_probes, seed, threads=1):
    """Unbiased estimate of tr(H(x)^2) as the mean of |H v|^2."""
    _, sq = probe_samples(field, x, n_probes, seed, threads)
    return _summarise(sq, seed)


def sc_min_estimate(field, x_min, n_probes, seed, threads=1):
    """Plug-in estimate of tr(H)^2 - tr(H^2) at a (near-)critical point.

    Both traces share probes.  Squaring the trace mean biases ``sc`` upward
    by roughly ``trace.std_error**2``; the component estimates are returned
    so callers can correct for it.
    """
    x_min = np.asarray(x_min, dtype=float)
    quad, sq = probe_samples(field, x_min, n_probes, seed, threads)
    tr, tr2 = _summarise(quad, seed), _summarise(sq, seed)
    grad_norm = float(np.linalg.norm(field.gradient(x_min)))
    near = grad_norm <= grad_tolerance(field.value(x_min))
    return ScMinEstimate(tr.mean**2 - tr2.mean, tr, tr2, grad_norm, near)


def overparam_ratio(h):
    """(tr(H)^2 - tr(H^2)) / tr(H)^2, which tends to 1 for many equal eigenvalues."""
    h = as_sym(h, "Hessian")
    tr = float(np.sum(np.diag(h)))
    if tr == 0.0:
        raise DegenerateTrace("trace of H is zero; ratio undefined")
    tr2 = float(np.sum(h * h))
    return (tr * tr - tr2) / (tr * tr)
