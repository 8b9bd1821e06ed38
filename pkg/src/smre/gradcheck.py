"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, NonFiniteError


@dataclass
class GradReport:
    errors: dict = field(default_factory=dict)  # name -> array of relative errors

    @property
    def max_error(self):
        vals = [float(e.max()) for e in self.errors.values() if e.size]
        return max(vals) if vals else 0.0

    def worst(self):
        name = max(self.errors, key=lambda k: self.errors[k].max() if self.errors[k].size else 0)
        return name, float(self.errors[name].max())

    def passed(self, tol=1e-4):
        return self.max_error < tol


def relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)


def finite_diff_check(f, params, h=1e-5, oracle_dtype=None):
    """Compare ``backward`` gradients of scalar ``f(params)`` with central differences.

    ``params`` is a ModelParams (or any name -> Tensor mapping) in float64.
    ``f`` must be deterministic.  Every entry of every tensor is perturbed.

    The analytic gradient is always taken in float64.  ``oracle_dtype``
    (e.g. ``np.longdouble``) evaluates the perturbed losses in a wider type;
    a float64 difference quotient carries ~ulp(f)/(2h) absolute noise, which
    swamps entries whose gradient is below ~1e-6.
    """
    if not 0 < h <= 1e-2:
        raise ContractError(f"step h must lie in (0, 1e-2], got {h}")
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ContractError(f"gradient checks need float64; {name!r} is {p.dtype}")
    for _, p in params.items():
        p.grad = None
    loss = f(params)
    T.backward(loss)
    analytic = {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}
    oracle_dtype = np.dtype(oracle_dtype or np.float64).type
    saved = {name: p.data for name, p in params.items()}
    report = GradReport()
    try:
        for _, p in params.items():
            p.data = p.data.astype(oracle_dtype)
        with T.precision(oracle_dtype), T.no_grad():
            for name, p in params.items():
                numeric = np.zeros(p.shape, dtype=oracle_dtype)
                flat = p.data.reshape(-1)
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + h
                    fp = f(params).data
                    flat[i] = orig - h
                    fm = f(params).data
                    flat[i] = orig
                    if not (np.isfinite(fp) and np.isfinite(fm)):
                        raise NonFiniteError(f"f is not finite when perturbing {name}[{i}]")
                    numeric.reshape(-1)[i] = (fp - fm) / (2 * oracle_dtype(h))
                report.errors[name] = relative_error(analytic[name], numeric.astype(np.float64))
    finally:
        for name, p in params.items():
            p.data = saved[name]
    return report
