"""Adam optimizer and a finite-difference gradient checker."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, backward

__all__ = ["Adam", "NanGradientError", "gradient_check"]


class NanGradientError(RuntimeError):
    """A parameter's gradient contains NaN or infinity."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"non-finite gradient for parameter {name!r}")


class Adam:
    """Standard Adam with bias correction over a named parameter dict.

    ``step`` applies one update from the gradients currently stored on the
    parameters and then zeroes them.  Moment buffers match parameter
    shapes; the step counter ``t`` increases by one per call.
    """

    def __init__(self, params: dict[str, Tensor], lr=0.0005, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._scratch = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise NanGradientError(name)
            m = self.m[name]
            v = self.v[name]
            s = self._scratch[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            np.multiply(g, g, out=s)
            s *= 1.0 - b2
            v += s
            # s = lr * m_hat / (sqrt(v_hat) + eps)
            np.divide(v, bc2, out=s)
            np.sqrt(s, out=s)
            s += self.eps
            np.divide(m, s, out=s)
            s *= self.lr / bc1
            p.data -= s
            p.zero_grad()

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Elementwise |a-n| / max(|a|,|n|); defined as 0 where both vanish."""
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.zeros_like(denom)
    nz = denom > 0.0
    err[nz] = np.abs(analytic - numeric)[nz] / denom[nz]
    return err


def gradient_check(build_loss, params: dict[str, Tensor], h=1e-6, tol=1e-5):
    """Compare analytic gradients against central finite differences.

    ``build_loss`` must be a deterministic closure over ``params`` that
    rebuilds the forward computation and returns the scalar loss Tensor.
    Every element of every parameter is perturbed by ±h.

    Returns ``(report, failures)`` where ``report`` maps parameter name to
    its max elementwise relative error and ``failures`` lists the names
    exceeding ``tol``.
    """
    for p in params.values():
        p.zero_grad()
    backward(build_loss())
    analytic = {k: p.grad.copy() for k, p in params.items()}
    for p in params.values():
        p.zero_grad()

    report = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        numeric = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            loss_plus = build_loss().item()
            flat[i] = orig - h
            loss_minus = build_loss().item()
            flat[i] = orig
            numeric[i] = (loss_plus - loss_minus) / (2.0 * h)
        rel = _relative_error(analytic[name].reshape(-1), numeric)
        report[name] = float(rel.max()) if rel.size else 0.0
    failures = [k for k, e in report.items() if e > tol]
    return report, failures
