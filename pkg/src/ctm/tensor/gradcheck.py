"""Central finite-difference verification of reverse-mode gradients."""

from dataclasses import dataclass, field

import numpy as np

from .core import branch_trace, no_grad


@dataclass
class GradcheckReport:
    worst: float
    per_param: dict = field(default_factory=dict)
    coords: int = 0
    kinks: int = 0

    def passed(self, tol):
        return self.worst <= tol


def relative_error(g_ad, g_fd):
    return np.abs(g_ad - g_fd) / np.maximum(1e-8, np.abs(g_ad) + np.abs(g_fd))


def finite_diff_check(f, params, eps=1e-4, names=None):
    """Compare autodiff gradients of ``f()`` w.r.t. ``params`` against central differences.

    ``f`` must be deterministic (freeze dropout by rebuilding the rng inside it)
    and should run in float64. Returns a :class:`GradcheckReport` whose
    ``worst`` is the maximum over all coordinates of
    ``|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)``.

    A coordinate whose perturbation flips a piecewise op (a ReLU mask, a
    pooling argmax, an abs sign) straddles a kink where the function has no
    derivative; it is left out of ``worst`` and counted in ``kinks``.
    """
    params = list(params)
    if names is None:
        names = [p.name or f"param{i}" for i, p in enumerate(params)]
    for p in params:
        p.grad = None
    with branch_trace() as base:
        f().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    report = GradcheckReport(worst=0.0)
    with no_grad():
        for name, p, ga in zip(names, params, analytic):
            flat = p.data.reshape(-1)
            fd = np.empty(flat.size)
            smooth = np.ones(flat.size, dtype=bool)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                with branch_trace() as t_hi:
                    hi = float(f().data)
                flat[j] = orig - eps
                with branch_trace() as t_lo:
                    lo = float(f().data)
                flat[j] = orig
                fd[j] = (hi - lo) / (2 * eps)
                smooth[j] = t_hi == base and t_lo == base
            errs = relative_error(ga.reshape(-1), fd)[smooth]
            err = float(errs.max()) if errs.size else 0.0
            report.kinks += int((~smooth).sum())
            report.per_param[name] = err
            report.worst = max(report.worst, err)
            report.coords += flat.size
    for p in params:
        p.grad = None
    return report
