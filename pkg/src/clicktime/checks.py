"""Invariant suite for the occurrence-time POVM on a given grid."""
from dataclasses import dataclass

import numpy as np

from .povm import (
    identity_measure_deviation,
    interval_kernel,
    matrix_povm,
    net_limit_check,
    normalize_kernel,
    random_smooth_effect,
    shift_interval_covariance_check,
)

THRESHOLDS = {
    "additivity": 1e-12,
    "covariance": 1e-12,
    "normalization": 1e-10,
    "positivity": 1e-10,
    "partition_64": 1e-10,
    "matrix_vs_kernel": 1e-10,
    "net_monotone": 1e-10,
}


@dataclass(frozen=True)
class InvariantResult:
    name: str
    deviation: float
    threshold: float

    @property
    def passed(self):
        return bool(self.deviation <= self.threshold)


def _operator(p):
    return p.kernel.matrix()


def _check_one(c, a, tstar, rng):
    """Deviations for one normalized kernel ``c`` (and its effect ``a`` when given)."""
    out = {}
    t0 = rng.uniform(-0.5, 0.0) * tstar
    t1 = rng.uniform(0.0, 0.4) * tstar
    t2 = rng.uniform(0.5, 0.9) * tstar
    p01, p12 = interval_kernel(c, (t0, t1)), interval_kernel(c, (t1, t2))
    p02 = interval_kernel(c, (t0, t2))
    out["additivity"] = float(np.abs(_operator(p02) - _operator(p01) - _operator(p12)).max())

    shift = rng.uniform(-0.2, 0.2) * tstar
    out["covariance"] = shift_interval_covariance_check(c, (t0, t1), shift)

    out["normalization"] = identity_measure_deviation(interval_kernel(c, (-tstar, tstar)))

    worst = 0.0
    for iv in ((t0, t1), (t1, t2), (-tstar, tstar), (-tstar, t0)):
        lam = interval_kernel(c, iv).eigenvalues()
        worst = max(worst, -float(lam[0]), float(lam[-1]) - 1.0)
    out["positivity"] = worst

    edges = np.linspace(-tstar, tstar, 65)
    total = sum(_operator(interval_kernel(c, (lo, hi))) for lo, hi in zip(edges[:-1], edges[1:]))
    out["partition_64"] = float(np.abs(total - np.eye(c.grid.size)).max())

    if a is not None:
        net = net_limit_check(a, [tstar / 4, tstar / 2, tstar])
        out["net_monotone"] = max(0.0, -net.monotone_floor, -net.positivity_floor, net.upper_ceiling - 1.0)
        iv = (0.0, tstar / 3)
        pm = matrix_povm(a, iv, B=net.B)
        out["matrix_vs_kernel"] = float(np.abs(_operator(pm) - _operator(interval_kernel(c, iv))).max())
    return out


def povm_invariant_suite(grid, rng, n_effects=3, rank=4, extra_kernels=()):
    """
    Run every invariant on ``n_effects`` random smooth effects plus any
    ``extra_kernels`` (normalized kernels without a source effect).

    Deviations are measured on operator matrices ``w K`` and the worst case
    over all inputs is reported.
    """
    worst = {name: 0.0 for name in THRESHOLDS}
    tstar = grid.nyquist_time
    inputs = []
    for _ in range(n_effects):
        a = random_smooth_effect(grid, rng, rank)
        inputs.append((normalize_kernel(a), a))
    inputs += [(c, None) for c in extra_kernels]
    for c, a in inputs:
        for name, dev in _check_one(c, a, tstar, rng).items():
            worst[name] = max(worst[name], dev)
    return [InvariantResult(name, worst[name], THRESHOLDS[name]) for name in THRESHOLDS]
