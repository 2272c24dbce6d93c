"""Central finite-difference oracle for validating analytic gradients.

The oracle perturbs individual scalar coordinates of leaf tensors and
compares (f(p+eps) - f(p-eps)) / (2 eps) against the tape gradient. It is
deliberately independent of the reverse pass it checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    """Per-leaf max relative error plus coordinates excluded at kinks."""

    max_rel_error: dict = field(default_factory=dict)
    excluded: dict = field(default_factory=dict)
    checked: dict = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def passed(self, tol: float) -> bool:
        return self.worst < tol


def finite_diff_check(f, leaves, eps: float = 1e-5, max_coords: int = 200,
                      rng=None, kink_tol: float = 0.05,
                      floor: float = 1e-6) -> GradCheckReport:
    """Compare tape gradients of scalar `f()` against central differences.

    `leaves` maps name -> leaf Tensor (Parameter or grad-requiring input);
    `f` must be a deterministic closure over those leaves returning a
    scalar Tensor. Up to `max_coords` coordinates per leaf are sampled.
    Coordinates where the two one-sided differences disagree strongly are
    reported as excluded (the function has a kink there) rather than
    scored.
    """
    rng = rng or np.random.default_rng(0)
    leaves = dict(leaves)
    for t in leaves.values():
        t.requires_grad = True
        t.grad = np.zeros_like(t.data)
    out = f()
    f0 = out.item()
    if not np.isfinite(f0):
        raise ValueError(f"finite_diff_check: f is non-finite ({f0})")
    out.backward()

    report = GradCheckReport()
    for name, t in leaves.items():
        flat = t.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, max_coords, replace=False)
        analytic = t.grad.reshape(-1)
        worst, excluded = 0.0, 0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            fp = f().item()
            flat[i] = orig - eps
            fm = f().item()
            flat[i] = orig
            d_plus = (fp - f0) / eps
            d_minus = (f0 - fm) / eps
            # relative disagreement of the one-sided slopes marks a kink
            # between the evaluation points; the absolute guard keeps pure
            # float round-off (tiny slopes) from being excluded as kinks
            scale = max(abs(d_plus), abs(d_minus))
            if abs(d_plus - d_minus) > max(kink_tol * scale, 1e-7):
                excluded += 1
                continue
            numeric = (fp - fm) / (2.0 * eps)
            # `floor` turns the metric absolute for near-zero gradients,
            # where central differences bottom out on float round-off
            rel = abs(analytic[i] - numeric) / max(abs(analytic[i]), abs(numeric), floor)
            worst = max(worst, rel)
        report.max_rel_error[name] = worst
        report.excluded[name] = excluded
        report.checked[name] = len(coords) - excluded
    return report


def grad_input(f, x: Tensor) -> np.ndarray:
    """Gradient of scalar f(x) with respect to a single input tensor."""
    x.grad = np.zeros_like(x.data)
    x.requires_grad = True
    f(x).backward()
    return x.grad
