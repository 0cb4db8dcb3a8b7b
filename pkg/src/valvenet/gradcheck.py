"""Central finite-difference validation of analytic gradients.

The harness perturbs every entry of every parameter block of a scalar
loss function and compares the central difference against the analytic
gradient supplied by the caller.  It requires float64 blocks: finite
differences are unreliable in float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class BlockCheck:
    name: str
    max_rel_err: float
    worst_index: tuple
    passed: bool

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name}: max rel err {self.max_rel_err:.3e} at {self.worst_index} [{status}]"


@dataclass
class GradCheckReport:
    blocks: list[BlockCheck]
    step: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(b.passed for b in self.blocks)

    @property
    def max_rel_err(self) -> float:
        return max((b.max_rel_err for b in self.blocks), default=0.0)

    def __str__(self) -> str:
        lines = [str(b) for b in self.blocks]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} (step={self.step:g}, tol={self.tolerance:g})")
        return "\n".join(lines)


def grad_check(
    loss_fn,
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    exclude: dict[str, np.ndarray] | None = None,
    rel_floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    loss_fn(params) -> float is re-evaluated with each entry perturbed by
    +-step.  The relative error per entry is |a - n| / max(|a|, |n|,
    rel_floor); rel_floor keeps finite-difference noise on true-zero
    gradients from registering as disagreement.  exclude[name] may mark
    entries to skip (e.g. points where the map is not differentiable).
    Failures are reported, not raised.
    """
    blocks: list[BlockCheck] = []
    for name, value in params.items():
        if value.dtype != np.float64:
            raise ValueError(f"grad_check requires float64 blocks, '{name}' is {value.dtype}")
        if analytic[name].shape != value.shape:
            raise ValueError(f"analytic gradient for '{name}' has shape {analytic[name].shape}, expected {value.shape}")
        skip = None if exclude is None else exclude.get(name)
        flat = value.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            if skip is not None and skip.reshape(-1)[i]:
                numeric[i] = analytic[name].reshape(-1)[i]  # excluded: force agreement
                continue
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn(params)
            flat[i] = orig - step
            lo = loss_fn(params)
            flat[i] = orig
            numeric[i] = (hi - lo) / (2 * step)
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), rel_floor)
        rel = np.abs(a - numeric) / denom
        worst = int(np.argmax(rel))
        blocks.append(
            BlockCheck(
                name=name,
                max_rel_err=float(rel[worst]),
                worst_index=tuple(int(v) for v in np.unravel_index(worst, value.shape)),
                passed=bool(rel[worst] < tolerance),
            )
        )
    return GradCheckReport(blocks=blocks, step=step, tolerance=tolerance)
