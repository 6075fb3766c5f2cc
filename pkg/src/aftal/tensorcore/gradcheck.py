"""Finite-difference verification of analytic gradients.

``check_gradients`` perturbs each checked coordinate by +-h, compares the
central difference against the recorded analytic gradient, and reports the
maximum relative error.  Coordinates whose forward path crosses a non-smooth
point (a ReLU kink or a max-pool tie) inside the +-h window are excluded:
central differences are meaningless there.  Non-smoothness is detected by
re-evaluating the analytic gradient at the two perturbed points; a genuine
smooth-region gradient barely moves over 2h, a crossed kink jumps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class CoordResult:
    input_index: int
    coord: tuple[int, ...]
    analytic: float
    numeric: float
    rel_err: float
    excluded: bool


@dataclass
class GradCheckReport:
    max_rel_err: float
    checked: int
    excluded: int
    tol: float
    worst: list[CoordResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def summary(self) -> str:
        status = "OK" if self.passed else "FAIL"
        return (f"gradcheck {status}: max rel err {self.max_rel_err:.3e} over "
                f"{self.checked} coords ({self.excluded} excluded near kinks), tol {self.tol:.1e}")


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(1.0, abs(a), abs(n))


def _analytic_grads(f: Callable[..., Tensor], arrays: list[np.ndarray]) -> list[np.ndarray]:
    inputs = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = f(*inputs)
    if out.size != 1:
        raise ValueError("check_gradients needs a scalar-valued function")
    out.backward()
    return [np.zeros_like(a) if t.grad is None else t.grad for a, t in zip(arrays, inputs)]


def check_gradients(f: Callable[..., Tensor], inputs: Sequence[Tensor],
                    h: float = 1e-5, tol: float = 1e-4,
                    max_coords_per_input: int | Sequence[int | None] | None = None,
                    rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic gradients of ``f(*inputs)`` with central differences.

    ``f`` must build a scalar Tensor from its Tensor arguments using only
    engine operations.  Inputs are treated as float64 values.  When an input
    has more coordinates than its budget (one shared int, or one entry per
    input), a deterministic random subset is checked.
    """
    if not (1e-6 <= h <= 1e-4):
        raise ValueError("h must lie in [1e-6, 1e-4]")
    arrays = [np.asarray(t.data, dtype=np.float64).copy() for t in inputs]
    if max_coords_per_input is None or isinstance(max_coords_per_input, int):
        budgets = [max_coords_per_input] * len(arrays)
    else:
        budgets = list(max_coords_per_input)
        if len(budgets) != len(arrays):
            raise ValueError("one coordinate budget per input required")
    base_grads = _analytic_grads(f, arrays)

    def eval_at(idx: int, coord: tuple[int, ...], value: float) -> float:
        saved = arrays[idx][coord]
        arrays[idx][coord] = value
        out = f(*[Tensor(a) for a in arrays])
        arrays[idx][coord] = saved
        return out.item()

    def grad_at(idx: int, coord: tuple[int, ...], value: float) -> float:
        saved = arrays[idx][coord]
        arrays[idx][coord] = value
        g = _analytic_grads(f, arrays)[idx][coord]
        arrays[idx][coord] = saved
        return float(g)

    rng = rng or np.random.default_rng(0)
    results: list[CoordResult] = []
    for idx, arr in enumerate(arrays):
        coords = list(np.ndindex(arr.shape))
        budget = budgets[idx]
        if budget is not None and len(coords) > budget:
            pick = rng.choice(len(coords), size=budget, replace=False)
            coords = [coords[i] for i in sorted(pick)]
        for coord in coords:
            x0 = arr[coord]
            fp = eval_at(idx, coord, x0 + h)
            fm = eval_at(idx, coord, x0 - h)
            numeric = (fp - fm) / (2.0 * h)
            analytic = float(base_grads[idx][coord])
            err = _rel_err(analytic, numeric)
            excluded = False
            if err >= tol:
                # probe for a kink crossing: the analytic gradient of a smooth
                # path is stable over [x-h, x+h]; a jump means the central
                # difference straddles a ReLU corner or a max-pool tie.
                gp = grad_at(idx, coord, x0 + h)
                gm = grad_at(idx, coord, x0 - h)
                if _rel_err(gp, gm) > 1e-3:
                    excluded = True
            results.append(CoordResult(idx, coord, analytic, numeric, err, excluded))

    live = [r for r in results if not r.excluded]
    max_err = max((r.rel_err for r in live), default=0.0)
    worst = sorted(live, key=lambda r: -r.rel_err)[:5]
    return GradCheckReport(
        max_rel_err=max_err,
        checked=len(live),
        excluded=len(results) - len(live),
        tol=tol,
        worst=worst,
    )
