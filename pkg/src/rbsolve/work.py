"""Instrumented work counters.

Kernels report what they did through :func:`record`; any counter opened with
:func:`counting` in the current context sees it. Counters nest, so a solver can
keep its own tally while a test wraps the whole call in another one.
"""
from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, fields

__all__ = ["WorkCounter", "counting", "record"]


@dataclass
class WorkCounter:
    """Operation tallies, split by whether they scale with the full dimension.

    ``full_flops`` covers vector kernels of length 𝒩 (dot, axpy, lift,
    restrict, ...) but not SpMV or smoother work, which have their own
    fields. ``reduced_flops`` covers dense work on N-sized reduced objects.
    """

    spmv: int = 0
    spmv_flops: int = 0
    sweeps: int = 0
    sweep_flops: int = 0
    full_flops: int = 0
    reduced_flops: int = 0

    @property
    def full_dependent(self) -> int:
        """Total count of operations whose cost grows with 𝒩."""
        return self.spmv_flops + self.sweep_flops + self.full_flops

    def copy(self) -> "WorkCounter":
        return WorkCounter(**{f.name: getattr(self, f.name) for f in fields(self)})

    def __sub__(self, other: "WorkCounter") -> "WorkCounter":
        return WorkCounter(
            **{f.name: getattr(self, f.name) - getattr(other, f.name) for f in fields(self)}
        )


_active: contextvars.ContextVar[tuple[WorkCounter, ...]] = contextvars.ContextVar(
    "rbsolve_work_counters", default=()
)


def record(**amounts: int) -> None:
    for counter in _active.get():
        for name, value in amounts.items():
            setattr(counter, name, getattr(counter, name) + value)


@contextlib.contextmanager
def counting(counter: WorkCounter | None = None):
    """Open a counter that receives every :func:`record` call inside the block."""
    counter = WorkCounter() if counter is None else counter
    token = _active.set(_active.get() + (counter,))
    try:
        yield counter
    finally:
        _active.reset(token)
