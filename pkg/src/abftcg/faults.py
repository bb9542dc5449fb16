"""Seeded bit-flip fault campaigns.

Faults are independent flips of one bit of one 64-bit word.  The number of
flips in an executed solver step is Poisson with mean ``lambda_ * M_enabled``,
where ``M_enabled`` counts the words of the enabled targets; with every
target enabled and ``lambda_ = alpha / M`` the mean is exactly ``alpha``.
Each word can be hit at most once per step.

The random stream for step ``t`` is derived from ``(seed, t)`` alone, so a
plan replays identically and a step that is re-executed after a rollback
(which gets a fresh step number) sees fresh faults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .sparse import CsrMatrix

__all__ = [
    "MATRIX_TARGETS",
    "VECTOR_TARGETS",
    "ALL_TARGETS",
    "FaultEvent",
    "FaultPlan",
    "memory_words",
    "target_sizes",
    "draw_events",
    "apply_flip",
    "enumerate_single_flips",
]

MATRIX_TARGETS = ("val", "colid", "rowptr")
VECTOR_TARGETS = ("x", "r", "z", "p", "q")
ALL_TARGETS = MATRIX_TARGETS + VECTOR_TARGETS


@dataclass(frozen=True)
class FaultEvent:
    step: int
    target: str
    index: int
    bit: int
    time: float = 0.0  # continuous arrival time, step <= time < step + 1


def target_sizes(n: int, nnz: int) -> dict:
    """Word count of every targetable array for a matrix of order ``n``."""
    sizes = {"val": nnz, "colid": nnz, "rowptr": n + 1}
    sizes.update({t: n for t in VECTOR_TARGETS})
    return sizes


def memory_words(n: int, nnz: int) -> int:
    """Protectable 64-bit words: the matrix arrays plus the five solver vectors."""
    return sum(target_sizes(n, nnz).values())


@dataclass
class FaultPlan:
    """Schedule of bit flips, drawn lazily or given as an explicit list.

    ``lambda_`` is the per-word rate per step.  Use :meth:`from_alpha` to get
    the usual ``lambda_ = alpha / M`` setting.  ``max_per_step`` optionally
    caps the number of events in one step.
    """

    seed: int = 0
    lambda_: float = 0.0
    targets: tuple = ALL_TARGETS
    sizes: Optional[dict] = None
    alpha: Optional[float] = None
    max_per_step: Optional[int] = None
    events: Optional[Sequence[FaultEvent]] = None
    _by_step: dict = field(default=None, init=False, repr=False)

    def __post_init__(self):
        bad = set(self.targets) - set(ALL_TARGETS)
        if bad:
            raise ValueError(f"unknown fault targets {sorted(bad)}")
        if self.lambda_ < 0:
            raise ValueError("fault rate must be non-negative")
        self.targets = tuple(t for t in ALL_TARGETS if t in self.targets)
        if self.events is not None:
            self._by_step = {}
            for ev in self.events:
                self._by_step.setdefault(ev.step, []).append(ev)

    @classmethod
    def from_alpha(cls, alpha: float, n: int, nnz: int, seed: int = 0, **kw) -> "FaultPlan":
        M = memory_words(n, nnz)
        return cls(seed=seed, lambda_=alpha / M, sizes=target_sizes(n, nnz), alpha=alpha, **kw)

    @classmethod
    def planted(cls, events: Iterable) -> "FaultPlan":
        """Plan that fires exactly the given ``(step, target, index, bit)`` events."""
        evs = [e if isinstance(e, FaultEvent) else FaultEvent(*e) for e in events]
        return cls(events=evs)

    def enabled_words(self) -> int:
        if self.sizes is None:
            return 0
        return sum(self.sizes[t] for t in self.targets)

    def rate_per_step(self) -> float:
        """Expected number of events in one step (before the per-step cap)."""
        return self.lambda_ * self.enabled_words()


def draw_events(plan: FaultPlan, step: int) -> list:
    """Events of executed step ``step``, ordered by arrival time."""
    if plan.events is not None:
        return list(plan._by_step.get(step, ()))
    if plan.lambda_ == 0.0 or plan.sizes is None:
        return []
    words = plan.enabled_words()
    if words == 0:
        return []
    rng = np.random.default_rng([plan.seed, step])
    count = int(rng.poisson(plan.lambda_ * words))
    count = min(count, words)  # each word at most once per step
    if plan.max_per_step is not None:
        count = min(count, plan.max_per_step)
    if count == 0:
        return []
    slots = rng.choice(words, size=count, replace=False)
    bits = rng.integers(0, 64, size=count)
    times = np.sort(rng.random(count))
    bounds = np.cumsum([plan.sizes[t] for t in plan.targets])
    out = []
    for slot, bit, t in zip(slots, bits, times):
        which = int(np.searchsorted(bounds, slot, side="right"))
        base = 0 if which == 0 else int(bounds[which - 1])
        out.append(FaultEvent(step, plan.targets[which], int(slot) - base, int(bit), step + float(t)))
    return out


def apply_flip(array: np.ndarray, index: int, bit: int):
    """Flip ``bit`` of the 64-bit word ``array[index]`` in place.

    Returns the value held before the flip.
    """
    if array.dtype.itemsize != 8:
        raise TypeError("only 64-bit arrays can be targeted")
    if not 0 <= bit < 64:
        raise ValueError(f"bit must be in [0, 64), got {bit}")
    if not -array.shape[0] <= index < array.shape[0]:
        raise IndexError(f"index {index} out of range for length {array.shape[0]}")
    old = array[index].item()
    words = array.view(np.uint64)
    words[index] ^= np.uint64(1) << np.uint64(bit)
    return old


def enumerate_single_flips(
    A: CsrMatrix, x, targets: Sequence[str] = ("val", "colid", "rowptr", "x")
) -> Iterator[tuple]:
    """Every ``(target, index, bit)`` single flip of the chosen arrays."""
    lengths = {"val": A.nnz, "colid": A.nnz, "rowptr": A.n + 1, "x": len(x), "y": A.n}
    for t in targets:
        for i in range(lengths[t]):
            for b in range(64):
                yield (t, i, b)
