"""Seeded, order-independent Monte-Carlo trial execution.

Each trial gets its own generator derived from ``(master seed, trial index)``
through numpy's SeedSequence spawn keys, so a trial's random stream does not
depend on which worker runs it or in what order. Outputs are stored by trial
index and reduced in index order, which keeps floating-point aggregates
bit-identical for any thread count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import ClusterDetError, NumericalFailure

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.01


def trial_seed(master_seed: int, index: int, *stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index), *stream))


def trial_rng(master_seed: int, index: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(trial_seed(master_seed, index, *stream))


@dataclass
class MonteCarloStats:
    trials: int
    outputs: list = field(repr=False)
    failures: list = field(default_factory=list)

    @property
    def succeeded(self) -> int:
        return len(self.outputs)

    def total(self, key: str):
        """Sum of ``output[key]`` over successful trials, in trial order."""
        acc = None
        for out in self.outputs:
            v = np.asarray(out[key])
            acc = v.copy() if acc is None else acc + v
        return acc

    def collect(self, key: str) -> np.ndarray:
        """Per-trial values of ``output[key]`` stacked in trial order."""
        return np.array([out[key] for out in self.outputs])

    def ser(self, err_key: str, sym_key: str = "symbols"):
        """SER and binomial standard error from summed error and symbol counts."""
        errors = np.asarray(self.total(err_key), dtype=float)
        n = float(self.total(sym_key))
        p = errors / n
        return p, np.sqrt(p * (1 - p) / n)


def monte_carlo(
    trials: int,
    seed: int,
    per_trial: Callable[[np.random.Generator, int], Any],
    threads: int = 1,
    order: Sequence[int] | None = None,
) -> MonteCarloStats:
    """Run ``per_trial(rng, index)`` for every trial index.

    Failures (package errors and numpy LinAlgError) are logged and counted; more
    than 1% failed trials raises NumericalFailure. ``order`` only changes the
    submission order and exists to check order independence.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    indices = list(range(trials)) if order is None else [int(i) for i in order]
    if sorted(indices) != list(range(trials)):
        raise ValueError("order must be a permutation of range(trials)")

    def run(i):
        try:
            return i, per_trial(trial_rng(seed, i), i), None
        except (ClusterDetError, np.linalg.LinAlgError) as exc:
            return i, None, exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, indices))
    else:
        results = [run(i) for i in indices]

    results.sort(key=lambda r: r[0])
    outputs = [r[1] for r in results if r[2] is None]
    failures = [(r[0], repr(r[2])) for r in results if r[2] is not None]
    for i, msg in failures:
        log.warning("trial %d failed: %s", i, msg)
    if len(failures) > MAX_FAILURE_FRACTION * trials:
        raise NumericalFailure(f"{len(failures)} of {trials} trials failed; first: {failures[0][1]}")
    return MonteCarloStats(trials=trials, outputs=outputs, failures=failures)
