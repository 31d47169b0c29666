"""Expected-sample-count analysis for the replay sampling schemes.

The reference scenario: a FIFO buffer of capacity N, one data point
arriving per step, one size-1 uniform draw per step, over ``updates``
steps.  Two starting conditions are covered:

* ``empty`` start: the buffer begins empty and the draw happens after the
  push, so the data point of step t can be drawn from step t on.  With a
  full-buffer window this yields the harmonic-tail curve
  sum_{t'=t..updates} 1/t'.
* ``full`` start: the buffer begins full of older data and the draw
  happens before the push, so the step-t data point is drawn from step
  t+1 on and one pre-existing item is evicted per step.  With a
  full-buffer window the new-data curve is the line (updates - t)/N.

Positions index every data point involved, oldest first: a full start
contributes N pre-existing points (positions 0..N-1, N-1 being the newest)
followed by the ``updates`` new points; an empty start has only the new
points.  Counting evicted points too is what makes the total mass equal
the number of draws exactly.

Shrinking-window (recency-emphasis) curves use the same bookkeeping with
the window of update k restricted to the most recent c_k items; eta = 1
reduces to the uniform curves bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .replay import EreConfig, ere_range

STARTS = ("empty", "full")


@dataclass(frozen=True)
class SamplingScenario:
    """Configuration for one expected-count computation."""

    capacity: int
    updates: int
    eta: float = 1.0
    start: str = "empty"
    c_min: int = 1

    def __post_init__(self):
        if self.start not in STARTS:
            raise ValueError(f"start must be one of {STARTS}")
        if self.updates < 1 or self.capacity < 1:
            raise ValueError("capacity and updates must be positive")
        if self.start == "empty" and self.updates > self.capacity:
            raise ValueError("empty-start scenario requires updates <= capacity")

    @property
    def n_positions(self) -> int:
        return self.updates + (self.capacity if self.start == "full" else 0)

    def window_sizes(self) -> np.ndarray:
        """Effective window per update: min(c_k, items present at draw time)."""
        cfg = EreConfig(eta0=self.eta, c_min=self.c_min)
        ks = np.arange(1, self.updates + 1)
        c = np.array([ere_range(int(k), self.updates, self.capacity, cfg, self.eta)
                      for k in ks])
        if self.start == "full":
            present = np.full(self.updates, self.capacity)
        else:
            present = ks  # push happens before the draw
        return np.minimum(c, present)

    def window_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Inclusive position range [lo, hi] sampled at each update."""
        w = self.window_sizes()
        ks = np.arange(1, self.updates + 1)
        if self.start == "full":
            hi = self.capacity + ks - 2  # newest item at draw time of step k
        else:
            hi = ks - 1
        return hi - w + 1, hi


def probability_matrix(scn: SamplingScenario) -> np.ndarray:
    """Dense per-update draw probabilities, shape (updates, n_positions).

    Row k holds 1/w_k inside that update's window and 0 elsewhere.  Memory
    grows as updates * (capacity + updates); intended for analysis-scale
    scenarios (about 10^3), not production buffers.
    """
    lo, hi = scn.window_bounds()
    w = (hi - lo + 1).astype(np.float64)
    p = np.zeros((scn.updates, scn.n_positions))
    for k in range(scn.updates):
        p[k, lo[k]:hi[k] + 1] = 1.0 / w[k]
    return p


def expected_counts(scn: SamplingScenario) -> np.ndarray:
    """Exact expected number of draws per data position."""
    return probability_matrix(scn).sum(axis=0)


def count_variances(scn: SamplingScenario) -> np.ndarray:
    """Exact per-position variance of the count over one scenario run."""
    p = probability_matrix(scn)
    return (p * (1.0 - p)).sum(axis=0)


def expected_counts_uniform_empty(capacity: int, updates: int) -> np.ndarray:
    return expected_counts(SamplingScenario(capacity, updates, 1.0, "empty"))


def expected_counts_uniform_full(capacity: int, updates: int) -> np.ndarray:
    return expected_counts(SamplingScenario(capacity, updates, 1.0, "full"))


def expected_counts_ere(capacity: int, updates: int, eta: float,
                        start: str = "full", c_min: int = 1) -> np.ndarray:
    return expected_counts(SamplingScenario(capacity, updates, eta, start, c_min))


def retained_slice(scn: SamplingScenario) -> slice:
    """Positions still in the buffer after the last update."""
    if scn.start == "full" and scn.updates >= scn.capacity:
        return slice(scn.updates, scn.n_positions)
    if scn.start == "full":
        return slice(scn.n_positions - scn.capacity, scn.n_positions)
    return slice(max(0, scn.updates - scn.capacity), scn.updates)


def empirical_counts(scn: SamplingScenario, trials: int,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo mean counts and the exact standard error of that mean.

    Each trial replays the scenario once; draws are vectorized across
    trials per update step.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    lo, hi = scn.window_bounds()
    w = hi - lo + 1
    totals = np.zeros(scn.n_positions, dtype=np.int64)
    for k in range(scn.updates):
        draws = hi[k] - rng.integers(0, w[k], size=trials)
        totals += np.bincount(draws, minlength=scn.n_positions)
    sigma = np.sqrt(count_variances(scn) / trials)
    return totals / trials, sigma


def mu_trace(record) -> np.ndarray:
    """Per-checkpoint (step, mean |mu| pre-norm, saturation fraction) rows."""
    return np.array([(row.step, row.mean_abs_mu_pre_norm, row.saturation_fraction)
                     for row in record.rows])
