"""Dual-averaging step-size adaptation for the burn-in window.

The primal-dual averaging recursion drives the running mean of the move
probability toward a target rate by adjusting the log step size.  It runs
only during a declared warmup window; afterwards the averaged step size is
frozen so the production kernel is fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import KernelSpec, master_step
from .errors import ConfigurationError


@dataclass
class DualAveraging:
    """Log-scale dual averaging toward a target acceptance statistic."""

    target: float
    initial: float
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75

    def __post_init__(self):
        if not 0.0 < self.target < 1.0:
            raise ConfigurationError("target rate must lie strictly in (0, 1)")
        if not self.initial > 0:
            raise ConfigurationError("initial step size must be positive")
        self._mu = np.log(10.0 * self.initial)
        self._log_avg = np.log(self.initial)
        self._h_bar = 0.0
        self._count = 0

    def update(self, accept_stat: float) -> float:
        """Feed one move probability; return the step size to use next."""
        self._count += 1
        t = self._count
        frac = 1.0 / (t + self.t0)
        self._h_bar = (1.0 - frac) * self._h_bar + frac * (self.target - accept_stat)
        log_step = self._mu - np.sqrt(t) / self.gamma * self._h_bar
        eta = t ** (-self.kappa)
        self._log_avg = eta * log_step + (1.0 - eta) * self._log_avg
        return float(np.exp(log_step))

    @property
    def averaged(self) -> float:
        return float(np.exp(self._log_avg))


@dataclass
class WarmupResult:
    """Trace and outcome of a dual-averaging warmup run."""

    step_size: float
    states: np.ndarray
    chosen_indices: np.ndarray
    probabilities: np.ndarray

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def tune_step_size(builder, initial_state: np.ndarray, initial_step: float,
                   n_adapt: int, target_accept: float,
                   rng: np.random.Generator,
                   step_bounds: tuple[float, float] = (1e-8, 1e3)) -> WarmupResult:
    """Adapt a kernel's step size over ``n_adapt`` transitions.

    ``builder`` maps a step size to a fresh :class:`KernelSpec`.  The move
    probability ``1 - alpha_0`` of each step feeds the averaging recursion;
    the frozen, averaged step size is returned together with the warmup
    trace so callers can keep the visited states.
    """
    if n_adapt < 1:
        raise ConfigurationError("n_adapt must be at least 1")
    lo, hi = step_bounds
    averager = DualAveraging(target=target_accept, initial=initial_step)
    step = initial_step
    state = np.array(initial_state, dtype=float)

    probe: KernelSpec = builder(step)
    states = np.empty((n_adapt + 1, state.size))
    chosen = np.empty(n_adapt, dtype=np.int64)
    probabilities = np.empty((n_adapt, probe.proposal_count + 1))
    states[0] = state

    spec = probe
    for k in range(n_adapt):
        record = master_step(state, spec, rng)
        state = record.next_state
        states[k + 1] = state
        chosen[k] = record.chosen_index
        probabilities[k] = record.probabilities
        move_prob = 1.0 - float(record.probabilities[0])
        step = float(np.clip(averager.update(move_prob), lo, hi))
        spec = builder(step)

    tuned = float(np.clip(averager.averaged, lo, hi))
    return WarmupResult(step_size=tuned, states=states,
                        chosen_indices=chosen, probabilities=probabilities)
