"""Split-step phase-space maps and the palindromic leapfrog involution.

The building blocks are the classic kick (momentum update from a force
field), drift (position update from a flow field), an exact rotation for
Gaussian-preserving dynamics, and the momentum flip.  Composing
kick-inner-kick palindromes for ``n`` steps and flipping momentum once at
the end yields a volume-friendly involution, which is what every
trajectory-based sampler in this package feeds to the master kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigurationError, DivergenceError, NumericError

DIVERGENCE_LIMIT = 1e10


class PhasePoint(NamedTuple):
    q: np.ndarray
    v: np.ndarray


def kick(point: PhasePoint, t: float, force: Callable[[np.ndarray], np.ndarray]) -> PhasePoint:
    """Momentum update ``(q, v) -> (q, v + t * force(q))``.

    ``force`` plays the role of the negative potential gradient or any
    surrogate for it; no smoothness beyond pointwise evaluation is assumed.
    """
    f = np.asarray(force(point.q), dtype=float)
    if not np.all(np.isfinite(f)):
        raise NumericError("force returned a non-finite value")
    return PhasePoint(point.q, point.v + t * f)


def drift(point: PhasePoint, t: float, flow: Callable[[np.ndarray], np.ndarray]) -> PhasePoint:
    """Position update ``(q, v) -> (q + t * flow(v), v)``."""
    f = np.asarray(flow(point.v), dtype=float)
    if not np.all(np.isfinite(f)):
        raise NumericError("flow returned a non-finite value")
    return PhasePoint(point.q + t * f, point.v)


def rotate(point: PhasePoint, t: float) -> PhasePoint:
    """Exact rotation ``(q, v) -> (q cos t + v sin t, v cos t - q sin t)``.

    This is the flow of the harmonic part of a Gaussian-reference
    Hamiltonian, applied componentwise, and conserves ``|q|^2 + |v|^2``.
    """
    c, s = math.cos(t), math.sin(t)
    return PhasePoint(point.q * c + point.v * s, point.v * c - point.q * s)


def momentum_flip(point: PhasePoint) -> PhasePoint:
    return PhasePoint(point.q, -point.v)


@dataclass
class SplitDynamics:
    """Parameters of a palindromic split-step trajectory.

    One sub-step applies ``kick(half_kick)``, then the inner map for time
    ``dt`` (a drift along ``flow``, or the exact rotation when ``flow`` is
    ``None``), then ``kick(half_kick)`` again.  ``half_kick`` defaults to
    ``dt / 2``, the classic leapfrog choice; Gaussian-reference trajectories
    pass the two step sizes independently.

    The composed map is an involution after a final momentum flip provided
    ``flow`` is odd; :meth:`validate_odd_flow` probes that requirement.
    """

    force: Callable[[np.ndarray], np.ndarray]
    flow: Callable[[np.ndarray], np.ndarray] | None
    dt: float
    n_steps: int
    half_kick: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be at least 1, got {self.n_steps}")
        if self.half_kick is None:
            self.half_kick = self.dt / 2.0

    def validate_odd_flow(self, dim: int, rng: np.random.Generator, n_points: int = 8,
                          tol: float = 1e-8) -> None:
        """Check ``flow(-v) == -flow(v)`` on random probes; raise if violated."""
        if self.flow is None:
            return
        for _ in range(n_points):
            v = rng.standard_normal(dim)
            fwd = np.asarray(self.flow(v), dtype=float)
            bwd = np.asarray(self.flow(-v), dtype=float)
            scale = 1.0 + float(np.max(np.abs(fwd)))
            if float(np.max(np.abs(fwd + bwd))) > tol * scale:
                raise ConfigurationError("flow is not odd; trajectory map would not invert")


def _substep(point: PhasePoint, dyn: SplitDynamics) -> PhasePoint:
    point = kick(point, dyn.half_kick, dyn.force)
    if dyn.flow is None:
        point = rotate(point, dyn.dt)
    else:
        point = drift(point, dyn.dt, dyn.flow)
    return kick(point, dyn.half_kick, dyn.force)


def leapfrog_trajectory(point: PhasePoint, dyn: SplitDynamics) -> list[PhasePoint]:
    """All states along the palindromic trajectory, initial point included.

    Entry ``i`` is the state after ``i`` full sub-steps; no momentum flip is
    applied.  Any coordinate exceeding ``DIVERGENCE_LIMIT`` in magnitude, or
    an overflow inside a kick or drift, aborts with :class:`DivergenceError`
    carrying the sub-step index.
    """
    states = [PhasePoint(np.asarray(point.q, dtype=float), np.asarray(point.v, dtype=float))]
    current = states[0]
    for i in range(dyn.n_steps):
        try:
            current = _substep(current, dyn)
        except NumericError as exc:
            raise DivergenceError(f"overflow during sub-step {i}", step_index=i) from exc
        if max(float(np.max(np.abs(current.q))), float(np.max(np.abs(current.v)))) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"coordinate magnitude exceeded {DIVERGENCE_LIMIT:g} "
                                  f"at sub-step {i}", step_index=i)
        states.append(current)
    return states


def leapfrog_involution(point: PhasePoint, dyn: SplitDynamics) -> PhasePoint:
    """Palindromic trajectory followed by a single momentum flip at the end."""
    return momentum_flip(leapfrog_trajectory(point, dyn)[-1])


def jacobian_abs_det_fd(mapping, point: PhasePoint, eps: float | None = None) -> float:
    """|det| of a phase-space map's derivative by central finite differences.

    The map is flattened over ``(q, v)``; the full dense Jacobian is built
    column by column, so the combined dimension must stay small (<= 10).
    The default probe size scales with the point's magnitude.  A singular
    Jacobian is reported as the raw (near-zero) determinant, not an error.
    """
    q0 = np.asarray(point.q, dtype=float)
    v0 = np.asarray(point.v, dtype=float)
    nq, dim = q0.size, q0.size + v0.size
    if dim > 10:
        raise ConfigurationError(
            f"dense finite differencing limited to combined dimension 10, got {dim}"
        )
    x0 = np.concatenate([q0, v0])
    if eps is None:
        eps = 1e-5 * (1.0 + float(np.max(np.abs(x0))))

    def apply(x: np.ndarray) -> np.ndarray:
        out = mapping(PhasePoint(x[:nq].copy(), x[nq:].copy()))
        return np.concatenate([np.asarray(out.q, dtype=float).ravel(),
                               np.asarray(out.v, dtype=float).ravel()])

    jac = np.empty((dim, dim))
    for i in range(dim):
        step = np.zeros(dim)
        step[i] = eps
        jac[:, i] = (apply(x0 + step) - apply(x0 - step)) / (2.0 * eps)
    return abs(float(np.linalg.det(jac)))
