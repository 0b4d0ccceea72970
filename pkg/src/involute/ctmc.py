"""Mixed-effects continuous-time Markov chains on a finite state space.

Transition rates follow a log-linear model: each off-diagonal log rate is a
state-pair random effect plus fixed effects contracted against design
matrices, and the diagonal makes rows sum to zero.  Finite-time transition
probabilities come from the matrix exponential; their parameter derivatives
come from a commutator series whose truncation at a high order serves as
the exact gradient and whose first term alone is the cheap surrogate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, NumericError
from .rng import rng_stream
from .samplers import LebesgueReference, TargetModel

MAX_STATES = 64
_TAYLOR_DEGREE = 13
_ROW_SUM_TOL = 1e-3
EXACT_SERIES_ORDER = 20


def offdiag_indices(n_states: int) -> list[tuple[int, int]]:
    """Row-major ordering of the off-diagonal state pairs (0-based)."""
    return [(d, e) for d in range(n_states) for e in range(n_states) if d != e]


@dataclass
class MixedEffectsParams:
    """Log-linear rate parameters: fixed effects plus per-pair random effects.

    ``random_effects`` holds one entry per off-diagonal pair in the order of
    :func:`offdiag_indices`; ``design`` holds one matrix per fixed effect,
    each of shape ``(n_states, n_states)`` with ignored diagonals.
    """

    n_states: int
    random_effects: np.ndarray
    fixed_effects: np.ndarray = field(default_factory=lambda: np.zeros(0))
    design: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.random_effects = np.asarray(self.random_effects, dtype=float)
        self.fixed_effects = np.asarray(self.fixed_effects, dtype=float)
        n_pairs = self.n_states * (self.n_states - 1)
        if self.n_states < 2:
            raise ConfigurationError("need at least two states")
        if self.random_effects.shape != (n_pairs,):
            raise ConfigurationError(
                f"expected {n_pairs} random effects, got {self.random_effects.shape}")
        if len(self.design) != self.fixed_effects.size:
            raise ConfigurationError("one design matrix per fixed effect is required")
        for mat in self.design:
            if np.asarray(mat).shape != (self.n_states, self.n_states):
                raise ConfigurationError("design matrices must be n_states x n_states")

    @property
    def n_parameters(self) -> int:
        return self.fixed_effects.size + self.random_effects.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.fixed_effects, self.random_effects])

    @classmethod
    def from_vector(cls, theta: np.ndarray, n_states: int,
                    design: list[np.ndarray]) -> "MixedEffectsParams":
        theta = np.asarray(theta, dtype=float)
        n_fixed = len(design)
        return cls(n_states=n_states, random_effects=theta[n_fixed:],
                   fixed_effects=theta[:n_fixed], design=design)


def build_rate_matrix(params: MixedEffectsParams) -> np.ndarray:
    """Exponentiate the log-linear predictor into a generator matrix."""
    n = params.n_states
    log_rates = np.zeros((n, n))
    flat = np.zeros((n, n))
    pairs = offdiag_indices(n)
    for (d, e), value in zip(pairs, params.random_effects):
        log_rates[d, e] = value
    for coef, mat in zip(params.fixed_effects, params.design):
        log_rates += coef * np.asarray(mat, dtype=float)
    mask = ~np.eye(n, dtype=bool)
    with np.errstate(over="ignore"):
        flat[mask] = np.exp(log_rates[mask])
    if not np.all(np.isfinite(flat)):
        raise NumericError("rate overflow: log-linear predictor too large")
    np.fill_diagonal(flat, 0.0)
    np.fill_diagonal(flat, -flat.sum(axis=1))
    return flat


def matrix_exp(generator: np.ndarray, t: float) -> np.ndarray:
    """Transition probabilities ``exp(t * generator)`` by scaling and squaring.

    The scaled matrix is pushed well below unit norm (three extra halvings
    past the usual threshold), a degree-13 series is evaluated by Horner's
    rule, and the result is squared back up.  Tiny negative entries from
    roundoff are clamped to zero.
    """
    generator = np.asarray(generator, dtype=float)
    n = generator.shape[0]
    if generator.ndim != 2 or generator.shape != (n, n):
        raise ConfigurationError("generator must be square")
    if n > MAX_STATES:
        raise ConfigurationError(f"state space capped at {MAX_STATES} for dense exponentials")
    if t < 0:
        raise ConfigurationError(f"elapsed time must be nonnegative, got {t}")
    scaled = t * generator
    norm = float(np.abs(scaled).sum(axis=0).max())
    squarings = int(math.ceil(math.log2(max(1.0, norm)))) + 3
    base = scaled / (2.0 ** squarings)
    eye = np.eye(n)
    result = eye.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(_TAYLOR_DEGREE, 0, -1):
            result = eye + (base @ result) / k
        for _ in range(squarings):
            result = result @ result
    result = np.maximum(result, 0.0)
    # Squaring amplifies roundoff once the generator norm is astronomical;
    # refuse results that have stopped being transition probabilities.
    if (not np.all(np.isfinite(result))
            or float(np.max(np.abs(result.sum(axis=1) - 1.0))) > _ROW_SUM_TOL):
        raise NumericError("transition probabilities overflowed; generator norm too large")
    return result


def directional_derivative_series(generator: np.ndarray, direction: np.ndarray,
                                  t: float, max_order: int = EXACT_SERIES_ORDER) -> np.ndarray:
    """Derivative of ``exp(t * generator)`` along a generator perturbation.

    Uses the commutator recursion ``B_0 = direction``,
    ``B_{i+1} = B_i @ Q - Q @ B_i`` with coefficients ``t^(i+1) / (i+1)!``,
    premultiplied by the exponential itself.  For a direction commuting with
    the generator every term past the first vanishes exactly.
    """
    if max_order < 0:
        raise ConfigurationError("max_order must be nonnegative")
    generator = np.asarray(generator, dtype=float)
    term = np.asarray(direction, dtype=float).copy()
    accum = np.zeros_like(term)
    coeff = t
    with np.errstate(over="ignore", invalid="ignore"):
        for order in range(max_order + 1):
            accum += coeff * term
            if order < max_order:
                term = term @ generator - generator @ term
                coeff *= t / (order + 2)
    if not np.all(np.isfinite(accum)):
        raise NumericError("directional derivative series overflowed")
    return matrix_exp(generator, t) @ accum


def first_order_directional(generator: np.ndarray, direction: np.ndarray,
                            t: float) -> np.ndarray:
    """Leading term of the derivative series: ``t * exp(t Q) @ direction``."""
    return t * (matrix_exp(generator, t) @ np.asarray(direction, dtype=float))


@dataclass
class CtmcObservations:
    """Aggregated transition counts: (elapsed time, start, end, count) records.

    States are labeled 1..n_states, matching the on-disk format.
    """

    time: np.ndarray
    start: np.ndarray
    end: np.ndarray
    count: np.ndarray

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.start = np.asarray(self.start, dtype=int)
        self.end = np.asarray(self.end, dtype=int)
        self.count = np.asarray(self.count, dtype=int)
        shape = self.time.shape
        if any(arr.shape != shape for arr in (self.start, self.end, self.count)):
            raise ConfigurationError("observation columns must share a length")
        if np.any(self.time < 0):
            raise ConfigurationError("elapsed times must be nonnegative")
        if np.any(self.count < 1):
            raise ConfigurationError("counts must be positive")
        if np.any(self.start < 1) or np.any(self.end < 1):
            raise ConfigurationError("states are labeled from 1")

    @property
    def n_records(self) -> int:
        return self.time.size


def _grouped_by_time(obs: CtmcObservations):
    order = np.argsort(obs.time, kind="stable")
    for t in np.unique(obs.time):
        idx = order[obs.time[order] == t]
        yield float(t), obs.start[idx] - 1, obs.end[idx] - 1, obs.count[idx]


def ctmc_loglik(params: MixedEffectsParams, obs: CtmcObservations) -> float:
    """Sum of count-weighted log transition probabilities.

    A record with zero probability under the model sends the value to
    ``-inf`` rather than raising, since samplers treat that as a rejection.
    """
    if np.any(obs.start > params.n_states) or np.any(obs.end > params.n_states):
        raise ConfigurationError("observation states exceed n_states")
    rates = build_rate_matrix(params)
    total = 0.0
    for t, start, end, count in _grouped_by_time(obs):
        probs = matrix_exp(rates, t)[start, end]
        if np.any(probs <= 0.0):
            return -np.inf
        total += float(np.dot(count, np.log(probs)))
    return total


def _direction_matrices(params: MixedEffectsParams, rates: np.ndarray) -> np.ndarray:
    """Generator-tangent direction per parameter, fixed effects first.

    Each direction perturbs the off-diagonal rates multiplicatively and
    compensates the diagonal so that row sums stay zero.
    """
    n = params.n_states
    offdiag = rates.copy()
    np.fill_diagonal(offdiag, 0.0)
    directions = np.empty((params.n_parameters, n, n))
    for p, mat in enumerate(params.design):
        weighted = offdiag * np.asarray(mat, dtype=float)
        np.fill_diagonal(weighted, 0.0)
        directions[p] = weighted - np.diag(weighted.sum(axis=1))
    base = params.fixed_effects.size
    for m, (d, e) in enumerate(offdiag_indices(n)):
        mat = np.zeros((n, n))
        mat[d, e] = offdiag[d, e]
        mat[d, d] = -offdiag[d, e]
        directions[base + m] = mat
    return directions


def ctmc_loglik_grad(params: MixedEffectsParams, obs: CtmcObservations,
                     mode: str = "exact",
                     max_order: int = EXACT_SERIES_ORDER) -> np.ndarray:
    """Gradient of the log likelihood in the model's parameters.

    ``mode="exact"`` evaluates the commutator series to ``max_order``;
    ``mode="first_order"`` keeps only the leading term, the cheap surrogate.
    The parameter order matches :meth:`MixedEffectsParams.as_vector`.
    """
    if mode not in ("exact", "first_order"):
        raise ConfigurationError(f"unknown gradient mode {mode!r}")
    rates = build_rate_matrix(params)
    directions = _direction_matrices(params, rates)
    n_params = directions.shape[0]

    commutators = None
    if mode == "exact":
        commutators = np.empty((n_params, max_order + 1, *rates.shape))
        commutators[:, 0] = directions
        with np.errstate(over="ignore", invalid="ignore"):
            for order in range(max_order):
                prev = commutators[:, order]
                commutators[:, order + 1] = prev @ rates - rates @ prev
        if not np.all(np.isfinite(commutators)):
            raise NumericError("directional derivative series overflowed")

    grad = np.zeros(n_params)
    for t, start, end, count in _grouped_by_time(obs):
        trans = matrix_exp(rates, t)
        probs = trans[start, end]
        if np.any(probs <= 0.0):
            raise NumericError("zero transition probability; gradient undefined")
        weight = np.zeros_like(rates)
        np.add.at(weight, (start, end), count / probs)
        cotangent = trans.T @ weight
        if mode == "first_order":
            grad += t * np.einsum("de,mde->m", cotangent, directions)
        else:
            coeffs = np.array([t ** (i + 1) / math.factorial(i + 1)
                               for i in range(max_order + 1)])
            series = np.tensordot(coeffs, commutators, axes=([0], [1]))
            grad += np.einsum("de,mde->m", cotangent, series)
    return grad


def posterior_target(obs: CtmcObservations, n_states: int,
                     design: list[np.ndarray] | None = None,
                     prior_sd: float = 1.0,
                     max_order: int = EXACT_SERIES_ORDER) -> TargetModel:
    """Posterior over the stacked parameter vector with i.i.d. normal priors.

    The gradient field uses the exact series; the surrogate field uses the
    first-order rule, so the same target drives both HMC variants.
    """
    design = design or []
    if not prior_sd > 0:
        raise ConfigurationError("prior_sd must be positive")
    prior_var = prior_sd ** 2

    def unpack(theta):
        return MixedEffectsParams.from_vector(theta, n_states, design)

    def log_density_ratio(theta):
        theta = np.asarray(theta, dtype=float)
        try:
            ll = ctmc_loglik(unpack(theta), obs)
        except NumericError:
            return -np.inf
        return ll - 0.5 * float(theta @ theta) / prior_var

    def gradient(theta):
        theta = np.asarray(theta, dtype=float)
        return ctmc_loglik_grad(unpack(theta), obs, mode="exact",
                                max_order=max_order) - theta / prior_var

    def surrogate_gradient(theta):
        theta = np.asarray(theta, dtype=float)
        return ctmc_loglik_grad(unpack(theta), obs, mode="first_order") - theta / prior_var

    return TargetModel(log_density_ratio=log_density_ratio,
                       reference=LebesgueReference(),
                       gradient=gradient,
                       surrogate_gradient=surrogate_gradient)


def sample_transitions(params: MixedEffectsParams, times, draws_per_time: int,
                       seed: int, initial_pmf=None) -> CtmcObservations:
    """Synthesize aggregated transition counts at the given elapsed times."""
    if draws_per_time < 1:
        raise ConfigurationError("draws_per_time must be positive")
    n = params.n_states
    rng = rng_stream(seed, "ctmc-data")
    pmf = (np.full(n, 1.0 / n) if initial_pmf is None
           else np.asarray(initial_pmf, dtype=float))
    rates = build_rate_matrix(params)
    rows: dict[tuple[float, int, int], int] = {}
    for t in times:
        trans = matrix_exp(rates, float(t))
        trans = trans / trans.sum(axis=1, keepdims=True)
        starts = rng.choice(n, size=draws_per_time, p=pmf)
        for s in starts:
            e = int(rng.choice(n, p=trans[s]))
            key = (float(t), int(s) + 1, e + 1)
            rows[key] = rows.get(key, 0) + 1
    keys = sorted(rows)
    return CtmcObservations(
        time=np.array([k[0] for k in keys]),
        start=np.array([k[1] for k in keys]),
        end=np.array([k[2] for k in keys]),
        count=np.array([rows[k] for k in keys]),
    )


def write_observations_csv(obs: CtmcObservations, path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "start", "end", "count"])
        for i in range(obs.n_records):
            writer.writerow([format(obs.time[i], ".17g"), obs.start[i],
                             obs.end[i], obs.count[i]])


def read_observations_csv(path) -> CtmcObservations:
    times, starts, ends, counts = [], [], [], []
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        expected = {"t", "start", "end", "count"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ConfigurationError(
                f"expected columns {sorted(expected)}, got {reader.fieldnames}")
        for row in reader:
            times.append(float(row["t"]))
            starts.append(int(row["start"]))
            ends.append(int(row["end"]))
            counts.append(int(row["count"]))
    return CtmcObservations(time=np.array(times), start=np.array(starts),
                            end=np.array(ends), count=np.array(counts))
