"""Command-line experiment driver.

Verbs: ``run`` executes chains from a JSON config and writes trace CSVs plus
an aggregated diagnostics JSON; ``sweep`` evaluates a grid of sampler
settings and ranks them by jumping distance per second; ``check`` runs a
named property suite.  Exit codes: 0 success, 2 invalid configuration,
3 numeric divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import advection, bmds, ctmc
from .adaptation import tune_step_size
from .checks import run_suite
from .diagnostics import compute_report, report_to_dict
from .discrete import discrete_mh_spec
from .errors import ConfigurationError, DivergenceError, NumericError
from .hilbert import power_spectrum, sample_prior
from .rng import rng_stream
from .samplers import SamplerConfig, build_sampler, run_chain
from .targets import flat_hilbert_target, gaussian_mixture_1d, standard_gaussian

OUTPUT_DIR_ENV = "INVOLUTE_OUTPUT_DIR"
HILBERT_KINDS = ("pcn", "inf_hmc", "mpcn")

_CONFIG_KEYS = {"version", "target", "sampler", "n_iter", "burn_in",
                "n_chains", "seed", "output", "grid"}
_OUTPUT_KEYS = {"trace_prefix", "diagnostics", "sweep"}
_SAMPLER_KEYS = {"kind", "step_size", "n_steps", "proposal_count", "rho",
                 "mass", "delta_a", "delta_b", "target_accept"}
_TARGET_KEYS = {
    "gaussian": {"kind", "dim", "decay"},
    "gaussian_mixture": {"kind", "centers", "sd", "weights"},
    "ctmc": {"kind", "n_states", "data_csv", "times", "draws_per_time",
             "data_seed", "prior_sd"},
    "bmds": {"kind", "n_items", "n_dims", "sigma2", "bandwidth", "data_csv",
             "data_seed", "prior_var"},
    "advection_diffusion": {"kind", "scenario_json", "data_csv"},
    "discrete_toy": {"kind", "pmf"},
}


def _reject_unknown(obj: dict, allowed: set, context: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{context} must be a JSON object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigurationError(f"unknown {context} keys: {sorted(unknown)}")


@dataclasses.dataclass
class ExperimentConfig:
    target: dict
    sampler: SamplerConfig
    n_iter: int
    burn_in: int
    n_chains: int
    seed: int
    output: dict
    grid: list


def load_config(path) -> ExperimentConfig:
    try:
        payload = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    _reject_unknown(payload, _CONFIG_KEYS, "config")
    if payload.get("version") != 1:
        raise ConfigurationError("config version must be 1")
    for key in ("target", "sampler", "n_iter"):
        if key not in payload:
            raise ConfigurationError(f"config requires {key!r}")

    target = payload["target"]
    if not isinstance(target, dict) or "kind" not in target:
        raise ConfigurationError("target must be an object with a 'kind'")
    kind = target["kind"]
    if kind not in _TARGET_KEYS:
        raise ConfigurationError(
            f"unknown target kind {kind!r}; choose from {sorted(_TARGET_KEYS)}")
    _reject_unknown(target, _TARGET_KEYS[kind], f"target[{kind}]")

    samp = payload["sampler"]
    _reject_unknown(samp, _SAMPLER_KEYS, "sampler")
    if "kind" not in samp:
        raise ConfigurationError("sampler requires 'kind'")
    sampler = SamplerConfig(**samp)

    n_iter = int(payload["n_iter"])
    burn_in = int(payload.get("burn_in", 0))
    n_chains = int(payload.get("n_chains", 1))
    seed = int(payload.get("seed", 0))
    if burn_in < 0 or n_iter <= burn_in:
        raise ConfigurationError("need n_iter > burn_in >= 0")
    if n_chains < 1:
        raise ConfigurationError("n_chains must be at least 1")

    output = payload.get("output", {})
    _reject_unknown(output, _OUTPUT_KEYS, "output")
    grid = payload.get("grid", [])
    if not isinstance(grid, list):
        raise ConfigurationError("grid must be a list of sampler overrides")
    for entry in grid:
        _reject_unknown(entry, _SAMPLER_KEYS - {"kind"}, "grid entry")
    return ExperimentConfig(target=target, sampler=sampler, n_iter=n_iter,
                            burn_in=burn_in, n_chains=n_chains, seed=seed,
                            output=output, grid=grid)


def _build_target(spec: dict, sampler_kind: str):
    """Resolve a target spec to (TargetModel | KernelSpec, initial-state fn)."""
    kind = spec["kind"]
    if kind == "gaussian":
        dim = int(spec.get("dim", 1))
        if dim < 1:
            raise ConfigurationError("gaussian dim must be positive")
        if sampler_kind in HILBERT_KINDS:
            spectrum = power_spectrum(dim, decay=float(spec.get("decay", 1.0)))
            return flat_hilbert_target(spectrum), lambda rng: sample_prior(spectrum, rng)
        return standard_gaussian(dim), lambda rng: np.zeros(dim)

    if kind == "gaussian_mixture":
        centers = np.asarray(spec.get("centers", [-2.0, 2.0]), dtype=float)
        weights = spec.get("weights")
        target = gaussian_mixture_1d(centers, sd=float(spec.get("sd", 1.0)),
                                     weights=None if weights is None
                                     else np.asarray(weights, dtype=float))
        return target, lambda rng: np.zeros(1)

    if kind == "ctmc":
        n_states = int(spec.get("n_states", 3))
        if "data_csv" in spec:
            obs = ctmc.read_observations_csv(spec["data_csv"])
        else:
            data_seed = int(spec.get("data_seed", 1))
            truth = ctmc.MixedEffectsParams(
                n_states=n_states,
                random_effects=0.8 * rng_stream(data_seed, "ctmc-truth")
                .standard_normal(n_states * (n_states - 1)))
            obs = ctmc.sample_transitions(
                truth, times=spec.get("times", [0.5, 1.0]),
                draws_per_time=int(spec.get("draws_per_time", 50)), seed=data_seed)
        target = ctmc.posterior_target(obs, n_states,
                                       prior_sd=float(spec.get("prior_sd", 1.0)))
        dim = n_states * (n_states - 1)
        return target, lambda rng: np.zeros(dim)

    if kind == "bmds":
        n_items = int(spec.get("n_items", 10))
        n_dims = int(spec.get("n_dims", 2))
        sigma2 = float(spec.get("sigma2", 0.04))
        if "data_csv" in spec:
            data = bmds.read_dissimilarities_csv(spec["data_csv"])
            if data.n_items != n_items:
                raise ConfigurationError(
                    f"data has {data.n_items} items, config says {n_items}")
        else:
            data_seed = int(spec.get("data_seed", 1))
            truth = rng_stream(data_seed, "bmds-truth").standard_normal(
                (n_items, n_dims))
            data = bmds.sample_dissimilarities(truth, sigma2, seed=data_seed)
        bandwidth = spec.get("bandwidth")
        target = bmds.posterior_target(
            data, n_dims, sigma2,
            prior_var=float(spec.get("prior_var", 4.0)),
            bandwidth=None if bandwidth is None else int(bandwidth))
        dim = n_items * n_dims
        return target, lambda rng: rng.standard_normal(dim)

    if kind == "advection_diffusion":
        scenario = (advection.read_scenario_json(spec["scenario_json"])
                    if "scenario_json" in spec else advection.default_scenario())
        obs = (advection.read_observations_csv(spec["data_csv"], scenario.sigma)
               if "data_csv" in spec else advection.generate_observations(scenario))
        target, spectrum = advection.posterior_target(scenario, obs)
        return target, lambda rng: sample_prior(spectrum, rng)

    if kind == "discrete_toy":
        pmf = np.asarray(spec.get("pmf", [0.2, 0.3, 0.5]), dtype=float)
        if sampler_kind != "mh":
            raise ConfigurationError("discrete_toy requires sampler kind 'mh'")
        proposal = np.full((pmf.size, pmf.size), 1.0 / pmf.size)
        spec_kernel = discrete_mh_spec(pmf, proposal)
        return spec_kernel, lambda rng: np.zeros(1)

    raise ConfigurationError(f"unknown target kind {kind!r}")


def _chain_rows(initial, chains) -> list[tuple[int, int, np.ndarray]]:
    """Flatten (chosen_index, state) pairs from consecutive chain segments.

    Each segment's state array starts with the state the segment was run
    from, so row 0 duplicates the previous row and is skipped; chosen[k]
    then pairs with the state after step k.
    """
    rows = [(-1, np.asarray(initial, dtype=float))]
    for segment in chains:
        for chosen, state in zip(segment[0], segment[1][1:]):
            rows.append((int(chosen), np.asarray(state, dtype=float)))
    return rows


def _run_one_chain(config: ExperimentConfig, target, initial_fn,
                   sampler: SamplerConfig, chain_index: int):
    """Run warmup (optionally adaptive) plus production for one chain."""
    init_rng = rng_stream(config.seed, "init", chain_index)
    initial = np.asarray(initial_fn(init_rng), dtype=float)
    is_kernel = not hasattr(target, "log_density_ratio")

    if is_kernel:
        spec = target
        if sampler.target_accept is not None:
            raise ConfigurationError("discrete_toy does not support adaptation")
    elif sampler.target_accept is not None:
        if config.burn_in < 1:
            raise ConfigurationError("step-size adaptation requires burn_in >= 1")
        warmup = tune_step_size(
            lambda s: build_sampler(target, sampler, step_size=s),
            initial, sampler.step_size, config.burn_in, sampler.target_accept,
            rng_stream(config.seed, "warmup", chain_index))
        spec = build_sampler(target, sampler, step_size=warmup.step_size)
        production = run_chain(warmup.final_state, spec,
                               config.n_iter - config.burn_in,
                               rng=rng_stream(config.seed, "chain", chain_index))
        rows = _chain_rows(initial, [
            (warmup.chosen_indices, warmup.states),
            (production.chosen_indices, production.states)])
        return rows, production
    else:
        spec = build_sampler(target, sampler)

    full = run_chain(initial, spec, config.n_iter,
                     rng=rng_stream(config.seed, "chain", chain_index))
    rows = _chain_rows(initial, [(full.chosen_indices, full.states)])
    return rows, full.tail(config.burn_in)


def _write_trace_csv(path: Path, rows) -> None:
    dim = rows[0][1].size
    header = "iter,accepted,chosen_index," + ",".join(
        f"comp_{i}" for i in range(dim))
    lines = [header]
    for it, (chosen, state) in enumerate(rows):
        accepted = 1 if chosen > 0 else 0
        comps = ",".join(format(x, ".17g") for x in state)
        lines.append(f"{it},{accepted},{chosen},{comps}")
    path.write_text("\n".join(lines) + "\n")


def _output_path(config: ExperimentConfig, key: str, default: str) -> Path:
    base = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    raw = Path(config.output.get(key, default))
    path = raw if raw.is_absolute() else base / raw
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> None:
    target, initial_fn = _build_target(config.target, config.sampler.kind)

    def work(i):
        return _run_one_chain(config, target, initial_fn, config.sampler, i)

    if jobs > 1 and config.n_chains > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, range(config.n_chains)))
    else:
        results = [work(i) for i in range(config.n_chains)]

    prefix = _output_path(config, "trace_prefix", "trace")
    reports = []
    for i, (rows, production) in enumerate(results):
        _write_trace_csv(prefix.parent / f"{prefix.name}_{i}.csv", rows)
        reports.append(report_to_dict(compute_report(production)))
    diag_path = _output_path(config, "diagnostics", "diagnostics.json")
    diag_path.write_text(json.dumps({"version": 1, "chains": reports}, indent=2) + "\n")


def run_sweep(config: ExperimentConfig, jobs: int = 1) -> None:
    if not config.grid:
        raise ConfigurationError("sweep requires a non-empty 'grid'")
    target, initial_fn = _build_target(config.target, config.sampler.kind)
    param_keys = sorted({key for entry in config.grid for key in entry})

    def evaluate(entry):
        sampler = dataclasses.replace(config.sampler, **entry)
        reports = []
        for i in range(config.n_chains):
            _, production = _run_one_chain(config, target, initial_fn, sampler, i)
            reports.append(compute_report(production))
        return sampler, {
            "msjd_per_second": float(np.median([r.msjd_per_second for r in reports])),
            "min_ess_per_second": float(np.median(
                [r.min_ess / r.wall_seconds for r in reports])),
            "acceptance_rate": float(np.median([r.acceptance_rate for r in reports])),
        }

    rows = []
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        futures = [(entry, pool.submit(evaluate, entry)) for entry in config.grid]
        for entry, future in futures:
            try:
                sampler, metrics = future.result()
                rows.append({"status": "ok", "sampler": sampler, **metrics,
                             "entry": entry})
            except (ConfigurationError, NumericError, DivergenceError) as exc:
                rows.append({"status": f"error: {exc}", "sampler": None,
                             "msjd_per_second": float("nan"),
                             "min_ess_per_second": float("nan"),
                             "acceptance_rate": float("nan"), "entry": entry})

    rows.sort(key=lambda r: (r["status"] != "ok",
                             -(r["msjd_per_second"]
                               if np.isfinite(r["msjd_per_second"]) else -np.inf)))
    path = _output_path(config, "sweep", "sweep.csv")
    header = (["status", "best"] + param_keys
              + ["acceptance_rate", "min_ess_per_second", "msjd_per_second"])
    lines = [",".join(header)]
    for rank, row in enumerate(rows):
        best = "yes" if rank == 0 and row["status"] == "ok" else ""
        cells = [row["status"].replace(",", ";"), best]
        for key in param_keys:
            value = (getattr(row["sampler"], key) if row["sampler"] is not None
                     else row["entry"].get(key, ""))
            cells.append("" if value is None else
                         format(value, ".17g") if isinstance(value, float) else str(value))
        for key in ("acceptance_rate", "min_ess_per_second", "msjd_per_second"):
            cells.append(format(row[key], ".17g"))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def run_check(suite: str) -> int:
    try:
        results = run_suite(suite)
    except KeyError as exc:
        print(exc.args[0], file=sys.stderr)
        return 2
    all_passed = True
    for result in results:
        flag = "PASS" if result.passed else "FAIL"
        all_passed &= result.passed
        print(f"{flag}  {result.name}: {result.detail}")
    return 0 if all_passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="involute", description="Involutive MCMC experiment driver")
    sub = parser.add_subparsers(dest="verb", required=True)

    run_p = sub.add_parser("run", help="run chains from a JSON config")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--jobs", type=int, default=1)

    sweep_p = sub.add_parser("sweep", help="evaluate a sampler-parameter grid")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--jobs", type=int, default=1)

    check_p = sub.add_parser("check", help="run a property-check suite")
    check_p.add_argument("suite")

    args = parser.parse_args(argv)
    try:
        if args.verb == "run":
            run_experiment(load_config(args.config), jobs=args.jobs)
            return 0
        if args.verb == "sweep":
            run_sweep(load_config(args.config), jobs=args.jobs)
            return 0
        return run_check(args.suite)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        where = "" if exc.step_index is None else f" at step {exc.step_index}"
        print(f"numeric divergence{where}: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
