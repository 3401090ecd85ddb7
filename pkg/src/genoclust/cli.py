"""Command-line entry point: ``genoclust {fit,select,simulate,reproduce}``.

Exit codes: 0 success, 2 input error, 3 numerical failure. Output files are
written only once every computation has finished.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .data import GenotypeDataset, GenotypeFormatError, format_genotypes, read_genotypes
from .em import EmConfig, FitResult, e_step, map_assign
from .selection import FitCache, SelectionConfig, select_model, stepwise_select_S
from .simulate import ScenarioError, SimScenario, bundled_scenario, load_scenario, simulate_dataset

logger = logging.getLogger("genoclust")

EXIT_INPUT = 2
EXIT_NUMERIC = 3


class InputError(Exception):
    pass


class NumericError(Exception):
    pass


def _add_em_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--restarts", type=int, default=50, help="EM restarts per model (default 50)")
    p.add_argument("--epsilon", type=float, default=1e-6, help="log-likelihood change to stop EM")
    p.add_argument("--max-iter", type=int, default=500, help="EM iteration cap per restart")
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0, or the scenario seed)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genoclust", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one number of clusters")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-k", "--k", type=int, required=True, dest="k")
    p.add_argument("--loci", default=None, help="comma-separated 1-based clustering loci")
    p.add_argument("--no-selection", action="store_true", help="cluster on all loci")
    _add_em_flags(p)

    p = sub.add_parser("select", help="choose K and the clustering loci by BIC")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--no-selection", action="store_true", help="keep all loci, choose K only")
    _add_em_flags(p)

    p = sub.add_parser("simulate", help="write replicate datasets from a scenario")
    p.add_argument("--scenario", required=True, help="YAML file or bundled name")
    p.add_argument("--out", required=True)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--n", type=int, default=None, help="override the scenario sample size")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("reproduce", help="true-model selection rate against sample size")
    p.add_argument("--scenario", default="consistency", help="YAML file or bundled name")
    p.add_argument("--out", required=True)
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--n-grid", default="100:400:50", help="start:stop:step or comma list")
    p.add_argument("--kmax", type=int, default=4)
    p.add_argument("--no-selection", action="store_true")
    _add_em_flags(p)
    return parser


def _em_config(args, default_seed: int = 0) -> EmConfig:
    try:
        return EmConfig(
            restarts=args.restarts,
            epsilon=args.epsilon,
            max_iterations=args.max_iter,
            seed=default_seed if args.seed is None else args.seed,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _load_dataset(path: str) -> GenotypeDataset:
    try:
        return read_genotypes(path)
    except FileNotFoundError:
        raise InputError(f"input file not found: {path}") from None
    except GenotypeFormatError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_scenario(name: str) -> SimScenario:
    try:
        if Path(name).is_file():
            return load_scenario(name)
        return bundled_scenario(name)
    except FileNotFoundError:
        raise InputError(f"scenario not found: {name}") from None
    except ScenarioError as exc:
        raise InputError(f"scenario {name}: {exc}") from exc


def _parse_loci(text: str, L: int) -> tuple[int, ...]:
    try:
        loci = sorted({int(t) - 1 for t in text.split(",") if t.strip()})
    except ValueError:
        raise InputError(f"--loci must be comma-separated integers, got {text!r}") from None
    if not loci or loci[0] < 0 or loci[-1] >= L:
        raise InputError(f"--loci must name loci between 1 and {L}")
    return tuple(loci)


def _parse_grid(text: str) -> list[int]:
    try:
        if ":" in text:
            start, stop, step = (int(x) for x in text.split(":"))
            grid = list(range(start, stop + 1, step))
        else:
            grid = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"invalid --n-grid {text!r}") from None
    if not grid or min(grid) < 1:
        raise InputError("--n-grid must list positive sample sizes")
    return grid


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def fit_report(ds: GenotypeDataset, fit: FitResult) -> dict:
    """JSON-ready description of one fitted model with raw allele codes."""
    spec, theta = fit.spec, fit.params
    Sc = spec.complement(ds.n_loci)
    alpha = {}
    for j, l in enumerate(spec.S):
        A = len(ds.index.raw_codes[l])
        alpha[ds.locus_names[l]] = {
            "alleles": list(ds.index.raw_codes[l]),
            "frequencies": theta.alpha[:, j, :A].tolist(),
        }
    beta = {}
    for j, l in enumerate(Sc):
        A = len(ds.index.raw_codes[l])
        beta[ds.locus_names[l]] = {
            "alleles": list(ds.index.raw_codes[l]),
            "frequencies": theta.beta[j, :A].tolist(),
        }
    return {
        "K": spec.K,
        "S": [l + 1 for l in spec.S],
        "S_names": [ds.locus_names[l] for l in spec.S],
        "loglik": fit.loglik,
        "bic": fit.bic,
        "dimension": fit.dimension,
        "n": fit.n,
        "pi": theta.pi.tolist(),
        "alpha": alpha,
        "beta": beta,
        "convergence": {
            "restarts": fit.restarts_run,
            "iterations": fit.iterations,
            "converged": fit.converged,
            "empty_cluster": fit.empty_cluster,
            "clamped_frequencies": fit.clamped,
        },
    }


def _check_finite(fit: FitResult) -> None:
    if not (math.isfinite(fit.loglik) and math.isfinite(fit.bic)):
        raise NumericError(f"non-finite likelihood for K={fit.spec.K}, S={fit.spec.S}")


def _assignments_csv(ds: GenotypeDataset, fit: FitResult) -> str:
    z = map_assign(ds, fit.spec, fit.params)
    tau = e_step(ds, fit.spec, fit.params)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "cluster"] + [f"tau_{k + 1}" for k in range(fit.spec.K)])
    for ident, zi, row in zip(ds.ids, z, tau):
        w.writerow([ident, int(zi) + 1] + [repr(float(t)) for t in row])
    return buf.getvalue()


def _write_all(out: Path, files: dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        path = out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _em_summary(em: EmConfig) -> dict:
    return {
        "restarts": em.restarts,
        "epsilon": em.epsilon,
        "max_iterations": em.max_iterations,
        "freq_floor": em.freq_floor,
        "seed": em.seed,
    }


def cmd_fit(args) -> int:
    ds = _load_dataset(args.input)
    em = _em_config(args)
    if args.k < 1:
        raise InputError("-k must be >= 1")
    cache = FitCache(ds, em)
    if args.loci:
        if args.no_selection:
            raise InputError("--loci and --no-selection are mutually exclusive")
        S = _parse_loci(args.loci, ds.n_loci)
    elif args.no_selection:
        S = tuple(range(ds.n_loci))
    else:
        S = stepwise_select_S(ds, args.k, cache)[0]
    fit = cache.get(args.k, S)
    _check_finite(fit)
    report = {"model": fit_report(ds, fit), "em": _em_summary(em)}
    _write_all(Path(args.out), {
        "report.json": _json(report),
        "assignments.csv": _assignments_csv(ds, fit),
    })
    return 0


def selection_report(ds: GenotypeDataset, result, em: EmConfig, select_loci: bool) -> dict:
    return {
        "selected": {
            "K": result.K,
            "S": [l + 1 for l in result.S],
            "S_names": [ds.locus_names[l] for l in result.S],
            "s_applicable": result.s_applicable,
            "locus_selection": select_loci,
        },
        "k_max": result.k_max,
        "bic_table": result.bic_table(),
        "model": fit_report(ds, result.fit),
        "em": _em_summary(em),
    }


def _run_selection(ds: GenotypeDataset, kmax: int, select_loci: bool, em: EmConfig):
    if kmax < 1:
        raise InputError("--kmax must be >= 1")
    result = select_model(ds, SelectionConfig(kmax, select_loci, em=em))
    for fit in result.per_k.values():
        _check_finite(fit)
    return result


def cmd_select(args) -> int:
    ds = _load_dataset(args.input)
    em = _em_config(args)
    select_loci = not args.no_selection
    result = _run_selection(ds, args.kmax, select_loci, em)
    report = selection_report(ds, result, em, select_loci)
    if not select_loci:
        report["selected"].pop("S_names")
        report["selected"]["S"] = "all"
    _write_all(Path(args.out), {
        "report.json": _json(report),
        "assignments.csv": _assignments_csv(ds, result.fit),
        "trace.json": _json(result.trace()),
    })
    return 0


def truth_record(scenario: SimScenario, replicate: int, z: np.ndarray) -> dict:
    return {
        "replicate": replicate,
        "K0": scenario.K,
        "S0": [l + 1 for l in scenario.S0],
        "z": [int(v) + 1 for v in z],
        "scenario": scenario.to_dict(),
    }


def cmd_simulate(args) -> int:
    scenario = _load_scenario(args.scenario)
    changes = {}
    if args.replicates is not None:
        changes["replicates"] = args.replicates
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.n is not None:
        changes["n"] = args.n
    try:
        scenario = scenario.with_options(**changes)
    except ScenarioError as exc:
        raise InputError(str(exc)) from exc
    files = {}
    for r in range(scenario.replicates):
        ds, z = simulate_dataset(scenario, r)
        files[f"replicate_{r + 1:03d}.txt"] = format_genotypes(ds)
        files[f"replicate_{r + 1:03d}.truth.json"] = _json(truth_record(scenario, r, z))
    _write_all(Path(args.out), files)
    return 0


def cmd_reproduce(args) -> int:
    scenario = _load_scenario(args.scenario)
    if args.replicates < 1:
        raise InputError("--replicates must be >= 1")
    grid = _parse_grid(args.n_grid)
    seed = scenario.seed if args.seed is None else args.seed
    em = _em_config(args, default_seed=seed)
    select_loci = not args.no_selection
    true_S = scenario.S0 if select_loci else tuple(range(scenario.n_loci))
    files = {}
    rows = []
    curve = []
    for n in grid:
        sc = scenario.with_options(n=n, seed=seed, replicates=args.replicates)
        hits = 0
        for r in range(args.replicates):
            ds, z = simulate_dataset(sc, r)
            result = _run_selection(ds, args.kmax, select_loci, em)
            hit = result.K == scenario.K and result.S == true_S
            hits += hit
            rows.append([n, r + 1, result.K, " ".join(str(l + 1) for l in result.S), repr(result.fit.bic), int(hit)])
            files[f"reports/n{n}_rep{r + 1:03d}.json"] = _json(selection_report(ds, result, em, select_loci))
        curve.append([n, args.replicates, repr(hits / args.replicates)])
        logger.info("n=%d true-model rate %.2f", n, hits / args.replicates)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "replicates", "true_model_rate"])
    w.writerows(curve)
    files["curve.csv"] = buf.getvalue()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "replicate", "K", "S", "bic", "true_model"])
    w.writerows(rows)
    files["replicates.csv"] = buf.getvalue()
    _write_all(Path(args.out), files)
    return 0


COMMANDS = {"fit": cmd_fit, "select": cmd_select, "simulate": cmd_simulate, "reproduce": cmd_reproduce}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"genoclust: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"genoclust: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
