"""Command-line entry point: ``factorial-ca <command> ...``.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure
(singular covariate design), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .asymptotics import DEFAULT_EQUAL_TOL, asym_var_effects, check_proportions
from .design import build_model_matrix, k_from_arms, treatment_combinations
from .errors import ConditioningWarning, InvalidArgumentError, SingularMatrixError
from .estimation import estimate_from_observed
from .montecarlo import PopulationRecipe, run_study, synthesize_population
from .population import moments
from .randomization import check_counts

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SEED_ENV = "FACTORIAL_CA_SEED"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_design(args) -> int:
    m = build_model_matrix(args.k)
    if args.format == "csv":
        _emit(io.design_csv(m), args.out)
    else:
        _emit(io.dumps(io.design_dict(m)), args.out)
    return EXIT_OK


def _recipe_from_args(args) -> PopulationRecipe:
    if args.recipe:
        data = json.loads(Path(args.recipe).read_text(encoding="utf-8"))
        return PopulationRecipe(**{k: io._tupled(v) for k, v in data.items()})
    if args.n is None or args.k is None:
        raise InvalidArgumentError("synth needs --recipe FILE or both --n and --k")
    coef = io._tupled(json.loads(args.coef)) if args.coef else None
    return PopulationRecipe(
        n=args.n,
        k=args.k,
        p=args.p,
        seed=args.seed,
        coef=coef,
        noise=args.noise,
        covariates=args.covariates,
    )


def cmd_synth(args) -> int:
    pop = synthesize_population(_recipe_from_args(args))
    if args.format == "csv":
        _emit(io.population_csv(pop), args.out)
    else:
        _emit(io.dumps(io.population_dict(pop)), args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    table = io.read_observed(args.table, args.k)
    m = build_model_matrix(args.k)
    a = table.assignment()
    rb, ca = estimate_from_observed(m, table.y_obs, table.x, a)
    notes = []
    if ca is None:
        notes.append("no covariates in table: only the unadjusted estimator is reported")
    arms = []
    for z in treatment_combinations(m):
        j = z.index - 1
        rec = {
            "arm": z.index,
            "levels": list(z.levels),
            "n": int(a.counts[j]),
            "p_hat": a.counts[j] / a.n,
            "ybar_obs": rb.ybar_used[j],
        }
        if ca is not None:
            rec["beta_hat"] = ca.beta_hat[:, j].tolist()
            rec["ybar_ca"] = ca.ybar_used[j]
        arms.append(rec)
    effects = []
    for l in range(1, m.j):
        rec = {"effect": l, "label": m.label(l), "tau_rb": rb.tau[l - 1]}
        if ca is not None:
            rec["tau_ca"] = ca.tau[l - 1]
        effects.append(rec)
    report = {
        "k": m.k,
        "n": a.n,
        "p": table.x.shape[1],
        "arms": arms,
        "effects": effects,
        "notes": notes,
    }
    _emit(io.dumps(report), args.out)
    return EXIT_OK


def cmd_theory(args) -> int:
    pop = io.read_population(args.population, args.k)
    m = build_model_matrix(k_from_arms(pop.j))
    if (args.counts is None) == (args.proportions is None):
        raise InvalidArgumentError("give exactly one of --counts or --proportions")
    if args.counts is not None:
        if len(args.counts) != pop.j:
            raise InvalidArgumentError(f"{len(args.counts)} counts for {pop.j} arms")
        p = np.asarray(check_counts(pop.n, args.counts), dtype=float) / pop.n
    else:
        p = check_proportions(args.proportions, pop.j)
    report = asym_var_effects(moments(pop), p, m, tol=args.tol, n=pop.n)
    _emit(io.dumps(report.to_dict()), args.out)
    return EXIT_OK


def cmd_mc(args) -> int:
    env_seed = os.environ.get(SEED_ENV)
    cfg = io.load_config(
        args.config, seed=args.seed, default_seed=int(env_seed) if env_seed else None
    )
    if args.workers:
        cfg = replace(cfg, workers=args.workers)
    result = run_study(cfg)
    if args.table:
        print(result.table(), file=sys.stderr)
    _emit(io.dumps(result.to_dict()), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factorial-ca",
        description="Covariate adjustment for 2^K factorial designs under complete randomization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def k_arg(value: str) -> int:
        k = int(value)
        if not 1 <= k <= 16:
            raise argparse.ArgumentTypeError(f"k must be in 1..16, got {k}")
        return k

    p = sub.add_parser("design", help="print the model matrix")
    p.add_argument("--k", type=k_arg, required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("synth", help="generate a synthetic potential-outcome population")
    p.add_argument("--recipe", help="JSON recipe file")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=k_arg)
    p.add_argument("--p", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coef", help="J x p coefficient matrix as a JSON list of lists")
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--covariates", choices=("normal", "uniform"), default="normal")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="estimate effects from an observed-data table")
    p.add_argument("table", help="CSV with columns unit,arm,y_obs,x_1..x_p")
    p.add_argument("--k", type=k_arg, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("theory", help="asymptotic variances for a full potential-outcome table")
    p.add_argument("population", help="CSV (y_1..y_J, x_1..x_p) or JSON population")
    p.add_argument("--k", type=k_arg)
    p.add_argument("--counts", type=int, nargs="+")
    p.add_argument("--proportions", type=float, nargs="+")
    p.add_argument("--tol", type=float, default=DEFAULT_EQUAL_TOL)
    p.add_argument("--out")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("mc", help="run a Monte Carlo (or exhaustive) study")
    p.add_argument("config", help="JSON or TOML study config")
    p.add_argument("--seed", type=int, help=f"overrides the config seed (fallback: ${SEED_ENV})")
    p.add_argument("--workers", type=int)
    p.add_argument("--table", action="store_true", help="also print a summary table to stderr")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mc)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConditioningWarning)
        try:
            code = args.func(args)
        except SingularMatrixError as err:
            print(f"error: {err}", file=sys.stderr)
            code = EXIT_NUMERIC
        except (InvalidArgumentError, ValueError, TypeError) as err:
            print(f"error: {err}", file=sys.stderr)
            code = EXIT_USAGE
        except OSError as err:
            print(f"error: {err}", file=sys.stderr)
            code = EXIT_IO
    for w in caught:
        if issubclass(w.category, ConditioningWarning):
            print(f"warning: {w.message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
