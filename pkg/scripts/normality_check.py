"""Shape of the standardized randomization distribution: skewness, excess kurtosis and KS.

    python3 scripts/normality_check.py --n 4096 --replicates 10000
"""

import argparse

from factorial_ca import NormalitySettings, PopulationRecipe, StudyConfig, run_study

COEF = ((1.0, 0.5), (2.0, -1.0), (0.5, 1.5), (-1.0, 1.0))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[256, 1024, 4096])
    ap.add_argument("--replicates", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--covariates", choices=["normal", "uniform"], default="normal")
    ap.add_argument("--alpha", type=float, default=0.001)
    args = ap.parse_args()

    print(f"{'N':>6} {'effect':>6} {'method':>18} {'skew':>8} {'exkurt':>8} {'KS':>8} {'crit':>8} {'ok':>5}")
    for n in args.n:
        recipe = PopulationRecipe(n=n, k=2, p=2, seed=2024, coef=COEF, covariates=args.covariates)
        cfg = StudyConfig(
            counts=(n // 4,) * 4, replicates=args.replicates, seed=args.seed, recipe=recipe,
            normality=NormalitySettings(alpha=args.alpha),
        )
        for s in run_study(cfg).effects:
            print(
                f"{n:>6} {s.label:>6} {s.method:>18} {s.skewness:>8.4f} {s.excess_kurtosis:>8.4f} "
                f"{s.ks_statistic:>8.4f} {s.ks_critical:>8.4f} {str(s.normal_ok):>5}"
            )


if __name__ == "__main__":
    main()
