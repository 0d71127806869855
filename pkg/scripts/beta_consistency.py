"""Monte Carlo mean of ||beta_hat_j - zeta_j||^2 as N grows, per arm.

    python3 scripts/beta_consistency.py --sizes 256 1024 4096
"""

import argparse

import numpy as np

from factorial_ca import PopulationRecipe, StudyConfig, run_study

COEF = ((1.0, 0.5), (2.0, -1.0), (0.5, 1.5), (-1.0, 1.0))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 512, 1024, 2048, 4096])
    ap.add_argument("--replicates", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    base = None
    print(f"{'N':>6} " + " ".join(f"{'arm ' + str(j + 1):>10}" for j in range(4)) + f" {'mean':>10} {'N*mean':>8} {'vs first':>9}")
    for n in args.sizes:
        recipe = PopulationRecipe(n=n, k=2, p=2, seed=2024, coef=COEF)
        res = run_study(StudyConfig(counts=(n // 4,) * 4, replicates=args.replicates, seed=args.seed, recipe=recipe))
        err = np.asarray(res.beta_sq_error)
        base = base or err.mean()
        print(f"{n:>6} " + " ".join(f"{e:>10.3e}" for e in err) + f" {err.mean():>10.3e} {n * err.mean():>8.3f} {err.mean() / base:>9.4f}")


if __name__ == "__main__":
    main()
