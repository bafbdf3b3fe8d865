"""Non-private desk run: OLS TSTR MSE against train-on-real, median over seeds."""

import argparse
import math

from stdpgan.experiments import desk_prepared, median, run_seeds


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--no-attention", action="store_true")
    p.add_argument("--regressors", default="ols")
    args = p.parse_args()
    regs = tuple(args.regressors.split(","))
    runs = run_seeds(
        desk_prepared(), args.seeds, regs, budget_eps=math.inf, max_epochs=args.epochs,
        batch_size=10, attention_enabled=not args.no_attention,
    )
    ratio = median(r.ols_ratio for r in runs)
    print(f"median OLS TSTR ratio (generated / real) = {ratio:.3f}; target <= 3")


if __name__ == "__main__":
    main()
