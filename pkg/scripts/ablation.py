"""Attention on versus off at a fixed budget: average TSTR MSE over regressors, median over seeds."""

import argparse

from stdpgan.evaluation import REGRESSORS
from stdpgan.experiments import desk_prepared, median, run_seeds


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--eps", type=float, default=12.0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--regressors", default=",".join(REGRESSORS))
    args = p.parse_args()
    regs = tuple(args.regressors.split(","))
    prepared = desk_prepared()
    result = {}
    for attention in (True, False):
        runs = run_seeds(
            prepared, args.seeds, regs, budget_eps=args.eps, q=0.01, sigma=2.0, delta=1e-7,
            max_epochs=args.epochs, attention_enabled=attention,
        )
        result[attention] = median(r.average_generated for r in runs)
    print(f"average TSTR MSE  attention={result[True]:.6g}  no-attention={result[False]:.6g}")
    print(f"attention / no-attention = {result[True] / result[False]:.3f}; hard limit 1.25")


if __name__ == "__main__":
    main()
