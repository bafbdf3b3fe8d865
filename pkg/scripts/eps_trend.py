"""Private runs at two budgets: a smaller epsilon should not give a lower OLS TSTR MSE."""

import argparse

from stdpgan.experiments import desk_prepared, median, run_seeds


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--budgets", type=float, nargs="+", default=[1.0, 12.0])
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--no-attention", action="store_true")
    args = p.parse_args()
    prepared = desk_prepared()
    for eps in args.budgets:
        runs = run_seeds(
            prepared, args.seeds, budget_eps=eps, q=0.01, sigma=2.0, delta=1e-7,
            max_epochs=args.epochs, attention_enabled=not args.no_attention,
        )
        print(f"eps={eps}: median OLS TSTR MSE = {median(r.generated_mse['ols'] for r in runs):.6g}")


if __name__ == "__main__":
    main()
