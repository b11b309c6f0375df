"""What each loss wants at convergence, by brute force.

Given the true label conditional, the risk minimizer of the log likelihood
is the conditional itself, while the expected-error loss prefers a one-hot
vertex marking the most likely class.  A grid search over the probability
simplex makes this concrete without any calculus.

Run:  python demos/03_bayes_optimal_predictors.py
"""


from expacc.losses import LossSpec, bayes_optimal

LOSSES = [LossSpec("neglog"), LossSpec("eerr"), LossSpec("leerr")]


def main():
    print("risk minimizers over a 0.01-step simplex grid (binary labels):\n")
    print(f"{'true conditional':>20}" + "".join(f"{s.name:>16}" for s in LOSSES))
    for q in (0.95, 0.8, 0.7, 0.6, 0.55):
        true = [q, 1.0 - q]
        row = f"{str([q, round(1 - q, 2)]):>20}"
        for spec in LOSSES:
            opt = bayes_optimal(spec, true, 0.01)
            row += f"{str([round(float(v), 2) for v in opt]):>16}"
        print(row)

    print("\nthree classes, true = [0.5, 0.3, 0.2]:")
    for spec in LOSSES:
        opt = bayes_optimal(spec, [0.5, 0.3, 0.2], 0.02)
        print(f"  {spec.name:<8} -> {[round(float(v), 2) for v in opt]}")

    print("\nneglog matches the distribution; eerr bets everything on the "
          "argmax; leerr sits close to the vertex but keeps every class "
          "a sliver of mass (the log term forbids exact zeros).")


if __name__ == "__main__":
    main()
