"""Maximum static obstruction against rotation rate, constant and temperature-dependent conductivity.

    python demos/static_shell_sweep.py [-o shell_sweep.png]
"""
import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dissmhd.scenarios.shell import static_shell


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("-o", "--output", default="shell_sweep.png")
    args = ap.parse_args()

    rates = np.linspace(0.0, 2.0, 11)
    const = [static_shell(1.0, 2.0, 2.0, 1.0, (0, 0, w)).max_obstruction for w in rates]
    k0, b = 1.0, 6.5
    var = [static_shell(1.0, 2.0, 2.0, 1.0, (0, 0, w), kappa=lambda t: k0 * (1 + t**b),
                        dkappa=lambda t: k0 * b * t ** (b - 1)).max_obstruction for w in rates]
    for w, c, v in zip(rates, const, var):
        print(f"|omega| = {w:4.2f}   constant kappa {c:9.5f}   kappa0(1+theta^6.5) {v:9.5f}")

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(rates, const, "o-", label="constant kappa")
    ax.plot(rates, var, "s-", label="kappa0 (1 + theta^6.5)")
    ax.plot(rates, const[-1] * (rates / rates[-1]) ** 2, "k:", lw=1, label="|omega|^2")
    ax.set_xlabel("|omega|")
    ax.set_ylabel("max |grad M x grad theta|")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.output)
    print("wrote", args.output)


if __name__ == "__main__":
    main()
