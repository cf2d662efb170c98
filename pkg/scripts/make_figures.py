"""Write the CSV data behind every figure panel, then (optionally) plot them.

    python3 scripts/make_figures.py --out figures/ [--plot]

Plotting needs matplotlib, which the package itself does not depend on.
"""
import argparse
import csv
import os

from lazyclock.cli import FIGURES, main


def plot(out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for which in FIGURES:
        with open(os.path.join(out_dir, f"fig{which}.csv"), newline="") as fh:
            rows = list(csv.reader(fh))
        head, data = rows[0], [[float(v) for v in r] for r in rows[1:]]
        x = [r[0] for r in data]
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for j, name in enumerate(head[1:], start=1):
            style = "--" if name.startswith("latent") else "-"
            ax.plot(x, [r[j] for r in data], style, lw=1, label=name, drawstyle="steps-post" if which[0] in "12" else "default")
        ax.set_xlabel(head[0])
        if which[0] == "3":
            ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, f"fig{which}.png"), dpi=120)
        plt.close(fig)


def run():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="figures")
    ap.add_argument("--n-paths", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for which in FIGURES:
        path = os.path.join(args.out, f"fig{which}.csv")
        code = main(["figures", "--which", which, "--n-paths", str(args.n_paths), "--seed", str(args.seed), "--out", path])
        if code:
            raise SystemExit(code)
        print(path)
    if args.plot:
        plot(args.out)


if __name__ == "__main__":
    run()
