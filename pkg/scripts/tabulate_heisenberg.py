"""
Tabulate the Heisenberg Fundamental Solution

Computes the normalizing constant of Gamma = c ((x^2 + y^2)^2 + 16 z^2)^(-1/2)
from the weak-form mass oracle and writes Gamma on a cube around the identity
as CSV, with the constant and the quadrature settings in a JSON sidecar.

    python scripts/tabulate_heisenberg.py --n 33 --half-width 2 --out artifacts/heisenberg
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from calculus.heisenberg import DEFAULT_NODES, fundamental_solution, mass_constant  # noqa: E402
from storage.artifacts import artifact_transaction, write_csv, write_json  # noqa: E402


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--n", type=int, default=33, help="points per axis")
    parser.add_argument("--half-width", type=float, default=2.0)
    parser.add_argument("--nodes", type=int, default=DEFAULT_NODES, help="Gauss nodes per polar axis")
    parser.add_argument("--out", default="artifacts/heisenberg")
    args = parser.parse_args()

    gamma = fundamental_solution(args.nodes)
    coarse = mass_constant(args.nodes // 2)
    axis, values = gamma.tabulate(args.n, args.half_width)
    rows = [
        (float(axis[i]), float(axis[j]), float(axis[k]), float(values[i, j, k]))
        for i in range(axis.size) for j in range(axis.size) for k in range(axis.size)
    ]
    with artifact_transaction(Path(args.out)) as stage:
        write_csv(stage / "gamma.csv", ("x", "y", "z", "gamma"), rows)
        write_json(stage / "constant.json", {
            "constant": gamma.constant, "constant_half_nodes": coarse, "nodes": args.nodes,
            "weight": gamma.weight, "n": args.n, "half_width": args.half_width,
        })
    print(f"✓ constant {gamma.constant:.12g} (half the nodes: {coarse:.12g})")
    print(f"✅ {len(rows)} values written to {args.out}")


if __name__ == "__main__":
    main()
