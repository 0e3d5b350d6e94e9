"""
Seed Shipped Specs

Regenerates the JSON inputs under specs/: algebras, patches, operators and
symbol families used by the commands and the test suite. Every file is
validated against its pydantic model before it is written.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from cli.models import SPEC_MODELS  # noqa: E402

SPECS_DIR = Path(__file__).resolve().parent.parent / "specs"

ALGEBRAS = {
    "heis": {"name": "heis", "weights": [1, 1, 2], "names": ["X", "Y", "Z"],
             "brackets": [{"i": 0, "j": 1, "coefficients": {"2": "1"}}]},
    "engel": {"name": "engel", "weights": [1, 1, 2, 3], "names": ["X1", "X2", "X3", "X4"],
              "brackets": [{"i": 0, "j": 1, "coefficients": {"2": "1"}},
                           {"i": 0, "j": 2, "coefficients": {"3": "1"}}]},
    "abelian2": {"name": "abelian2", "weights": [1, 1], "names": ["e0", "e1"], "brackets": []},
    "heis_bad_grading": {"name": "heis_bad_grading", "weights": [1, 1, 1], "names": ["X", "Y", "Z"],
                         "brackets": [{"i": 0, "j": 1, "coefficients": {"2": "1"}}]},
}

PATCHES = {
    "heis_patch": {"name": "heis", "catalog": "heis"},
    "heis_depth1_patch": {"name": "heis_depth1", "catalog": "heis_depth1"},
    "engel_patch": {"name": "engel", "catalog": "engel"},
    "twisted_heis": {"name": "twisted_heis", "catalog": "twisted_heis"},
    "trivial2": {"name": "trivial2", "catalog": "trivial2"},
    "torus1": {"name": "torus1", "catalog": "torus1"},
    "torus2": {"name": "torus2", "catalog": "torus2"},
    "heis_explicit": {
        "name": "heis_explicit", "coords": ["x", "y", "z"],
        "frame": [["1", "0", "-y/2"], ["0", "1", "x/2"], ["0", "0", "1"]],
        "orders": [1, 1, 2], "depth": 2, "extent": [[-4, 4], [-4, 4], [-4, 4]],
        "injectivity_radius": 2.0, "frame_names": ["X", "Y", "Z"],
    },
}

OPERATORS = {
    "heis_sublaplacian": {"name": "heis_sublaplacian", "patch": "../patches/heis_patch.json", "sublaplacian": True},
    "lap_potential": {"name": "lap_potential", "patch": "../patches/torus1.json",
                      "terms": [{"multi_index": [2], "coefficient": "-1"},
                                {"multi_index": [0], "coefficient": "2 + cos(x0)"}]},
    "one_plus_lap": {"name": "one_plus_lap", "patch": "torus1",
                     "terms": [{"multi_index": [2], "coefficient": "-1"},
                               {"multi_index": [0], "coefficient": "1"}]},
    "dx_torus2": {"name": "dx_torus2", "patch": "../patches/torus2.json",
                  "terms": [{"multi_index": [1, 0], "coefficient": "1"}]},
    "sin_dy_torus2": {"name": "sin_dy_torus2", "patch": "../patches/torus2.json",
                      "terms": [{"multi_index": [0, 1], "coefficient": "sin(x0)"}]},
    "heis_x": {"name": "heis_x", "patch": "heis", "terms": [{"multi_index": [1, 0, 0], "coefficient": "1"}]},
    "heis_y": {"name": "heis_y", "patch": "heis", "terms": [{"multi_index": [0, 1, 0], "coefficient": "1"}]},
}

SYMBOLS = {
    "sqrt_family": {"name": "sqrt", "family": "sqrt", "d": 1},
    "eta_squared": {"name": "eta_squared", "family": "expression", "d": 1, "expression": "eta0^2", "weight": 2},
    "one_plus_eta2": {"name": "one_plus_eta2", "family": "expression", "d": 1,
                      "expression": "t^2 + eta0^2", "weight": 2},
    "log_kernel": {"name": "log_kernel", "family": "log_kernel", "d": 1, "weight": -1},
    "log_kernel_cut": {"name": "log_kernel_cut", "family": "log_kernel", "d": 1, "weight": -1,
                       "cutoff_radius": 2.0},
    "heis_sublaplacian_symbol": {"name": "heis_sublaplacian", "family": "operator", "d": 3,
                                 "operator": "../operators/heis_sublaplacian.json"},
}

GROUPS = (
    ("algebras", "algebra", ALGEBRAS),
    ("patches", "patch", PATCHES),
    ("operators", "operator", OPERATORS),
    ("symbols", "symbol", SYMBOLS),
)


def write_specs(root: Path = SPECS_DIR) -> int:
    count = 0
    for folder, kind, entries in GROUPS:
        target = root / folder
        target.mkdir(parents=True, exist_ok=True)
        for filename, body in entries.items():
            payload = {"kind": kind, **body}
            SPEC_MODELS[kind].model_validate(payload)
            (target / f"{filename}.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
            count += 1
        print(f"✓ {len(entries)} {folder} written to {target}")
    return count


if __name__ == "__main__":
    total = write_specs()
    print(f"✅ {total} spec files regenerated")
