"""Smoke test for the synpop_py extension module.

Build and install first, e.g.:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/synpop_py-*.whl
"""

import json
import math
import pathlib
import sys
import tempfile

import synpop_py as sp

ROOT = pathlib.Path(__file__).resolve().parent.parent
EXAMPLE = ROOT / "data" / "example"


def check(cond, what):
    print(("ok    " if cond else "FAIL  ") + what)
    if not cond:
        sys.exit(1)


def main():
    w = sp.qp_solve([1.0, 2.0, 3.0, 4.0], 2.5)
    check(abs(sum(w) - 1) < 1e-12 and abs(sum(a * b for a, b in zip(w, [1, 2, 3, 4])) - 2.5) < 1e-12,
          "qp_solve meets both constraints")

    cells, sweeps, converged = sp.ipf_fit([1.0, 2.0, 3.0, 4.0], [2, 2], [[3.0, 7.0], [6.0, 4.0]])
    check(converged and abs(cells[0] + cells[1] - 0.3) < 1e-6, f"ipf_fit converged in {sweeps} sweeps")

    deg = math.degrees(1 / 6371)
    p = sp.gravity((0.0, 0.0), [(deg, 0.0, 10), (2 * deg, 0.0, 10)])
    check(abs(p[0] - 2 / 3) < 1e-9, "gravity odds follow inverse distance")

    pts = sp.sample_polygon([(0, 0), (1, 0), (1, 1), (0, 1)], 2000, 7,
                            holes=[[(0.25, 0.25), (0.25, 0.75), (0.75, 0.75), (0.75, 0.25)]])
    check(all(not (0.25 < x < 0.75 and 0.25 < y < 0.75) for x, y in pts), "polygon samples avoid the hole")

    g = sp.chi_square([50, 30, 20], [0.5, 0.3, 0.2])
    check(g["statistic"] == 0 and g["p_value"] == 1.0, "chi_square of an exact match")

    cfg = sp.Config.load(str(EXAMPLE / "ipf_config.json"))
    check(cfg.check() == [] and cfg.method == "ipf", repr(cfg))
    check(sp.validate(cfg)["ok"], "example inputs validate")
    with tempfile.TemporaryDirectory() as out:
        cfg.output_dir = out
        summary = sp.generate(cfg)
        check(summary["failed"] == 0 and len(summary["regions"]) == 4, f"generated {summary['persons']} persons")
        report = sp.diagnose(cfg, report=True)
        check(report["flagged_regions"] == ["T04"], "diagnostics flag only the divergent region")
        check((pathlib.Path(out) / "report.md").is_file(), "report written")
        round_trip = sp.Config.from_json(cfg.to_json())
        check(json.loads(round_trip.to_json()) == json.loads(cfg.to_json()), "config JSON round trip")
    print("smoke test passed")


if __name__ == "__main__":
    main()
