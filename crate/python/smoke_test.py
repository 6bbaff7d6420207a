#!/usr/bin/env python3
"""Smoke test for the fairdg_py extension module.

Builds nothing itself: it expects `cargo build -p fairdg-py` (or --release)
to have produced target/{debug,release}/libfairdg_py.so, copies the library
next to a temp dir under the importable name, and exercises the bindings.

Run from the repository root:  python3 python/smoke_test.py
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def import_module():
    candidates = [
        ROOT / "target" / "release" / "libfairdg_py.so",
        ROOT / "target" / "debug" / "libfairdg_py.so",
    ]
    lib = next((p for p in candidates if p.exists()), None)
    if lib is None:
        sys.exit("build the extension first: cargo build -p fairdg-py")
    tmp = Path(tempfile.mkdtemp(prefix="fairdg_py_"))
    shutil.copy2(lib, tmp / "fairdg_py.so")
    sys.path.insert(0, str(tmp))
    import fairdg_py

    return fairdg_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    m = import_module()
    print(f"loaded fairdg_py {m.__version__}")

    # exact information measures
    approx(m.entropy([0.5, 0.5]), math.log(2.0))
    approx(m.tv_distance([1.0, 0.0], [0.0, 1.0]), 1.0)
    approx(m.kl_divergence([0.5, 0.5], [0.5, 0.5]), 0.0)
    approx(m.mutual_information([[0.25, 0.25], [0.25, 0.25]]), 0.0)
    approx(m.mutual_information([[0.5, 0.0], [0.0, 0.5]]), math.log(2.0))
    approx(
        m.conditional_mutual_information(
            [[[0.25], [0.0]], [[0.0], [0.75]]]
        ),
        -0.25 * math.log(0.25) - 0.75 * math.log(0.75),
    )
    print("information measures ok")

    # joint + channel round trip and bound verification
    probs = [1.0 / 24.0] * 24  # uniform over 2x2x3x2
    joint = m.FiniteJoint((2, 2, 3, 2), probs, [0, 1], 2)
    assert joint.sizes == (2, 2, 3, 2)
    joint2 = m.FiniteJoint.from_json(joint.to_json())
    assert joint2.target_domain == 2
    chan = m.Channel.from_map(2, 2, [0, 1])
    reports = joint.verify(chan)
    assert len(reports) == 10, f"expected 10 reports, got {len(reports)}"
    worst = min(r["slack"] for r in reports)
    assert worst >= -1e-9, f"bound violated: slack {worst}"
    names = {r["name"] for r in reports}
    print(f"verify ok: {len(reports)} checks, min slack {worst:.3e}")
    assert any("theorem" in n for n in names) and any("lemma" in n for n in names)

    risk = m.source_risk(joint, chan, 1.0)
    assert risk >= 0.0

    # randomized harness
    records = m.run_harness(25, seed=7)
    assert len(records) == 25
    slacks = [r["slack"] for rec in records for r in rec["reports"]]
    assert len(slacks) == 250 and min(slacks) >= -1e-9
    print(f"harness ok: {len(slacks)} checks, min slack {min(slacks):.3e}")

    # dependence measures
    a = [[float(i), float(i) * 0.5] for i in range(40)]
    b = [[row[0] * 2.0 + 1.0] for row in a]
    approx(m.dcor(a, b), 1.0, 1e-12)
    y = [i % 2 for i in range(40)]
    d = [i % 4 // 2 for i in range(40)]
    cd = m.dcor_given_y(a, b, y)
    assert abs(cd["value"] - 1.0) <= 1e-12 and cd["used_cells"] == 2
    cdd = m.dcor_given_y_d(a, b, y, d)
    assert abs(cdd["value"] - 1.0) <= 1e-12 and cdd["used_cells"] == 4
    print("dependence ok")

    # fairness metrics
    rep = m.fairness_report(
        y_true=[0, 1, 0, 1, 0, 1, 0, 1],
        y_pred=[0, 1, 0, 1, 0, 0, 1, 1],
        g=[0, 0, 0, 0, 1, 1, 1, 1],
        n_labels=2,
        n_groups=2,
    )
    assert rep["n"] == 8 and 0.0 <= rep["accuracy"] <= 1.0
    assert rep["eod"]["value"] > 0.0
    print(f"fairness ok: acc {rep['accuracy']:.3f}, eod {rep['eod']['value']:.3f}")

    # pareto utilities
    pts = [(0.1, 0.9, 0.0), (0.05, 0.8, 0.3), (0.2, 0.7, 0.6)]
    front = m.pareto_front(pts)
    assert [p[2] for p in front] == [0.3, 0.0]
    raw, pct = m.hvi(pts, bounds=(0.0, 1.0, 0.0, 1.0))
    assert 0.0 < raw < 1.21 and 0.0 < pct < 100.0
    lam = m.select_lambda(pts, bounds=(0.0, 1.0, 0.0, 1.0))
    assert lam in (0.0, 0.3)
    approx(m.spearman([1.0, 2.0, 3.0], [6.0, 5.0, 4.0]), -1.0)
    print("pareto ok")

    # end-to-end sweep on a small synthetic problem
    synth = json.dumps(
        {
            "n_per_domain": 400,
            "feature_dim": 10,
            "n_labels": 2,
            "n_groups": 2,
            "n_source_domains": 2,
            "domain_shift_strength": 0.6,
            "group_bias_strength": 0.3,
            "seed": 81,
        }
    )
    train = json.dumps(
        {
            "stage1_epochs": 10,
            "stage2_epochs": 3,
            "batch_size": 32,
            "lambda_grid": [0.0, 0.5],
            "seed": 81,
        }
    )
    out = m.run_sweep(synth_config=synth, train_config=train, gamma=1.0)
    assert len(out["points"]) == 2
    assert out["gamma"] == 1.0 and 0.0 <= out["hvi_percent"] <= 100.0
    rerun = m.run_sweep(synth_config=synth, train_config=train, gamma=1.0)
    assert out["points"] == rerun["points"], "sweep is not deterministic"
    print(f"sweep ok: hvi {out['hvi_percent']:.2f}%, deterministic rerun matches")

    # error paths surface as ValueError
    for call in (
        lambda: m.entropy([0.5, 0.6]),
        lambda: m.Channel([[0.5, 0.4]]),
        lambda: m.dcor([[1.0]], [[1.0], [2.0]]),
    ):
        try:
            call()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")
    print("error handling ok")

    print("smoke test passed")


if __name__ == "__main__":
    main()
