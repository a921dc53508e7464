"""Smoke test for the pumrom extension module.

Build and run from the repository root:

    cargo build --release -p pumrom-python --features extension-module
    cp target/release/libpumrom.so python/pumrom.so
    python3 python/smoke.py
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
import pumrom  # noqa: E402


def main():
    assert abs(pumrom.c_r(math.sqrt(2) / 0.01) - 141.924) < 1e-3
    assert pumrom.mark_components([0.1, 3.0, 2.0, 3.0], 50.0) == [1, 3]
    tau, delta = pumrom.brr_estimator(1e-3, 1.0, 1.0, 1.0)
    assert 0 < tau < 1 and delta is not None
    assert pumrom.spearman([1, 2, 3], [2, 4, 9]) == 1.0

    try:
        pumrom.Experiment('{"no_such_key": 1}')
        raise AssertionError("unknown key accepted")
    except ValueError:
        pass

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.pumrom")
        pumrom.write_matrix(path, [[1.0, 2.0], [3.0, 4.5]])
        assert pumrom.read_matrix(path) == [[1.0, 2.0], [3.0, 4.5]]

        cfg = {"training": {"n_train": 10, "n": 5}}
        bases = os.path.join(d, "bases")
        summary = pumrom.Experiment(json.dumps(cfg), seed=1, out=bases, fast=True).train()
        assert [s["archetype"] for s in summary] == ["co", "ed", "int"]

        cfg = {"basis_dir": bases, "solve": {"n_dd": 2, "i_star": 1}}
        report = pumrom.Experiment(json.dumps(cfg), out=os.path.join(d, "solve"), fast=True).solve()
        assert report["h1_rel_error"] < 0.5
        print("solve: dim", report["dim"], "rel. H1 error", f"{report['h1_rel_error']:.3e}",
              "Delta", f"{report['error']['delta']:.3e}")

    print("smoke test passed, pumrom", pumrom.__version__)


if __name__ == "__main__":
    main()
