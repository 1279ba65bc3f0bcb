#!/usr/bin/env python3
"""Smoke test for the gpcov_py extension module.

Build the module first:

    cargo build -p gpcov-py --release

then run

    python3 python/smoke_test.py

The script copies the built cdylib next to a temp dir under the name
`gpcov_py.so` so no maturin install step is needed.
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        REPO / "target" / "release" / "libgpcov_py.so",
        REPO / "target" / "debug" / "libgpcov_py.so",
        REPO / "target" / "release" / "libgpcov_py.dylib",
        REPO / "target" / "debug" / "libgpcov_py.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("build the module first: cargo build -p gpcov-py --release")
    stage = Path(tempfile.mkdtemp(prefix="gpcov_py_"))
    shutil.copy2(built, stage / "gpcov_py.so")
    sys.path.insert(0, str(stage))
    import gpcov_py

    return gpcov_py


def approx(a, b, tol):
    assert abs(a - b) <= tol * max(1.0, abs(b)), f"{a} != {b} (tol {tol})"


def main():
    gp = load_module()

    # Bessel: half-integer closed form K_{1/2}(1) = sqrt(pi/2) e^{-1}
    approx(gp.bessel_k(0.5, 1.0), math.sqrt(math.pi / 2) * math.exp(-1.0), 1e-12)
    try:
        gp.bessel_k(0.5, -1.0)
        raise AssertionError("bessel_k accepted x < 0")
    except ValueError:
        pass

    # Matérn kernel: value at 0 is sigma2, exponential closed form at nu = 1/2
    spec = gp.MaternSpec(sigma2=2.0, ell=1.0, nu=0.5, delta=0.0)
    approx(gp.matern_cov(spec, [0.0]), 2.0, 1e-15)
    approx(gp.matern_cov(spec, [1.0]), 2.0 * math.exp(-math.sqrt(2.0)), 1e-12)

    # designs are deterministic in the seed and live on [0, n^{1/d}]^d
    d1 = gp.draw_design(50, 1, 123)
    d2 = gp.draw_design(50, 1, 123)
    assert d1 == d2
    assert all(0.0 <= p[0] <= 50.0 for p in d1)

    # simulate + criteria + fit on a well-specified dataset
    truth = gp.MaternSpec(sigma2=1.0, ell=3.0, nu=10.0, delta=0.0625)
    points, y = gp.simulate_dataset(truth, 60, 1, 42, 0)
    assert len(points) == 60 and len(y) == 60

    ml = gp.ml_criterion(truth, points, y)
    cv = gp.cv_criterion(truth, points, y)
    assert math.isfinite(ml) and cv > 0.0

    # virtual LOO identity: cv equals the mean square of the LOO residuals
    loo = gp.loo_predictions(truth, points, y)
    direct = sum((yi - pi) ** 2 for yi, pi in zip(y, loo)) / len(y)
    approx(cv, direct, 1e-10)

    fit = gp.fit("ml", points, y, nu=10.0, delta=0.0625)
    assert fit["method"] == "ml"
    assert 0.01 <= fit["sigma2_hat"] <= 100.0
    assert 0.2 <= fit["ell_hat"] <= 10.0
    assert fit["evals"] > 0

    # KL divergence is zero at the truth, positive under a wrong nugget
    assert abs(gp.kl_divergence(truth, truth, points)) < 1e-9
    wrong = gp.MaternSpec(sigma2=1.0, ell=3.0, nu=10.0, delta=0.01)
    assert gp.kl_divergence(wrong, truth, points) > 0.0

    # prediction error at the truth parameters is the mean conditional variance
    nodes = gp.draw_design(100, 1, 321)
    e_truth = gp.ispe_given_data(truth, truth, points, y, nodes)
    e_wrong = gp.ispe_given_data(wrong, truth, points, y, nodes)
    assert 0.0 <= e_truth <= e_wrong + 1e-12

    # kriging prediction reverts to the prior mean far from the data
    assert gp.predict(truth, points, y, [1e6]) == 0.0

    # a tiny end-to-end experiment through the JSON config surface
    report = json.loads(
        gp.run_experiment(
            json.dumps(
                {"n": 20, "n_reps": 2, "quadrature": {"m": 30}, "workers": 1}
            )
        )
    )
    assert len(report["records"]) == 2
    assert report["aggregates"]["n_records"] == 2
    assert report["scenario"]["model_delta"] == 0.01

    print("gpcov_py smoke test: all checks passed")


if __name__ == "__main__":
    main()
