"""Smoke test for the ddsde_lab extension module.

Build and install first:

    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/ddsde_lab-*.whl
    python python/smoke_test.py
"""

import math
import tempfile
from pathlib import Path

import ddsde_lab as dl


def main():
    grid = dl.TimeGrid(1.0, 256)
    assert grid.steps == 256 and abs(grid.dt - 1 / 256) < 1e-15

    noise = dl.Noise("gaussian", "brownian", mean=[0.0], variance=[1.0], sigma=1.0)
    y = dl.sample_paths(noise, grid, 32, 7)
    assert len(y) == 32 and y.dim == 1
    assert len(y.member(0)) == grid.steps + 1

    drift = dl.Drift.mean_attraction(1.0)
    assert drift.family == "lipschitz"
    assert drift.eval(0.0, [1.0], [[0.0], [2.0], [4.0]]) == [1.0]

    cfg = dl.SolverConfig(grid, picard_tol=1e-10)
    x = dl.solve_particle_system(drift, y, cfg)
    xp, diag = dl.solve_ddsde_picard(drift, y, cfg)
    assert diag["converged"]
    gap = max(
        abs(a[0] - b[0])
        for i in range(len(x))
        for a, b in zip(x.member(i), xp.member(i))
    )
    assert gap < 1e-9, gap

    # the particle mean is preserved by mean attraction
    m0 = sum(p[0] for p in x.slice(0)) / len(x)
    m1 = sum(p[0] for p in x.slice(grid.steps)) / len(x)
    ym = sum(p[0] for p in y.slice(grid.steps)) / len(y)
    assert abs((m1 - m0) - (ym - m0)) < 1e-12

    assert dl.wasserstein([[0.0], [1.0]], [[1.0], [0.0]]) == 0.0
    assert abs(dl.wasserstein([[0.0], [0.0]], [[3.0], [4.0]], 2.0) - math.sqrt(12.5)) < 1e-12
    assert dl.wasserstein_paths(y, y) == 0.0

    m, err = dl.bihari_m(2.0, 1.0, "linear")
    assert abs(m - math.e**2) < 1e-6 * math.e**2 and err >= 0.0
    assert dl.bihari_m(2.0, 0.0)[0] == 0.0
    assert dl.lipschitz_stability_bound(1.0) == math.exp(2.0)

    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "x.bin"
        x.save(str(path))
        back = dl.Ensemble.load(str(path))
        assert back.member(3) == x.member(3)

        report = dl.run_experiment(
            """
experiment = "bounds-table"
[bounds]
kappa = [2.0]
r = [0.0, 1e-4, 1.0]
""",
            out=d,
        )
        assert report["passed"], report["checks"]
        assert (Path(d) / "report.csv").exists()

    try:
        dl.TimeGrid(-1.0, 4)
    except ValueError:
        pass
    else:
        raise AssertionError("negative horizon accepted")

    print("ddsde_lab", dl.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
