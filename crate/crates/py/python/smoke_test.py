"""Smoke test for the riccilab extension module.

Build and install first:  pip install --no-build-isolation -e crates/py
"""

import math
import pathlib
import sys

import riccilab

SCENARIOS = pathlib.Path(__file__).resolve().parents[3] / "scenarios"


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    # two points, unit conductance: curvature 2, distance 1
    flow = riccilab.Flow.static_graph([1.0, 1.0], [(0, 1)], [1.0], 0.1, 0.6, 50)
    t0, t1 = flow.times[0], flow.times[-1]
    assert flow.n == 2 and flow.backend == "graph"
    assert close(flow.curvature(t0), 2.0, 1e-9)
    assert close(flow.metric(t0)[0][1], 1.0, 1e-12)
    assert flow.validate()["pass"]

    u = [1.0, 0.0]
    pu = flow.forward(t0, t1, u)
    want = 0.5 + 0.5 * math.exp(-2.0 * (t1 - t0))
    assert close(pu[0], want, 1e-8), pu
    assert flow.duality_defect(t0, t1, u, [0.3, 0.7]) < 1e-10
    assert close(flow.wasserstein(t0, [1.0, 0.0], [0.25, 0.75], p=1), 0.75, 1e-12)
    assert flow.hopf_lax(t0, 0.5, [0.0, 1.0])[1] <= 1.0
    assert close(flow.dirichlet_form(t0, u, u), 1.0, 1e-12)

    circle = riccilab.Flow.circle(64, 0.1, 0.3, 20, f="0.5 * cos(x)")
    assert circle.backend == "circle1d"
    assert close(circle.curvature(0.1), -0.5, 2e-2)
    _, _, rel = circle.variance_identity(0.1, 0.3, [math.sin(2 * math.pi * i / 64) for i in range(64)], [1.0] * 64)
    assert rel < 1e-2, rel

    try:
        flow.measure(0.123456)
    except ValueError:
        pass
    else:
        raise AssertionError("off-grid time accepted")

    out = riccilab.check(str(SCENARIOS / "two-point-reparam.toml"))
    assert out["verdicts_match"], out["mismatches"]
    assert riccilab.transport_cost([0.5, 0.5], [0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]]) == 0.0

    print("riccilab smoke test passed:", len(out["reports"]), "inequalities checked")


if __name__ == "__main__":
    sys.exit(main())
