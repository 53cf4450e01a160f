import json
import math

import numpy as np
import pytest

from precess.bifurcation import (Region, RegionLabel, diagram_json, gc_axis_branch, gc_branch,
                                 gc_classify, gc_diagram, gc_envelope, kov_classify_c0,
                                 kov_critical_c, kov_diagram, kov_pole_locus, kov_singular_curve,
                                 on_curve, on_pole_locus)
from precess.dynamics import KOVALEVSKAYA, DomainError, integral_array


def test_gc_branch_values():
    assert gc_branch(0.0, 1) == (0.0, 1.0)
    assert gc_branch(2.0, 1) == (4.0, 7.0)
    assert gc_branch(1.0, -1) == (0.5, 0.5)
    k, h = gc_branch(np.array([0.0, 2.0]), 1)
    np.testing.assert_array_equal(k, [0.0, 4.0])
    with pytest.raises(ValueError):
        gc_branch(1.0, 0)


def test_gc_axis_branch():
    assert gc_axis_branch(0.0) == (0.0, 0.0)
    with pytest.raises(DomainError):
        gc_axis_branch(-2.0)


def test_gc_classify_examples():
    assert gc_classify(3.0, 0.5) == RegionLabel(Region.REGULAR, 2, "above the upper branch")
    assert gc_classify(1.0, 0.5).torus_count == 1
    assert gc_classify(1.0, 0.0).region is Region.ON_BIFURCATION
    assert gc_classify(-3.0, 0.5).region is Region.INACCESSIBLE


def test_branch_points_are_on_bifurcation():
    for t in np.linspace(-2.5, 2.5, 1000):
        if abs(t) < 1e-3:
            continue
        for sign in (1, -1):
            k, h = gc_branch(t, sign)
            assert gc_classify(h, k).region is Region.ON_BIFURCATION


def test_gc_classify_is_even_in_k():
    rng = np.random.default_rng(0)
    for h, k in zip(rng.uniform(-2, 10, 500), rng.uniform(-4, 4, 500)):
        assert gc_classify(h, k) == gc_classify(h, -k)


def test_gc_envelope_matches_branches():
    k, h = gc_branch(1.3, 1)
    assert gc_envelope(k, 1) == pytest.approx(h, abs=1e-12)
    assert gc_envelope(-k, -1) == pytest.approx(h - 2, abs=1e-12)


def test_kov_critical_values():
    c = kov_critical_c()
    assert c[0] == 0.0
    assert abs(c[1] - 1.41421356237) < 1e-10 and abs(c[1] - math.sqrt(2)) < 1e-12
    assert abs(c[2] - 4 * 3 ** -0.75) < 1e-12 and abs(c[2] - 1.75) < 0.01
    assert c[3] == 2.0


def test_kov_singular_curve():
    assert kov_singular_curve(0.0, 1.0) == 1.0
    assert kov_singular_curve(2.0, 0.0) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert on_curve(1.0, 1.0, 0.0)
    assert on_curve(1.3, 0.3, 1.2) == on_curve(1.3, 0.3, -1.2)
    with pytest.raises(DomainError):
        kov_singular_curve(0.0, -1.0)


def test_pole_locus_contains_vertical_states():
    rng = np.random.default_rng(4)
    for _ in range(100):
        p, q, r = rng.normal(size=3)
        g3 = rng.choice([-1.0, 1.0])
        h, c, k_sq, _ = integral_array(KOVALEVSKAYA, [p, q, r, 0.0, 0.0, g3])
        assert h == pytest.approx(min(kov_pole_locus(c, k_sq), key=lambda e: abs(e - h)), abs=1e-12)
        assert on_pole_locus(h, k_sq, c)


def test_diagrams_serialise():
    g = json.loads(diagram_json(gc_diagram(n=11)))
    assert [b["name"] for b in g["branches"]] == ["upper", "lower", "k=0"]
    assert len(g["branches"][0]["points"]) == 11
    k = json.loads(diagram_json(kov_diagram(c=0.5, n=5)))
    assert k["c"] == 0.5 and len(k["branches"]) == 3


@pytest.mark.parametrize("h, k_sq, region, count", [
    (0.5, 0.5, Region.O1, 1),
    (1.0, 1.5, Region.O4, 2),
    (1.5, 1.0, Region.O2_O3, 2),
    (-5.0, 1.0, Region.INACCESSIBLE, 0),
])
def test_kov_classify_c0(h, k_sq, region, count):
    label = kov_classify_c0(h, k_sq, probe_budget=16, horizon=600.0)
    assert label.region is region and label.torus_count == count


def test_classification_is_deterministic():
    a = kov_classify_c0(1.0, 1.5, probe_budget=8, seed=3, horizon=400.0)
    b = kov_classify_c0(1.0, 1.5, probe_budget=8, seed=3, horizon=400.0)
    assert a == b
    assert a.to_dict()["region"] == a.region.value
