import numpy as np
import pytest

from finitegap_toda.curve import (CurveSpec, CutSystem, SurfacePath, anchor_point, continue_y,
                                  curve_document, default_cuts, load_curve_document,
                                  segments_intersect)
from finitegap_toda.errors import ValidationError


def test_eval_R_examples():
    assert CurveSpec.from_points([-1, 1]).eval_R(0) == -1
    assert CurveSpec.from_points([-1, 1]).eval_R(1) == 0
    assert CurveSpec.from_points([-2, -1, 1, 2]).eval_R(0) == 4


def test_genus_and_odd_count():
    assert CurveSpec.from_points([-2, -1, 1, 2]).genus == 1
    with pytest.raises(ValidationError):
        CurveSpec.from_points([0, 1, 2])


def test_duplicate_branch_point_names_index():
    with pytest.raises(ValidationError, match="branch point 3"):
        CurveSpec.from_points([-2, -1, 1, -1])


def test_nonfinite_rejected():
    with pytest.raises(ValidationError):
        CurveSpec.from_points([0, np.nan])


def test_default_cuts_real_pairs_consecutive():
    spec = CurveSpec.from_points([-2, -1, 1, 2])
    assert sorted(map(sorted, default_cuts(spec).pairs)) == [[0, 1], [2, 3]]


def test_default_cuts_avoid_crossing():
    spec = CurveSpec.from_points([0, 1, 1j, 1 + 1j])
    cuts = default_cuts(spec)
    e = spec.branch_points
    (i, j), (k, l) = cuts.pairs
    assert not segments_intersect(e[i], e[j], e[k], e[l])
    # the diagonal matching crosses and must be rejected
    with pytest.raises(ValidationError, match="intersects"):
        CutSystem(spec, ((0, 3), (1, 2)))


def test_cut_system_validation():
    spec = CurveSpec.from_points([-2, -1, 1, 2])
    with pytest.raises(ValidationError):
        CutSystem(spec, ((0, 1), (1, 2)))
    with pytest.raises(ValidationError):
        CutSystem(spec, ((0, 1),))
    with pytest.raises(ValidationError):
        CutSystem(spec, ((0, 3), (1, 2)))
    collinear = CurveSpec.from_points([-2, 0, 2, 5j])
    with pytest.raises(ValidationError):
        CutSystem(collinear, ((0, 2), (1, 3)))


def test_sqrt_R_branch_at_infinity():
    spec = CurveSpec.from_points([0.3 + 0.1j, -1.2, 0.5 - 0.7j, 2.0j])
    cuts = default_cuts(spec)
    z = 1e4 * np.exp(0.3j)
    assert abs(cuts.sqrt_R(z) / z ** 2 - 1) < 1e-3
    zs = np.array([0.2 + 0.3j, -1 + 1j, 3 - 2j])
    assert np.allclose(cuts.sqrt_R(zs) ** 2, spec.eval_R(zs))


def test_continue_y_trivial_path():
    spec = CurveSpec.from_points([-1, 1])
    end = continue_y(spec, SurfacePath.straight(10, 10, np.sqrt(99)))
    assert abs(end.y - 9.9498743710662) < 1e-12


def _circle(center, radius, n=64):
    t = np.linspace(0, 2 * np.pi, n + 1)
    return tuple(center + radius * np.exp(1j * t))


def test_monodromy_around_one_branch_point():
    spec = CurveSpec.from_points([-2, -1, 1, 2])
    nodes = _circle(1.0, 0.5)
    y0 = np.sqrt(complex(spec.eval_R(nodes[0])))
    end = continue_y(spec, SurfacePath(nodes, y0))
    assert abs(end.y + y0) < 1e-10


def test_monodromy_around_whole_cut():
    spec = CurveSpec.from_points([-2, -1, 1, 2])
    nodes = _circle(1.5, 1.0)
    y0 = np.sqrt(complex(spec.eval_R(nodes[0])))
    end = continue_y(spec, SurfacePath(nodes, y0))
    assert abs(end.y - y0) < 1e-10


def test_continuation_agrees_with_cut_plane_branch():
    spec = CurveSpec.from_points([-1.2 + 0.3j, -0.1 - 0.4j, 0.6 + 0.5j, 1.4 - 0.2j])
    cuts = default_cuts(spec)
    P = anchor_point(spec, cuts)
    target = 3.0 + 2.5j
    end = continue_y(spec, SurfacePath.straight(P.z, target, P.y))
    assert abs(end.y - cuts.sqrt_R(target)) < 1e-10 * abs(end.y)


def test_curve_document_round_trip():
    spec = CurveSpec.from_points([-1.2 + 0.3j, -0.1 - 0.4j, 0.6 + 0.5j, 1.4 - 0.2j])
    cuts = default_cuts(spec)
    spec2, cuts2 = load_curve_document(curve_document(spec, cuts))
    assert np.array_equal(spec2.branch_points, spec.branch_points)
    assert cuts2.pairs == cuts.pairs


@pytest.mark.parametrize("doc", [[], {}, {"branch_points": [[0, 0], [1]]},
                                 {"branch_points": [[0, 0], ["a", 1]]},
                                 {"branch_points": [[0, 0], [1, 0]], "cuts": [[0, 1], [0, 1]]}])
def test_malformed_documents(doc):
    with pytest.raises(ValidationError):
        load_curve_document(doc)
