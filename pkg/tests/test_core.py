import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qutritks.core import (
    RAY_LABELS,
    DensityMatrix,
    InvalidRayError,
    InvalidStateError,
    Ket,
    Ray,
    compatibility,
    evaluate_ineq2,
    evaluate_ineq3,
    expectation,
    graph_from_json,
    graph_to_json,
    h_projector_sum,
    observable,
    projector,
    random_density_matrix,
    rays_by_label,
    s_operator,
    yu_oh_rays,
)

S_STATE = np.ones(3) / np.sqrt(3)
I3 = np.eye(3)


def _s_operator_ordered_pairs():
    """Independent route: loop over all 13 x 13 ordered pairs, orthogonality in floats."""
    vecs = {r.label: np.array(r.components, float) / np.linalg.norm(r.components) for r in yu_oh_rays()}
    a = {k: I3 - 2 * np.outer(v, v) for k, v in vecs.items()}
    s = sum(a.values())
    for i, j in itertools.product(vecs, repeat=2):
        if i != j and abs(vecs[i] @ vecs[j]) < 1e-9:
            s = s - 0.25 * a[i] @ a[j]
    return s


class TestRays:
    def test_labels_and_count(self):
        rays = yu_oh_rays()
        assert [r.label for r in rays] == list(RAY_LABELS)
        assert len(rays) == 13

    def test_pairwise_non_parallel(self):
        for a, b in itertools.combinations(yu_oh_rays(), 2):
            assert not a.is_parallel(b), (a.label, b.label)

    def test_basis_orthogonal(self):
        r = rays_by_label()
        assert r["z1"].dot(r["z2"]) == 0

    def test_h_rays_orthogonal_to_three_y_and_no_z(self):
        rays = yu_oh_rays()
        for h in (r for r in rays if r.label.startswith("h")):
            ys = [r.label for r in rays if r.label.startswith("y") and r.dot(h) == 0]
            zs = [r.label for r in rays if r.label.startswith("z") and r.dot(h) == 0]
            assert len(ys) == 3 and {y[1] for y in ys} == {"1", "2", "3"}
            assert zs == []

    def test_zero_ray_rejected(self):
        with pytest.raises(InvalidRayError):
            projector(Ray("bad", (0, 0, 0)))


class TestProjectors:
    def test_z1_projector(self):
        np.testing.assert_allclose(projector(rays_by_label()["z1"]).matrix, np.diag([1, 0, 0]), atol=1e-15)

    def test_h0_projector_uniform(self):
        np.testing.assert_allclose(projector(rays_by_label()["h0"]).matrix, np.full((3, 3), 1 / 3), atol=1e-15)

    def test_y1minus_vanishes_on_s(self):
        b = projector(rays_by_label()["y1-"]).matrix
        assert abs(S_STATE @ b @ S_STATE) < 1e-15

    @pytest.mark.parametrize("label", RAY_LABELS)
    def test_projector_and_observable_algebra(self, label):
        r = rays_by_label()[label]
        p = projector(r).matrix
        a = observable(r).matrix
        assert np.max(np.abs(p @ p - p)) < 1e-12
        assert np.max(np.abs(p - p.conj().T)) < 1e-12
        assert abs(np.trace(p) - 1) < 1e-12
        assert np.max(np.abs(a @ a - I3)) < 1e-12
        np.testing.assert_allclose(np.linalg.eigvalsh(a), [-1, 1, 1], atol=1e-10)

    def test_z1_observable(self):
        np.testing.assert_allclose(observable(rays_by_label()["z1"]).matrix, np.diag([-1, 1, 1]), atol=1e-15)

    def test_h0_observable_on_s(self):
        assert expectation(DensityMatrix.from_ket(S_STATE), observable(rays_by_label()["h0"])) == pytest.approx(-1, abs=1e-12)


class TestGraph:
    def test_edge_count(self):
        assert len(compatibility().edges) == 24

    def test_membership(self):
        g = compatibility()
        assert ("z1", "z2") in g
        assert ("h0", "h1") not in g
        assert rays_by_label()["h0"].dot(rays_by_label()["h1"]) == 1

    def test_triples(self):
        g = compatibility()
        expected = {frozenset(t) for t in [("z1", "z2", "z3"), ("z1", "y1+", "y1-"),
                                           ("z2", "y2+", "y2-"), ("z3", "y3+", "y3-")]}
        assert g.triples == expected

    def test_compatible_observables_commute(self):
        r = rays_by_label()
        for i, j in compatibility().edge_list:
            a, b = observable(r[i]).matrix, observable(r[j]).matrix
            assert np.linalg.norm(a @ b - b @ a) < 1e-12

    def test_json_round_trip(self):
        rays, g = graph_from_json(graph_to_json())
        assert [r.components for r in rays] == [r.components for r in yu_oh_rays()]
        assert g == compatibility()

    def test_completion_vectors_excluded(self):
        g = compatibility(yu_oh_rays())
        assert "h0c" not in g.nodes


class TestIdentities:
    def test_s_operator(self):
        assert np.max(np.abs(s_operator() - 25 / 3 * I3)) < 1e-12
        assert np.trace(s_operator()).real == pytest.approx(25, abs=1e-12)

    def test_s_operator_matches_ordered_pair_loop(self):
        assert np.max(np.abs(s_operator() - _s_operator_ordered_pairs())) < 1e-12

    def test_h_projector_sum(self):
        h = h_projector_sum()
        assert np.max(np.abs(h - 4 / 3 * I3)) < 1e-12
        assert np.trace(h).real == pytest.approx(4, abs=1e-12)
        assert S_STATE @ h @ S_STATE == pytest.approx(4 / 3, abs=1e-12)

    def test_s_state_values(self):
        rho = DensityMatrix.from_ket(S_STATE)
        assert evaluate_ineq2(rho) == pytest.approx(25 / 3, abs=1e-12)
        assert evaluate_ineq3(rho) == pytest.approx(4 / 3, abs=1e-12)

    def test_maximally_mixed(self):
        rho = DensityMatrix.maximally_mixed()
        assert evaluate_ineq2(rho) == pytest.approx(25 / 3, abs=1e-12)
        assert evaluate_ineq3(rho) == pytest.approx(4 / 3, abs=1e-12)
        for label in RAY_LABELS:
            assert expectation(rho, observable(rays_by_label()[label])) == pytest.approx(1 / 3, abs=1e-12)

    def test_random_states_constant(self, rng):
        vals2, vals3 = [], []
        for _ in range(100):
            rho = Ket(rng.normal(size=3) + 1j * rng.normal(size=3)).density_matrix()
            vals2.append(evaluate_ineq2(rho))
            vals3.append(evaluate_ineq3(rho))
        for _ in range(1000):
            rho = random_density_matrix(rng)
            vals2.append(evaluate_ineq2(rho))
            vals3.append(evaluate_ineq3(rho))
        assert np.max(np.abs(np.array(vals2) - 25 / 3)) < 1e-10
        assert np.max(np.abs(np.array(vals3) - 4 / 3)) < 1e-10


class TestStates:
    def test_expectation_examples(self):
        r = rays_by_label()
        s = DensityMatrix.from_ket(S_STATE)
        assert expectation(s, observable(r["z1"])) == pytest.approx(1 / 3, abs=1e-12)
        assert expectation(DensityMatrix.from_ket([1, 0, 0]), observable(r["z1"])) == pytest.approx(-1)

    def test_ket_normalized(self):
        k = Ket([3, 4j, 0])
        assert np.linalg.norm(k.amplitudes) == pytest.approx(1, abs=1e-12)

    @pytest.mark.parametrize(
        "matrix",
        [np.diag([1, 1, 1]), np.diag([1.5, -0.5, 0]), np.array([[0.5, 0.3j, 0], [0.3j, 0.5, 0], [0, 0, 0]])],
    )
    def test_invalid_density_matrices(self, matrix):
        with pytest.raises(InvalidStateError):
            DensityMatrix(matrix)

    def test_permuted(self):
        rho = DensityMatrix.from_ket([1, 0, 0]).permuted((2, 1, 0))
        np.testing.assert_allclose(rho.matrix, np.diag([0, 0, 1]))

    def test_non_hermitian_expectation_rejected(self):
        with pytest.raises(ValueError):
            expectation(DensityMatrix.from_ket([1, 1j, 0]), np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_state_independence_property(v):
    rho = Ket(np.array(v[:3]) + 1j * np.array(v[3:])).density_matrix()
    assert evaluate_ineq2(rho) == pytest.approx(25 / 3, abs=1e-10)
    assert evaluate_ineq3(rho) == pytest.approx(4 / 3, abs=1e-10)
