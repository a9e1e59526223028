"""Spline primitive tests.

The reference implementation here is a naive Cox-de Boor recursion,
independent of the production evaluator (which uses the triangular table
form).  Derivatives are cross-checked against central differences of the
naive recursion.
"""
import numpy as np
import pytest

from splinemotor.splines import (
    KnotVector,
    RationalCurve,
    SplineSurface,
    coons_patch,
    element_quadrature,
    eval_basis,
    find_span,
    gauss_legendre,
    make_arc,
    make_line,
    open_uniform_knots,
    tabulate,
)


def naive_basis(knots, i, p, u):
    """Textbook Cox-de Boor recursion with the 0/0 := 0 convention."""
    if p == 0:
        last = np.max(np.nonzero(knots < knots[-1])[0]) if np.any(knots < knots[-1]) else 0
        if knots[i] <= u < knots[i + 1]:
            return 1.0
        # closed right end: include u == u_max in the last non-empty span
        if u == knots[-1] and knots[i] < knots[i + 1] and i == last:
            return 1.0
        return 0.0
    left = 0.0
    if knots[i + p] > knots[i]:
        left = (u - knots[i]) / (knots[i + p] - knots[i]) * naive_basis(knots, i, p - 1, u)
    right = 0.0
    if knots[i + p + 1] > knots[i + 1]:
        right = (knots[i + p + 1] - u) / (knots[i + p + 1] - knots[i + 1]) * naive_basis(
            knots, i + 1, p - 1, u
        )
    return left + right


def full_row(kv, u):
    first, d = eval_basis(kv, u, 0)
    row = np.zeros(kv.n_basis)
    row[first : first + kv.degree + 1] = d[0]
    return row


class TestBasisValues:
    def test_degree2_halfspan_example(self):
        kv = KnotVector(2, np.array([0.0, 0, 0, 0.5, 1, 1, 1]))
        first, d = eval_basis(kv, 0.25, 0)
        assert first == 0
        assert np.allclose(d[0], [0.25, 0.625, 0.125], atol=1e-15)
        oracle = [naive_basis(kv.knots, i, 2, 0.25) for i in range(kv.n_basis)]
        assert np.allclose(full_row(kv, 0.25), oracle, atol=1e-14)

    @pytest.mark.parametrize("degree", [1, 2, 3, 4])
    def test_matches_naive_recursion(self, degree):
        rng = np.random.default_rng(7 + degree)
        kv = KnotVector(degree, open_uniform_knots(degree, 5))
        for u in np.concatenate([rng.uniform(0, 1, 25), [0.0, 0.2, 1.0]]):
            oracle = [naive_basis(kv.knots, i, degree, u) for i in range(kv.n_basis)]
            assert np.allclose(full_row(kv, u), oracle, atol=1e-13), f"u={u}"

    @pytest.mark.parametrize("degree", [1, 2, 3, 4])
    def test_partition_of_unity(self, degree):
        rng = np.random.default_rng(degree)
        for n_el in (1, 3, 6):
            kv = KnotVector(degree, open_uniform_knots(degree, n_el))
            for u in rng.uniform(0, 1, 40):
                _, d = eval_basis(kv, u, 1)
                assert abs(d[0].sum() - 1.0) < 1e-13
                assert abs(d[1].sum()) < 1e-10

    def test_derivatives_vs_fd_of_naive(self):
        # h = 1e-4 keeps the stencil inside one element, where the cubic has
        # no truncation error and roundoff stays ~1e-8
        kv = KnotVector(3, open_uniform_knots(3, 4))
        h = 1e-5
        for u in (0.11, 0.37, 0.52, 0.83):
            first, d = eval_basis(kv, u, 2)
            for j in range(4):
                i = first + j
                fp = naive_basis(kv.knots, i, 3, u + h)
                fm = naive_basis(kv.knots, i, 3, u - h)
                assert abs(d[1, j] - (fp - fm) / (2 * h)) < 1e-7
                f0 = naive_basis(kv.knots, i, 3, u)
                assert abs(d[2, j] - (fp - 2 * f0 + fm) / h**2) < 1e-4

    def test_tabulate_matches_pointwise(self):
        kv = KnotVector(2, open_uniform_knots(2, 4))
        us = np.linspace(0, 1, 17)
        first, ders = tabulate(kv, us, 1)
        for k, u in enumerate(us):
            f, d = eval_basis(kv, u, 1)
            assert f == first[k]
            assert np.allclose(ders[k], d)


class TestSpansAndValidation:
    def test_find_span_conventions(self):
        kv = KnotVector(2, np.array([0.0, 0, 0, 0.5, 1, 1, 1]))
        assert find_span(kv, 0.0) == 2
        assert find_span(kv, 0.49) == 2
        assert find_span(kv, 0.5) == 3
        assert find_span(kv, 1.0) == 3

    def test_out_of_range_raises(self):
        kv = KnotVector(2, open_uniform_knots(2, 2))
        with pytest.raises(ValueError):
            find_span(kv, -0.1)
        with pytest.raises(ValueError):
            eval_basis(kv, 1.2)

    def test_bad_knot_vectors_raise(self):
        with pytest.raises(ValueError):
            KnotVector(2, np.array([0.0, 0, 0, 0.6, 0.4, 1, 1, 1]))
        with pytest.raises(ValueError):
            KnotVector(2, np.array([0.0, 0, 0.5, 1, 1]))  # not clamped
        with pytest.raises(ValueError):
            KnotVector(0, np.array([0.0, 0, 1, 1]))
        with pytest.raises(ValueError):
            KnotVector(5, open_uniform_knots(4, 2))
        with pytest.raises(ValueError):
            KnotVector(2, np.array([0.0, 0, 0, 0, 0, 0]))  # empty interval


class TestQuadrature:
    def test_five_point_integrates_x8(self):
        x, w = gauss_legendre(5)
        assert abs(np.dot(w, x**8) - 2.0 / 9.0) < 1e-14
        assert abs(w.sum() - 2.0) < 1e-14

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
    def test_exact_to_degree_2n_minus_1(self, n):
        x, w = gauss_legendre(n)
        rng = np.random.default_rng(n)
        coef = rng.standard_normal(2 * n)
        exact = sum(c / (k + 1) * (1 - (-1) ** (k + 1)) for k, c in enumerate(coef))
        approx = np.dot(w, np.polynomial.polynomial.polyval(x, coef))
        assert abs(approx - exact) < 1e-12

    def test_element_rule_covers_domain(self):
        kv = KnotVector(2, open_uniform_knots(2, 3))
        pts, wts = element_quadrature(kv, 3)
        assert pts.size == 9
        assert abs(wts.sum() - 1.0) < 1e-14
        # integrate a cubic exactly over [0, 1]
        assert abs(np.dot(wts, pts**3) - 0.25) < 1e-14


class TestCurvesAndSurfaces:
    def test_arc_lies_on_circle(self):
        arc = make_arc(2.0, 0.1, 1.2)
        us = np.linspace(0, 1, 50)
        pts, tan = arc.eval_many(us)
        assert np.allclose(np.hypot(pts[:, 0], pts[:, 1]), 2.0, atol=1e-14)
        assert np.allclose(pts[0], arc.eval(0.0))
        # tangent orthogonal to radius on a circle
        assert np.max(np.abs(np.einsum("ij,ij->i", pts, tan))) < 1e-12

    def test_arc_rejects_large_sweep(self):
        with pytest.raises(ValueError):
            make_arc(1.0, 0.0, np.pi)

    def test_curve_reversal(self):
        arc = make_arc(1.5, -0.3, 0.9)
        rev = arc.reversed()
        for u in (0.0, 0.3, 0.77, 1.0):
            assert np.allclose(arc.eval(u), rev.eval(1.0 - u), atol=1e-14)

    def test_quarter_annulus_inner_circle(self):
        # standard degree-2 construction with middle weight cos(pi/4)
        w = np.cos(np.pi / 4)
        inner = make_arc(1.0, 0.0, np.pi / 2)
        outer = make_arc(2.0, 0.0, np.pi / 2)
        left = make_line(inner.eval(0.0), outer.eval(0.0))
        right = make_line(inner.eval(1.0), outer.eval(1.0))
        surf = coons_patch(inner, outer, left, right)
        assert abs(surf.weights[1, 0] - w) < 1e-15
        for u in np.linspace(0, 1, 33):
            pt = surf.eval(u, 0.0)
            assert abs(np.hypot(*pt) - 1.0) < 1e-12
        for u in np.linspace(0, 1, 9):
            pt = surf.eval(u, 1.0)
            assert abs(np.hypot(*pt) - 2.0) < 1e-12

    def test_surface_jacobian_vs_fd(self):
        # machine orientation: u radial outward, v angular CCW (positive det)
        inner = make_arc(1.0, 0.2, 1.1)
        outer = make_arc(1.8, 0.2, 1.1)
        surf = coons_patch(
            make_line(inner.eval(0.0), outer.eval(0.0)), make_line(inner.eval(1.0), outer.eval(1.0)), inner, outer
        )
        h = 1e-6
        for (u, v) in [(0.3, 0.4), (0.71, 0.12), (0.5, 0.9)]:
            jac = surf.jacobian(u, v)
            fd_u = (surf.eval(u + h, v) - surf.eval(u - h, v)) / (2 * h)
            fd_v = (surf.eval(u, v + h) - surf.eval(u, v - h)) / (2 * h)
            assert np.allclose(jac[:, 0], fd_u, atol=1e-7)
            assert np.allclose(jac[:, 1], fd_v, atol=1e-7)
            assert np.linalg.det(jac) > 0

    def test_quarter_annulus_area(self):
        inner = make_arc(1.0, 0.0, np.pi / 2)
        outer = make_arc(2.0, 0.0, np.pi / 2)
        surf = coons_patch(
            make_line(inner.eval(0.0), outer.eval(0.0)), make_line(inner.eval(1.0), outer.eval(1.0)), inner, outer
        )
        x, w = gauss_legendre(10)
        q = 0.5 * (x + 1.0)
        wq = 0.5 * w
        U, V = np.meshgrid(q, q, indexing="ij")
        _, jacs = surf.eval_many(U.ravel(), V.ravel())
        dets = np.linalg.det(jacs)
        assert np.all(dets > 0)
        area = np.dot(np.outer(wq, wq).ravel(), dets)
        assert abs(area - (np.pi / 4) * (4 - 1)) < 1e-10

    def test_coons_corner_mismatch_raises(self):
        inner = make_arc(1.0, 0.0, 1.0)
        outer = make_arc(2.0, 0.0, 1.0)
        bad_left = make_line([5.0, 5.0], outer.eval(0.0))
        with pytest.raises(ValueError):
            coons_patch(inner, outer, bad_left, make_line(inner.eval(1.0), outer.eval(1.0)))

    def test_rational_curve_validation(self):
        kv = KnotVector(2, np.array([0.0, 0, 0, 1, 1, 1]))
        with pytest.raises(ValueError):
            RationalCurve(kv, np.zeros((2, 2)), np.ones(2))
        with pytest.raises(ValueError):
            RationalCurve(kv, np.zeros((3, 2)), np.array([1.0, -1.0, 1.0]))

    def test_surface_requires_matching_net(self):
        kv = KnotVector(2, np.array([0.0, 0, 0, 1, 1, 1]))
        with pytest.raises(ValueError):
            SplineSurface(kv, kv, np.zeros((2, 3, 2)), np.ones((2, 3)))
