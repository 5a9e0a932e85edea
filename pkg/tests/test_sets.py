import numpy as np
import pytest

from zonoconform.errors import DegeneracyError, DomainError, UnsupportedDimensionError
from zonoconform.sets import (
    HalfSpace,
    Hyperrectangle,
    NestedZonotopeFamily,
    Zonotope,
    _min_inf_norm,
    bounds,
    box_member,
    cartesian_product,
    facet_normals,
    from_hyperrectangle,
    gauge,
    interval_hull,
    linear_map,
    member,
    members,
    nested_at,
    nested_box_at,
    projected_area_2d,
    translate,
    zonotope_halfspaces,
)


def polygon_area(vertices):
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def random_zonotope(rng, dim, num_generators):
    return Zonotope(rng.normal(size=dim), rng.normal(size=(dim, num_generators)))


class TestZonotope:
    def test_shape_mismatch(self):
        with pytest.raises(DomainError, match="does not match"):
            Zonotope(np.zeros(2), np.ones((3, 1)))

    def test_non_finite(self):
        with pytest.raises(DomainError, match="finite"):
            Zonotope(np.array([0.0, np.nan]), np.eye(2))

    def test_arrays_are_read_only(self, unit_square):
        with pytest.raises(ValueError):
            unit_square.center[0] = 1.0

    def test_json_lists_generators_by_column(self):
        z = Zonotope(np.zeros(2), np.array([[1.0, 2.0], [3.0, 4.0]]))
        payload = z.to_dict()
        assert payload["generators"] == [[1.0, 3.0], [2.0, 4.0]]
        back = Zonotope.from_dict(payload)
        np.testing.assert_array_equal(back.generators, z.generators)

    def test_singleton_json(self):
        z = Zonotope.from_dict({"center": [1.0, 2.0], "generators": []})
        assert z.num_generators == 0
        assert member(z, [1.0, 2.0])
        assert not member(z, [1.0, 2.1])

    def test_samples_are_members(self, hexagon, rng):
        points = hexagon.sample(500, rng)
        assert members(hexagon, points).all()

    def test_square_vertices(self, unit_square):
        expected = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
        np.testing.assert_allclose(unit_square.vertices_2d(), expected)


class TestMembership:
    def test_unit_square(self, unit_square):
        assert member(unit_square, [1.0, 1.0])
        assert member(unit_square, [1.0 + 1e-10, 0.0])
        assert not member(unit_square, [1.01, 0.0])

    def test_hexagon_uses_all_generators(self, hexagon):
        assert member(hexagon, hexagon.center + [2.0, 2.0])
        assert member(hexagon, hexagon.center + [2.0, 0.0])
        assert not member(hexagon, hexagon.center + [2.0, -1.0])

    def test_hexagon_gauge(self, hexagon):
        values = gauge(hexagon, hexagon.center + np.array([[2.0, 0.0], [1.0, 0.5], [0.0, 0.0]]))
        np.testing.assert_allclose(values, [1.0, 0.5, 0.0], atol=1e-12)

    def test_off_span_points_have_infinite_gauge(self):
        segment = Zonotope(np.zeros(2), np.array([[1.0], [0.0]]))
        values = gauge(segment, np.array([[0.0, 1.0], [0.5, 0.0]]))
        assert values[0] == np.inf
        assert values[1] == pytest.approx(0.5)

    def test_zero_columns_are_ignored(self):
        z = Zonotope(np.zeros(2), np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 2.0]]))
        assert member(z, [1.0, 2.0])
        assert not member(z, [1.0, 2.1])

    def test_facet_gauge_matches_linear_program(self, rng):
        z = random_zonotope(rng, 3, 5)
        points = rng.normal(size=(40, 3)) * 3.0
        expected = _min_inf_norm(z.generators, points - z.center)
        np.testing.assert_allclose(gauge(z, points), expected, rtol=1e-7, atol=1e-7)

    def test_linear_program_path(self, rng):
        z = random_zonotope(rng, 12, 14)
        assert z._operator.mode == "lp"
        inside = z.center + rng.uniform(-0.5, 0.5, size=(10, 14)) @ z.generators.T
        assert (gauge(z, inside) <= 0.5 + 1e-7).all()
        low, high = bounds(z)
        outside = z.center.copy()
        outside[0] = high[0] + 0.1
        assert not member(z, outside)

    def test_negative_tolerance(self, unit_square):
        with pytest.raises(DomainError, match="tolerance"):
            member(unit_square, [0.0, 0.0], tol=-1.0)

    def test_wrong_point_length(self, unit_square):
        with pytest.raises(DomainError, match="length"):
            member(unit_square, [0.0, 0.0, 0.0])


class TestNestedFamily:
    def test_core_must_be_inside(self, unit_square):
        with pytest.raises(DomainError, match="core"):
            NestedZonotopeFamily(unit_square, np.array([2.0, 0.0]))

    def test_end_points(self, unit_square):
        family = NestedZonotopeFamily(unit_square, np.array([0.5, 0.5]))
        base = nested_at(family, 0.0)
        np.testing.assert_array_equal(base.generators, unit_square.generators)
        top = nested_at(family, 1.0)
        np.testing.assert_array_equal(top.center, [0.5, 0.5])
        assert not np.any(top.generators)

    def test_alpha_domain(self, square_family):
        with pytest.raises(DomainError, match="alpha"):
            nested_at(square_family, 1.5)
        with pytest.raises(DomainError, match="alpha"):
            square_family.contains(-0.1, np.zeros((1, 2)))

    def test_per_row_levels(self, square_family):
        points = np.array([[0.5, 0.0], [0.5, 0.0], [0.0, 0.0]])
        result = square_family.contains(np.array([0.5, 0.6, 1.0]), points)
        np.testing.assert_array_equal(result, [True, False, True])

    def test_contains_matches_level_sets(self, rng):
        base = random_zonotope(rng, 3, 4)
        family = NestedZonotopeFamily(base, base.center + base.generators @ rng.uniform(-1, 1, 4))
        points = base.sample(200, rng)
        for alpha in (0.0, 0.3, 0.8):
            expected = members(nested_at(family, alpha), points)
            np.testing.assert_array_equal(family.contains(alpha, points), expected)

    def test_json_round_trip(self, square_family):
        back = NestedZonotopeFamily.from_dict(square_family.to_dict())
        np.testing.assert_array_equal(back.core, square_family.core)
        np.testing.assert_array_equal(back.base.generators, square_family.base.generators)


def nestedness_failures(n_families, n_pairs, n_points, seed):
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(n_families):
        dim = int(rng.integers(2, 17))
        base = random_zonotope(rng, dim, int(rng.integers(1, 33)))
        core = base.center + base.generators @ rng.uniform(-1.0, 1.0, base.num_generators)
        family = NestedZonotopeFamily(base, core)
        for _ in range(n_pairs):
            low, high = np.sort(rng.uniform(0.0, 1.0, 2))
            points = nested_at(family, high).sample(n_points, rng)
            failures += int(np.sum(~family.contains(low, points, 1e-9)))
    return failures


def test_nested_sets_shrink():
    assert nestedness_failures(12, 4, 20, seed=0) == 0


@pytest.mark.slow
def test_nested_sets_shrink_full_suite():
    assert nestedness_failures(200, 50, 100, seed=1) == 0


class TestOperations:
    def test_projected_area_matches_polygon(self):
        rng = np.random.default_rng(6)
        for _ in range(500):
            dim = int(rng.integers(2, 7))
            z = random_zonotope(rng, dim, int(rng.integers(1, 9)))
            i, j = rng.choice(dim, size=2, replace=False)
            plane = Zonotope(z.center[[i, j]], z.generators[[i, j], :])
            expected = polygon_area(plane.vertices_2d())
            assert projected_area_2d(z, (i, j)) == pytest.approx(expected, rel=1e-9, abs=1e-12)

    def test_projected_area_of_box(self):
        box = from_hyperrectangle(Hyperrectangle(np.zeros(3), np.array([0.5, 1.0, 2.0])))
        assert projected_area_2d(box, (0, 2)) == pytest.approx(4.0)
        with pytest.raises(DomainError, match="dims"):
            projected_area_2d(box, (1, 1))

    def test_cartesian_product_factorises(self):
        rng = np.random.default_rng(7)
        a = random_zonotope(rng, 2, 3)
        b = random_zonotope(rng, 3, 3)
        product = cartesian_product(a, b)
        low_a, high_a = bounds(a)
        low_b, high_b = bounds(b)
        x = rng.uniform(low_a, high_a, size=(10000, 2))
        y = rng.uniform(low_b, high_b, size=(10000, 3))
        expected = members(a, x) & members(b, y)
        np.testing.assert_array_equal(members(product, np.hstack([x, y])), expected)
        assert expected.any() and not expected.all()

    def test_linear_map_images_points(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            n, p, m = (int(v) for v in rng.integers(1, 6, size=3))
            z = random_zonotope(rng, n, p)
            M = rng.normal(size=(m, n))
            xi = rng.uniform(-1.0, 1.0, size=(10, p))
            image = linear_map(M, z)
            np.testing.assert_allclose(image.center + xi @ image.generators.T,
                                       (z.center + xi @ z.generators.T) @ M.T, rtol=1e-12, atol=1e-12)

    def test_linear_map_shape(self, unit_square):
        with pytest.raises(DomainError, match="cannot map"):
            linear_map(np.eye(3), unit_square)

    def test_translate(self, unit_square):
        moved = translate(unit_square, [2.0, 0.0])
        assert member(moved, [3.0, 1.0])
        assert not member(moved, [0.0, 0.0])

    def test_interval_hull_and_bounds(self):
        points = np.array([[0.0, 1.0], [2.0, -1.0], [1.0, 0.0]])
        box = interval_hull(points)
        np.testing.assert_array_equal(box.center, [1.0, 0.0])
        np.testing.assert_array_equal(box.radius, [1.0, 1.0])
        low, high = bounds(from_hyperrectangle(box))
        np.testing.assert_array_equal(low, [0.0, -1.0])
        np.testing.assert_array_equal(high, [2.0, 1.0])
        assert box_member(box, [2.0, 1.0])
        assert not box_member(box, [2.1, 1.0])

    def test_nested_box(self):
        box = Hyperrectangle(np.zeros(2), np.ones(2))
        half = nested_box_at(box, [1.0, 0.0], 0.5)
        np.testing.assert_array_equal(half.center, [0.5, 0.0])
        np.testing.assert_array_equal(half.radius, [0.5, 0.5])
        with pytest.raises(DomainError, match="core"):
            nested_box_at(box, [2.0, 0.0], 0.5)

    def test_box_validation(self):
        with pytest.raises(DomainError, match="nonnegative"):
            Hyperrectangle(np.zeros(2), np.array([1.0, -1.0]))


class TestFacets:
    def test_square_generators(self):
        z = Zonotope(np.zeros(2), np.array([[2.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_allclose(facet_normals(z), np.eye(2))

    def test_hexagon_normals(self, hexagon):
        normals = facet_normals(hexagon)
        assert normals.shape == (3, 2)
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0)

    def test_halfspaces_contain_samples(self, hexagon, rng):
        spaces = zonotope_halfspaces(hexagon)
        assert len(spaces) == 6
        points = hexagon.sample(200, rng)
        for space in spaces:
            assert space.contains(points).all()
        assert not all(space.contains(hexagon.center + [2.0, -1.0])[0] for space in spaces)

    def test_degenerate_generators(self):
        flat = Zonotope(np.zeros(2), np.array([[1.0, 2.0], [1.0, 2.0]]))
        with pytest.raises(DegeneracyError):
            facet_normals(flat)

    def test_dimension_limit(self, rng):
        with pytest.raises(UnsupportedDimensionError, match="10 dimensions"):
            facet_normals(random_zonotope(rng, 11, 12))

    def test_halfspace_needs_normal(self):
        with pytest.raises(DomainError, match="nonzero"):
            HalfSpace([0.0, 0.0], 1.0)
