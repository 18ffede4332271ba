import io
import math

import numpy as np
import pytest

from seglab.exact import exact_minimizer, exact_field, psi
from seglab.geometry import (
    BOUNDARY,
    EXTERIOR,
    INTERIOR,
    ConvergenceError,
    Domain,
    Field3,
    GridError,
    build_grid,
    constant_trace,
    dump_field,
    harmonic_extension,
    interp_bilinear,
    laplacian,
    load_field,
    sample_boundary,
)


def _neighbours_ok(g):
    cc = g.cell_class
    iy, ix = np.nonzero(cc == INTERIOR)
    for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        if np.any(cc[iy + dy, ix + dx] == EXTERIOR):
            return False
    return True


class TestBuildGrid:
    def test_disc16(self):
        g = build_grid("disc", 16)
        assert g.shape == (16, 16)
        assert g.h == pytest.approx(2 / 12)
        assert g.x[0] == pytest.approx(-1 - 2 * g.h)
        assert g.interior.sum() == 97
        assert g.boundary.sum() == 32

    def test_disc_extent(self):
        for n in (16, 64, 128):
            g = build_grid("disc", n)
            assert g.x[0] == pytest.approx(-1 - 2 * g.h)
            assert g.x[-1] <= 1 + 2 * g.h + 1e-12
            assert g.origin == (g.x[0], g.y[0])

    def test_disc_interior_rule(self):
        g = build_grid("disc", 64)
        r, _ = g.polar()
        assert np.array_equal(g.interior, r < 1 - g.h / 2)

    def test_disc256_area(self):
        g = build_grid("disc", 256)
        assert g.interior.sum() * g.h**2 / math.pi == pytest.approx(1.0, abs=0.02)

    def test_band_separates(self):
        for n in (16, 48, 101):
            g = build_grid("disc", n)
            assert _neighbours_ok(g)
            # every boundary cell touches the interior: the band is one cell thick
            cc = g.cell_class
            iy, ix = np.nonzero(cc == BOUNDARY)
            touch = np.zeros(iy.size, dtype=bool)
            for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                touch |= cc[iy + dy, ix + dx] == INTERIOR
            assert touch.all()

    def test_rectangle_edges(self):
        g = build_grid(Domain.rectangle(0, 1, 0, 1), 64)
        assert np.all(g.cell_class[0, :] == BOUNDARY)
        assert np.all(g.cell_class[-1, :] == BOUNDARY)
        assert np.all(g.cell_class[:, 0] == BOUNDARY)
        assert np.all(g.cell_class[:, -1] == BOUNDARY)
        assert g.interior.sum() == 62 * 62
        assert not g.exterior.any()

    def test_rejects_coarse(self):
        with pytest.raises(GridError):
            build_grid("disc", 15)

    def test_deterministic(self):
        assert np.array_equal(build_grid("disc", 77).cell_class, build_grid("disc", 77).cell_class)

    def test_nearest_cell_origin(self):
        g = build_grid("disc", 64)
        iy, ix = g.nearest_cell((0.0, 0.0))
        assert g.x[ix] == 0.0 and g.y[iy] == 0.0


class TestField3:
    def test_validate(self, disc64):
        vals = np.zeros((3, *disc64.shape))
        Field3(vals, disc64).validate()
        vals[0, disc64.interior] = -1e-3
        with pytest.raises(GridError):
            Field3(vals, disc64).validate()

    def test_exterior_must_vanish(self, disc64):
        vals = np.zeros((3, *disc64.shape))
        vals[1, disc64.exterior] = 1.0
        with pytest.raises(GridError):
            Field3(vals, disc64).validate()

    def test_shape_mismatch(self, disc64):
        with pytest.raises((GridError, ValueError)):
            Field3(np.zeros((3, 5, 5)), disc64)


class TestSampleBoundary:
    def test_psi_values(self):
        assert np.allclose(psi(0.0), [0, 0, 1])
        s = math.sqrt(2) / 2
        assert np.allclose(psi(math.pi / 3), [s, 0, s])

    def test_psi_trace_on_grid(self, disc64, psi_bdata64):
        _, th = disc64.polar()
        b = disc64.boundary
        assert np.allclose(psi_bdata64.traces[:, b], psi(th[b]))
        assert np.all(np.prod(psi_bdata64.traces, axis=0) == 0)

    def test_constant(self, disc64):
        bd = sample_boundary(disc64, constant_trace((1, 1, 0)))
        assert np.all(bd.traces[:, disc64.boundary] == np.array([[1], [1], [0]]))

    def test_scalar_trace_function(self, disc64):
        bd = sample_boundary(disc64, lambda t: (math.cos(t) ** 2, 0.0, 1.0))
        assert bd.traces[0, disc64.boundary].max() <= 1.0

    def test_rejects_all_positive(self, disc64):
        with pytest.raises(GridError):
            sample_boundary(disc64, constant_trace((1, 1, 1)))

    def test_rejects_negative(self, disc64):
        with pytest.raises(GridError):
            sample_boundary(disc64, constant_trace((1, -1, 0)))


class TestHarmonicExtension:
    def test_constant(self, disc64):
        bd = sample_boundary(disc64, constant_trace((0.7, 0, 0)))
        f = harmonic_extension(disc64, bd)
        assert np.allclose(f.values[0, disc64.active], 0.7, atol=1e-9)
        assert np.all(f.values[1:] == 0)

    def test_max_principle_psi(self, disc64, psi_bdata64):
        f = harmonic_extension(disc64, psi_bdata64)
        assert f.values.max() <= 1.0 + 1e-12
        assert f.values.min() >= 0.0

    def test_frozen_energy(self, disc64, psi_bdata64):
        from seglab.energy import dirichlet_energy

        f = harmonic_extension(disc64, psi_bdata64)
        assert dirichlet_energy(f) == pytest.approx(3.004703202778654, rel=1e-8)

    def test_positive_part_trace(self, disc64):
        bd = sample_boundary(disc64, lambda t: np.stack([np.maximum(np.cos(t), 0), 0 * t, 0 * t]))
        f = harmonic_extension(disc64, bd)
        u = f.values[0, disc64.interior]
        assert u.min() >= 0 and u.max() <= 1

    def test_residual_small(self, disc64, psi_bdata64):
        f = harmonic_extension(disc64, psi_bdata64, tol=1e-12)
        lap = laplacian(f.values, disc64.h) * disc64.h**2
        assert np.abs(lap[:, disc64.interior]).max() < 1e-9

    def test_iteration_limit(self, disc64, psi_bdata64):
        with pytest.raises(ConvergenceError) as info:
            harmonic_extension(disc64, psi_bdata64, maxiter=2)
        assert info.value.residual > 0


class TestInterpolation:
    def test_cell_centres(self, exact64):
        g = exact64.grid
        for iy, ix in ((32, 32), (20, 41), (50, 10)):
            assert np.allclose(interp_bilinear(exact64, (g.x[ix], g.y[iy])), exact64.values[:, iy, ix], rtol=0, atol=1e-14)

    def test_linear_exact(self, disc64):
        f = Field3.from_function(disc64, lambda X, Y: (2 + X, 3 + 0.5 * Y, 0 * X))
        # restrict to points whose stencil is fully active
        for p in ((0.1234, -0.4321), (0.5, 0.25), (-0.3, 0.6)):
            v = interp_bilinear(f, p)
            assert v[0] == pytest.approx(2 + p[0], abs=1e-12)
            assert v[1] == pytest.approx(3 + 0.5 * p[1], abs=1e-12)

    def test_exterior_counts_zero(self, disc64):
        f = Field3.from_function(disc64, lambda X, Y: (np.ones_like(X), 0 * X, 0 * X))
        v = interp_bilinear(f, (0.0, 1.0 + 0.5 * disc64.h))
        assert 0.0 <= v[0] < 1.0

    def test_exact_minimiser_at_half(self, exact256):
        g = exact256.grid
        v = interp_bilinear(exact256, (0.5, 0.0))
        ref = exact_minimizer(0.5, 0.0)
        assert np.abs(v - ref).max() <= 2 * g.h**0.75

    def test_out_of_extent(self, exact64):
        with pytest.raises(GridError):
            interp_bilinear(exact64, (3.0, 0.0))


class TestCsv:
    def test_roundtrip_disc(self, exact64, tmp_path):
        p = tmp_path / "f.csv"
        dump_field(exact64, p)
        back = load_field(p)
        assert back.grid.same_as(exact64.grid)
        assert np.array_equal(back.values, exact64.values)

    def test_roundtrip_rectangle(self, tmp_path):
        g = build_grid(Domain.rectangle(0, 1, 0, 0.5), 33)
        f = Field3.from_function(g, lambda X, Y: (X, Y * 0.1, 0 * X))
        p = tmp_path / "r.csv"
        dump_field(f, p)
        back = load_field(p)
        assert back.grid.same_as(g)
        assert np.array_equal(back.values, f.values)

    def test_header(self, exact64):
        buf = io.StringIO()
        dump_field(exact64, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "x,y,u1,u2,u3,cell_class"
        assert len(lines) == 1 + 64 * 64
        assert lines[1].endswith("EXTERIOR")
