import json
import math

import numpy as np
import pytest

from seglab.energy import j_beta
from seglab.exact import C_INFTY, exact_field, psi
from seglab.geometry import Field3, GridError, build_grid, constant_trace, harmonic_extension, sample_boundary
from seglab.solver import (
    ConfigError,
    Mode,
    SolverConfig,
    solve_hard_constraint,
    solve_penalized,
    sweep_beta,
)

HARD = SolverConfig(mode=Mode.HARD_CONSTRAINT)


def _non_increasing(history, slack=1e-12):
    totals = [e.total for e in history]
    return all(b <= a + slack for a, b in zip(totals, totals[1:]))


class TestConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert cfg.mode is Mode.PENALIZED
        assert cfg.beta_ladder == (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)

    def test_roundtrip(self):
        cfg = SolverConfig(mode="HARD_CONSTRAINT", beta_ladder=(1, 5), max_sweeps=7, tol=1e-5, damping=0.5, seed=3)
        d = cfg.to_dict()
        assert set(d) == {"mode", "betaLadder", "maxSweeps", "tol", "damping", "seed"}
        assert SolverConfig.from_dict(json.loads(json.dumps(d))) == cfg

    @pytest.mark.parametrize(
        "bad",
        [
            {"betaLadder": [10, 5]},
            {"betaLadder": [1, 1]},
            {"tol": 0},
            {"damping": 0},
            {"damping": 1.5},
            {"maxSweeps": 0},
            {"mode": "SIDEWAYS"},
            {"unknownKey": 1},
        ],
    )
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            SolverConfig.from_dict(bad)


class TestPenalized:
    def test_constant_traces(self, disc64):
        bd = sample_boundary(disc64, constant_trace((1, 1, 0)))
        init = harmonic_extension(disc64, bd)
        for beta in (1.0, 1e6):
            rep = solve_penalized(disc64, bd, beta, init, SolverConfig())
            assert rep.converged
            assert np.allclose(rep.field.values[:, disc64.active], [[1], [1], [0]], atol=1e-9)
            assert rep.energy.total == pytest.approx(0.0, abs=1e-12)
            assert rep.penalty_residual == 0.0

    def test_frozen_beta100(self, disc64, psi_bdata64):
        rep = solve_penalized(disc64, psi_bdata64, 1e2, harmonic_extension(disc64, psi_bdata64), SolverConfig())
        assert rep.converged and rep.residual <= 1e-7
        assert rep.sweeps == 1810
        assert rep.energy.total == pytest.approx(3.2590017351364806, rel=1e-9)
        assert rep.penalty_residual == pytest.approx(0.14263480751599952, rel=1e-7)
        assert _non_increasing(rep.energy_history)
        assert np.all(rep.field.values >= 0)

    def test_comparison_principle(self, disc64, psi_bdata64):
        rep = solve_penalized(disc64, psi_bdata64, 1e3, harmonic_extension(disc64, psi_bdata64), SolverConfig())
        v = rep.field.values
        for i in range(3):
            top = psi_bdata64.traces[i][disc64.boundary].max()
            assert v[i].min() >= 0 and v[i].max() <= top + 1e-7

    def test_boundary_preserved(self, disc64, psi_bdata64):
        rep = solve_penalized(disc64, psi_bdata64, 10.0, harmonic_extension(disc64, psi_bdata64), SolverConfig(max_sweeps=50))
        assert psi_bdata64.matches(rep.field)
        assert rep.sweeps == 50 and not rep.converged

    def test_warm_start_from_exact(self, disc64, psi_bdata64, exact64):
        start = j_beta(exact64, 1e6).total
        rep = solve_penalized(disc64, psi_bdata64, 1e6, exact64, SolverConfig(max_sweeps=300))
        assert max(e.total for e in rep.energy_history) <= start + 1e-12
        assert _non_increasing(rep.energy_history)

    def test_bad_init(self, disc64, psi_bdata64):
        wrong = Field3.zeros(disc64)
        with pytest.raises(GridError):
            solve_penalized(disc64, psi_bdata64, 10.0, wrong, SolverConfig())
        other = build_grid("disc", 32)
        with pytest.raises(GridError):
            solve_penalized(other, psi_bdata64, 10.0, exact_field(other), SolverConfig())

    def test_beta_positive(self, disc64, psi_bdata64, exact64):
        with pytest.raises(ValueError):
            solve_penalized(disc64, psi_bdata64, 0.0, exact64, SolverConfig())

    def test_deterministic(self, disc64, psi_bdata64):
        init = harmonic_extension(disc64, psi_bdata64)
        a = solve_penalized(disc64, psi_bdata64, 50.0, init, SolverConfig(max_sweeps=200))
        b = solve_penalized(disc64, psi_bdata64, 50.0, init, SolverConfig(max_sweeps=200))
        assert np.array_equal(a.field.values, b.field.values)
        assert a.to_json() == b.to_json()

    def test_report_json(self, disc64, psi_bdata64):
        rep = solve_penalized(disc64, psi_bdata64, 10.0, harmonic_extension(disc64, psi_bdata64), SolverConfig(max_sweeps=20))
        d = json.loads(rep.to_json())
        assert {"mode", "beta", "sweeps", "converged", "penaltyResidual", "energy", "energyHistory"} <= set(d)
        assert len(d["energyHistory"]) == len(rep.energy_history)


class TestSweep:
    def test_single_rung_matches_solve(self, disc64, psi_bdata64):
        cfg = SolverConfig(beta_ladder=(30.0,), max_sweeps=300)
        [rep] = sweep_beta(disc64, psi_bdata64, cfg)
        single = solve_penalized(disc64, psi_bdata64, 30.0, harmonic_extension(disc64, psi_bdata64), cfg)
        assert np.array_equal(rep.field.values, single.field.values)

    def test_constant_traces_zero_penalty(self, disc64):
        bd = sample_boundary(disc64, constant_trace((1, 1, 0)))
        reps = sweep_beta(disc64, bd, SolverConfig(beta_ladder=(10, 1e3, 1e6)))
        assert [r.penalty_residual for r in reps] == [0.0, 0.0, 0.0]

    def test_needs_penalized(self, disc64, psi_bdata64):
        with pytest.raises(ConfigError):
            sweep_beta(disc64, psi_bdata64, HARD)

    def test_ladder_order_and_descent(self, solves128):
        reps = solves128.ladder
        assert [r.beta for r in reps] == [1e1, 1e2, 1e3, 1e4, 1e5, 1e6]
        assert all(r.converged for r in reps)
        assert all(_non_increasing(r.energy_history) for r in reps)
        # the unweighted triple-product integral does decay along the ladder
        raw = [j_beta(r.field, 1.0).penalty for r in reps]
        assert all(b < a for a, b in zip(raw, raw[1:]))
        assert raw[-1] < 1e-4 * raw[0]

    @pytest.mark.xfail(strict=True, reason="beta*int(prod u^2) rises before it falls; see decisions ledger")
    def test_penalty_residual_decreasing(self, solves128):
        pens = [r.penalty_residual for r in solves128.ladder]
        assert all(b <= a for a, b in zip(pens, pens[1:]))
        assert pens[-1] < 1e-2 * pens[0]

    @pytest.mark.xfail(strict=True, reason="penalised minimum lies 15% below c_infty at beta=1e4; see decisions ledger")
    def test_beta1e4_energy(self, solves128):
        rep = solves128.ladder[3]
        assert rep.beta == 1e4
        assert rep.energy.total == pytest.approx(C_INFTY, rel=0.03)

    def test_mode_agreement(self, solves128):
        # holds with the hard solve warm-started from the last rung (about 4.98%)
        hard = solves128.converged.energy.total
        pen = solves128.ladder[-1].energy.total
        assert abs(hard - pen) / hard <= 0.05


class TestHard:
    def test_from_exact(self, disc64, psi_bdata64, exact64):
        start = j_beta(exact64, 0.0).total
        rep = solve_hard_constraint(disc64, psi_bdata64, exact64, HARD)
        v = rep.field.values
        assert rep.converged
        assert np.all((v[0] * v[1] * v[2])[disc64.interior] == 0.0)
        assert rep.energy.total <= start + 1e-12
        assert rep.energy.total == pytest.approx(start, rel=0.02)

    def test_from_harmonic_64(self, hard64, disc64):
        v = hard64.field.values
        assert hard64.converged
        assert np.all((v[0] * v[1] * v[2])[disc64.interior] == 0.0)
        assert hard64.energy.total == pytest.approx(4.6098235445653675, rel=1e-9)
        assert _non_increasing(hard64.energy_history)

    def test_from_harmonic_128(self, solves128):
        rep = solves128.converged
        v = rep.field.values
        assert rep.converged
        assert np.all((v[0] * v[1] * v[2])[solves128.grid.interior] == 0.0)
        assert rep.energy.total == pytest.approx(C_INFTY, rel=0.03)

    def test_one_component_absent(self, disc64):
        trace = lambda t: np.stack([1 + np.cos(t), 1 + np.sin(t), 0 * t])
        bd = sample_boundary(disc64, trace)
        ref = harmonic_extension(disc64, bd, tol=1e-13)
        rep = solve_hard_constraint(disc64, bd, ref, HARD)
        assert np.all(rep.field.values[2] == 0)
        assert np.abs(rep.field.values - ref.values).max() < 1e-6
        # starting from a different feasible state reaches the same pair of harmonic functions
        start = ref.values.copy()
        start[:2, disc64.interior] = 0.5
        rep2 = solve_hard_constraint(disc64, bd, Field3(start, disc64), HARD)
        assert rep2.converged
        assert np.abs(rep2.field.values - ref.values).max() < 1e-5

    def test_projection_tie_break(self):
        from seglab.solver import _project

        v = np.array([[0.2, 0.3], [0.2, 0.1], [0.5, 0.1]]).reshape(3, 1, 2)
        _project(v, np.ones((1, 2), dtype=bool))
        assert v[:, 0, 0].tolist() == [0.0, 0.2, 0.5]
        assert v[:, 0, 1].tolist() == [0.3, 0.0, 0.1]
