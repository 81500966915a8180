import numpy as np
import pytest

from fdsec.channel import SystemConfig, realize
from fdsec.linalg import embed_real
from fdsec.metrics import Allocation, constraint_margins, objective
from fdsec.problem import (
    BlockValues,
    allocation_to_blocks,
    an_direction,
    build_baseline_problem,
    build_hd_problem,
    build_optimal_problem,
    problem_from_text,
    problem_to_text,
    recover_allocation,
)
from fdsec.receivers import zf_receivers


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_rank_one_alloc(rng, cfg, receivers, scale=1e-3):
    n, k, j = cfg.n_antennas, cfg.n_dl, cfg.n_ul
    w = [scale * random_complex(rng, n) for _ in range(k)]
    v = scale * random_complex(rng, n)
    return Allocation(
        W=tuple(np.outer(x, x.conj()) for x in w),
        V=np.outer(v, v.conj()),
        P=scale * rng.uniform(0.1, 1.0, size=j),
        receivers=receivers,
    )


def scenario(cfg, seed):
    geom, chan = realize(cfg, seed)
    rec = zf_receivers(chan.g)
    return chan, rec


class TestCounting:
    def test_small(self):
        cfg = SystemConfig(n_antennas=4, n_dl=1, n_ul=1, n_idle=1)
        chan, rec = scenario(cfg, 0)
        prob, vmap = build_optimal_problem(chan, cfg, rec)
        assert len(prob.psd_dims) == 2
        assert prob.psd_dims == (8, 8)
        assert len(prob.constraints) == 5
        assert prob.orthant_dim == 1

    def test_paper_scenario(self):
        cfg = SystemConfig()  # N=8, K=6, J=3, M=5
        chan, rec = scenario(cfg, 0)
        prob, vmap = build_optimal_problem(chan, cfg, rec)
        assert len(prob.psd_dims) == 7
        assert all(d == 16 for d in prob.psd_dims)
        # 6 + 3 + 30 + 15 + 3
        assert len(prob.constraints) == 57
        labels = prob.labels()
        assert sum(1 for s in labels if s.startswith("C3[")) == 30
        assert sum(1 for s in labels if s.startswith("C4[")) == 15

    def test_dimension_mismatch_rejected(self):
        cfg = SystemConfig(n_antennas=4, n_dl=1, n_ul=1, n_idle=1)
        chan, rec = scenario(cfg, 0)
        other = SystemConfig(n_antennas=4, n_dl=2, n_ul=1, n_idle=1)
        with pytest.raises(ValueError):
            build_optimal_problem(chan, other, rec)


class TestFunctionalEquality:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_slacks_match_margins(self, seed):
        rng = np.random.default_rng(100 + seed)
        cfg = SystemConfig(n_antennas=6, n_dl=3, n_ul=2, n_idle=2)
        chan, rec = scenario(cfg, seed)
        prob, vmap = build_optimal_problem(chan, cfg, rec)
        alloc = random_rank_one_alloc(rng, cfg, rec)
        values = allocation_to_blocks(alloc, vmap)
        slacks = prob.slacks(values)
        margins = constraint_margins(alloc, chan, cfg)
        analytic = np.concatenate(
            [margins.c1, margins.c2, margins.c3.ravel(), margins.c4.ravel(), margins.c5]
        )
        scale = np.maximum(np.abs(analytic), np.abs(slacks)) + 1e-300
        assert np.max(np.abs(slacks - analytic) / np.maximum(scale, 1e-18)) <= 1e-9

    def test_objective_matches_metrics(self):
        rng = np.random.default_rng(7)
        cfg = SystemConfig(n_antennas=5, n_dl=2, n_ul=2, n_idle=2, alpha=1.3, beta=0.7)
        chan, rec = scenario(cfg, 3)
        prob, vmap = build_optimal_problem(chan, cfg, rec)
        alloc = random_rank_one_alloc(rng, cfg, rec)
        values = allocation_to_blocks(alloc, vmap)
        assert prob.objective_value(values) == pytest.approx(objective(alloc, cfg), rel=1e-9)


class TestBaselines:
    def test_unit_trace_directions(self):
        cfg = SystemConfig()
        chan, rec = scenario(cfg, 1)
        for scheme in ("baseline1", "baseline2"):
            d = an_direction(chan, scheme, cfg.n_antennas)
            assert np.trace(d).real == pytest.approx(1.0)
            assert np.linalg.eigvalsh(d)[0] >= -1e-12

    def test_baseline1_single_idle_rank_one(self):
        cfg = SystemConfig(n_antennas=4, n_dl=1, n_ul=1, n_idle=1)
        chan, rec = scenario(cfg, 2)
        d = an_direction(chan, "baseline1", cfg.n_antennas)
        l_vec = chan.l[0]
        expected = np.outer(l_vec, l_vec.conj()) / np.linalg.norm(l_vec) ** 2
        assert np.abs(d - expected).max() <= 1e-12

    def test_baseline_objective_counts_an_power(self):
        cfg = SystemConfig(n_antennas=4, n_dl=1, n_ul=1, n_idle=1)
        chan, rec = scenario(cfg, 3)
        prob, vmap = build_baseline_problem(chan, cfg, rec, "baseline2")
        assert prob.orthant_dim == 2  # P_0 and the AN power
        assert prob.objective_orthant[vmap.v_orthant_index] == pytest.approx(cfg.alpha)

    @pytest.mark.parametrize("scheme", ["baseline1", "baseline2"])
    def test_feasible_set_containment(self, scheme):
        # a baseline-structured allocation evaluates identically in both problems
        rng = np.random.default_rng(11)
        cfg = SystemConfig(n_antennas=5, n_dl=2, n_ul=2, n_idle=2)
        chan, rec = scenario(cfg, 4)
        opt_prob, opt_map = build_optimal_problem(chan, cfg, rec)
        base_prob, base_map = build_baseline_problem(chan, cfg, rec, scheme)
        direction = base_map.v_direction
        p_v = 2.5e-4
        alloc = random_rank_one_alloc(rng, cfg, rec)
        alloc = Allocation(W=alloc.W, V=p_v * direction, P=alloc.P, receivers=rec)
        slacks_opt = opt_prob.slacks(allocation_to_blocks(alloc, opt_map))
        slacks_base = base_prob.slacks(allocation_to_blocks(alloc, base_map))
        scale = np.abs(slacks_opt) + 1e-300
        assert np.max(np.abs(slacks_opt - slacks_base) / np.maximum(scale, 1e-18)) <= 1e-9

    def test_baseline1_requires_idle_users(self):
        cfg = SystemConfig(n_antennas=4, n_dl=1, n_ul=1, n_idle=0)
        chan, rec = scenario(cfg, 5)
        with pytest.raises(ValueError):
            build_baseline_problem(chan, cfg, rec, "baseline1")


class TestHdProblem:
    def test_no_an_variable(self):
        cfg = SystemConfig(n_antennas=4, n_dl=1, n_ul=1, n_idle=1)
        chan, rec = scenario(cfg, 6)
        prob, vmap = build_hd_problem(chan, cfg, rec)
        assert len(prob.psd_dims) == cfg.n_dl
        assert prob.orthant_dim == cfg.n_ul
        assert vmap.v_block is None and vmap.v_orthant_index is None
        alloc = recover_allocation(
            BlockValues(psd=tuple(np.eye(8) for _ in range(1)), orthant=np.array([0.5])),
            vmap, rec,
        )
        assert np.all(alloc.V == 0)


class TestRecovery:
    def test_round_trip(self):
        rng = np.random.default_rng(13)
        cfg = SystemConfig(n_antennas=5, n_dl=2, n_ul=2, n_idle=2)
        chan, rec = scenario(cfg, 7)
        prob, vmap = build_optimal_problem(chan, cfg, rec)
        alloc = random_rank_one_alloc(rng, cfg, rec)
        back = recover_allocation(allocation_to_blocks(alloc, vmap), vmap, rec)
        for a, b in zip(alloc.W, back.W):
            assert np.abs(a - b).max() <= 1e-14
        assert np.abs(alloc.V - back.V).max() <= 1e-14
        assert np.allclose(alloc.P, back.P)

    def test_orthant_order(self):
        cfg = SystemConfig(n_antennas=5, n_dl=1, n_ul=3, n_idle=1)
        chan, rec = scenario(cfg, 8)
        prob, vmap = build_optimal_problem(chan, cfg, rec)
        values = BlockValues(
            psd=tuple(np.eye(10) for _ in range(2)),
            orthant=np.array([0.1, 0.2, 0.3]),
        )
        alloc = recover_allocation(values, vmap, rec)
        assert np.allclose(alloc.P, [0.1, 0.2, 0.3])

    def test_asymmetry_reported(self):
        cfg = SystemConfig(n_antennas=4, n_dl=1, n_ul=1, n_idle=1)
        chan, rec = scenario(cfg, 9)
        prob, vmap = build_optimal_problem(chan, cfg, rec)
        bad = np.eye(8)
        bad[0, 0] = 2.0
        values = BlockValues(psd=(bad, np.eye(8)), orthant=np.array([0.1]))
        with pytest.raises(ValueError):
            recover_allocation(values, vmap, rec)


class TestSerialization:
    def test_round_trip(self):
        cfg = SystemConfig(n_antennas=4, n_dl=2, n_ul=1, n_idle=2)
        chan, rec = scenario(cfg, 10)
        prob, _ = build_optimal_problem(chan, cfg, rec)
        text = problem_to_text(prob)
        back = problem_from_text(text)
        assert back.psd_dims == prob.psd_dims
        assert back.orthant_dim == prob.orthant_dim
        assert len(back.constraints) == len(prob.constraints)
        for ca, cb in zip(prob.constraints, back.constraints):
            assert ca.sense == cb.sense and ca.label == cb.label
            assert ca.constant == cb.constant
            assert set(ca.psd_coeffs) == set(cb.psd_coeffs)
            for blk in ca.psd_coeffs:
                assert np.array_equal(ca.psd_coeffs[blk], cb.psd_coeffs[blk])
            assert np.array_equal(ca.orthant_coeffs, cb.orthant_coeffs)
        # functional equality on a random point
        rng = np.random.default_rng(0)
        values = BlockValues(
            psd=tuple(np.eye(d) * 0.3 for d in prob.psd_dims),
            orthant=rng.uniform(size=prob.orthant_dim),
        )
        assert np.allclose(prob.slacks(values), back.slacks(values), rtol=0, atol=0)
