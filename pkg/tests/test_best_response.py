import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegame.best_response import (
    BrSettings,
    RankDeficientChannelError,
    allocation_for_h,
    allocation_for_h_pinv,
    allocation_for_h_square,
    bisect_h,
    default_h_max,
    exact_br,
    grid_search_br,
    stationarity,
)
from eegame.channel import ChannelSet, generate_channel_set
from eegame.game import GameConfig, interference_matrix, utility
from helpers import diag_channels, random_profile, scalar_channels
from oracles import direct_utility_batch

E = math.e


def no_interference(cfg):
    return np.zeros((cfg.nr, cfg.nr), dtype=complex)


class TestSettings:
    def test_eps1_positive(self):
        with pytest.raises(ValueError):
            BrSettings(eps1=0.0)

    def test_h_max_above_eps1(self):
        with pytest.raises(ValueError):
            BrSettings(h_max=1e-4, eps1=1e-3)


class TestAllocationForH:
    def test_scalar_interior(self):
        cfg = GameConfig.symmetric(1, 1, 1, 10.0)
        dec = scalar_channels(1.0).decomposition(0)
        np.testing.assert_allclose(allocation_for_h(cfg, dec, no_interference(cfg), 0.5), [1.0])

    def test_scalar_clamped(self):
        cfg = GameConfig.symmetric(1, 1, 1, 10.0)
        dec = scalar_channels(1.0).decomposition(0)
        np.testing.assert_allclose(allocation_for_h(cfg, dec, no_interference(cfg), 2.0), [0.0])

    def test_per_mode(self):
        cfg = GameConfig.symmetric(1, 2, 2, 100.0)
        dec = diag_channels([2.0, 1.0]).decomposition(0)
        np.testing.assert_allclose(allocation_for_h(cfg, dec, no_interference(cfg), 0.1), [9.75, 9.0])

    def test_budget_scaling(self):
        cfg = GameConfig.symmetric(1, 2, 2, 10.0)
        dec = diag_channels([2.0, 1.0]).decomposition(0)
        p = allocation_for_h(cfg, dec, no_interference(cfg), 0.1)
        assert p.sum() == pytest.approx(10.0)
        np.testing.assert_allclose(p / p.sum(), np.array([9.75, 9.0]) / 18.75)

    @pytest.mark.parametrize("seed", range(10))
    def test_square_and_pinv_forms_agree(self, seed):
        cfg = GameConfig.symmetric(3, 3, 3, 10.0)
        chans = generate_channel_set(3, 3, 3, seed=seed)
        prof = random_profile(np.random.default_rng(seed), cfg)
        for k in range(3):
            dec = chans.decomposition(k)
            f = interference_matrix(cfg, dec, prof)
            for h in (0.01, 0.3, 2.0):
                a = allocation_for_h_square(cfg, dec, f, h)
                b = allocation_for_h_pinv(cfg, dec, f, h)
                assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))

    @pytest.mark.parametrize("nr,nt", [(4, 2), (2, 4), (3, 2)])
    def test_rectangular_against_generic_pinv(self, nr, nt):
        cfg = GameConfig.symmetric(2, nt, nr, 50.0)
        chans = generate_channel_set(2, nr, nt, seed=nr + 10 * nt)
        prof = random_profile(np.random.default_rng(nt), cfg)
        dec = chans.decomposition(0)
        f = interference_matrix(cfg, dec, prof)
        lp = np.linalg.pinv(chans.factors[0].rect())
        gram_pinv = np.linalg.pinv(lp.conj().T @ lp)
        h = 0.05
        P = lp @ gram_pinv @ lp.conj().T / h - lp @ (f + np.eye(nr)) @ lp.conj().T
        np.testing.assert_allclose(allocation_for_h_pinv(cfg, dec, f, h), np.diag(P).real, atol=1e-10)
        expected = np.clip(np.diag(P).real, 0, None)
        expected *= min(1.0, 50.0 / expected.sum())
        np.testing.assert_allclose(allocation_for_h(cfg, dec, f, h), expected, atol=1e-10)

    def test_square_form_needs_square(self):
        cfg = GameConfig.symmetric(1, 2, 3, 10.0)
        dec = generate_channel_set(1, 3, 2, seed=0).decomposition(0)
        with pytest.raises(ValueError):
            allocation_for_h_square(cfg, dec, no_interference(cfg), 1.0)

    def test_rank_deficient_names_user(self):
        cfg = GameConfig.symmetric(2, 1, 1, 10.0)
        chans = ChannelSet(h=np.array([[[1.0]], [[0.0]]], dtype=complex))
        with pytest.raises(RankDeficientChannelError, match="user 1") as info:
            allocation_for_h(cfg, chans.decomposition(1), no_interference(cfg), 1.0)
        assert info.value.user == 1

    @given(h=st.floats(1e-3, 1e3), budget=st.floats(0.1, 100))
    @settings(max_examples=100, deadline=None)
    def test_always_feasible(self, h, budget):
        cfg = GameConfig.symmetric(1, 2, 2, budget)
        dec = diag_channels([2.0, 0.5]).decomposition(0)
        p = allocation_for_h(cfg, dec, no_interference(cfg), h)
        assert np.all(p >= 0) and p.sum() <= budget * (1 + 1e-12)

    def test_default_h_max_switches_everything_off(self, random_2x2):
        cfg, chans = random_2x2
        dec = chans.decomposition(0)
        f = interference_matrix(cfg, dec, np.ones((2, 2)))
        hm = default_h_max(cfg, dec, f)
        assert np.all(allocation_for_h(cfg, dec, f, hm) == 0)
        assert np.any(allocation_for_h(cfg, dec, f, hm * 0.99) > 0)


class TestBisect:
    def test_scalar(self, scalar_game):
        cfg, chans = scalar_game
        grid = np.linspace(0, 10, 200001)
        p_star = grid[np.argmax(np.log1p(grid) / (grid + 1))]
        res = bisect_h(cfg, chans, [[0.0]], 0, BrSettings(eps1=1e-4))
        assert res.h == pytest.approx(1 / E, abs=1e-3)
        assert res.allocation[0] == pytest.approx(E - 1, abs=1e-3)
        assert res.allocation[0] == pytest.approx(p_star, abs=1e-3)
        assert res.method == "closed_form_h"

    def test_symmetric_two_mode(self):
        cfg = GameConfig.symmetric(1, 2, 2, 20.0)
        chans = diag_channels([1.0, 1.0])
        axis = np.linspace(0, 20, 401)
        mesh = np.array([(a, b) for a in axis for b in axis if a + b <= 20])
        u = np.log1p(mesh).sum(axis=1) / (mesh.sum(axis=1) + 1)
        best = mesh[np.argmax(u)]
        res = bisect_h(cfg, chans, [[0.0, 0.0]], 0, BrSettings(eps1=1e-4))
        p = res.allocation
        assert p[0] == pytest.approx(p[1], abs=1e-12)
        # symmetric slice 2 ln(1+p) / (2p+1), finely gridded
        line = np.linspace(0, 10, 1000001)
        p_line = line[np.argmax(2 * np.log1p(line) / (2 * line + 1))]
        assert p[0] == pytest.approx(p_line, abs=1e-3)
        assert np.max(np.abs(p - best)) <= 0.05 + 1e-9  # 2-D grid spacing

    def test_small_h_max_hits_boundary(self, scalar_game):
        cfg, chans = scalar_game
        res = bisect_h(cfg, chans, [[0.0]], 0, BrSettings(h_max=0.1, eps1=1e-4))
        assert res.h == pytest.approx(0.1, abs=1e-4)
        assert res.allocation[0] == pytest.approx(1 / 0.1 - 1, abs=0.02)
        assert any("h_max" in w for w in res.warnings)

    def test_pinv_method_tag(self):
        cfg = GameConfig.symmetric(2, 2, 4, 10.0)
        chans = generate_channel_set(2, 4, 2, seed=3)
        res = bisect_h(cfg, chans, np.ones((2, 2)), 0)
        assert res.method == "pinv_approx_h"

    def test_close_to_exact_when_interior(self):
        cfg = GameConfig.symmetric(2, 2, 2, 10.0)
        checked = 0
        for seed in range(40):
            chans = generate_channel_set(2, 2, 2, seed=seed)
            prof = np.random.default_rng(seed).uniform(0, 5, (2, 2))
            for k in range(2):
                ex = exact_br(cfg, chans, prof, k)
                if ex.budget_binding:
                    continue
                checked += 1
                assert bisect_h(cfg, chans, prof, k).utility >= ex.utility - 10 * 1e-3
        assert checked > 40


class TestExactBr:
    def test_scalar(self, scalar_game):
        cfg, chans = scalar_game
        res = exact_br(cfg, chans, [[3.0]], 0)
        p = res.allocation[0]
        assert p == pytest.approx(E - 1, abs=1e-8)
        assert abs(1 / (1 + p) - res.utility) < 1e-8
        assert res.method == "exact_fixed_point" and not res.budget_binding

    def test_budget_clamped(self):
        cfg = GameConfig.symmetric(1, 1, 1, 1.0)
        grid = np.linspace(0, 1, 1001)
        assert np.all(np.diff(np.log1p(grid) / (grid + 1)) > 0)
        res = exact_br(cfg, scalar_channels(1.0), [[0.2]], 0)
        assert res.allocation[0] == pytest.approx(1.0, abs=1e-12)
        assert res.budget_binding
        assert res.active_set == (0,)

    def test_weak_mode_switched_off(self):
        cfg = GameConfig.symmetric(1, 2, 2, 10.0)
        chans = diag_channels([2.0, 1e-3])
        axis = np.linspace(0, 10, 201)
        mesh = np.array([(a, b) for a in axis for b in axis if a + b <= 10])
        u = direct_utility_batch(chans.h, [f.v for f in chans.factors], np.zeros((1, 2)), 0, mesh)
        assert mesh[np.argmax(u)][1] == 0.0
        res = exact_br(cfg, chans, [[1.0, 1.0]], 0)
        assert res.allocation[1] == 0.0
        assert res.active_set == (0,)
        assert res.nonnegative_set == (0, 1)
        assert res.utility >= u.max() - 1e-12

    def test_rank_deficient(self):
        cfg = GameConfig.symmetric(2, 1, 1, 10.0)
        chans = ChannelSet(h=np.array([[[1.0]], [[0.0]]], dtype=complex))
        with pytest.raises(RankDeficientChannelError) as info:
            exact_br(cfg, chans, [[1.0], [1.0]], 1)
        assert info.value.user == 1

    @pytest.mark.parametrize("shape", [(2, 2), (4, 2), (2, 4), (3, 3)])
    def test_stationary_on_active_set(self, shape):
        nr, nt = shape
        cfg = GameConfig.symmetric(2, nt, nr, 10.0)
        for seed in range(10):
            chans = generate_channel_set(2, nr, nt, seed=seed)
            prof = random_profile(np.random.default_rng(seed), cfg)
            for k in range(2):
                res = exact_br(cfg, chans, prof, k)
                assert res.method == "exact_fixed_point"
                dec = chans.decomposition(k)
                A = np.eye(nr) + interference_matrix(cfg, dec, prof)
                d = stationarity(A, dec.gains, res.allocation)
                act = list(res.active_set)
                level = np.mean(d[act]) if res.budget_binding else res.utility
                assert np.max(np.abs(d[act] - level)) <= 1e-6
                off = [i for i in range(nt) if i not in act]
                assert np.all(d[off] <= level + 1e-6)
                if not res.budget_binding:
                    assert res.residual <= 1e-6

    def test_stationarity_direct_inverse(self, random_2x2):
        cfg, chans = random_2x2
        prof = random_profile(np.random.default_rng(2), cfg)
        res = exact_br(cfg, chans, prof, 0)
        dec = chans.decomposition(0)
        lam = chans.factors[0].rect()
        M = lam @ np.diag(res.allocation) @ lam.conj().T + interference_matrix(cfg, dec, prof) + np.eye(2)
        d = np.diag(lam.conj().T @ np.linalg.inv(M) @ lam).real
        if not res.budget_binding:
            assert np.max(np.abs(d[list(res.active_set)] - res.utility)) <= 1e-6

    @pytest.mark.parametrize("seed", range(10))
    def test_dominates_grid(self, seed):
        cfg = GameConfig.symmetric(2, 2, 2, 10.0)
        chans = generate_channel_set(2, 2, 2, seed=seed)
        prof = random_profile(np.random.default_rng(seed), cfg)
        for k in range(2):
            g = grid_search_br(cfg, chans, prof, k, points=200)
            assert exact_br(cfg, chans, prof, k).utility >= g.utility - 1e-6

    def test_utility_matches_reported(self, random_2x2):
        cfg, chans = random_2x2
        prof = random_profile(np.random.default_rng(3), cfg)
        res = exact_br(cfg, chans, prof, 1)
        p = prof.copy()
        p[1] = res.allocation
        assert res.utility == pytest.approx(utility(cfg, chans, p, 1), abs=1e-12)


class TestStandardFunction:
    """Standard-function properties of single-mode best responses."""

    cfg = GameConfig.symmetric(2, 1, 1, 10.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_properties(self, seed):
        chans = generate_channel_set(2, 1, 1, seed=seed)
        rng = np.random.default_rng(seed)
        prof = rng.uniform(0, 3, (2, 1))
        base = exact_br(self.cfg, chans, prof, 0).allocation
        assert np.all(base >= 0)
        more = prof.copy()
        more[1] += rng.uniform(0, 3, 1)
        assert np.all(exact_br(self.cfg, chans, more, 0).allocation >= base - 1e-6)
        for alpha in (1.5, 2.0):
            scaled = prof.copy()
            scaled[1] *= alpha
            assert np.all(exact_br(self.cfg, chans, scaled, 0).allocation <= alpha * base + 1e-6)
