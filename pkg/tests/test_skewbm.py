"""Skew construction, SDE residual, density and walk oracles, law tests."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstwobign, norm

from skewlab.excursion import decompose_excursions
from skewlab.grid_paths import SamplePath, SeedSpec, make_grid, sample_brownian
from skewlab.localtime import quadratic_covariation
from skewlab.signed_measure import (
    Decomposition,
    HypothesisNotMetError,
    InsufficientSamplesError,
    PROCESS_ZOO,
    build_model,
)
from skewlab.signflip import AlphaSchedule, SignAssignment, apply_sign, assign_signs, build_sign_path
from skewlab.skewbm import (
    LawSample,
    SkewBuildSpec,
    SkewLaw,
    birth_frozen_sign_path,
    build_skew,
    harrison_shepp_terminals,
    harrison_shepp_walk,
    ks_statistic,
    law_test,
    recover_driving_noise,
    sde_residual,
    skew_path,
    skew_terminal_sample,
    skew_terminal_samples,
    skew_transition_cdf,
    skew_transition_density,
    two_sample_ks,
)

from conftest import MASTER


def walk_exact_distribution(alpha, n):
    """Independent enumeration oracle: exact terminal pmf of the skew walk."""
    p = np.zeros(2 * n + 1)
    p[n] = 1.0
    for _ in range(n):
        q = np.zeros_like(p)
        q[n + 1] += alpha * p[n]
        q[n - 1] += (1 - alpha) * p[n]
        off = p.copy()
        off[n] = 0.0
        q[2:] += 0.5 * off[1:-1]
        q[:-2] += 0.5 * off[1:-1]
        p = q
    return p


def trivial_spec(schedule, grid, seed, variant="absolute"):
    base = Decomposition.martingale(
        sample_brownian(grid, seed.child("base")), label="driver"
    )
    model = build_model("trivial", grid, seed)
    return SkewBuildSpec(variant=variant, schedule=schedule, base=base, model=model)


class TestBuildSkew:
    def test_alpha_one_absolute_is_reflection(self, seed):
        grid = make_grid(1.0, 2**10)
        spec = trivial_spec(AlphaSchedule.constant(1.0), grid, seed)
        out = build_skew(spec, seed.child("signs"))
        assert np.array_equal(out.values, np.abs(spec.base.total.values))

    def test_single_cell_piecewise_matches_constant(self, seed):
        grid = make_grid(1.0, 2**10)
        const = trivial_spec(AlphaSchedule.constant(0.3), grid, seed)
        piece = trivial_spec(AlphaSchedule.piecewise([0.0], [0.3]), grid, seed)
        a = build_skew(const, seed.child("signs"))
        b = build_skew(piece, seed.child("signs"))
        assert np.array_equal(a.values, b.values)

    def test_absolute_law_invariance(self, seed):
        grid = make_grid(1.0, 2**10)
        for i, alpha in enumerate([0.2, 0.7]):
            s = seed.with_path(i)
            spec = trivial_spec(AlphaSchedule.constant(alpha), grid, s)
            out = build_skew(spec, s.child("signs"))
            assert np.array_equal(np.abs(out.values), np.abs(spec.base.total.values))

    def test_nonzero_start_keeps_initial_sign(self, seed):
        grid = make_grid(1.0, 2**8)
        base = Decomposition.martingale(sample_brownian(grid, seed.child("base"), x0=0.4))
        model = build_model("trivial", grid, seed)
        spec = SkewBuildSpec(
            variant="signed",
            schedule=AlphaSchedule.constant(0.0),  # every unforced sign is -1
            base=base,
            model=model,
            x0=0.4,
        )
        out = build_skew(spec, seed.child("signs"))
        assert out.values[0] == 0.4  # no flip before the first zero

    def test_strict_mode_rejects_bad_hypotheses(self, seed):
        # under a model with nontrivial H, a driver not vanishing on H fails
        grid = make_grid(1.0, 2**10)
        model = None
        for i in range(50):
            m = build_model("shifted_brownian", grid, seed.with_path(i).child("model"))
            if not m.h_mask.is_empty:
                model = m
                roots_seed = seed.with_path(i)
                break
        assert model is not None
        base = Decomposition.martingale(sample_brownian(grid, roots_seed.child("w")))
        spec = SkewBuildSpec(
            variant="signed",
            schedule=AlphaSchedule.constant(0.7),
            base=base,
            model=model,
        )
        with pytest.raises(HypothesisNotMetError):
            build_skew(spec, roots_seed.child("signs"))
        out = build_skew(spec, roots_seed.child("signs"), strict=False)
        assert len(out) == len(base.total)

    def test_invalid_variant_rejected(self, seed):
        grid = make_grid(1.0, 16)
        with pytest.raises(ValueError):
            trivial_spec(AlphaSchedule.constant(0.5), grid, seed, variant="upside")


class TestSdeResidual:
    def _construction(self, seed, n_steps, alpha, variant):
        grid = make_grid(1.0, n_steps)
        base = Decomposition.martingale(sample_brownian(grid, seed.child("base")))
        exc = decompose_excursions(base.total)
        sched = AlphaSchedule.constant(alpha)
        z = birth_frozen_sign_path(
            exc, assign_signs(exc, sched, seed.child("signs")), sched
        )
        x = apply_sign(z, base.total, mode=variant)
        return x, base, z, sched

    def test_alpha_one_absolute_reduces_to_tanaka_residual(self, seed):
        # Z == 1 on excursions, so the identity collapses to the reflection's
        # Tanaka rearrangement checked against the occupation estimate
        from skewlab.localtime import identity_residual

        x, base, z, sched = self._construction(seed, 2**10, 1.0, "absolute")
        r = sde_residual(x, base, z, sched, variant="absolute")
        r_tanaka = identity_residual("tanaka", path=base.total)
        assert r.sup_norm == pytest.approx(r_tanaka.sup_norm)
        assert r.terminal == pytest.approx(r_tanaka.terminal)

    def test_alpha_half_reduces_to_driving_noise(self, seed):
        x, base, z, sched = self._construction(seed, 2**12, 0.5, "absolute")
        w = recover_driving_noise(base, z, "absolute")
        r = sde_residual(x, base, z, sched, variant="absolute")
        direct = np.max(np.abs(x.values - x.values[0] - w.values))
        assert r.sup_norm == pytest.approx(direct)

    def test_absolute_mesh_convergence(self):
        meds = {}
        for n in (2**12, 2**16):
            sups = []
            for i in range(8):
                s = SeedSpec(MASTER, "sdeconv", i)
                x, base, z, sched = self._construction(s, n, 0.7, "absolute")
                sups.append(sde_residual(x, base, z, sched, "absolute").sup_norm)
            meds[n] = np.median(sups)
        assert meds[2**12] > meds[2**16]
        assert meds[2**16] < 0.1

    def test_recovered_noise_is_brownian_in_qv(self, seed):
        x, base, z, _ = self._construction(seed, 2**14, 0.7, "absolute")
        w = recover_driving_noise(base, z, "absolute")
        assert abs(quadratic_covariation(w, w).values[-1] - 1.0) < 0.05

    def test_signed_variant_residual_does_not_vanish(self):
        # flipping the signed driver re-randomizes excursion signs that are
        # already symmetric, so the skew reflection term finds no support:
        # the signed flip of a Brownian driver follows the alpha = 1/2 law
        # and its alpha != 1/2 residual stalls near (2 alpha - 1) L instead
        # of vanishing
        sups = []
        for i in range(8):
            s = SeedSpec(MASTER, "sdesigned", i)
            x, base, z, sched = self._construction(s, 2**14, 0.7, "signed")
            sups.append(sde_residual(x, base, z, sched, "signed").sup_norm)
        assert np.median(sups) > 0.15


class TestTransitionDensity:
    def test_symmetric_case_is_gaussian(self):
        y = np.linspace(-3, 3, 41)
        assert np.allclose(skew_transition_density(0.5, 1.0, y), norm.pdf(y))

    def test_normalization_by_quadrature(self):
        for alpha, t in [(0.3, 1.0), (0.7, 0.5), (0.9, 2.0)]:
            total, _ = quad(lambda y: skew_transition_density(alpha, t, y), -np.inf, np.inf)
            assert abs(total - 1.0) < 1e-8

    def test_positive_mass_equals_alpha(self):
        for alpha in (0.3, 0.5, 0.7):
            mass, _ = quad(lambda y: skew_transition_density(alpha, 1.0, y), 0, np.inf)
            assert abs(mass - alpha) < 1e-8

    def test_cdf_matches_density(self):
        alpha, t = 0.7, 0.8
        for y in (-1.5, -0.2, 0.4, 2.0):
            mass, _ = quad(lambda u: skew_transition_density(alpha, t, u), -np.inf, y)
            assert abs(mass - float(skew_transition_cdf(alpha, t, y))) < 1e-8

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            skew_transition_density(0.5, 0.0, 1.0)
        with pytest.raises(ValueError):
            skew_transition_density(1.5, 1.0, 1.0)


class TestHarrisonSheppWalk:
    def test_alpha_one_never_negative(self, seed):
        w = harrison_shepp_walk(1.0, 512, seed)
        assert np.all(w.values >= 0)

    def test_scaling(self, seed):
        w = harrison_shepp_walk(0.5, 256, seed)
        steps = np.diff(w.values) * math.sqrt(256)
        assert np.allclose(np.abs(steps), 1.0)

    def test_batch_matches_single_walks(self, seed):
        batch = harrison_shepp_terminals(0.7, 128, 16, seed)
        singles = [
            harrison_shepp_walk(0.7, 128, seed.with_path(k)).values[-1]
            for k in range(16)
        ]
        assert np.array_equal(batch.values, singles)

    def test_symmetric_walk_clt_with_lattice_correction(self):
        w = harrison_shepp_terminals(0.5, 2**12, 100_000, SeedSpec(MASTER, "hs5"))
        ks = ks_statistic(w.values, lambda y: norm.cdf(y))
        assert ks < kstwobign.isf(0.01) / math.sqrt(w.n)

    def test_sign_probability_vs_exact_enumeration(self):
        # oracle: exact DP over the walk's lattice distribution
        alpha, n = 0.7, 2**12
        pmf = walk_exact_distribution(alpha, n)
        support = np.arange(-n, n + 1)
        p_pos = pmf[support > 0].sum()
        p_zero = pmf[support == 0].sum()
        w = harrison_shepp_terminals(alpha, n, 100_000, SeedSpec(MASTER, "hsbig"))
        frac = np.mean(w.values > 0)
        se = math.sqrt(p_pos * (1 - p_pos) / w.n)
        assert abs(frac - p_pos) < 3 * se
        # the continuum sign probability alpha is recovered once the lattice
        # atom at zero (spacing 2/sqrt(n)) is split evenly; p_zero ~ 0.0125
        frac_mid = frac + 0.5 * np.mean(w.values == 0)
        assert abs(frac_mid - alpha) < 0.01
        assert abs((p_pos + 0.5 * p_zero) - alpha) < 0.005  # exact-oracle link

    def test_invalid_arguments(self, seed):
        with pytest.raises(ValueError):
            harrison_shepp_walk(1.2, 16, seed)
        with pytest.raises(ValueError):
            harrison_shepp_walk(0.5, 0, seed)


class TestTerminalSamplers:
    def test_bulk_equals_full_pipeline_on_shared_streams(self):
        # the bulk sampler only materializes the straddling excursion's sign;
        # rebuild the full decompose/sign/apply pipeline from the same chunk
        # streams and demand bit-identical terminals
        sched = AlphaSchedule.piecewise([0.0, 0.5], [0.3, 0.8])
        seed = SeedSpec(MASTER, "bulkhonesty")
        n_paths, n_steps, chunk = 300, 512, 128
        bulk = skew_terminal_sample(sched, n_paths, n_steps, seed, chunk=chunk)
        grid = make_grid(1.0, n_steps)
        for c, lo in enumerate(range(0, n_paths, chunk)):
            hi = min(lo + chunk, n_paths)
            m = hi - lo
            incr = seed.child(f"bulk/base/{c}").rng().standard_normal(
                (m, n_steps), dtype=np.float32
            )
            incr *= np.float32(math.sqrt(grid.dt))
            rows = np.cumsum(incr, axis=1)
            sgn = np.sign(rows).astype(np.int8)
            nz = sgn != 0
            starts = nz.copy()
            starts[:, 1:] &= ~nz[:, :-1] | (sgn[:, 1:] != sgn[:, :-1])
            max_exc = int(starts.sum(axis=1).max())
            u = seed.child(f"bulk/signs/0/{c}").rng().random(
                (m, max(max_exc, 1) * sched.n_cells)
            )
            for p in range(m):
                path = SamplePath(grid, np.concatenate([[0.0], rows[p].astype(float)]))
                exc = decompose_excursions(path)
                k = exc.n_excursions
                signs = np.where(
                    u[p, : k * sched.n_cells].reshape(k, sched.n_cells)
                    < np.asarray(sched.values)[None, :],
                    1,
                    -1,
                ).astype(np.int8)
                z = birth_frozen_sign_path(exc, SignAssignment(signs), sched)
                full = apply_sign(z, path, mode="absolute").values[-1]
                assert full == bulk.values[lo + p]

    def test_bulk_deterministic(self):
        sched = AlphaSchedule.constant(0.6)
        seed = SeedSpec(MASTER, "bulkdet")
        a = skew_terminal_sample(sched, 500, 256, seed)
        b = skew_terminal_sample(sched, 500, 256, seed)
        assert np.array_equal(a.values, b.values)

    def test_multi_schedule_first_matches_single(self):
        scheds = [AlphaSchedule.constant(0.4), AlphaSchedule.constant(0.8)]
        seed = SeedSpec(MASTER, "bulkmulti")
        multi = skew_terminal_samples(scheds, 400, 128, seed)
        single = skew_terminal_sample(scheds[0], 400, 128, seed)
        assert np.array_equal(multi[0].values, single.values)

    def test_perpath_law(self):
        s = skew_terminal_sample(
            AlphaSchedule.constant(0.7), 2000, 256, SeedSpec(MASTER, "pp"), mode="perpath"
        )
        rep = law_test(s, SkewLaw(0.7, 1.0))
        assert rep.passed

    def test_signed_flip_of_brownian_driver_stays_symmetric(self):
        # the documented law-level finding: a signed flip cannot skew a
        # Brownian driver because its excursion signs are already symmetric
        s = skew_terminal_sample(
            AlphaSchedule.constant(0.7), 20_000, 512, SeedSpec(MASTER, "sym"), variant="signed"
        )
        frac = np.mean(s.values > 0)
        assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / s.n)


class TestLawTest:
    def test_identical_sample_distance_zero(self):
        vals = np.random.default_rng(MASTER).standard_normal(2000)
        a = LawSample(vals, 1.0, "a")
        rep = law_test(a, LawSample(vals.copy(), 1.0, "b"))
        assert rep.statistic == 0.0
        assert rep.passed

    def test_two_gaussian_samples_pass_mostly(self):
        passes = 0
        for i in range(10):
            rng = np.random.default_rng(MASTER + i)
            a = LawSample(rng.standard_normal(100_000), 1.0)
            b = LawSample(rng.standard_normal(100_000), 1.0)
            passes += law_test(a, b).passed
        assert passes >= 8

    def test_insufficient_samples(self):
        a = LawSample(np.zeros(10), 1.0)
        with pytest.raises(InsufficientSamplesError):
            law_test(a, SkewLaw(0.5, 1.0))

    def test_one_sample_against_handle(self):
        s = skew_terminal_sample(
            AlphaSchedule.constant(0.3), 20_000, 512, SeedSpec(MASTER, "handle")
        )
        rep = law_test(s, SkewLaw(0.3, 1.0))
        assert rep.passed
        assert "sign_prob_err" in rep.detail

    def test_ks_statistic_midpoint_on_lattice(self):
        # an evenly split two-atom sample against the cdf that bisects each
        # jump: midpoint convention scores 0 where plain KS would score 1/4
        sample = np.array([-1.0] * 50 + [1.0] * 50)
        stat = ks_statistic(sample, lambda y: np.clip((np.asarray(y) + 2) / 4, 0, 1))
        assert stat == pytest.approx(0.0, abs=1e-12)

    def test_two_sample_ks_matches_scipy(self):
        from scipy.stats import ks_2samp

        rng = np.random.default_rng(7)
        a, b = rng.standard_normal(500), rng.standard_normal(700) + 0.1
        assert two_sample_ks(a, b) == pytest.approx(ks_2samp(a, b).statistic)

    def test_lattice_smoothing_removes_half_atom_artifact(self):
        from skewlab.skewbm import lattice_smooth

        # a lattice sample against a continuous sample from the matching
        # normal law: the plain statistic is stuck near half the central
        # atom's mass, the continuity-corrected one is not
        rng = np.random.default_rng(11)
        cont = rng.standard_normal(200_000)
        lattice = np.round(rng.standard_normal(200_000) * 4) / 4  # spacing 0.25
        plain = two_sample_ks(cont, lattice)
        smoothed = two_sample_ks(cont, lattice_smooth(lattice, 0.25))
        assert plain > 0.04  # half the ~0.1 central atom
        assert smoothed < 0.01

    def test_lattice_smooth_preserves_counts_and_cells(self):
        from skewlab.skewbm import lattice_smooth

        sample = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 1.0])
        out = lattice_smooth(sample, 1.0)
        assert len(out) == len(sample)
        assert np.all(np.abs(out[:4] - 0.0) < 0.5)
        assert np.all(np.abs(out[4:] - 1.0) < 0.5)
        # evenly spread, mean preserved per atom
        assert np.mean(out[:4]) == pytest.approx(0.0)
        assert np.mean(out[4:]) == pytest.approx(1.0)
