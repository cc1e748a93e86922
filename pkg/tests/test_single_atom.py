import math

import numpy as np
import pytest
from scipy.optimize import brentq

from rydlat import exact, single_atom
from rydlat.model import (
    FullVdW,
    LatticeModel,
    NNTruncated,
    ThreeLevelScheme,
    TwoLevelScheme,
)

TWO = TwoLevelScheme(omega_gr=1.0, gamma_rg=1.0)
THREE = ThreeLevelScheme(omega_ge=1.0, omega_er=0.2, gamma_eg=4.0)

SINGLE_SITE = LatticeModel(n_sites=1, potential=NNTruncated(0.0))


class TestSteadyPopulation:
    def test_two_level_resonant(self):
        # 1 / (2 + 0.25) with gamma = Gamma/2 = 0.5
        assert single_atom.steady_population(TWO) == pytest.approx(4 / 9, abs=1e-15)

    def test_three_level_figure_params(self):
        assert single_atom.steady_population(THREE) == pytest.approx(
            1 / 1.04, abs=1e-15
        )

    def test_vanishes_at_large_detuning(self):
        s = TwoLevelScheme(1.0, 1.0, delta=1e9)
        assert single_atom.steady_population(s) < 1e-15
        s3 = ThreeLevelScheme(1.0, 0.2, 4.0, delta=1e9)
        assert single_atom.steady_population(s3) < 1e-15

    def test_rejects_all_zero_drive(self):
        with pytest.raises(ValueError):
            single_atom.steady_population(TwoLevelScheme(0.0, 0.0, 0.0))
        with pytest.raises(ValueError):
            single_atom.steady_population(ThreeLevelScheme(0.0, 0.0, 4.0))

    @pytest.mark.parametrize("delta", [0.3, 1.0, 2.5])
    def test_even_in_detuning(self, delta):
        for make in (
            lambda d: TwoLevelScheme(1.0, 0.7, d),
            lambda d: ThreeLevelScheme(1.0, 0.4, 2.0, d),
        ):
            assert single_atom.steady_population(make(delta)) == pytest.approx(
                single_atom.steady_population(make(-delta)), rel=1e-14
            )
            assert single_atom.steady_population(make(delta)) < (
                single_atom.steady_population(make(0.0))
            )

    @pytest.mark.parametrize(
        "scheme",
        [
            TwoLevelScheme(o, g, d)
            for o in (0.5, 1.0, 2.0)
            for g in (0.25, 1.0)
            for d in (0.0, 0.5, 1.5, -0.8)
        ],
    )
    def test_two_level_against_integration(self, scheme):
        profile = exact.steady_state(
            SINGLE_SITE, scheme, tol=1e-10, rtol=1e-11, atol=1e-13
        )
        assert profile.populations[0] == pytest.approx(
            single_atom.steady_population(scheme), abs=1e-8
        )

    @pytest.mark.parametrize(
        "scheme",
        [
            ThreeLevelScheme(1.0, oer, g, d)
            for oer in (0.2, 0.6)
            for g in (1.0, 4.0)
            for d in (0.0, 0.4, -1.2)
        ],
    )
    def test_three_level_against_integration(self, scheme):
        profile = exact.steady_state(
            SINGLE_SITE, scheme, tol=1e-10, rtol=1e-11, atol=1e-13
        )
        residual = abs(
            profile.populations[0] - single_atom.steady_population(scheme)
        )
        # the closed form turns out to be numerically exact for this model;
        # the residual is integration error
        assert residual < 1e-7


class TestLinewidth:
    def test_two_level_value(self):
        assert single_atom.linewidth(TWO) == pytest.approx(1.5, abs=1e-15)

    def test_three_level_value(self):
        assert single_atom.linewidth(THREE) == pytest.approx(
            1.04 / math.sqrt(6), rel=1e-14
        )

    def test_bare_linewidth_no_drive(self):
        assert single_atom.linewidth(TwoLevelScheme(0.0, gamma_rg=3.0)) == 1.5

    @pytest.mark.parametrize(
        "scheme",
        [
            TwoLevelScheme(1.0, 1.0),
            TwoLevelScheme(0.4, 2.0),
            ThreeLevelScheme(1.0, 0.2, 4.0),
            ThreeLevelScheme(0.8, 0.5, 1.0),
        ],
    )
    def test_matches_half_width_at_half_maximum(self, scheme):
        # find the detuning where the population drops to half its peak
        def at(delta):
            kwargs = dict(scheme.__dict__)
            kwargs["delta"] = delta
            return single_atom.steady_population(type(scheme)(**kwargs))

        peak = at(0.0)
        w = single_atom.linewidth(scheme)
        half = brentq(lambda d: at(d) - peak / 2, 1e-6, 100.0, xtol=1e-12)
        assert half == pytest.approx(w, rel=1e-6)


class TestBlockadeDistance:
    def test_boundary_case(self):
        scheme = TWO
        w = single_atom.linewidth(scheme)
        model = LatticeModel(n_sites=2, potential=FullVdW(c6=w))
        check = single_atom.blockade_distance(model, scheme)
        assert check.distance == pytest.approx(1.0)
        assert not check.nn_only

    def test_two_lattice_periods(self):
        w = single_atom.linewidth(TWO)
        model = LatticeModel(n_sites=2, potential=FullVdW(c6=64 * w))
        assert single_atom.blockade_distance(model, TWO).distance == pytest.approx(2.0)

    def test_nn_only_window(self):
        w = single_atom.linewidth(TWO)
        model = LatticeModel(n_sites=2, potential=FullVdW(c6=2 * w))
        check = single_atom.blockade_distance(model, TWO)
        assert check.distance == pytest.approx(2 ** (1 / 6), rel=1e-12)
        assert check.nn_only

    def test_requires_vdw(self):
        model = LatticeModel(n_sites=2, potential=NNTruncated(1.0))
        with pytest.raises(ValueError):
            single_atom.blockade_distance(model, TWO)

    def test_zero_linewidth_rejected(self):
        model = LatticeModel(n_sites=2, potential=FullVdW(1.0))
        with pytest.raises(ValueError):
            single_atom.blockade_distance(model, TwoLevelScheme(0.0, 0.0))


class TestKappa:
    def test_two_level_value(self):
        assert single_atom.kappa(TWO) == pytest.approx(0.8, abs=1e-15)

    def test_three_level_figure_value(self):
        assert single_atom.kappa(THREE) == pytest.approx(25.0, rel=1e-12)

    def test_lossless_limit(self):
        assert single_atom.kappa(TwoLevelScheme(1.0, gamma_rg=0.0)) == 1.0

    def test_diverging_kappa_rejected(self):
        with pytest.raises(ValueError):
            single_atom.kappa(ThreeLevelScheme(1.0, 0.0, 4.0))

    @pytest.mark.parametrize(
        "scheme",
        [TWO, THREE, TwoLevelScheme(0.7, 2.0), ThreeLevelScheme(1.0, 0.5, 1.0)],
    )
    def test_identity_with_population_ratio(self, scheme):
        # at delta = 0 the printed formulas satisfy kappa = p / (1 - p);
        # the inverse ratio, as written next to the jump operators, is 1/kappa
        diag = single_atom.kappa_identity_diagnostic(scheme)
        assert diag["excited_over_ground"] == pytest.approx(diag["kappa"], abs=1e-12)
        assert diag["ground_over_excited"] == pytest.approx(
            1 / diag["kappa"], abs=1e-12
        )


class TestKappaCorrections:
    def test_beta_zero_recovers_kappa(self):
        assert single_atom.kappa_nnn_corrected(THREE, 0.0) == pytest.approx(
            single_atom.kappa(THREE)
        )
        assert single_atom.kappa_dipole_corrected(THREE, 0.0) == pytest.approx(
            single_atom.kappa(THREE)
        )

    def test_nnn_value_beta_ten(self):
        # 1 / (0.04 + 1.04 (10/64)^2)
        expected = 1.0 / (0.04 + 1.04 * (10 / 64) ** 2)
        assert single_atom.kappa_nnn_corrected(THREE, 10.0) == pytest.approx(
            expected, rel=1e-14
        )
        assert expected == pytest.approx(15.2927, abs=5e-4)

    def test_dipole_value_beta_eight(self):
        assert single_atom.kappa_dipole_corrected(THREE, 8.0) == pytest.approx(
            1 / 1.08, rel=1e-14
        )

    @pytest.mark.parametrize("oge", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("oer", [0.05, 0.2, 0.9])
    @pytest.mark.parametrize("beta", [1.0, 5.0, 10.0, 30.0])
    def test_nnn_bound(self, oge, oer, beta):
        scheme = ThreeLevelScheme(oge, oer, 4.0)
        assert single_atom.kappa_nnn_corrected(scheme, beta) <= (64 / beta) ** 2 + 1e-12

    @pytest.mark.parametrize("beta", [1.0, 5.0, 10.0])
    def test_dipole_bound(self, beta):
        assert single_atom.kappa_dipole_corrected(THREE, beta) <= (8 / beta) ** 2 + 1e-12

    def test_monotonically_decreasing_in_beta(self):
        betas = np.linspace(0.0, 30.0, 40)
        values = [single_atom.kappa_nnn_corrected(THREE, b) for b in betas]
        assert all(v1 > v2 for v1, v2 in zip(values, values[1:]))

    def test_dipole_beta_ten_short_correlation_length(self):
        kappa = single_atom.kappa_dipole_corrected(THREE, 10.0)
        assert kappa <= 0.64
        assert math.sqrt(kappa) < 1.0  # xi < a
