import math

import numpy as np
import pytest

from rydlat.model import (
    FullVdW,
    HardCoreNN,
    LatticeModel,
    NNTruncated,
    SiteOperatorSet,
    SteadyProfile,
    ThreeLevelScheme,
    TwoLevelScheme,
    build_lindblad_generators,
    build_site_hamiltonian,
    pair_energy,
)


class TestSchemes:
    def test_rejects_negative_rates(self):
        with pytest.raises(ValueError):
            TwoLevelScheme(omega_gr=-1.0)
        with pytest.raises(ValueError):
            ThreeLevelScheme(omega_ge=1.0, omega_er=0.2, gamma_eg=-4.0)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            TwoLevelScheme(omega_gr=math.inf)
        with pytest.raises(ValueError):
            TwoLevelScheme(omega_gr=1.0, delta=math.nan)

    def test_local_dims(self):
        assert TwoLevelScheme(1.0).local_dim == 2
        assert ThreeLevelScheme(1.0, 0.2).local_dim == 3


class TestSiteOperators:
    def test_transition_algebra(self):
        # |mu><nu| |nu'><mu'| = delta_{nu nu'} |mu><mu'|
        ops = SiteOperatorSet(3)
        for mu in range(3):
            for nu in range(3):
                for nu2 in range(3):
                    for mu2 in range(3):
                        prod = ops.sigma(mu, nu) @ ops.sigma(nu2, mu2)
                        expected = ops.sigma(mu, mu2) if nu == nu2 else np.zeros((3, 3))
                        assert np.array_equal(prod, expected)

    def test_basis_ordering(self):
        two = SiteOperatorSet(2)
        assert two.index("g") == 0 and two.index("r") == 1
        three = SiteOperatorSet(3)
        assert three.index("g") == 0
        assert three.index("e") == 1
        assert three.index("r") == 2

    def test_unknown_level(self):
        with pytest.raises(ValueError):
            SiteOperatorSet(2).index("e")


class TestSiteHamiltonian:
    def test_zero_drive_is_zero_matrix(self):
        h = build_site_hamiltonian(TwoLevelScheme(omega_gr=0.0))
        assert np.array_equal(h, np.zeros((2, 2)))

    def test_two_level_transcription(self):
        h = build_site_hamiltonian(TwoLevelScheme(omega_gr=1.0, delta=0.0))
        assert np.array_equal(h, np.array([[0, -1], [-1, 0]], dtype=complex))

    def test_three_level_figure_couplings(self):
        # omega_er = omega_ge / 5, the three-level figure parameters
        h = build_site_hamiltonian(ThreeLevelScheme(omega_ge=1.0, omega_er=0.2))
        expected = np.array(
            [[0, -1.0, 0], [-1.0, 0, -0.2], [0, -0.2, 0]], dtype=complex
        )
        assert np.array_equal(h, expected)

    def test_detuning_sits_on_rydberg_level(self):
        h2 = build_site_hamiltonian(TwoLevelScheme(1.0, delta=0.7))
        assert h2[1, 1] == 0.7
        h3 = build_site_hamiltonian(ThreeLevelScheme(1.0, 0.2, delta=-0.3))
        assert h3[2, 2] == -0.3 and h3[1, 1] == 0

    @pytest.mark.parametrize(
        "scheme",
        [
            TwoLevelScheme(1.3, 0.7, 0.4),
            ThreeLevelScheme(0.9, 0.35, 2.0, -1.1),
            TwoLevelScheme(0.0, 1.0),
        ],
    )
    def test_exactly_hermitian(self, scheme):
        h = build_site_hamiltonian(scheme)
        assert np.array_equal(h, h.conj().T)


class TestLindbladGenerators:
    def test_two_level_entry(self):
        (l,) = build_lindblad_generators(TwoLevelScheme(1.0, gamma_rg=1.0))
        expected = np.zeros((2, 2), dtype=complex)
        expected[0, 1] = 1.0
        assert np.array_equal(l, expected)

    def test_three_level_figure_rate(self):
        # Gamma_eg = 4 Omega_ge gives amplitude sqrt(4) = 2 on (g, e)
        (l,) = build_lindblad_generators(ThreeLevelScheme(1.0, 0.2, gamma_eg=4.0))
        expected = np.zeros((3, 3), dtype=complex)
        expected[0, 1] = 2.0
        assert np.array_equal(l, expected)

    def test_zero_decay_zero_matrix(self):
        (l,) = build_lindblad_generators(TwoLevelScheme(1.0, gamma_rg=0.0))
        assert np.array_equal(l, np.zeros((2, 2)))


class TestPairEnergy:
    def test_vdw_next_nearest_is_c6_over_64(self):
        model = LatticeModel(n_sites=5, potential=FullVdW(c6=3.0))
        assert pair_energy(model, 0, 2) == pytest.approx(3.0 / 64)

    def test_nn_truncated(self):
        model = LatticeModel(n_sites=5, potential=NNTruncated(u=2.0))
        assert pair_energy(model, 1, 2) == 2.0
        assert pair_energy(model, 0, 2) == 0.0

    def test_hard_core_sentinel(self):
        model = LatticeModel(n_sites=4, potential=HardCoreNN())
        assert math.isinf(pair_energy(model, 0, 1))
        assert pair_energy(model, 0, 2) == 0.0

    def test_same_site_rejected(self):
        model = LatticeModel(n_sites=3, potential=NNTruncated(1.0))
        with pytest.raises(ValueError):
            pair_energy(model, 1, 1)

    @pytest.mark.parametrize("potential", [FullVdW(1.7), NNTruncated(0.9), HardCoreNN()])
    def test_symmetric_in_sites(self, potential):
        model = LatticeModel(n_sites=8, potential=potential)
        for i in range(8):
            for j in range(8):
                if i != j:
                    assert pair_energy(model, i, j) == pair_energy(model, j, i)

    def test_vdw_decays_monotonically_and_matches_nn_at_one(self):
        c6, a = 1.9, 1.3
        model = LatticeModel(n_sites=9, potential=FullVdW(c6), spacing=a)
        energies = [pair_energy(model, 0, j) for j in range(1, 9)]
        assert all(e1 > e2 for e1, e2 in zip(energies, energies[1:]))
        nn = LatticeModel(n_sites=9, potential=NNTruncated(c6 / a**6), spacing=a)
        assert pair_energy(model, 3, 4) == pytest.approx(pair_energy(nn, 3, 4))


class TestLatticeModel:
    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            LatticeModel(n_sites=0, potential=NNTruncated(1.0))
        with pytest.raises(ValueError):
            LatticeModel(n_sites=3, potential=NNTruncated(1.0), spacing=0.0)


class TestSteadyProfile:
    def test_validate_bounds(self):
        SteadyProfile(populations=[0.2, 0.9]).validate()
        with pytest.raises(ValueError):
            SteadyProfile(populations=[1.2, 0.5]).validate()

    def test_validate_pair_correlations(self):
        good = SteadyProfile(populations=[0.4, 0.6], pair_correlations={(0, 1): 0.3})
        good.validate()
        bad = SteadyProfile(populations=[0.4, 0.6], pair_correlations={(0, 1): 0.5})
        with pytest.raises(ValueError):
            bad.validate()
