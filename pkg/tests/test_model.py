import json

import numpy as np
import pytest

from qetlab.errors import DegenerateGroundStateError, DimensionError, NotHermitianError, SiteRangeError
from qetlab.linalg import SIGMA_X, SIGMA_Z, HilbertSpace, eigvalsh, embed_local, kron, operator_norm
from qetlab.model import (
    ChainModel,
    Coupling,
    density_expectations,
    energy_density,
    energy_support,
    ground_state,
    hamiltonian,
    ising,
    localized_energy,
    prepare,
    renormalize,
)

from conftest import GOLDEN_DIR
from helpers import random_hermitian

GOLDEN = json.loads((GOLDEN_DIR / "reference.json").read_text())


def decoupled(rng, dims=(2, 3, 2)):
    space = HilbertSpace(dims)
    xs = [random_hermitian(rng, d) for d in dims]
    return ChainModel(space, xs)


def generic(rng, dims=(2, 3, 2, 2)):
    space = HilbertSpace(dims)
    xs = [random_hermitian(rng, d) for d in dims]
    channels = [
        Coupling([random_hermitian(rng, d) for d in dims], rng.normal(size=len(dims) - 1))
        for _ in range(2)
    ]
    return ChainModel(space, xs, channels)


class TestEnergyDensity:
    def test_decoupled_is_embedded_x(self, rng):
        model = decoupled(rng)
        for n, x in enumerate(model.x_ops):
            np.testing.assert_allclose(energy_density(model, n), embed_local(x, [n], model.space))

    def test_ising_interior_site(self):
        b, g = 0.7, 0.3
        model = ising(5, b, g)
        space = model.space
        xx = kron(SIGMA_X, SIGMA_X)
        expected = (
            b * embed_local(SIGMA_Z, [2], space)
            - g / 2 * embed_local(xx, [1, 2], space)
            - g / 2 * embed_local(xx, [2, 3], space)
        )
        np.testing.assert_allclose(energy_density(model, 2), expected, atol=1e-15)

    def test_ising_end_site_has_one_bond(self):
        model = ising(4, 1.0, 0.5)
        expected = embed_local(SIGMA_Z, [0], model.space) - 0.25 * embed_local(kron(SIGMA_X, SIGMA_X), [0, 1], model.space)
        np.testing.assert_allclose(energy_density(model, 0), expected, atol=1e-15)

    @pytest.mark.parametrize("builder", ["ising", "generic"])
    def test_densities_sum_to_hamiltonian(self, rng, builder):
        model = ising(6, 0.9, 0.4) if builder == "ising" else generic(rng)
        total = sum(energy_density(model, n) for n in range(model.n_sites))
        assert np.max(np.abs(total - hamiltonian(model))) <= 1e-12

    def test_site_range(self):
        with pytest.raises(SiteRangeError):
            energy_density(ising(3, 1, 1), 3)


class TestHamiltonian:
    def test_single_site(self):
        model = ChainModel(HilbertSpace.qubits(1), [SIGMA_Z])
        np.testing.assert_array_equal(hamiltonian(model), SIGMA_Z)

    def test_two_site_pure_coupling(self):
        h = hamiltonian(ising(2, 0.0, 1.0))
        np.testing.assert_allclose(h, -kron(SIGMA_X, SIGMA_X))
        np.testing.assert_allclose(eigvalsh(h), [-1, -1, 1, 1], atol=1e-15)

    def test_ising_standard_form(self):
        n, b, g = 5, 1.3, 0.6
        model = ising(n, b, g, eps=np.arange(n) * 0.1)
        space = model.space
        expected = sum(b * embed_local(SIGMA_Z, [k], space) for k in range(n))
        expected = expected - sum(g * embed_local(kron(SIGMA_X, SIGMA_X), [k, k + 1], space) for k in range(n - 1))
        expected = expected - np.sum(np.arange(n) * 0.1) * np.eye(2 ** n)
        np.testing.assert_allclose(hamiltonian(model), expected, atol=1e-13)

    def test_validation(self, rng):
        space = HilbertSpace.qubits(2)
        with pytest.raises(DimensionError):
            ChainModel(space, [SIGMA_Z])
        with pytest.raises(NotHermitianError):
            ChainModel(space, [SIGMA_Z, np.array([[0, 1], [0, 0]])])
        with pytest.raises(DimensionError):
            ChainModel(space, [SIGMA_Z, SIGMA_Z], [Coupling([SIGMA_X, SIGMA_X], [1.0, 2.0])])
        with pytest.raises(ValueError):
            Coupling([SIGMA_X, SIGMA_X], [np.nan])


class TestGroundState:
    def test_golden_reference(self):
        gs = ground_state(ising(8, 1.0, 0.5))
        assert gs.energy == pytest.approx(GOLDEN["scalars"]["ground_energy_raw"], abs=1e-9)
        assert gs.gap == pytest.approx(GOLDEN["scalars"]["gap"], abs=1e-9)
        assert abs(np.linalg.norm(gs.vector) - 1) <= 1e-11

    @pytest.mark.parametrize("b", [0.5, 2.0])
    def test_separable(self, b):
        gs = ground_state(ising(4, b, 0.0))
        down = np.zeros(16)
        down[-1] = 1.0  # sigma_z = -1 on every site is |1111>
        np.testing.assert_allclose(gs.vector, down, atol=1e-14)
        assert gs.gap == pytest.approx(2 * b)

    def test_symmetry_broken_doublet_rejected(self):
        with pytest.raises(DegenerateGroundStateError):
            ground_state(ising(4, 0.0, 1.0))

    def test_phase_convention(self, rng):
        gs = ground_state(generic(rng))
        k = np.argmax(np.abs(gs.vector))
        assert gs.vector[k].imag == 0.0 and gs.vector[k].real > 0


class TestRenormalize:
    def test_separable_shift(self):
        b = 1.5
        model, gs = prepare(ising(4, b, 0.0))
        np.testing.assert_allclose(model.offsets, [-b] * 4, atol=1e-14)
        np.testing.assert_allclose(density_expectations(model, gs), 0, atol=1e-14)
        assert eigvalsh(hamiltonian(model))[0] >= -1e-9

    @pytest.mark.parametrize("builder", ["ising", "generic"])
    def test_invariants(self, rng, builder):
        base = ising(7, 1.0, 0.8) if builder == "ising" else generic(rng)
        model, gs = prepare(base)
        h = hamiltonian(model)
        assert np.max(np.abs(density_expectations(model, gs))) <= 1e-10
        assert np.linalg.norm(h @ gs.vector) <= 1e-9
        assert eigvalsh(h)[0] >= -1e-9
        assert abs(gs.energy) <= 1e-9
        # identity shifts leave the ground vector alone
        again = ground_state(model)
        assert abs(abs(np.vdot(again.vector, gs.vector)) - 1) <= 1e-10

    def test_idempotent(self):
        model, gs = prepare(ising(6, 1.0, 0.5))
        twice = renormalize(model, gs)
        assert np.max(np.abs(np.subtract(twice.offsets, model.offsets))) <= 1e-10

    def test_golden_shifts_and_negative_densities(self):
        model, gs = prepare(ising(8, 1.0, 0.5))
        np.testing.assert_allclose(model.offsets, GOLDEN["shifts"], atol=1e-9)
        for n in range(8):
            # T_n has zero ground-state mean but still negative eigenvalues
            assert eigvalsh(energy_density(model, n))[0] < -1e-4


class TestLocalizedEnergy:
    def test_whole_chain_is_h(self):
        model = ising(5, 1.0, 0.5)
        np.testing.assert_allclose(localized_energy(model, range(5)), hamiltonian(model), atol=1e-13)

    def test_decoupled_single_site(self, rng):
        model = decoupled(rng)
        np.testing.assert_allclose(localized_energy(model, [1]), embed_local(model.x_ops[1], [1], model.space))

    def test_local_form_matches_full(self):
        model, _ = prepare(ising(8, 1.0, 0.5))
        full = localized_energy(model, [4, 5, 6])
        local, support = localized_energy(model, [4, 5, 6], local=True)
        assert list(support) == [3, 4, 5, 6, 7]
        np.testing.assert_allclose(embed_local(local, support, model.space), full, atol=1e-13)
        assert operator_norm(local) == pytest.approx(GOLDEN["scalars"]["h_b_norm"], abs=1e-9)

    def test_zero_ground_mean(self):
        model, gs = prepare(ising(8, 1.0, 0.5))
        assert abs(gs.expectation(localized_energy(model, [2, 3, 4]))) <= 1e-9

    def test_support_clipped_at_ends(self):
        model = ising(5, 1.0, 0.5)
        assert list(energy_support(model, [0, 1])) == [0, 1, 2]
        assert list(energy_support(model, [4])) == [3, 4]
