import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qetlab.errors import GeometryError, IncompleteSchemeError, SupportError
from qetlab.linalg import SIGMA_X, SIGMA_Y, SIGMA_Z, embed_local, kron
from qetlab.model import hamiltonian, ising, localized_energy, prepare
from qetlab.protocol import (
    FeedbackControl,
    MeasurementScheme,
    Region,
    apply_feedback,
    energy_conservation_check,
    first_order_correlators,
    golden_section_max,
    locality_check_rho1,
    mean_post_feedback_energy,
    measure,
    optimize_theta,
    perturbative_eb,
    require_geometry,
    run_protocol,
    teleported_energy_correlator,
    validate_geometry,
)

from conftest import GOLDEN_DIR
from helpers import random_hermitian, reference_setup

GOLDEN = json.loads((GOLDEN_DIR / "reference.json").read_text())["scalars"]


@pytest.fixture(scope="module")
def reference():
    return reference_setup()


@pytest.fixture(scope="module")
def reference_run(reference):
    model, ground, a, b, scheme, control = reference
    return run_protocol(model, ground, a, b, scheme, control)


@pytest.fixture(scope="module")
def separable():
    return reference_setup(g=0.0)


class TestGeometry:
    def test_examples(self):
        assert validate_geometry(Region(1, 0), Region(5, 1), 8) is None
        v = validate_geometry(Region(1, 0), Region(3, 1), 6)
        assert v.rule == "separation" and (v.required, v.actual) == (3, 2)
        assert validate_geometry(Region(2, 1), Region(8, 2), 12) is None

    def test_bounds_and_widths(self):
        assert validate_geometry(Region(1, 0), Region(7, 1), 8).rule == "bounds"
        assert validate_geometry(Region(1, 0), Region(5, 0), 8).rule == "receiver_width"
        with pytest.raises(GeometryError):
            require_geometry(Region(1, 0), Region(3, 1), 8)

    def test_mirror_order_allowed(self):
        assert validate_geometry(Region(6, 0), Region(2, 1), 8) is None


class TestMeasure:
    def test_identity_measurement(self, reference):
        model, ground, *_ = reference
        m = measure(ground, MeasurementScheme.trivial([1], 2), model)
        assert m.probabilities.tolist() == pytest.approx([1.0])
        np.testing.assert_allclose(m.rho1, np.outer(ground.vector, ground.vector.conj()), atol=1e-14)
        assert abs(m.e_a) <= 1e-12
        assert locality_check_rho1(m, localized_energy(model, [4, 5, 6])) <= 1e-12

    @pytest.mark.parametrize("b", [0.5, 2.0])
    def test_separable_sigma_x(self, b):
        model, ground = prepare(ising(6, b, 0.0))
        m = measure(ground, MeasurementScheme.bloch_projective([2], (1, 0, 0)), model)
        np.testing.assert_allclose(m.probabilities, [0.5, 0.5], atol=1e-14)
        assert m.e_a == pytest.approx(b, abs=1e-12)

    def test_reference_golden(self, reference):
        model, ground, _, _, scheme, _ = reference
        m = measure(ground, scheme, model)
        assert m.probabilities == pytest.approx([GOLDEN["p[+]"], GOLDEN["p[-]"]], abs=1e-9)
        assert m.e_a == pytest.approx(GOLDEN["e_a"], abs=1e-9)
        for state in m.states:
            assert abs(np.linalg.norm(state) - 1) <= 1e-10

    def test_invalid_geometry_breaks_locality(self, reference):
        model, ground, *_ = reference
        # a tilted axis: a pure sigma_x projector commutes with the x-x bond term
        scheme = MeasurementScheme.bloch_projective([1], (1, 0, 1))
        m = measure(ground, scheme, model)
        # B centred two sites from A: H_B reaches into A's neighbourhood
        assert locality_check_rho1(m, localized_energy(model, [2, 3, 4])) > 1e-6
        assert locality_check_rho1(m, localized_energy(model, [4, 5, 6])) <= 1e-9

    def test_pruning(self):
        model, ground = prepare(ising(4, 1.0, 0.0))
        # ground is sigma_z = -1 everywhere, so the "+" z-outcome has zero weight
        m = measure(ground, MeasurementScheme.bloch_projective([0], (0, 0, 1)), model)
        assert m.pruned == (0,) and m.outcomes == (1,)

    def test_incomplete_scheme(self, reference):
        model, ground, *_ = reference
        bad = MeasurementScheme([1], [np.diag([1.0, 0.0])])
        with pytest.raises(IncompleteSchemeError):
            measure(ground, bad, model)


class TestFeedback:
    def test_zero_angle(self, reference):
        model, ground, a, b, scheme, control = reference
        m = measure(ground, scheme, model)
        f = apply_feedback(m, control, model, b)
        np.testing.assert_allclose(f.rho2, m.rho1, atol=1e-15)
        assert abs(f.e_b) <= 1e-14
        cons = energy_conservation_check(m, f, model, b, localized_energy(model, b.sites))
        assert cons.conservation <= 1e-12 and cons.far_site <= 1e-12 and cons.passed

    def test_support_outside_interior(self, reference):
        model, ground, a, b, scheme, _ = reference
        bad = FeedbackControl.bloch(6, (0, 1, 0), 2)
        with pytest.raises(SupportError):
            run_protocol(model, ground, a, b, scheme, bad)

    @pytest.mark.parametrize("thetas", [(0.3, -0.3), (1.1, 0.2), (-2.0, 0.7)])
    def test_separable_never_gains(self, separable, thetas):
        model, ground, a, b, scheme, control = separable
        run = run_protocol(model, ground, a, b, scheme, control.with_thetas(thetas), optimize=False)
        assert run.e_b_direct <= 1e-9
        assert run.e_b_correlator <= 1e-9
        # <H> = -E_B when the ground state is a product state
        assert run.mean_h + run.e_b_direct == pytest.approx(0, abs=1e-9)

    def test_reference_golden(self, reference_run):
        run = reference_run
        assert run.e_b_direct > 0
        assert run.e_b_direct == pytest.approx(GOLDEN["e_b"], abs=1e-9)
        assert run.mean_h == pytest.approx(GOLDEN["mean_h"], abs=1e-9)
        assert run.mean_h > 0
        assert run.h_b_norm == pytest.approx(GOLDEN["h_b_norm"], abs=1e-9)

    def test_negative_energy_region(self, reference_run):
        cons = reference_run.conservation
        assert cons.hb_rho2 < 0
        assert cons.hb_rho2 == pytest.approx(-reference_run.e_b_direct, abs=1e-12)
        assert cons.passed

    def test_unit_norm_states(self, reference_run):
        for s in reference_run.feedback.states:
            assert abs(np.linalg.norm(s) - 1) <= 1e-10


class TestCorrelator:
    def test_zero_angle(self, reference):
        model, ground, a, b, scheme, control = reference
        h_b = localized_energy(model, b.sites)
        e, comm = teleported_energy_correlator(ground, scheme, control, h_b, model.space)
        assert abs(e) <= 1e-12 and comm <= 1e-11
        assert mean_post_feedback_energy(ground, scheme, control, hamiltonian(model), model.space) == pytest.approx(0, abs=1e-12)

    def test_route_equivalence(self, reference_run):
        assert reference_run.route_gap <= 1e-9 * (1 + reference_run.h_b_norm)
        assert reference_run.commutator_max <= 1e-11

    @pytest.mark.parametrize("g", [0.0, 0.5, 1.0])
    def test_local_and_global_energy_agree(self, g):
        # <g|U^dag H_B U|g> = <g|U^dag H U|g> for U supported inside B
        model, ground, a, b, scheme, control = reference_setup(g=g)
        h = hamiltonian(model)
        h_b = localized_energy(model, b.sites)
        rng = np.random.default_rng(11)
        for _ in range(3):
            u = embed_local(control.unitary(0, rng.uniform(-math.pi, math.pi)), control.sites, model.space)
            moved = u @ ground.vector
            assert np.vdot(moved, h_b @ moved).real == pytest.approx(np.vdot(moved, h @ moved).real, abs=1e-9)

    def test_separable_correlator_reduces(self, separable):
        model, ground, a, b, scheme, control = separable
        ctrl = control.with_thetas((0.4, 0.4))
        h = hamiltonian(model)
        e, _ = teleported_energy_correlator(ground, scheme, ctrl, localized_energy(model, b.sites), model.space)
        mean = mean_post_feedback_energy(ground, scheme, ctrl, h, model.space)
        assert e <= 1e-12
        assert e == pytest.approx(-mean, abs=1e-9)


class TestPerturbative:
    def test_zero_and_linearity(self, reference):
        model, ground, a, b, scheme, control = reference
        h_b = localized_energy(model, b.sites)
        assert perturbative_eb(ground, scheme, control, h_b, model.space) == 0.0
        ctrl = control.with_thetas((1e-3, -1e-3))
        plus = perturbative_eb(ground, scheme, ctrl, h_b, model.space)
        minus = perturbative_eb(ground, scheme, ctrl.with_thetas((-1e-3, 1e-3)), h_b, model.space)
        assert plus == -minus and plus != 0.0

    def test_correlators_real(self, reference):
        model, ground, a, b, scheme, control = reference
        h_b = localized_energy(model, b.sites)
        for c in first_order_correlators(ground, scheme, control, h_b, model.space):
            assert abs(c.imag) <= 1e-10

    def test_quadratic_error(self, reference, reference_run):
        model, ground, a, b, scheme, control = reference
        h_b = localized_energy(model, b.sites)
        signs = [math.copysign(1.0, t) for t in reference_run.control.thetas]
        errors = []
        for theta in (1e-3, 1e-4):
            ctrl = control.with_thetas([s * theta for s in signs])
            exact = run_protocol(model, ground, a, b, scheme, ctrl, optimize=False).e_b_direct
            errors.append(abs(exact - perturbative_eb(ground, scheme, ctrl, h_b, model.space)))
        assert 50 <= errors[0] / errors[1] <= 200


class TestOptimizer:
    def test_golden_section(self):
        x, fx = golden_section_max(lambda t: -(t - 0.3) ** 2, -1.0, 2.0)
        assert x == pytest.approx(0.3, abs=1e-9) and fx == pytest.approx(0, abs=1e-15)

    def test_separable_optimum_is_zero(self, separable):
        model, ground, a, b, scheme, control = separable
        best = optimize_theta(ground, scheme, control, model, b)
        assert best.thetas == (0.0, 0.0)
        assert abs(best.e_b) <= 1e-9

    def test_generator_sign_symmetry(self, reference):
        model, ground, a, b, scheme, control = reference
        best = optimize_theta(ground, scheme, control, model, b)
        flipped = optimize_theta(ground, scheme, control.negated(), model, b)
        np.testing.assert_allclose(flipped.thetas, [-t for t in best.thetas], atol=1e-12)
        assert flipped.e_b == pytest.approx(best.e_b, abs=1e-15)

    def test_closed_form_vs_scan(self, reference):
        model, ground, a, b, scheme, control = reference
        closed = optimize_theta(ground, scheme, control, model, b, method="closed_form")
        scan = optimize_theta(ground, scheme, control, model, b, method="scan")
        assert closed.path == "closed_form" and scan.path == "scan"
        for t1, t2 in zip(closed.thetas, scan.thetas):
            # the per-outcome term has period pi in theta
            d = (t1 - t2 + math.pi / 2) % math.pi - math.pi / 2
            assert abs(d) <= 1e-7
        assert closed.e_b == pytest.approx(scan.e_b, abs=1e-9)

    def test_matches_golden_angles(self, reference_run):
        assert reference_run.control.thetas[0] == pytest.approx(GOLDEN["theta[+]"], abs=1e-7)
        assert reference_run.control.thetas[1] == pytest.approx(GOLDEN["theta[-]"], abs=1e-7)

    def test_non_involutive_generator(self, reference):
        model, ground, a, b, scheme, _ = reference
        rng = np.random.default_rng(5)
        gens = [random_hermitian(rng, 2) for _ in range(2)]
        control = FeedbackControl((5,), gens, (0.0, 0.0))
        best = optimize_theta(ground, scheme, control, model, b)
        assert best.path == "scan" and best.e_b >= 0
        with pytest.raises(ValueError):
            optimize_theta(ground, scheme, control, model, b, method="closed_form")
        run = run_protocol(model, ground, a, b, scheme, control)
        assert run.e_b_direct == pytest.approx(best.e_b, abs=1e-12)
        assert run.routes_agree


def weak_scheme(site, strength):
    """Two-outcome unsharp sigma_x measurement."""
    plus = (1 + strength) / 2
    minus = (1 - strength) / 2
    p = (np.eye(2) + SIGMA_X) / 2
    q = (np.eye(2) - SIGMA_X) / 2
    m0 = math.sqrt(plus) * p + math.sqrt(minus) * q
    m1 = math.sqrt(minus) * p + math.sqrt(plus) * q
    return MeasurementScheme([site], [m0, m1], ("a", "b"))


def test_general_povm_and_wide_regions():
    model, ground = prepare(ising(10, 1.0, 0.7))
    a, b = Region(1, 1), Region(6, 2)
    scheme = MeasurementScheme([0, 1, 2], [embed_local(m, [1], model.space.window([0, 1, 2])) for m in weak_scheme(0, 0.6).kraus])
    gen = kron(SIGMA_Y, SIGMA_Z)
    control = FeedbackControl((5, 6), (gen, -gen), (0.0, 0.0))
    run = run_protocol(model, ground, a, b, scheme, control)
    assert run.routes_agree and run.conservation.passed
    assert run.e_b_direct >= 0


@settings(max_examples=15, deadline=None)
@given(t0=st.floats(-math.pi, math.pi), t1=st.floats(-math.pi, math.pi))
def test_random_angles_keep_invariants(t0, t1):
    model, ground, a, b, scheme, control = _REFERENCE
    run = run_protocol(model, ground, a, b, scheme, control.with_thetas((t0, t1)), optimize=False)
    assert run.routes_agree
    assert run.conservation.passed
    assert run.mean_h >= -1e-9 and run.e_a >= -1e-9
    assert abs(float(np.sum(run.probabilities)) - 1) <= 1e-10


_REFERENCE = reference_setup()
