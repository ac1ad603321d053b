"""The QET protocol: measurement at A, classical outcome, conditioned unitary at B.

Every energy quantity is computed by two independent routes: the direct
difference of total energies ``Tr[H rho1] - Tr[H rho2]`` on full-space
density matrices, and the ground-state correlator
``-sum_mu <g|Pi_A(mu) H_B(mu)|g>``.

Classical communication is instantaneous and there is no time evolution
between the steps.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GeometryError, IncompleteSchemeError, LocalityError, SupportError
from .linalg import (
    apply_local,
    bloch_operator,
    embed_local,
    hermitian_eig,
    is_hermitian,
    operator_norm,
    reduced_density,
    unitary_from_generator,
)
from .model import energy_density, hamiltonian, localized_energy

log = logging.getLogger(__name__)

PRUNE_PROBABILITY = 1e-14
COMMUTATOR_TOL = 1e-11
ENERGY_TOL = 1e-9
ANGLE_NOISE = 1e-14

_INV_PHI = (math.sqrt(5) - 1) / 2


# -- geometry -----------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """Sites ``center - half_width .. center + half_width``."""

    center: int
    half_width: int = 0

    @property
    def sites(self):
        return range(self.center - self.half_width, self.center + self.half_width + 1)

    @property
    def interior(self):
        """Actuation interior of a receiver region (one site in from each edge)."""
        return range(self.center - self.half_width + 1, self.center + self.half_width)


@dataclass(frozen=True)
class GeometryViolation:
    rule: str
    required: int
    actual: int
    detail: str = ""

    @property
    def shortfall(self):
        return self.required - self.actual

    def __str__(self):
        return f"geometry rule '{self.rule}' violated: {self.detail} (need {self.required}, have {self.actual})"


def validate_geometry(a, b, n_sites):
    """Return ``None`` if sender ``a`` and receiver ``b`` form a valid layout."""
    if a.half_width < 0:
        return GeometryViolation("sender_width", 0, a.half_width, "l_A must be >= 0")
    if b.half_width < 1:
        return GeometryViolation("receiver_width", 1, b.half_width, "l_B must be >= 1")
    for name, r in (("A", a), ("B", b)):
        lo, hi = r.sites[0], r.sites[-1]
        if lo < 0:
            return GeometryViolation("bounds", 0, lo, f"region {name} starts before site 0")
        if hi > n_sites - 1:
            return GeometryViolation("bounds", n_sites - 1, hi, f"region {name} ends past site {n_sites - 1}")
    need = 2 + a.half_width + b.half_width
    dist = abs(a.center - b.center)
    if dist < need:
        return GeometryViolation("separation", need, dist, "|n_A - n_B| >= 2 + l_A + l_B")
    return None


def require_geometry(a, b, n_sites):
    violation = validate_geometry(a, b, n_sites)
    if violation is not None:
        raise GeometryError(violation)


# -- measurement and control --------------------------------------------------

@dataclass(frozen=True)
class MeasurementScheme:
    """Kraus operators ``M_A(mu)`` on the contiguous ``sites`` of region A."""

    sites: tuple
    kraus: tuple
    labels: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        object.__setattr__(self, "kraus", tuple(np.asarray(k, dtype=complex) for k in self.kraus))
        if self.labels is None:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(len(self.kraus))))
        if len(self.labels) != len(self.kraus):
            raise ValueError("one label per Kraus operator")

    @classmethod
    def bloch_projective(cls, sites, axes):
        """Projective spin measurement along a Bloch axis on each site.

        ``axes`` is a single 3-vector (used on every site) or one per site.
        Outcome labels are strings of ``+``/``-`` in site order.
        """
        sites = tuple(sites)
        axes = np.asarray(axes, dtype=float)
        if axes.ndim == 1:
            axes = np.tile(axes, (len(sites), 1))
        per_site = []
        for axis in axes:
            s = bloch_operator(axis)
            per_site.append({"+": (np.eye(2) + s) / 2, "-": (np.eye(2) - s) / 2})
        kraus, labels = [], []
        for signs in itertools.product("+-", repeat=len(sites)):
            op = np.eye(1)
            for proj, sign in zip(per_site, signs):
                op = np.kron(op, proj[sign])
            kraus.append(op)
            labels.append("".join(signs))
        return cls(sites, tuple(kraus), tuple(labels))

    @classmethod
    def trivial(cls, sites, dim):
        """Single-outcome identity measurement."""
        return cls(tuple(sites), (np.eye(dim),), ("1",))

    def __len__(self):
        return len(self.kraus)

    def povm(self):
        return [k.conj().T @ k for k in self.kraus]

    def completeness_residual(self):
        total = sum(self.povm())
        return float(np.max(np.abs(total - np.eye(total.shape[0]))))

    def check_complete(self, tol=1e-10):
        residual = self.completeness_residual()
        if residual > tol:
            raise IncompleteSchemeError(f"sum of M^dag M differs from I by {residual:.3e}")


@dataclass(frozen=True)
class FeedbackControl:
    """Per-outcome generators ``G_B(mu)`` on ``sites`` and angles ``theta(mu)``."""

    sites: tuple
    generators: tuple
    thetas: tuple

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        object.__setattr__(self, "generators", tuple(np.asarray(g, dtype=complex) for g in self.generators))
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        if len(self.generators) != len(self.thetas):
            raise ValueError("one angle per generator")
        for g in self.generators:
            if not is_hermitian(g, 1e-10):
                raise ValueError("feedback generators must be Hermitian")

    @classmethod
    def bloch(cls, site, axis, n_outcomes, thetas=None):
        g = bloch_operator(axis)
        thetas = (0.0,) * n_outcomes if thetas is None else thetas
        return cls((site,), (g,) * n_outcomes, thetas)

    def with_thetas(self, thetas):
        return replace(self, thetas=tuple(float(t) for t in thetas))

    def negated(self):
        return replace(self, generators=tuple(-g for g in self.generators))

    def unitary(self, mu, theta=None):
        theta = self.thetas[mu] if theta is None else theta
        return unitary_from_generator(self.generators[mu], theta)

    def check_support(self, region_b):
        interior = set(region_b.interior)
        if not set(self.sites) <= interior:
            raise SupportError(
                f"generator sites {list(self.sites)} leave B's interior {sorted(interior)}"
            )


# -- measurement --------------------------------------------------------------

@dataclass(frozen=True)
class Measurement:
    scheme: MeasurementScheme
    outcomes: tuple          # indices into scheme.kraus with p >= PRUNE_PROBABILITY
    pruned: tuple
    probabilities: np.ndarray
    states: tuple            # normalised |Psi_1(mu)>
    rho1: np.ndarray
    e_a: float
    energy_rho1: float       # Tr[H rho1]


def outcome_probabilities(ground, scheme, space):
    """``p_A(mu) = <g|Pi_A(mu)|g>`` for every outcome (none pruned)."""
    psi = ground.vector
    return np.array([
        np.vdot(psi, apply_local(pi, scheme.sites, space, psi)).real for pi in scheme.povm()
    ])


def measure(ground, scheme, model, h=None):
    scheme.check_complete()
    space = model.space
    h = hamiltonian(model) if h is None else h
    psi = ground.vector
    outcomes, pruned, probs, states = [], [], [], []
    for mu, m in enumerate(scheme.kraus):
        phi = apply_local(m, scheme.sites, space, psi)
        p = float(np.vdot(phi, phi).real)
        if p < PRUNE_PROBABILITY:
            pruned.append(mu)
            log.info("pruned outcome %s with p=%.3e", scheme.labels[mu], p)
            continue
        outcomes.append(mu)
        probs.append(p)
        states.append(phi / math.sqrt(p))
    probs = np.array(probs)
    rho1 = _mixture(probs, states)
    energy_rho1 = _expect_mixed(h, rho1)
    e_a = energy_rho1 - ground.expectation(h)
    return Measurement(scheme, tuple(outcomes), tuple(pruned), probs, tuple(states), rho1, e_a, energy_rho1)


def _mixture(probs, states):
    mat = np.array(states).T * np.sqrt(probs)
    return mat @ mat.conj().T


def _expect_mixed(op, rho):
    return float(np.einsum("ij,ji->", op, rho).real)


def locality_check_rho1(measurement, h_b):
    """``|Tr[H_B rho1]|``; vanishes when A is far enough from B."""
    return abs(_expect_mixed(h_b, measurement.rho1))


# -- feedback -----------------------------------------------------------------

@dataclass(frozen=True)
class Feedback:
    control: FeedbackControl
    states: tuple            # |Psi_2(mu)>, aligned with measurement.outcomes
    rho2: np.ndarray
    energy_rho2: float
    e_b: float


def apply_feedback(measurement, control, model, region_b, h=None):
    control.check_support(region_b)
    space = model.space
    h = hamiltonian(model) if h is None else h
    states = tuple(
        apply_local(control.unitary(mu), control.sites, space, state)
        for mu, state in zip(measurement.outcomes, measurement.states)
    )
    rho2 = _mixture(measurement.probabilities, states)
    energy_rho2 = _expect_mixed(h, rho2)
    return Feedback(control, states, rho2, energy_rho2, measurement.energy_rho1 - energy_rho2)


def teleported_energy_correlator(ground, scheme, control, h_b, space, tol=COMMUTATOR_TOL):
    """``E_B = -sum_mu <g|Pi_A(mu) U^dag H_B U|g>`` from full-space operators.

    Returns ``(E_B, max_commutator)``; raises :class:`LocalityError` when some
    ``[Pi_A(mu), H_B(mu)]`` exceeds ``tol`` in Frobenius norm.
    """
    psi = ground.vector
    total = 0.0
    worst = 0.0
    for mu, pi in enumerate(scheme.povm()):
        pi_full = embed_local(pi, scheme.sites, space)
        u = embed_local(control.unitary(mu), control.sites, space)
        h_mu = u.conj().T @ h_b @ u
        comm = float(np.linalg.norm(pi_full @ h_mu - h_mu @ pi_full))
        worst = max(worst, comm)
        total += np.vdot(psi, pi_full @ (h_mu @ psi))
    if worst > tol:
        raise LocalityError(f"[Pi_A, H_B(mu)] has norm {worst:.3e} > {tol:.0e}")
    return -float(total.real), worst


def mean_post_feedback_energy(ground, scheme, control, h, space):
    """``<H> = sum_mu p_A(mu) <g|U_B(mu)^dag H U_B(mu)|g>``."""
    psi = ground.vector
    probs = outcome_probabilities(ground, scheme, space)
    total = 0.0
    for mu, p in enumerate(probs):
        moved = apply_local(control.unitary(mu), control.sites, space, psi)
        total += p * np.vdot(moved, h @ moved).real
    return float(total)


def first_order_correlators(ground, scheme, control, h_b, space):
    """Complex ``<g|Pi_A(mu) i[H_B, G_B(mu)]|g>`` per outcome (real when A, B are separated)."""
    psi = ground.vector
    hb_psi = h_b @ psi
    out = []
    for mu, pi in enumerate(scheme.povm()):
        g_psi = apply_local(control.generators[mu], control.sites, space, psi)
        gdot_psi = 1j * (h_b @ g_psi - apply_local(control.generators[mu], control.sites, space, hb_psi))
        out.append(complex(np.vdot(apply_local(pi, scheme.sites, space, psi), gdot_psi)))
    return out


def perturbative_eb(ground, scheme, control, h_b, space, imag_tol=1e-10):
    """First-order ``sum_mu theta(mu) <g|Pi_A(mu) i[H_B, G_B(mu)]|g>``."""
    total = 0.0
    for mu, corr in enumerate(first_order_correlators(ground, scheme, control, h_b, space)):
        if abs(corr.imag) > imag_tol:
            raise LocalityError(f"correlator <Pi G-dot> has imaginary part {corr.imag:.3e}")
        total += control.thetas[mu] * corr.real
    return float(total)


# -- angle optimisation -------------------------------------------------------

@dataclass(frozen=True)
class ThetaOptimum:
    thetas: tuple
    e_b: float
    per_outcome: tuple       # best value of each outcome's term
    path: str                # "closed_form" or "scan"


def golden_section_max(f, a, b, tol=1e-10):
    """Maximise a unimodal ``f`` on ``[a, b]`` to an interval of width ``tol``."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _outcome_terms(ground, scheme, control_sites, h_b_local, support, space):
    """Per-outcome ``theta -> -<g|Pi U^dag H_B U|g>`` evaluated on the support window.

    ``Pi`` commutes with everything on the window, so the term equals
    ``-Tr[sigma_mu U^dag H_B U]`` with ``sigma_mu`` the (unnormalised) reduced
    state of ``M_A(mu)|g>`` on the window.
    """
    window = space.window(support)
    offset = support[0]
    local_sites = [s - offset for s in control_sites]
    sigmas = []
    for m in scheme.kraus:
        phi = apply_local(m, scheme.sites, space, ground.vector)
        sigmas.append(reduced_density(phi, support, space))

    def make(mu, generator):
        w, v = hermitian_eig(generator)

        def term(theta):
            u_site = (v * np.exp(-1j * theta * w)) @ v.conj().T
            u = embed_local(u_site, local_sites, window)
            return -float(np.einsum("ij,ji->", sigmas[mu], u.conj().T @ h_b_local @ u).real)
        return term

    return make


def _is_involutive(g, tol=1e-10):
    return bool(np.max(np.abs(g @ g - np.eye(g.shape[0]))) <= tol)


def _closed_form(term):
    f0, f45, f90 = term(0.0), term(math.pi / 4), term(math.pi / 2)
    alpha = 0.5 * (f0 + f90)
    beta = 0.5 * (f0 - f90)
    gamma = f45 - alpha
    theta = 0.5 * math.atan2(gamma, beta)
    return theta, alpha + math.hypot(beta, gamma)


def _scan(term, points=360, tol=1e-10):
    grid = -math.pi + 2 * math.pi * np.arange(points) / points
    values = [term(t) for t in grid]
    k = int(np.argmax(values))
    step = 2 * math.pi / points
    return golden_section_max(term, grid[k] - step, grid[k] + step, tol)


def optimize_theta(ground, scheme, control, model, region_b, method="auto"):
    """Choose ``theta(mu)`` maximising the teleported energy, outcome by outcome.

    ``method`` is ``"auto"`` (closed form for involutive generators, scan
    otherwise), ``"closed_form"`` or ``"scan"``. The returned angles never do
    worse than ``theta = 0``.
    """
    control.check_support(region_b)
    space = model.space
    h_b_local, support = localized_energy(model, region_b.sites, local=True)
    make = _outcome_terms(ground, scheme, control.sites, h_b_local, support, space)
    # gains below this are round-off in the term evaluations; keep theta = 0 then
    noise = ANGLE_NOISE * max(1.0, float(np.max(np.abs(h_b_local))))
    thetas, values, paths = [], [], set()
    for mu, g in enumerate(control.generators):
        term = make(mu, g)
        use_closed = method == "closed_form" or (method == "auto" and _is_involutive(g))
        if use_closed:
            if not _is_involutive(g):
                raise ValueError("closed-form optimisation needs G^2 = I")
            theta, value = _closed_form(term)
            paths.add("closed_form")
        else:
            theta, value = _scan(term)
            paths.add("scan")
        zero = term(0.0)
        if value - zero <= noise:
            theta, value = 0.0, zero
        thetas.append(theta)
        values.append(value)
    path = paths.pop() if len(paths) == 1 else "mixed"
    return ThetaOptimum(tuple(thetas), float(sum(values)), tuple(values), path)


# -- full run -----------------------------------------------------------------

@dataclass(frozen=True)
class ConservationReport:
    locality_rho1: float       # |Tr[H_B rho1]|
    hb_rho2: float             # Tr[H_B rho2]
    conservation: float        # |E_B + Tr[H_B rho2]|
    far_site: float            # max |Tr[T rho1] - Tr[T rho2]| over far sites
    e_b: float
    e_a: float
    tol: float = ENERGY_TOL

    @property
    def negative_region_ok(self):
        return self.e_b <= self.tol or self.hb_rho2 < 0

    @property
    def eb_le_ea(self):
        return self.e_b <= self.e_a + self.tol

    @property
    def passed(self):
        return (
            self.locality_rho1 <= self.tol
            and self.conservation <= self.tol
            and self.far_site <= self.tol
            and self.negative_region_ok
            and self.eb_le_ea
        )


def energy_conservation_check(measurement, feedback, model, region_b, h_b, tol=ENERGY_TOL):
    hb_rho2 = _expect_mixed(h_b, feedback.rho2)
    far = [
        n for n in range(model.n_sites) if abs(n - region_b.center) >= region_b.half_width + 1
    ]
    far_residual = 0.0
    for n in far:
        t = energy_density(model, n)
        far_residual = max(far_residual, abs(_expect_mixed(t, measurement.rho1) - _expect_mixed(t, feedback.rho2)))
    return ConservationReport(
        locality_rho1=locality_check_rho1(measurement, h_b),
        hb_rho2=hb_rho2,
        conservation=abs(feedback.e_b + hb_rho2),
        far_site=far_residual,
        e_b=feedback.e_b,
        e_a=measurement.e_a,
        tol=tol,
    )


@dataclass(frozen=True)
class QetRun:
    model: object
    ground: object
    region_a: Region
    region_b: Region
    scheme: MeasurementScheme
    control: FeedbackControl
    measurement: Measurement
    feedback: Feedback
    h_b_norm: float
    e_a: float
    e_b_direct: float
    e_b_correlator: float
    mean_h: float
    commutator_max: float
    conservation: ConservationReport
    local_energies: tuple = field(default=())   # <Psi_2(mu)|H_B|Psi_2(mu)>

    @property
    def probabilities(self):
        return self.measurement.probabilities

    @property
    def route_gap(self):
        return abs(self.e_b_direct - self.e_b_correlator)

    @property
    def routes_agree(self):
        return self.route_gap <= ENERGY_TOL * (1 + self.h_b_norm)


def run_protocol(model, ground, region_a, region_b, scheme, control, optimize=True, method="auto"):
    """Execute the whole protocol on a renormalised model.

    With ``optimize=True`` the angles in ``control`` are replaced by the
    per-outcome maximisers.
    """
    require_geometry(region_a, region_b, model.n_sites)
    scheme.check_complete()
    if not set(scheme.sites) <= set(region_a.sites):
        raise SupportError(f"measurement sites {list(scheme.sites)} leave region A")
    control.check_support(region_b)
    if optimize:
        best = optimize_theta(ground, scheme, control, model, region_b, method)
        control = control.with_thetas(best.thetas)

    space = model.space
    h = hamiltonian(model)
    h_b = localized_energy(model, region_b.sites)
    h_b_local, _ = localized_energy(model, region_b.sites, local=True)
    measurement = measure(ground, scheme, model, h)
    feedback = apply_feedback(measurement, control, model, region_b, h)
    e_b_corr, comm = teleported_energy_correlator(ground, scheme, control, h_b, space)
    mean_h = mean_post_feedback_energy(ground, scheme, control, h, space)
    conservation = energy_conservation_check(measurement, feedback, model, region_b, h_b)
    local_energies = tuple(float(np.vdot(s, h_b @ s).real) for s in feedback.states)
    return QetRun(
        model=model,
        ground=ground,
        region_a=region_a,
        region_b=region_b,
        scheme=scheme,
        control=control,
        measurement=measurement,
        feedback=feedback,
        h_b_norm=operator_norm(h_b_local),
        e_a=measurement.e_a,
        e_b_direct=feedback.e_b,
        e_b_correlator=e_b_corr,
        mean_h=mean_h,
        commutator_max=comm,
        conservation=conservation,
        local_energies=local_energies,
    )
