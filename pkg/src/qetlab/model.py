"""Nearest-neighbour spin chains, their energy densities and ground states.

A chain is described by on-site Hermitian operators ``X_n`` and, for every
interaction channel ``l``, site operators ``Y_n^(l)`` with bond couplings
``g_{n+1/2}^(l)``. The energy density at site ``n`` is

    T_n = X_n - 1/2 sum_l ( g_{n-1/2} Y_{n-1} Y_n + g_{n+1/2} Y_n Y_{n+1} )

so that every bond is shared equally between its two end sites and
``sum_n T_n = H``. Boundaries are open: end sites carry a single bond.
Bond ``n+1/2`` is stored at index ``n`` (``n = 0 .. N-2``).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateGroundStateError, DimensionError, NotHermitianError, SiteRangeError
from .linalg import (
    SIGMA_X,
    SIGMA_Z,
    HilbertSpace,
    embed_local,
    hermitian_eig,
    is_hermitian,
)

DEGENERACY_THRESHOLD = 1e-8


@dataclass(frozen=True)
class Coupling:
    """One interaction channel: ``-g_n Y_n Y_{n+1}`` on every bond."""

    y_ops: tuple
    strengths: tuple

    def __post_init__(self):
        object.__setattr__(self, "y_ops", tuple(np.asarray(y, dtype=complex) for y in self.y_ops))
        object.__setattr__(self, "strengths", tuple(float(g) for g in self.strengths))
        if not all(np.isfinite(self.strengths)):
            raise ValueError("coupling strengths must be finite")


@dataclass(frozen=True)
class ChainModel:
    space: HilbertSpace
    x_ops: tuple
    couplings: tuple = ()
    # constants already subtracted from each X_n (the epsilon_n of the Ising preset)
    offsets: tuple = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.space.n_sites
        x_ops = tuple(np.asarray(x, dtype=complex) for x in self.x_ops)
        object.__setattr__(self, "x_ops", x_ops)
        object.__setattr__(self, "couplings", tuple(self.couplings))
        if self.offsets is None:
            object.__setattr__(self, "offsets", (0.0,) * n)
        if len(x_ops) != n:
            raise DimensionError(f"expected {n} on-site operators, got {len(x_ops)}")
        for site, x in enumerate(x_ops):
            self._check_site_op(x, site, "X")
        for l, c in enumerate(self.couplings):
            if len(c.y_ops) != n:
                raise DimensionError(f"coupling {l}: expected {n} Y operators")
            if len(c.strengths) != max(n - 1, 0):
                raise DimensionError(f"coupling {l}: expected {n - 1} bond strengths")
            for site, y in enumerate(c.y_ops):
                self._check_site_op(y, site, f"Y^({l})")

    def _check_site_op(self, op, site, label):
        d = self.space.site_dims[site]
        if op.shape != (d, d):
            raise DimensionError(f"{label}_{site} has shape {op.shape}, site dim is {d}")
        if not is_hermitian(op, 1e-10):
            raise NotHermitianError(f"{label}_{site} is not Hermitian")

    @property
    def n_sites(self):
        return self.space.n_sites

    def shifted(self, deltas):
        """Subtract ``deltas[n] * I`` from every ``X_n``."""
        x_ops = tuple(
            x - float(d) * np.eye(x.shape[0]) for x, d in zip(self.x_ops, deltas)
        )
        offsets = tuple(o + float(d) for o, d in zip(self.offsets, deltas))
        return replace(self, x_ops=x_ops, offsets=offsets)


def ising(n_sites, b, g, eps=None):
    """Transverse-field Ising chain ``b sum sz - g sum sx sx - sum eps_n``.

    ``eps`` defaults to zeros; :func:`renormalize` fixes it.
    """
    if n_sites < 1:
        raise ValueError("need at least one site")
    eps = np.zeros(n_sites) if eps is None else np.asarray(eps, dtype=float)
    space = HilbertSpace.qubits(n_sites)
    x_ops = [b * SIGMA_Z - e * np.eye(2) for e in eps]
    coupling = Coupling((SIGMA_X,) * n_sites, (g,) * (n_sites - 1))
    return ChainModel(
        space,
        x_ops,
        (coupling,),
        offsets=tuple(float(e) for e in eps),
        name="ising",
        params={"N": n_sites, "b": float(b), "g": float(g)},
    )


@dataclass(frozen=True)
class GroundState:
    vector: np.ndarray
    energy: float
    gap: float

    def expectation(self, op):
        return float(np.vdot(self.vector, op @ self.vector).real)


# -- energy operators ---------------------------------------------------------

def _density_terms(model, n):
    """Local pieces of ``T_n`` as ``(matrix, first_site, n_sites_spanned)``."""
    terms = [(model.x_ops[n], n, 1)]
    last = model.n_sites - 1
    for c in model.couplings:
        if n >= 1 and c.strengths[n - 1] != 0.0:
            terms.append((-0.5 * c.strengths[n - 1] * np.kron(c.y_ops[n - 1], c.y_ops[n]), n - 1, 2))
        if n < last and c.strengths[n] != 0.0:
            terms.append((-0.5 * c.strengths[n] * np.kron(c.y_ops[n], c.y_ops[n + 1]), n, 2))
    return terms


def _assemble(terms, space, window):
    """Sum local terms as an operator on the contiguous ``window`` of sites."""
    lo = window[0]
    sub = space.window(window)
    out = np.zeros((sub.total_dim, sub.total_dim), dtype=complex)
    for op, first, span in terms:
        out += embed_local(op, range(first - lo, first - lo + span), sub)
    return out


def _check_site(model, n):
    if not 0 <= n < model.n_sites:
        raise SiteRangeError(f"site {n} outside chain 0..{model.n_sites - 1}")


def energy_density(model, n):
    """Full-space ``T_n``."""
    _check_site(model, n)
    return _assemble(_density_terms(model, n), model.space, range(model.n_sites))


def hamiltonian(model):
    """Full-space ``H = sum_n X_n - sum_{n,l} g Y_n Y_{n+1}``."""
    space = model.space
    dim = space.total_dim
    h = np.zeros((dim, dim), dtype=complex)
    for n, x in enumerate(model.x_ops):
        h += embed_local(x, [n], space)
    for c in model.couplings:
        for n, g in enumerate(c.strengths):
            if g != 0.0:
                h -= g * embed_local(np.kron(c.y_ops[n], c.y_ops[n + 1]), [n, n + 1], space)
    return h


def energy_support(model, sites):
    """Sites touched by ``sum_{n in sites} T_n`` (one bond beyond each end)."""
    sites = model.space.check_interval(sites)
    lo = max(sites[0] - 1, 0)
    hi = min(sites[-1] + 1, model.n_sites - 1)
    return range(lo, hi + 1)


def localized_energy(model, sites, local=False):
    """``sum_{n in sites} T_n``.

    With ``local=True`` return ``(matrix, support)`` where the matrix acts on
    the contiguous ``support`` interval only; otherwise the full-space operator.
    """
    sites = model.space.check_interval(sites)
    terms = [t for n in sites for t in _density_terms(model, n)]
    if local:
        support = energy_support(model, sites)
        return _assemble(terms, model.space, support), support
    return _assemble(terms, model.space, range(model.n_sites))


# -- ground state -------------------------------------------------------------

def _fix_phase(vec):
    k = int(np.argmax(np.abs(vec)))
    out = vec * (abs(vec[k]) / vec[k])
    out[k] = abs(vec[k])  # exactly real, not real up to round-off
    return out


def ground_state(model, threshold=DEGENERACY_THRESHOLD):
    h = hamiltonian(model)
    w, v = hermitian_eig(h)
    gap = float(w[1] - w[0]) if len(w) > 1 else np.inf
    if gap <= threshold:
        raise DegenerateGroundStateError(gap, threshold)
    vec = _fix_phase(v[:, 0])
    vec = vec / np.linalg.norm(vec)
    return GroundState(vec, float(w[0]), gap)


def density_expectations(model, ground):
    """``<g|T_n|g>`` for every site."""
    psi = ground.vector
    space = model.space
    out = []
    for n in range(model.n_sites):
        terms = _density_terms(model, n)
        lo = min(first for _, first, _ in terms)
        hi = max(first + span - 1 for _, first, span in terms)
        local = _assemble(terms, space, range(lo, hi + 1))
        out.append(float(np.vdot(psi, embed_local(local, range(lo, hi + 1), space) @ psi).real))
    return np.array(out)


def renormalize(model, ground=None):
    """Shift every ``X_n`` so that ``<g|T_n|g> = 0``; hence ``H|g> = 0`` and ``H >= 0``."""
    if ground is None:
        ground = ground_state(model)
    return model.shifted(density_expectations(model, ground))


def prepare(model, threshold=DEGENERACY_THRESHOLD):
    """Renormalise ``model`` and return it with its (unchanged) ground state."""
    ground = ground_state(model, threshold)
    shifted = renormalize(model, ground)
    energy = ground.energy - float(np.sum(np.array(shifted.offsets) - np.array(model.offsets)))
    return shifted, GroundState(ground.vector, energy, ground.gap)
