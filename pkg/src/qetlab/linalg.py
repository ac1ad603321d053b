"""Dense complex linear algebra for finite spin chains.

Operators and density matrices are plain ``numpy`` arrays of dtype
``complex128``. Site ordering follows :class:`HilbertSpace`: site 0 is the
slowest (leftmost) Kronecker factor.

Entropies use the natural logarithm and are reported in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import (
    DimensionError,
    EigenConvergenceError,
    NotDensityError,
    NotHermitianError,
    SiteRangeError,
)

DEFAULT_MAX_DIM = 4096

# eigenvalues of a density matrix below this are treated as exact zeros
KERNEL_CUTOFF = 1e-14
# negative density eigenvalues above this are round-off and clamped to zero
NEGATIVE_CLAMP = 1e-12
# a support violation in relative entropy needs at least this much weight
SUPPORT_LEAK = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


def bloch_operator(axis):
    """Return ``n . sigma`` for a (normalised) 3-vector ``axis``."""
    n = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(n)
    if n.shape != (3,) or norm == 0:
        raise ValueError(f"Bloch axis must be a nonzero 3-vector, got {axis!r}")
    n = n / norm
    return n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z


@dataclass(frozen=True)
class HilbertSpace:
    """Tensor-product space of a chain with per-site dimensions."""

    site_dims: tuple
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        dims = tuple(int(d) for d in self.site_dims)
        object.__setattr__(self, "site_dims", dims)
        if not dims:
            raise DimensionError("a Hilbert space needs at least one site")
        if any(d < 2 for d in dims):
            raise DimensionError(f"every site dimension must be >= 2, got {dims}")
        if self.total_dim > self.max_dim:
            raise DimensionError(
                f"total dimension {self.total_dim} exceeds cap {self.max_dim}"
            )

    @classmethod
    def qubits(cls, n_sites, max_dim=DEFAULT_MAX_DIM):
        return cls((2,) * n_sites, max_dim)

    @property
    def n_sites(self):
        return len(self.site_dims)

    @property
    def total_dim(self):
        return math.prod(self.site_dims)

    def dim_of(self, sites):
        return math.prod(self.site_dims[s] for s in sites)

    def check_sites(self, sites):
        sites = [int(s) for s in sites]
        for s in sites:
            if not 0 <= s < self.n_sites:
                raise SiteRangeError(f"site {s} outside chain 0..{self.n_sites - 1}")
        if len(set(sites)) != len(sites):
            raise SiteRangeError(f"repeated site in {sites}")
        return sites

    def check_interval(self, sites):
        sites = self.check_sites(sites)
        if not sites:
            raise SiteRangeError("empty site interval")
        if sites != list(range(sites[0], sites[0] + len(sites))):
            raise SiteRangeError(f"sites {sites} are not a contiguous ascending interval")
        return sites

    def window(self, sites):
        """Sub-space made of a contiguous interval of this chain."""
        sites = self.check_interval(sites)
        return HilbertSpace(tuple(self.site_dims[s] for s in sites), self.max_dim)


# -- predicates ---------------------------------------------------------------

def _as_square(m):
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def is_hermitian(m, tol=1e-10):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol)


def is_unitary(m, tol=1e-10):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    eye = np.eye(m.shape[0])
    return bool(np.max(np.abs(m.conj().T @ m - eye)) <= tol)


def is_density(m, tol=1e-9):
    if not is_hermitian(m, tol):
        return False
    if abs(np.trace(m).real - 1.0) > tol:
        return False
    return bool(np.linalg.eigvalsh(m)[0] >= -tol)


def _require_hermitian(m, rel_tol=1e-10):
    m = _as_square(m)
    scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
    if not is_hermitian(m, rel_tol * scale):
        raise NotHermitianError("matrix is not Hermitian")
    return m


def _require_density(m, tol=1e-9):
    m = _as_square(m)
    if not is_density(m, tol):
        raise NotDensityError("matrix is not a density matrix")
    return m


# -- construction -------------------------------------------------------------

def kron(a, b, max_dim=DEFAULT_MAX_DIM):
    """Kronecker product with ``a`` as the slow index."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape[0] * b.shape[0] > max_dim:
        raise DimensionError(
            f"kron dimension {a.shape[0] * b.shape[0]} exceeds cap {max_dim}"
        )
    return np.kron(a, b)


def kron_all(mats, max_dim=DEFAULT_MAX_DIM):
    return reduce(lambda x, y: kron(x, y, max_dim), mats)


def embed_local(op, sites, space):
    """Lift ``op`` acting on a contiguous interval of sites to the full space."""
    sites = space.check_interval(sites)
    op = _as_square(op)
    if op.shape[0] != space.dim_of(sites):
        raise DimensionError(
            f"operator dim {op.shape[0]} does not match sites {sites} "
            f"(dim {space.dim_of(sites)})"
        )
    left = math.prod(space.site_dims[: sites[0]])
    right = math.prod(space.site_dims[sites[-1] + 1:])
    out = op
    if left > 1:
        out = np.kron(np.eye(left), out)
    if right > 1:
        out = np.kron(out, np.eye(right))
    return out


def apply_local(op, sites, space, vec):
    """Compute ``embed_local(op, sites, space) @ vec`` without forming the big matrix."""
    sites = space.check_interval(sites)
    left = math.prod(space.site_dims[: sites[0]])
    mid = space.dim_of(sites)
    right = math.prod(space.site_dims[sites[-1] + 1:])
    psi = np.asarray(vec, dtype=complex).reshape(left, mid, right)
    return np.einsum("ij,ajb->aib", op, psi).reshape(-1)


# -- spectral -----------------------------------------------------------------

def hermitian_eig(m):
    """Eigen-decomposition of a Hermitian matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and the
    eigenvectors as the columns of a unitary matrix.
    """
    m = _require_hermitian(m)
    # symmetrise so LAPACK sees an exactly Hermitian input
    h = 0.5 * (m + m.conj().T)
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise EigenConvergenceError(str(exc)) from exc
    return w, v


def eigvalsh(m):
    m = _require_hermitian(m)
    try:
        return np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    except np.linalg.LinAlgError as exc:
        raise EigenConvergenceError(str(exc)) from exc


def unitary_from_generator(g, theta):
    """``exp(-i theta g)`` for Hermitian ``g``, computed spectrally."""
    w, v = hermitian_eig(g)
    return (v * np.exp(-1j * theta * w)) @ v.conj().T


def commutator(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"commutator of shapes {a.shape} and {b.shape}")
    return a @ b - b @ a


def trace_norm(x):
    """Sum of absolute eigenvalues (Hermitian input only)."""
    return float(np.sum(np.abs(eigvalsh(x))))


def operator_norm(y):
    """Largest absolute eigenvalue (Hermitian input only)."""
    w = eigvalsh(y)
    return float(max(abs(w[0]), abs(w[-1])))


# -- states -------------------------------------------------------------------

def partial_trace(rho, keep, space):
    """Reduced density matrix on the sites in ``keep`` (kept in chain order)."""
    rho = _require_density(rho)
    keep = sorted(space.check_sites(keep))
    if rho.shape[0] != space.total_dim:
        raise DimensionError("density matrix does not match the Hilbert space")
    n = space.n_sites
    traced = [s for s in range(n) if s not in keep]
    dk = space.dim_of(keep)
    dt = space.dim_of(traced)
    t = rho.reshape(space.site_dims * 2)
    perm = keep + traced + [n + s for s in keep] + [n + s for s in traced]
    t = t.transpose(perm).reshape(dk, dt, dk, dt)
    return np.einsum("ajbj->ab", t)


def reduced_density(vec, keep, space):
    """Reduced density matrix of the pure state ``vec`` on ``keep``."""
    keep = sorted(space.check_sites(keep))
    n = space.n_sites
    traced = [s for s in range(n) if s not in keep]
    psi = np.asarray(vec, dtype=complex).reshape(space.site_dims)
    psi = psi.transpose(keep + traced).reshape(space.dim_of(keep), space.dim_of(traced))
    return psi @ psi.conj().T


def _density_spectrum(rho):
    w = eigvalsh(rho)
    if w[0] < -NEGATIVE_CLAMP:
        raise NotDensityError(f"density matrix has eigenvalue {w[0]:.3e} < 0")
    return np.clip(w, 0.0, None)


def von_neumann_entropy(rho):
    rho = _require_density(rho)
    w = _density_spectrum(rho)
    w = w[w >= KERNEL_CUTOFF]
    return float(-np.sum(w * np.log(w)))


def relative_entropy(rho, phi):
    """``S(rho||phi)`` in nats; ``math.inf`` when supp(rho) is not inside supp(phi)."""
    rho = _require_density(rho)
    phi = _require_density(phi)
    if rho.shape != phi.shape:
        raise DimensionError("relative entropy of states with different dimensions")
    if np.array_equal(rho, phi):
        return 0.0
    w_phi, v_phi = hermitian_eig(phi)
    # populations of rho in phi's eigenbasis
    pops = np.einsum("ij,ik,kj->j", v_phi.conj(), rho, v_phi).real
    kernel = w_phi < KERNEL_CUTOFF
    if np.sum(pops[kernel]) > SUPPORT_LEAK:
        return math.inf
    w_rho = _density_spectrum(rho)
    w_rho = w_rho[w_rho >= KERNEL_CUTOFF]
    cross = np.sum(pops[~kernel] * np.log(w_phi[~kernel]))
    return float(np.sum(w_rho * np.log(w_rho)) - cross)
