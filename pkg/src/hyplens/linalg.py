"""Small dense-matrix helpers built on the Jacobi kernel.

System sizes stay tiny (m <= 8), so everything routes through the cyclic
Jacobi eigensolver: robust, dependency-free, and identical across the numba
and numpy kernel backends up to rounding.
"""

import numpy as np

from . import kernels

JACOBI_TOL = 1e-12


def hermitian_part(B):
    """(B + B*) / 2 for a square matrix or a (..., m, m) field."""
    B = np.asarray(B)
    return 0.5 * (B + np.conj(np.swapaxes(B, -1, -2)))


def operator_norm(M, hermitian=False):
    """Spectral norm of a single m x m matrix.

    Hermitian input goes straight to the Jacobi solver; general input uses
    the Hermitian eigenproblem of M* M.
    """
    M = np.asarray(M, dtype=np.complex128)
    if M.shape[-1] == 1:
        return float(np.abs(M[..., 0, 0]))
    if hermitian:
        w, _ = kernels.jacobi_eigh(M, JACOBI_TOL)
        return float(np.max(np.abs(w)))
    w, _ = kernels.jacobi_eigh(np.conj(M.T) @ M, JACOBI_TOL)
    return float(np.sqrt(max(np.max(w), 0.0)))


def opnorm_field(Ms, hermitian=True):
    """Spectral norms of a (..., m, m) matrix field, shape (...,)."""
    Ms = np.ascontiguousarray(Ms, dtype=np.complex128)
    if Ms.shape[-1] == 1:
        return np.abs(Ms[..., 0, 0])
    if not hermitian:
        Ms = np.einsum("...ji,...jk->...ik", np.conj(Ms), Ms)
        w, _ = kernels.eigh_field(Ms, JACOBI_TOL)
        return np.sqrt(np.maximum(np.max(w, axis=-1), 0.0))
    w, _ = kernels.eigh_field(Ms, JACOBI_TOL)
    return np.max(np.abs(w), axis=-1)


def eigensplit_field(As):
    """Split a Hermitian field A = A+ + A- by eigenvalue sign (node-wise)."""
    As = np.ascontiguousarray(As, dtype=np.complex128)
    w, V = kernels.eigh_field(As, JACOBI_TOL)
    wp = np.maximum(w, 0.0)
    wm = np.minimum(w, 0.0)
    Vc = np.conj(V)
    Ap = np.einsum("...ik,...k,...jk->...ij", V, wp, Vc)
    Am = np.einsum("...ik,...k,...jk->...ij", V, wm, Vc)
    return Ap, Am


def min_eig_field(Hs):
    """Smallest eigenvalue of a Hermitian (..., m, m) field."""
    Hs = np.ascontiguousarray(Hs, dtype=np.complex128)
    if Hs.shape[-1] == 1:
        return Hs[..., 0, 0].real.copy()
    w, _ = kernels.eigh_field(Hs, JACOBI_TOL)
    return w[..., 0]
