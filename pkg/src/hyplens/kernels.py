"""Hot numerical kernels with numba and pure-numpy twin implementations.

Everything here operates on plain complex128 ndarrays so the numba path can
compile it.  States are node-major: ``U[node, component]`` in 1D and
``U[i, j, component]`` in 2D; matrix fields are ``A[node, row, col]``.
Boundary handling is zero-ghost (the solver keeps supports away from the
boundary, so the ghost values never matter).

Public names are bound to one backend at import time (see `_backend`); the
``*_numpy`` / ``*_numba`` variants stay importable for the equivalence tests
and the kernel benchmark.
"""

import numpy as np

from ._backend import USE_NUMBA, HAVE_NUMBA

# ---------------------------------------------------------------------------
# pure-numpy reference implementations
# ---------------------------------------------------------------------------


def _shift(U, k):
    """U shifted by k nodes along axis 0 with zero ghost cells."""
    V = np.zeros_like(U)
    if k > 0:
        V[k:] = U[:-k]
    elif k < 0:
        V[:k] = U[-k:]
    else:
        V[:] = U
    return V


def matvec_field_numpy(M, U):
    """Node-wise matrix-vector product: (..., m, m) @ (..., m)."""
    return np.einsum("...ij,...j->...i", M, U)


def lf_step_numpy(U, A, lam):
    Up = _shift(U, -1)
    Um = _shift(U, 1)
    return 0.5 * (Up + Um) - 0.5 * lam * matvec_field_numpy(A, Up - Um)


def upwind_step_numpy(U, Ap, Am, lam):
    Um = _shift(U, 1)
    Up = _shift(U, -1)
    return U - lam * (matvec_field_numpy(Ap, U - Um) + matvec_field_numpy(Am, Up - U))


def richtmyer_step_numpy(U, Anode, Aface, lam):
    """Two-step Lax-Wendroff.  Aface holds A at the N+1 cell faces."""
    N = U.shape[0]
    m = U.shape[1]
    Ug = np.zeros((N + 2, m), dtype=U.dtype)
    Ug[1:-1] = U
    # half states at faces i-1/2, i = 0..N
    Uh = 0.5 * (Ug[1:] + Ug[:-1]) - 0.5 * lam * matvec_field_numpy(Aface, Ug[1:] - Ug[:-1])
    return U - lam * matvec_field_numpy(Anode, Uh[1:] - Uh[:-1])


def lf_step_2d_numpy(U, A1, A2, lamx, lamy):
    Uxp = np.zeros_like(U)
    Uxm = np.zeros_like(U)
    Uyp = np.zeros_like(U)
    Uym = np.zeros_like(U)
    Uxp[:-1] = U[1:]
    Uxm[1:] = U[:-1]
    Uyp[:, :-1] = U[:, 1:]
    Uym[:, 1:] = U[:, :-1]
    return (
        0.25 * (Uxp + Uxm + Uyp + Uym)
        - 0.5 * lamx * matvec_field_numpy(A1, Uxp - Uxm)
        - 0.5 * lamy * matvec_field_numpy(A2, Uyp - Uym)
    )


def jacobi_eigh_numpy(H, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi diagonalization of a complex Hermitian matrix.

    Returns (w, V) with eigenvalues ascending and eigenvectors in columns.
    """
    m = H.shape[0]
    A = np.array(H, dtype=np.complex128)
    V = np.eye(m, dtype=np.complex128)
    if m == 1:
        return np.array([A[0, 0].real]), V
    scale = max(1.0, float(np.max(np.abs(np.diag(A).real))))
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(m - 1):
            for q in range(p + 1, m):
                off = max(off, abs(A[p, q]))
        if off <= tol * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p, q]
                aph = abs(apq)
                if aph <= tol * scale * 1e-3:
                    continue
                w = apq / aph
                tau = (A[q, q].real - A[p, p].real) / (2.0 * aph)
                if tau >= 0.0:
                    t = -1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = 1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # columns p, q of A <- A @ J
                colp = c * A[:, p] + s * np.conj(w) * A[:, q]
                colq = -s * w * A[:, p] + c * A[:, q]
                A[:, p] = colp
                A[:, q] = colq
                # rows p, q of A <- J* @ A
                rowp = c * A[p, :] + s * w * A[q, :]
                rowq = -s * np.conj(w) * A[p, :] + c * A[q, :]
                A[p, :] = rowp
                A[q, :] = rowq
                A[p, q] = 0.0
                A[q, p] = 0.0
                colp = c * V[:, p] + s * np.conj(w) * V[:, q]
                colq = -s * w * V[:, p] + c * V[:, q]
                V[:, p] = colp
                V[:, q] = colq
        scale = max(1.0, float(np.max(np.abs(np.diag(A).real))))
    wvals = np.diag(A).real.copy()
    order = np.argsort(wvals)
    return wvals[order], V[:, order]


def eigh_field_numpy(Hs, tol=1e-12):
    """Batched Jacobi: Hs (..., m, m) -> (w (..., m), V (..., m, m))."""
    shp = Hs.shape[:-2]
    m = Hs.shape[-1]
    flat = Hs.reshape(-1, m, m)
    W = np.empty(flat.shape[:1] + (m,), dtype=np.float64)
    V = np.empty_like(flat)
    for k in range(flat.shape[0]):
        W[k], V[k] = jacobi_eigh_numpy(flat[k], tol=tol)
    return W.reshape(shp + (m,)), V.reshape(shp + (m, m))


def expm_field_numpy(X):
    """Batched matrix exponential by scaling-and-squaring Taylor.

    X is (..., m, m) complex; accurate to ~1e-14 for the small blocks used
    here (the B-step feeds in -dt/2 * B, scaled well below unit norm).
    """
    X = np.asarray(X, dtype=np.complex128)
    m = X.shape[-1]
    norm = np.max(np.sum(np.abs(X), axis=-1), initial=0.0)
    nsq = max(0, int(np.ceil(np.log2(max(norm, 1e-300) / 0.25)))) if norm > 0.25 else 0
    Y = X / (2.0**nsq)
    E = np.zeros_like(X)
    E[...] = np.eye(m)
    term = np.zeros_like(X)
    term[...] = np.eye(m)
    for k in range(1, 18):
        term = np.matmul(term, Y) / k
        E = E + term
    for _ in range(nsq):
        E = np.matmul(E, E)
    return E


# ---------------------------------------------------------------------------
# numba twins
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    from numba import njit

    @njit(cache=True, nogil=True)
    def matvec_field_numba(M, U):
        out = np.zeros_like(U)
        flatM = M.reshape(-1, M.shape[-2], M.shape[-1])
        flatU = U.reshape(-1, U.shape[-1])
        flatO = out.reshape(-1, U.shape[-1])
        m = U.shape[-1]
        for k in range(flatU.shape[0]):
            for i in range(m):
                acc = 0.0 + 0.0j
                for j in range(m):
                    acc += flatM[k, i, j] * flatU[k, j]
                flatO[k, i] = acc
        return out

    @njit(cache=True, nogil=True)
    def lf_step_numba(U, A, lam):
        N, m = U.shape
        out = np.zeros_like(U)
        for i in range(N):
            for a in range(m):
                up = U[i + 1, a] if i + 1 < N else 0.0j
                um = U[i - 1, a] if i - 1 >= 0 else 0.0j
                acc = 0.5 * (up + um)
                for b in range(m):
                    upb = U[i + 1, b] if i + 1 < N else 0.0j
                    umb = U[i - 1, b] if i - 1 >= 0 else 0.0j
                    acc -= 0.5 * lam * A[i, a, b] * (upb - umb)
                out[i, a] = acc
        return out

    @njit(cache=True, nogil=True)
    def upwind_step_numba(U, Ap, Am, lam):
        N, m = U.shape
        out = np.zeros_like(U)
        for i in range(N):
            for a in range(m):
                acc = U[i, a]
                for b in range(m):
                    ub = U[i, b]
                    umb = U[i - 1, b] if i - 1 >= 0 else 0.0j
                    upb = U[i + 1, b] if i + 1 < N else 0.0j
                    acc -= lam * (Ap[i, a, b] * (ub - umb) + Am[i, a, b] * (upb - ub))
                out[i, a] = acc
        return out

    @njit(cache=True, nogil=True)
    def richtmyer_step_numba(U, Anode, Aface, lam):
        N, m = U.shape
        Uh = np.zeros((N + 1, m), dtype=U.dtype)
        for f in range(N + 1):
            for a in range(m):
                ul = U[f - 1, a] if f - 1 >= 0 else 0.0j
                ur = U[f, a] if f < N else 0.0j
                acc = 0.5 * (ul + ur)
                for b in range(m):
                    ulb = U[f - 1, b] if f - 1 >= 0 else 0.0j
                    urb = U[f, b] if f < N else 0.0j
                    acc -= 0.5 * lam * Aface[f, a, b] * (urb - ulb)
                Uh[f, a] = acc
        out = np.zeros_like(U)
        for i in range(N):
            for a in range(m):
                acc = U[i, a]
                for b in range(m):
                    acc -= lam * Anode[i, a, b] * (Uh[i + 1, b] - Uh[i, b])
                out[i, a] = acc
        return out

    @njit(cache=True, nogil=True)
    def lf_step_2d_numba(U, A1, A2, lamx, lamy):
        Nx, Ny, m = U.shape
        out = np.zeros_like(U)
        for i in range(Nx):
            for j in range(Ny):
                for a in range(m):
                    uxp = U[i + 1, j, a] if i + 1 < Nx else 0.0j
                    uxm = U[i - 1, j, a] if i - 1 >= 0 else 0.0j
                    uyp = U[i, j + 1, a] if j + 1 < Ny else 0.0j
                    uym = U[i, j - 1, a] if j - 1 >= 0 else 0.0j
                    acc = 0.25 * (uxp + uxm + uyp + uym)
                    for b in range(m):
                        xpb = U[i + 1, j, b] if i + 1 < Nx else 0.0j
                        xmb = U[i - 1, j, b] if i - 1 >= 0 else 0.0j
                        ypb = U[i, j + 1, b] if j + 1 < Ny else 0.0j
                        ymb = U[i, j - 1, b] if j - 1 >= 0 else 0.0j
                        acc -= 0.5 * lamx * A1[i, j, a, b] * (xpb - xmb)
                        acc -= 0.5 * lamy * A2[i, j, a, b] * (ypb - ymb)
                    out[i, j, a] = acc
        return out

    @njit(cache=True, nogil=True)
    def jacobi_eigh_numba(H, tol=1e-12, max_sweeps=100):
        m = H.shape[0]
        A = H.astype(np.complex128).copy()
        V = np.eye(m, dtype=np.complex128)
        wout = np.empty(m, dtype=np.float64)
        if m == 1:
            wout[0] = A[0, 0].real
            return wout, V
        scale = 1.0
        for i in range(m):
            if abs(A[i, i].real) > scale:
                scale = abs(A[i, i].real)
        for _ in range(max_sweeps):
            off = 0.0
            for p in range(m - 1):
                for q in range(p + 1, m):
                    if abs(A[p, q]) > off:
                        off = abs(A[p, q])
            if off <= tol * scale:
                break
            for p in range(m - 1):
                for q in range(p + 1, m):
                    apq = A[p, q]
                    aph = abs(apq)
                    if aph <= tol * scale * 1e-3:
                        continue
                    w = apq / aph
                    tau = (A[q, q].real - A[p, p].real) / (2.0 * aph)
                    if tau >= 0.0:
                        t = -1.0 / (tau + np.sqrt(1.0 + tau * tau))
                    else:
                        t = 1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                    c = 1.0 / np.sqrt(1.0 + t * t)
                    s = t * c
                    for i in range(m):
                        aip = A[i, p]
                        aiq = A[i, q]
                        A[i, p] = c * aip + s * np.conj(w) * aiq
                        A[i, q] = -s * w * aip + c * aiq
                    for j in range(m):
                        apj = A[p, j]
                        aqj = A[q, j]
                        A[p, j] = c * apj + s * w * aqj
                        A[q, j] = -s * np.conj(w) * apj + c * aqj
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    for i in range(m):
                        vip = V[i, p]
                        viq = V[i, q]
                        V[i, p] = c * vip + s * np.conj(w) * viq
                        V[i, q] = -s * w * vip + c * viq
            scale = 1.0
            for i in range(m):
                if abs(A[i, i].real) > scale:
                    scale = abs(A[i, i].real)
        for i in range(m):
            wout[i] = A[i, i].real
        order = np.argsort(wout)
        wsorted = np.empty(m, dtype=np.float64)
        Vsorted = np.empty((m, m), dtype=np.complex128)
        for k in range(m):
            wsorted[k] = wout[order[k]]
            for i in range(m):
                Vsorted[i, k] = V[i, order[k]]
        return wsorted, Vsorted

    @njit(cache=True, nogil=True)
    def eigh_field_numba(Hs, tol=1e-12):
        m = Hs.shape[-1]
        flat = Hs.reshape(-1, m, m)
        K = flat.shape[0]
        W = np.empty((K, m), dtype=np.float64)
        V = np.empty((K, m, m), dtype=np.complex128)
        for k in range(K):
            w, v = jacobi_eigh_numba(flat[k], tol)
            W[k] = w
            V[k] = v
        return W.reshape(Hs.shape[:-1]), V.reshape(Hs.shape)

    @njit(cache=True, nogil=True)
    def expm_field_numba(X):
        m = X.shape[-1]
        flat = X.reshape(-1, m, m)
        K = flat.shape[0]
        out = np.empty_like(flat)
        norm = 0.0
        for k in range(K):
            for i in range(m):
                rs = 0.0
                for j in range(m):
                    rs += abs(flat[k, i, j])
                if rs > norm:
                    norm = rs
        nsq = 0
        if norm > 0.25:
            nsq = int(np.ceil(np.log2(norm / 0.25)))
        fac = 2.0**nsq
        for k in range(K):
            Y = flat[k] / fac
            E = np.eye(m, dtype=np.complex128)
            term = np.eye(m, dtype=np.complex128)
            for it in range(1, 18):
                term = term @ Y / it
                E = E + term
            for _ in range(nsq):
                E = E @ E
            out[k] = E
        return out.reshape(X.shape)


# ---------------------------------------------------------------------------
# backend binding
# ---------------------------------------------------------------------------

if USE_NUMBA:
    matvec_field = matvec_field_numba
    lf_step = lf_step_numba
    upwind_step = upwind_step_numba
    richtmyer_step = richtmyer_step_numba
    lf_step_2d = lf_step_2d_numba
    jacobi_eigh = jacobi_eigh_numba
    eigh_field = eigh_field_numba
    expm_field = expm_field_numba
else:
    matvec_field = matvec_field_numpy
    lf_step = lf_step_numpy
    upwind_step = upwind_step_numpy
    richtmyer_step = richtmyer_step_numpy
    lf_step_2d = lf_step_2d_numpy
    jacobi_eigh = jacobi_eigh_numpy
    eigh_field = eigh_field_numpy
    expm_field = expm_field_numpy
