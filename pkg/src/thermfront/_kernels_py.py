"""Pure numpy trajectory loops; reference for the compiled ``_kernels`` module.

All kernels share one calling convention: ``angles`` holds one kick angle per
step, ``record_steps`` is an ascending array of step indices (0 allowed) at
which per-site magnetizations are written, and the return value is
``(mags, drift)`` with ``mags`` of shape ``(len(record_steps), L)`` and
``drift`` the largest normalization defect seen at a record.
"""

import numpy as np
import scipy.sparse as sp

IMPLEMENTATION = "python"


def ed_modal_z(phases, vecs, proj_up, psi, angles, record_steps, spins):
    """Sector evolution in the eigenbasis of H0 with kicks exp(-i a S1^z).

    ``psi`` is the initial state in the eigenbasis and is overwritten.
    ``proj_up`` is V^T P_up V, the site-1-up projector in the eigenbasis.
    """
    n_rec = record_steps.shape[0]
    mags = np.empty((n_rec, spins.shape[1]))
    drift = 0.0
    k = 0
    while k < n_rec and record_steps[k] == 0:
        x = vecs @ psi
        mags[k] = (x.real**2 + x.imag**2) @ spins
        k += 1
    for n in range(angles.shape[0]):
        if k == n_rec:
            break
        a = angles[n]
        psi *= phases
        psi += (np.exp(-1j * a) - 1.0) * (proj_up @ psi)
        psi *= np.exp(0.5j * a)
        while k < n_rec and record_steps[k] == n + 1:
            x = vecs @ psi
            p = x.real**2 + x.imag**2
            mags[k] = p @ spins
            drift = max(drift, abs(p.sum() - 1.0))
            k += 1
    return mags, drift


def _site_loop(propagate, psi, up, angles, rot_a, rot_b, rot_angles, rot_scale, rot_first,
               record_steps, spins):
    n_rec = record_steps.shape[0]
    mags = np.empty((n_rec, spins.shape[1]))
    drift = 0.0
    upm = up.astype(bool)
    has_rot = rot_angles is not None and rot_a.shape[0] > 0
    k = 0
    while k < n_rec and record_steps[k] == 0:
        mags[k] = (psi.real**2 + psi.imag**2) @ spins
        k += 1

    def rotate(psi, phi):
        c, s = np.cos(phi), np.sin(phi)
        xa = psi[rot_a]
        xb = psi[rot_b]
        psi[rot_a] = c * xa - 1j * s * xb
        psi[rot_b] = c * xb - 1j * s * xa

    for n in range(angles.shape[0]):
        if k == n_rec:
            break
        psi = propagate(psi)
        if has_rot and rot_first:
            rotate(psi, rot_scale * rot_angles[n])
        a = angles[n]
        psi = np.where(upm, np.exp(-0.5j * a), np.exp(0.5j * a)) * psi
        if has_rot and not rot_first:
            rotate(psi, rot_scale * rot_angles[n])
        while k < n_rec and record_steps[k] == n + 1:
            p = psi.real**2 + psi.imag**2
            mags[k] = p @ spins
            drift = max(drift, abs(p.sum() - 1.0))
            k += 1
    return mags, drift


def ed_site(prop, psi, up, angles, rot_a, rot_b, rot_angles, rot_scale, rot_first,
            record_steps, spins):
    """Site-basis evolution: psi <- kicks * prop @ psi.

    The optional rotation kick mixes basis pairs ``(rot_a[i], rot_b[i])`` with
    exp(-i phi X), phi = rot_scale * rot_angles[n]; it is applied before the
    z kick when ``rot_first`` is true and after it otherwise.
    """
    return _site_loop(lambda x: prop @ x, psi, up, angles, rot_a, rot_b, rot_angles,
                      rot_scale, rot_first, record_steps, spins)


def poly_site(indptr, indices, data, center, radius, coeffs, phase, psi, up, angles,
              rot_a, rot_b, rot_angles, rot_scale, rot_first, record_steps, spins):
    """As :func:`ed_site`, with exp(-i tau H) applied as a Chebyshev series.

    H is given in CSR form; ``coeffs`` expand exp(-i tau r x) on [-1, 1] and
    ``phase`` = exp(-i tau center) restores the shift.
    """
    d = psi.shape[0]
    H = sp.csr_matrix((data, indices, indptr), shape=(d, d))

    def propagate(x):
        t0 = x
        t1 = (H @ x - center * x) / radius
        acc = coeffs[0] * t0 + coeffs[1] * t1
        for c in coeffs[2:]:
            t0, t1 = t1, 2.0 * (H @ t1 - center * t1) / radius - t0
            acc += c * t1
        return phase * acc

    return _site_loop(propagate, psi.copy(), up, angles, rot_a, rot_b, rot_angles,
                      rot_scale, rot_first, record_steps, spins)


def _orthonormalize(m):
    q, r = np.linalg.qr(m)
    # fix the column phases so the result is a small perturbation of m
    ph = np.diag(r).copy()
    ph /= np.abs(ph)
    return q * ph


def gaussian_modal(phases, vecs, wt, angles, record_steps, reortho_every):
    """Slater-determinant evolution in the eigenbasis of Q.

    ``wt`` is V^T W (L x N), overwritten.  The site-1 kick diag(e^{-ia}, 1, ...)
    becomes the rank-one update wt += (e^{-ia} - 1) v (v^T wt), v = row 1 of V.
    """
    L, N = wt.shape
    v = np.ascontiguousarray(vecs[0])
    n_rec = record_steps.shape[0]
    mags = np.empty((n_rec, L))
    drift = 0.0
    ph = phases[:, None]
    eye = np.eye(N)
    k = 0

    def record():
        w = vecs @ wt
        return (w.real**2 + w.imag**2).sum(axis=1) - 0.5

    while k < n_rec and record_steps[k] == 0:
        mags[k] = record()
        k += 1
    for n in range(angles.shape[0]):
        if k == n_rec:
            break
        wt *= ph
        wt += np.outer((np.exp(-1j * angles[n]) - 1.0) * v, v @ wt)
        if reortho_every and (n + 1) % reortho_every == 0:
            wt[...] = _orthonormalize(wt)
        while k < n_rec and record_steps[k] == n + 1:
            mags[k] = record()
            drift = max(drift, np.abs(wt.conj().T @ wt - eye).max())
            k += 1
    return mags, drift


def bdg_modal(phases, vecs, ut, vt, angles, pair_angles, record_steps, reortho_every):
    """BdG (U, V) evolution in the eigenbasis of Q.

    Per step: U <- e^{-i tau Q} U, V <- e^{+i tau Q} V, then the pairing kick
    exp(-i phi [[0, D], [-D, 0]]) with D = e1 e2^T - e2 e1^T, then the site-1
    kick exp(-i a [[A, 0], [0, -A]]).  ``pair_angles`` may be None.
    """
    L = ut.shape[0]
    v1 = np.ascontiguousarray(vecs[0])
    v2 = np.ascontiguousarray(vecs[1])
    cph = phases.conj()[:, None]
    ph = phases[:, None]
    n_rec = record_steps.shape[0]
    mags = np.empty((n_rec, L))
    drift = 0.0
    eye = np.eye(L)
    k = 0

    def record():
        vs = vecs @ vt
        return (vs.real**2 + vs.imag**2).sum(axis=1) - 0.5

    while k < n_rec and record_steps[k] == 0:
        mags[k] = record()
        k += 1
    for n in range(angles.shape[0]):
        if k == n_rec:
            break
        ut *= ph
        vt *= cph
        if pair_angles is not None:
            phi = pair_angles[n]
            c1, s = np.cos(phi) - 1.0, np.sin(phi)
            a1, a2 = v1 @ ut, v2 @ ut
            b1, b2 = v1 @ vt, v2 @ vt
            ut += np.outer(v1, c1 * a1 - 1j * s * b2) + np.outer(v2, c1 * a2 + 1j * s * b1)
            vt += np.outer(v1, c1 * b1 + 1j * s * a2) + np.outer(v2, c1 * b2 - 1j * s * a1)
        a = angles[n]
        ut += np.outer((np.exp(-1j * a) - 1.0) * v1, v1 @ ut)
        vt += np.outer((np.exp(1j * a) - 1.0) * v1, v1 @ vt)
        if reortho_every and (n + 1) % reortho_every == 0:
            q = _orthonormalize(np.vstack([ut, vt]))
            ut[...] = q[:L]
            vt[...] = q[L:]
        while k < n_rec and record_steps[k] == n + 1:
            mags[k] = record()
            drift = max(drift, np.abs(ut.conj().T @ ut + vt.conj().T @ vt - eye).max())
            k += 1
    return mags, drift
