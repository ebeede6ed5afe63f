# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trajectory loops.  Same signatures and semantics as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, fabs
from scipy.linalg.cython_blas cimport dgemm, zgemv

cnp.import_array()

IMPLEMENTATION = "cython"

cdef inline double complex expi(double x) nogil:
    return cos(x) + 1j * sin(x)


cdef void _real_left_mul(double[:, ::1] m, double complex[::1] x, double complex[::1] y) nogil:
    # y = m @ x for real C-contiguous m, treating x as a (d, 2) real array
    cdef int d = m.shape[0]
    cdef int two = 2
    cdef double one = 1.0, zero = 0.0
    # Fortran sees x as 2 x d and m as m^T; (x^T m^T)^T = m x
    dgemm(b"N", b"N", &two, &d, &d, &one, <double*>&x[0], &two, &m[0, 0], &d,
          &zero, <double*>&y[0], &two)


cdef void _record_sites(double complex[::1] x, double[:, ::1] spins, double[::1] out,
                        double *norm) nogil:
    cdef Py_ssize_t a, j
    cdef Py_ssize_t d = x.shape[0], L = spins.shape[1]
    cdef double p, tot = 0.0
    for j in range(L):
        out[j] = 0.0
    for a in range(d):
        p = x[a].real * x[a].real + x[a].imag * x[a].imag
        tot += p
        for j in range(L):
            out[j] += p * spins[a, j]
    norm[0] = tot


def ed_modal_z(double complex[::1] phases, double[:, ::1] vecs, double[:, ::1] proj_up,
               double complex[::1] psi, double[::1] angles, cnp.int64_t[::1] record_steps,
               double[:, ::1] spins):
    cdef Py_ssize_t d = psi.shape[0], L = spins.shape[1]
    cdef Py_ssize_t n_rec = record_steps.shape[0], n_steps = angles.shape[0]
    cdef Py_ssize_t n, a, k = 0
    mags_arr = np.empty((n_rec, L))
    cdef double[:, ::1] mags = mags_arr
    cdef double complex[::1] tmp = np.empty(d, dtype=np.complex128)
    cdef double complex[::1] x = np.empty(d, dtype=np.complex128)
    cdef double drift = 0.0, norm
    cdef double complex c, g
    with nogil:
        while k < n_rec and record_steps[k] == 0:
            _real_left_mul(vecs, psi, x)
            _record_sites(x, spins, mags[k], &norm)
            k += 1
        for n in range(n_steps):
            if k == n_rec:
                break
            for a in range(d):
                psi[a] = psi[a] * phases[a]
            _real_left_mul(proj_up, psi, tmp)
            c = expi(-angles[n]) - 1.0
            g = expi(0.5 * angles[n])
            for a in range(d):
                psi[a] = (psi[a] + c * tmp[a]) * g
            while k < n_rec and record_steps[k] == n + 1:
                _real_left_mul(vecs, psi, x)
                _record_sites(x, spins, mags[k], &norm)
                if fabs(norm - 1.0) > drift:
                    drift = fabs(norm - 1.0)
                k += 1
    return mags_arr, drift


cdef void _rotate_pairs(double complex[::1] psi, cnp.int64_t[::1] ra, cnp.int64_t[::1] rb,
                        double phi) nogil:
    cdef Py_ssize_t i
    cdef double cs = cos(phi), sn = sin(phi)
    cdef double complex xa, xb
    for i in range(ra.shape[0]):
        xa = psi[ra[i]]
        xb = psi[rb[i]]
        psi[ra[i]] = cs * xa - 1j * sn * xb
        psi[rb[i]] = cs * xb - 1j * sn * xa


cdef void _kick_z(double complex[::1] psi, cnp.uint8_t[::1] up, double angle) nogil:
    cdef Py_ssize_t a
    cdef double complex zu = expi(-0.5 * angle), zd = expi(0.5 * angle)
    for a in range(psi.shape[0]):
        if up[a]:
            psi[a] = psi[a] * zu
        else:
            psi[a] = psi[a] * zd


cdef void _site_kicks(double complex[::1] psi, cnp.uint8_t[::1] up, double angle,
                      bint has_rot, bint rot_first, cnp.int64_t[::1] ra, cnp.int64_t[::1] rb,
                      double phi) nogil:
    if has_rot and rot_first:
        _rotate_pairs(psi, ra, rb, phi)
    _kick_z(psi, up, angle)
    if has_rot and not rot_first:
        _rotate_pairs(psi, ra, rb, phi)


def ed_site(double complex[:, ::1] prop, double complex[::1] psi_in, cnp.uint8_t[::1] up,
            double[::1] angles, cnp.int64_t[::1] rot_a, cnp.int64_t[::1] rot_b,
            rot_angles, double rot_scale, bint rot_first,
            cnp.int64_t[::1] record_steps, double[:, ::1] spins):
    cdef Py_ssize_t d = psi_in.shape[0], L = spins.shape[1]
    cdef Py_ssize_t n_rec = record_steps.shape[0], n_steps = angles.shape[0]
    cdef Py_ssize_t n, a, k = 0
    cdef bint has_rot = rot_angles is not None and rot_a.shape[0] > 0
    cdef double[::1] rang = np.asarray(rot_angles if has_rot else np.zeros(1), dtype=np.float64)
    mags_arr = np.empty((n_rec, L))
    cdef double[:, ::1] mags = mags_arr
    cdef double complex[::1] psi = np.array(psi_in, dtype=np.complex128)
    cdef double complex[::1] y = np.empty(d, dtype=np.complex128)
    cdef double drift = 0.0, norm
    cdef double complex one = 1.0, zero = 0.0
    cdef int di = <int>d, inc = 1
    with nogil:
        while k < n_rec and record_steps[k] == 0:
            _record_sites(psi, spins, mags[k], &norm)
            k += 1
        for n in range(n_steps):
            if k == n_rec:
                break
            # Fortran sees prop as prop^T, so transposing gives prop @ psi
            zgemv(b"T", &di, &di, &one, &prop[0, 0], &di, &psi[0], &inc, &zero, &y[0], &inc)
            for a in range(d):
                psi[a] = y[a]
            _site_kicks(psi, up, angles[n], has_rot, rot_first, rot_a, rot_b,
                        rot_scale * rang[n] if has_rot else 0.0)
            while k < n_rec and record_steps[k] == n + 1:
                _record_sites(psi, spins, mags[k], &norm)
                if fabs(norm - 1.0) > drift:
                    drift = fabs(norm - 1.0)
                k += 1
    return mags_arr, drift


cdef void _cheb_term(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices, double[::1] data,
                     double complex[::1] x, double complex[::1] prev, double complex[::1] y,
                     double complex[::1] acc, double complex c, double two) nogil:
    # y = two * Hs x - prev (prev ignored when two == 1), acc += c y; Hs is pre-scaled
    cdef Py_ssize_t i, p
    cdef double re, im, w
    cdef cnp.int32_t j
    for i in range(x.shape[0]):
        re = 0.0
        im = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            w = data[p]
            re = re + w * x[j].real
            im = im + w * x[j].imag
        if two == 1.0:
            y[i] = re + 1j * im
        else:
            y[i] = two * (re + 1j * im) - prev[i]
        acc[i] = acc[i] + c * y[i]


def poly_site(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices, double[::1] data,
              double center, double radius, double complex[::1] coeffs, double complex phase,
              double complex[::1] psi_in, cnp.uint8_t[::1] up, double[::1] angles,
              cnp.int64_t[::1] rot_a, cnp.int64_t[::1] rot_b, rot_angles, double rot_scale,
              bint rot_first, cnp.int64_t[::1] record_steps, double[:, ::1] spins):
    cdef Py_ssize_t d = psi_in.shape[0], L = spins.shape[1]
    cdef Py_ssize_t n_rec = record_steps.shape[0], n_steps = angles.shape[0]
    cdef Py_ssize_t n_terms = coeffs.shape[0]
    cdef Py_ssize_t n, a, m, p, k = 0
    cdef bint has_rot = rot_angles is not None and rot_a.shape[0] > 0
    cdef double[::1] rang = np.asarray(rot_angles if has_rot else np.zeros(1), dtype=np.float64)
    mags_arr = np.empty((n_rec, L))
    cdef double[:, ::1] mags = mags_arr
    cdef double complex[::1] psi = np.array(psi_in, dtype=np.complex128)
    cdef double complex[::1] t0, t1, t2, swap
    cdef double complex[::1] acc = np.empty(d, dtype=np.complex128)
    # (H - center) / radius with the shift folded into the diagonal entries
    scaled = np.array(data, dtype=np.float64) / radius
    cdef double[::1] hs = scaled
    for a in range(d):
        for p in range(indptr[a], indptr[a + 1]):
            if indices[p] == a:
                hs[p] -= center / radius
    cdef double complex[::1] b0 = np.empty(d, dtype=np.complex128)
    cdef double complex[::1] b1 = np.empty(d, dtype=np.complex128)
    cdef double complex[::1] b2 = np.empty(d, dtype=np.complex128)
    cdef double drift = 0.0, norm
    with nogil:
        while k < n_rec and record_steps[k] == 0:
            _record_sites(psi, spins, mags[k], &norm)
            k += 1
        for n in range(n_steps):
            if k == n_rec:
                break
            # Chebyshev series of exp(-i tau H) on the rescaled spectrum
            t0 = b0
            t1 = b1
            t2 = b2
            for a in range(d):
                t0[a] = psi[a]
                acc[a] = coeffs[0] * psi[a]
            _cheb_term(indptr, indices, hs, t0, t0, t1, acc, coeffs[1], 1.0)
            for m in range(2, n_terms):
                _cheb_term(indptr, indices, hs, t1, t0, t2, acc, coeffs[m], 2.0)
                swap = t0
                t0 = t1
                t1 = t2
                t2 = swap
            for a in range(d):
                psi[a] = phase * acc[a]
            _site_kicks(psi, up, angles[n], has_rot, rot_first, rot_a, rot_b,
                        rot_scale * rang[n] if has_rot else 0.0)
            while k < n_rec and record_steps[k] == n + 1:
                _record_sites(psi, spins, mags[k], &norm)
                if fabs(norm - 1.0) > drift:
                    drift = fabs(norm - 1.0)
                k += 1
    return mags_arr, drift


cdef void _mgs(double complex[:, ::1] m) nogil:
    # modified Gram-Schmidt on the columns of m, in place
    cdef Py_ssize_t rows = m.shape[0], cols = m.shape[1]
    cdef Py_ssize_t i, j, r
    cdef double complex proj
    cdef double nrm
    for j in range(cols):
        for i in range(j):
            proj = 0.0
            for r in range(rows):
                proj = proj + m[r, i].conjugate() * m[r, j]
            for r in range(rows):
                m[r, j] = m[r, j] - proj * m[r, i]
        nrm = 0.0
        for r in range(rows):
            nrm += m[r, j].real * m[r, j].real + m[r, j].imag * m[r, j].imag
        nrm = nrm ** 0.5
        for r in range(rows):
            m[r, j] = m[r, j] / nrm


cdef double _gram_defect(double complex[:, ::1] m) nogil:
    cdef Py_ssize_t rows = m.shape[0], cols = m.shape[1]
    cdef Py_ssize_t i, j, r
    cdef double complex s
    cdef double worst = 0.0, dev
    for i in range(cols):
        for j in range(i, cols):
            s = 0.0
            for r in range(rows):
                s = s + m[r, i].conjugate() * m[r, j]
            if i == j:
                s = s - 1.0
            dev = abs(s)
            if dev > worst:
                worst = dev
    return worst


cdef void _modal_rows(double[:, ::1] vecs, double complex[:, ::1] mt, double[::1] out) nogil:
    # out[j] = sum_k |(V mt)[j, k]|^2 - 1/2
    cdef Py_ssize_t L = vecs.shape[0], cols = mt.shape[1]
    cdef Py_ssize_t j, k, q
    cdef double complex s
    cdef double acc
    for j in range(L):
        acc = 0.0
        for k in range(cols):
            s = 0.0
            for q in range(L):
                s = s + vecs[j, q] * mt[q, k]
            acc += s.real * s.real + s.imag * s.imag
        out[j] = acc - 0.5


cdef void _rank_one(double complex[:, ::1] mt, double[::1] v, double complex c,
                    double complex[::1] work) nogil:
    # mt += c v (v^T mt)
    cdef Py_ssize_t L = mt.shape[0], cols = mt.shape[1]
    cdef Py_ssize_t q, k
    for k in range(cols):
        work[k] = 0.0
    for q in range(L):
        for k in range(cols):
            work[k] = work[k] + v[q] * mt[q, k]
    for q in range(L):
        for k in range(cols):
            mt[q, k] = mt[q, k] + c * v[q] * work[k]


def gaussian_modal(double complex[::1] phases, double[:, ::1] vecs, double complex[:, ::1] wt,
                   double[::1] angles, cnp.int64_t[::1] record_steps, Py_ssize_t reortho_every):
    cdef Py_ssize_t L = wt.shape[0], N = wt.shape[1]
    cdef Py_ssize_t n_rec = record_steps.shape[0], n_steps = angles.shape[0]
    cdef Py_ssize_t n, q, kk, k = 0
    mags_arr = np.empty((n_rec, L))
    cdef double[:, ::1] mags = mags_arr
    cdef double[::1] v = np.ascontiguousarray(np.asarray(vecs)[0])
    cdef double complex[::1] work = np.empty(N, dtype=np.complex128)
    cdef double drift = 0.0, dev
    with nogil:
        while k < n_rec and record_steps[k] == 0:
            _modal_rows(vecs, wt, mags[k])
            k += 1
        for n in range(n_steps):
            if k == n_rec:
                break
            for q in range(L):
                for kk in range(N):
                    wt[q, kk] = wt[q, kk] * phases[q]
            _rank_one(wt, v, expi(-angles[n]) - 1.0, work)
            if reortho_every and (n + 1) % reortho_every == 0:
                _mgs(wt)
            while k < n_rec and record_steps[k] == n + 1:
                _modal_rows(vecs, wt, mags[k])
                dev = _gram_defect(wt)
                if dev > drift:
                    drift = dev
                k += 1
    return mags_arr, drift


cdef double _bdg_defect(double complex[:, ::1] ut, double complex[:, ::1] vt) nogil:
    cdef Py_ssize_t L = ut.shape[0]
    cdef Py_ssize_t i, j, r
    cdef double complex s
    cdef double worst = 0.0, dev
    for i in range(L):
        for j in range(i, L):
            s = 0.0
            for r in range(L):
                s = s + ut[r, i].conjugate() * ut[r, j] + vt[r, i].conjugate() * vt[r, j]
            if i == j:
                s = s - 1.0
            dev = abs(s)
            if dev > worst:
                worst = dev
    return worst


def bdg_modal(double complex[::1] phases, double[:, ::1] vecs, double complex[:, ::1] ut,
              double complex[:, ::1] vt, double[::1] angles, pair_angles,
              cnp.int64_t[::1] record_steps, Py_ssize_t reortho_every):
    cdef Py_ssize_t L = ut.shape[0]
    cdef Py_ssize_t n_rec = record_steps.shape[0], n_steps = angles.shape[0]
    cdef Py_ssize_t n, q, kk, k = 0
    cdef bint has_pair = pair_angles is not None
    cdef double[::1] pang = np.asarray(pair_angles if has_pair else np.zeros(1), dtype=np.float64)
    mags_arr = np.empty((n_rec, L))
    cdef double[:, ::1] mags = mags_arr
    cdef double[::1] v1 = np.ascontiguousarray(np.asarray(vecs)[0])
    cdef double[::1] v2 = np.ascontiguousarray(np.asarray(vecs)[1])
    cdef double complex[::1] work = np.empty(L, dtype=np.complex128)
    cdef double complex[::1] a1 = np.empty(L, dtype=np.complex128)
    cdef double complex[::1] a2 = np.empty(L, dtype=np.complex128)
    cdef double complex[::1] b1 = np.empty(L, dtype=np.complex128)
    cdef double complex[::1] b2 = np.empty(L, dtype=np.complex128)
    stack_arr = np.empty((2 * L, L), dtype=np.complex128)
    cdef double complex[:, ::1] stack = stack_arr
    cdef double drift = 0.0, dev, c1, s
    cdef double complex cu, cv
    with nogil:
        while k < n_rec and record_steps[k] == 0:
            _modal_rows(vecs, vt, mags[k])
            k += 1
        for n in range(n_steps):
            if k == n_rec:
                break
            for q in range(L):
                for kk in range(L):
                    ut[q, kk] = ut[q, kk] * phases[q]
                    vt[q, kk] = vt[q, kk] * phases[q].conjugate()
            if has_pair:
                c1 = cos(pang[n]) - 1.0
                s = sin(pang[n])
                for kk in range(L):
                    a1[kk] = 0.0
                    a2[kk] = 0.0
                    b1[kk] = 0.0
                    b2[kk] = 0.0
                for q in range(L):
                    for kk in range(L):
                        a1[kk] = a1[kk] + v1[q] * ut[q, kk]
                        a2[kk] = a2[kk] + v2[q] * ut[q, kk]
                        b1[kk] = b1[kk] + v1[q] * vt[q, kk]
                        b2[kk] = b2[kk] + v2[q] * vt[q, kk]
                for q in range(L):
                    for kk in range(L):
                        ut[q, kk] = ut[q, kk] + v1[q] * (c1 * a1[kk] - 1j * s * b2[kk]) \
                            + v2[q] * (c1 * a2[kk] + 1j * s * b1[kk])
                        vt[q, kk] = vt[q, kk] + v1[q] * (c1 * b1[kk] + 1j * s * a2[kk]) \
                            + v2[q] * (c1 * b2[kk] - 1j * s * a1[kk])
            cu = expi(-angles[n]) - 1.0
            cv = expi(angles[n]) - 1.0
            _rank_one(ut, v1, cu, work)
            _rank_one(vt, v1, cv, work)
            if reortho_every and (n + 1) % reortho_every == 0:
                for q in range(L):
                    for kk in range(L):
                        stack[q, kk] = ut[q, kk]
                        stack[L + q, kk] = vt[q, kk]
                _mgs(stack)
                for q in range(L):
                    for kk in range(L):
                        ut[q, kk] = stack[q, kk]
                        vt[q, kk] = stack[L + q, kk]
            while k < n_rec and record_steps[k] == n + 1:
                _modal_rows(vecs, vt, mags[k])
                dev = _bdg_defect(ut, vt)
                if dev > drift:
                    drift = dev
                k += 1
    return mags_arr, drift
