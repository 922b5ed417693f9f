# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels; see ``_pure`` for semantics.

Elementwise kernels reproduce the fallback bit-for-bit (same expressions, no
fast-math). The triplet kernels accumulate D-length dot products in plain
loop order, which differs from numpy's summation order by O(1e-16).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

HULL_EPS = 1e-9
cdef double _HULL_EPS = 1e-9
cdef double _EPS_NORM = 1e-12
cdef double _EPS_PARALLEL = 1e-9


def hull_lattice_mask(cnp.ndarray[cnp.float64_t, ndim=2] hull,
                      long x0, long y0, long width, long height):
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, cast=True] mask = \
        np.ones((height, width), dtype=bool)
    cdef cnp.uint8_t[:, :] m = mask
    cdef double[:, :] h = hull
    cdef Py_ssize_t k = hull.shape[0]
    cdef Py_ssize_t i, r, c
    cdef double ax, ay, ex, ey, px, py
    for i in range(k):
        ax = h[i, 0]
        ay = h[i, 1]
        ex = h[(i + 1) % k, 0] - ax
        ey = h[(i + 1) % k, 1] - ay
        for r in range(height):
            py = y0 + <double> r
            for c in range(width):
                if m[r, c]:
                    px = x0 + <double> c
                    if ex * (py - ay) - ey * (px - ax) < -_HULL_EPS:
                        m[r, c] = 0
    return mask


def batch_line_intersections(cnp.ndarray[cnp.float64_t, ndim=2] a_pts,
                             cnp.ndarray[cnp.float64_t, ndim=2] a_dirs,
                             cnp.ndarray[cnp.float64_t, ndim=2] b_pts,
                             cnp.ndarray[cnp.float64_t, ndim=2] b_dirs):
    cdef Py_ssize_t H = a_pts.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pts = np.zeros((H, 2), dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1, cast=True] ok = np.zeros(H, dtype=bool)
    cdef double[:, :] ap = a_pts, ad = a_dirs, bp = b_pts, bd = b_dirs, out = pts
    cdef cnp.uint8_t[:] okv = ok
    cdef Py_ssize_t i
    cdef double na, nb, dax, day, dbx, dby, cross, dx, dy, s
    for i in range(H):
        na = sqrt(ad[i, 0] * ad[i, 0] + ad[i, 1] * ad[i, 1])
        nb = sqrt(bd[i, 0] * bd[i, 0] + bd[i, 1] * bd[i, 1])
        if na <= _EPS_NORM or nb <= _EPS_NORM:
            continue
        dax = ad[i, 0] / na
        day = ad[i, 1] / na
        dbx = bd[i, 0] / nb
        dby = bd[i, 1] / nb
        cross = dax * dby - day * dbx
        if fabs(cross) < _EPS_PARALLEL:
            continue
        dx = bp[i, 0] - ap[i, 0]
        dy = bp[i, 1] - ap[i, 1]
        s = (dx * dby - dy * dbx) / cross
        out[i, 0] = ap[i, 0] + s * dax
        out[i, 1] = ap[i, 1] + s * day
        okv[i] = 1
    return pts, ok


def hypothesis_inlier_counts(cnp.ndarray[cnp.float64_t, ndim=2] pts,
                             cnp.ndarray[cnp.float64_t, ndim=2] dirs,
                             cnp.ndarray[cnp.float64_t, ndim=2] hyps,
                             double cos_min):
    cdef Py_ssize_t H = hyps.shape[0]
    cdef Py_ssize_t m = pts.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(H, dtype=np.int64)
    cdef double[:, :] p = pts, d = dirs, hy = hyps
    cdef cnp.int64_t[:] cv = counts
    cdef Py_ssize_t i, j
    cdef double vx, vy, vn, dot
    cdef cnp.int64_t c
    for i in range(H):
        c = 0
        for j in range(m):
            vx = hy[i, 0] - p[j, 0]
            vy = hy[i, 1] - p[j, 1]
            vn = sqrt(vx * vx + vy * vy)
            dot = vx * d[j, 0] + vy * d[j, 1]
            if vn <= _EPS_NORM or dot >= cos_min * vn:
                c += 1
        cv[i] = c
    return counts


def ray_inlier_mask(cnp.ndarray[cnp.float64_t, ndim=2] pts,
                    cnp.ndarray[cnp.float64_t, ndim=2] dirs,
                    cnp.ndarray[cnp.float64_t, ndim=1] point,
                    double cos_min):
    cdef Py_ssize_t m = pts.shape[0]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1, cast=True] mask = np.zeros(m, dtype=bool)
    cdef cnp.uint8_t[:] mv = mask
    cdef double[:, :] p = pts, d = dirs
    cdef double hx = point[0], hy = point[1]
    cdef Py_ssize_t j
    cdef double vx, vy, vn, dot
    for j in range(m):
        vx = hx - p[j, 0]
        vy = hy - p[j, 1]
        vn = sqrt(vx * vx + vy * vy)
        dot = vx * d[j, 0] + vy * d[j, 1]
        if vn <= _EPS_NORM or dot >= cos_min * vn:
            mv[j] = 1
    return mask


def triplet_terms(cnp.ndarray[cnp.float64_t, ndim=2] feats,
                  cnp.ndarray[cnp.int64_t, ndim=1] pos_idx,
                  cnp.ndarray[cnp.int64_t, ndim=1] neg_idx,
                  double alpha):
    cdef Py_ssize_t F = feats.shape[0]
    cdef Py_ssize_t D = feats.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] norms = np.empty(F, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] terms = np.empty(F, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s_pos = np.empty(F, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s_neg = np.empty(F, dtype=np.float64)
    cdef double[:, :] f = feats
    cdef double[:] nv = norms, tv = terms, spv = s_pos, snv = s_neg
    cdef cnp.int64_t[:] pi = pos_idx, ni = neg_idx
    cdef Py_ssize_t a, k
    cdef double acc, sp, sn, t
    for a in range(F):
        acc = 0.0
        for k in range(D):
            acc += f[a, k] * f[a, k]
        nv[a] = sqrt(acc)
    for a in range(F):
        sp = 0.0
        sn = 0.0
        for k in range(D):
            sp += f[a, k] * f[pi[a], k]
            sn += f[a, k] * f[ni[a], k]
        sp /= nv[a] * nv[pi[a]]
        sn /= nv[a] * nv[ni[a]]
        spv[a] = sp
        snv[a] = sn
        t = sn - sp + alpha
        tv[a] = t if t > 0.0 else 0.0
    return terms, s_pos, s_neg


def triplet_grad(cnp.ndarray[cnp.float64_t, ndim=2] feats,
                 cnp.ndarray[cnp.int64_t, ndim=1] pos_idx,
                 cnp.ndarray[cnp.int64_t, ndim=1] neg_idx,
                 double alpha, double weight):
    terms, s_pos, s_neg = triplet_terms(feats, pos_idx, neg_idx, alpha)
    cdef Py_ssize_t F = feats.shape[0]
    cdef Py_ssize_t D = feats.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad = np.zeros((F, D), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] norms = np.sqrt(
        np.einsum("ij,ij->i", feats, feats))
    cdef double[:, :] f = feats, g = grad
    cdef double[:] nv = norms, tv = terms, spv = s_pos, snv = s_neg
    cdef cnp.int64_t[:] pi = pos_idx, ni = neg_idx
    cdef Py_ssize_t a, k, p, n
    cdef double na, npos, nneg, sp, sn, can, cap, cna, cpa
    for a in range(F):
        if tv[a] <= 0.0:
            continue
        p = pi[a]
        n = ni[a]
        na = nv[a]
        npos = nv[p]
        nneg = nv[n]
        sp = spv[a]
        sn = snv[a]
        can = 1.0 / (na * nneg)
        cap = 1.0 / (na * npos)
        cna = 1.0 / (na * na)
        for k in range(D):
            g[a, k] += weight * ((f[n, k] * can - sn * f[a, k] * cna)
                                 - (f[p, k] * cap - sp * f[a, k] * cna))
            g[n, k] += weight * (f[a, k] * can - sn * f[n, k] / (nneg * nneg))
            g[p, k] -= weight * (f[a, k] * cap - sp * f[p, k] / (npos * npos))
    return grad
