"""Numpy reference implementations of the hot kernels.

The compiled backend in ``_native.pyx`` mirrors these signatures exactly.
Elementwise kernels (mask, intersections, inlier counting) match the native
results bit-for-bit; the triplet kernels involve reductions whose summation
order differs, so cross-backend agreement there is to ~1e-13 relative.
"""

import numpy as np

HULL_EPS = 1e-9
_EPS_NORM = 1e-12
_EPS_PARALLEL = 1e-9


def hull_lattice_mask(hull: np.ndarray, x0: int, y0: int, width: int, height: int) -> np.ndarray:
    """Boolean (height, width) mask of lattice points inside a CCW convex polygon.

    Entry ``[r, c]`` covers the pixel at ``(x0 + c, y0 + r)``; boundary points
    count as inside (cross product >= -HULL_EPS for every edge).
    """
    xs = x0 + np.arange(width, dtype=np.float64)[None, :]
    ys = y0 + np.arange(height, dtype=np.float64)[:, None]
    mask = np.ones((height, width), dtype=bool)
    k = hull.shape[0]
    for i in range(k):
        ax, ay = hull[i]
        bx, by = hull[(i + 1) % k]
        ex, ey = bx - ax, by - ay
        cross = ex * (ys - ay) - ey * (xs - ax)
        mask &= cross >= -HULL_EPS
    return mask


def batch_line_intersections(
    a_pts: np.ndarray, a_dirs: np.ndarray, b_pts: np.ndarray, b_dirs: np.ndarray
) -> tuple:
    """Pairwise ray intersections for H ray pairs.

    Returns ``(points (H, 2), ok (H,))``; ``ok`` is False where directions are
    degenerate or parallel (the corresponding point row is zero).
    """
    H = a_pts.shape[0]
    pts = np.zeros((H, 2), dtype=np.float64)
    # plain sqrt(x*x + y*y), not hypot: must match the compiled kernel bitwise
    na = np.sqrt(a_dirs[:, 0] ** 2 + a_dirs[:, 1] ** 2)
    nb = np.sqrt(b_dirs[:, 0] ** 2 + b_dirs[:, 1] ** 2)
    ok = (na > _EPS_NORM) & (nb > _EPS_NORM)
    safe_na = np.where(ok, na, 1.0)
    safe_nb = np.where(ok, nb, 1.0)
    da = a_dirs / safe_na[:, None]
    db = b_dirs / safe_nb[:, None]
    cross = da[:, 0] * db[:, 1] - da[:, 1] * db[:, 0]
    ok &= np.abs(cross) >= _EPS_PARALLEL
    diff = b_pts - a_pts
    s = np.where(ok, (diff[:, 0] * db[:, 1] - diff[:, 1] * db[:, 0]) / np.where(ok, cross, 1.0), 0.0)
    pts = np.where(ok[:, None], a_pts + s[:, None] * da, 0.0)
    return pts, ok


def hypothesis_inlier_counts(
    pts: np.ndarray, dirs: np.ndarray, hyps: np.ndarray, cos_min: float
) -> np.ndarray:
    """Inlier count per hypothesis point.

    A sample (pixel ``p``, unit direction ``d``) is an inlier of hypothesis
    ``h`` when the cosine between ``d`` and ``h - p`` is >= ``cos_min``; a
    sample sitting exactly on ``h`` always counts.
    """
    vx = hyps[:, None, 0] - pts[None, :, 0]
    vy = hyps[:, None, 1] - pts[None, :, 1]
    vn = np.sqrt(vx * vx + vy * vy)
    at_point = vn <= _EPS_NORM
    dots = vx * dirs[None, :, 0] + vy * dirs[None, :, 1]
    inlier = at_point | (dots >= cos_min * vn)
    return inlier.sum(axis=1).astype(np.int64)


def ray_inlier_mask(pts: np.ndarray, dirs: np.ndarray, point: np.ndarray, cos_min: float) -> np.ndarray:
    """Boolean inlier mask of the samples for one hypothesis point."""
    vx = point[0] - pts[:, 0]
    vy = point[1] - pts[:, 1]
    vn = np.sqrt(vx * vx + vy * vy)
    dots = vx * dirs[:, 0] + vy * dirs[:, 1]
    return (vn <= _EPS_NORM) | (dots >= cos_min * vn)


def triplet_terms(
    feats: np.ndarray, pos_idx: np.ndarray, neg_idx: np.ndarray, alpha: float
) -> tuple:
    """Hinge terms max(S_neg - S_pos + alpha, 0) for every anchor row.

    Returns ``(terms, s_pos, s_neg)``, each shape (F,). Caller guarantees all
    feature norms exceed the degeneracy threshold.
    """
    norms = np.sqrt(np.einsum("ij,ij->i", feats, feats))
    fp = feats[pos_idx]
    fn = feats[neg_idx]
    s_pos = np.einsum("ij,ij->i", feats, fp) / (norms * norms[pos_idx])
    s_neg = np.einsum("ij,ij->i", feats, fn) / (norms * norms[neg_idx])
    terms = np.maximum(s_neg - s_pos + alpha, 0.0)
    return terms, s_pos, s_neg


def triplet_grad(
    feats: np.ndarray, pos_idx: np.ndarray, neg_idx: np.ndarray, alpha: float, weight: float
) -> np.ndarray:
    """Gradient of ``weight * sum(hinge terms)`` w.r.t. the feature rows.

    The hinge subgradient at exactly zero margin is zero (inactive branch).
    """
    terms, s_pos, s_neg = triplet_terms(feats, pos_idx, neg_idx, alpha)
    active = terms > 0.0
    grad = np.zeros_like(feats)
    if not np.any(active):
        return grad
    a = np.nonzero(active)[0]
    p = pos_idx[a]
    nn = neg_idx[a]
    norms = np.sqrt(np.einsum("ij,ij->i", feats, feats))
    fa, fp, fn = feats[a], feats[p], feats[nn]
    na, npos, nneg = norms[a], norms[p], norms[nn]
    sp = s_pos[a][:, None]
    sn = s_neg[a][:, None]
    # dS(a,b)/da = b/(|a||b|) - S * a/|a|^2
    d_sneg_da = fn / (na * nneg)[:, None] - sn * fa / (na * na)[:, None]
    d_spos_da = fp / (na * npos)[:, None] - sp * fa / (na * na)[:, None]
    d_sneg_dn = fa / (na * nneg)[:, None] - sn * fn / (nneg * nneg)[:, None]
    d_spos_dp = fa / (na * npos)[:, None] - sp * fp / (npos * npos)[:, None]
    np.add.at(grad, a, weight * (d_sneg_da - d_spos_da))
    np.add.at(grad, nn, weight * d_sneg_dn)
    np.add.at(grad, p, -weight * d_spos_dp)
    return grad
