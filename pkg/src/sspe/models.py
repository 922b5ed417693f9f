"""Object models: XYZ point-cloud loading, farthest point sampling, diameter.

Model file format (UTF-8 text, ``#`` starts a comment):

    name <id>
    symmetric <0|1>
    x y z        # one point per line, meters
    ...
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientGeometryError, ModelParseError

START_RULES = ("farthest-from-centroid", "first-index")


@dataclass(frozen=True)
class ObjectModel:
    """3D point-cloud model with a symmetry flag.

    Loader-validated models have >= 4 non-coplanar points; directly
    constructed instances (e.g. planar plates for symmetric-metric tests)
    only need >= 1 point.
    """

    name: str
    points: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise InsufficientGeometryError(f"model needs an (N>=1, 3) point array, got {pts.shape}")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class Keypoints3D:
    """Selected 3D keypoints; every point is a member of the source model cloud."""

    points: np.ndarray
    model_name: str
    indices: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise InsufficientGeometryError(f"keypoints need an (n>=1, 3) array, got {pts.shape}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.points.shape[0]


def load_point_cloud(path) -> ObjectModel:
    """Parse an XYZ model file; rejects malformed lines and degenerate geometry."""
    name = None
    symmetric = None
    pts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if name is None:
                if tokens[0] != "name" or len(tokens) != 2:
                    raise ModelParseError(f"{path}:{lineno}: expected 'name <id>', got {line!r}")
                name = tokens[1]
                continue
            if symmetric is None:
                if tokens[0] != "symmetric" or len(tokens) != 2 or tokens[1] not in ("0", "1"):
                    raise ModelParseError(
                        f"{path}:{lineno}: expected 'symmetric <0|1>', got {line!r}"
                    )
                symmetric = tokens[1] == "1"
                continue
            if len(tokens) != 3:
                raise ModelParseError(f"{path}:{lineno}: expected 'x y z', got {line!r}")
            try:
                pts.append([float(t) for t in tokens])
            except ValueError:
                raise ModelParseError(f"{path}:{lineno}: non-numeric coordinate in {line!r}") from None
    if name is None or symmetric is None:
        raise InsufficientGeometryError(f"{path}: missing header or points")
    if len(pts) < 4:
        raise InsufficientGeometryError(f"{path}: need >= 4 points, got {len(pts)}")
    points = np.array(pts, dtype=np.float64)
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[2] <= 1e-9 * max(sv[0], 1e-300):
        raise InsufficientGeometryError(f"{path}: points are coplanar (sv={sv[2]:.3e})")
    return ObjectModel(name=name, points=points, symmetric=symmetric)


def save_point_cloud(model: ObjectModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"name {model.name}\n")
        fh.write(f"symmetric {1 if model.symmetric else 0}\n")
        for p in model.points:
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")


def model_diameter(model: ObjectModel) -> float:
    """Maximum pairwise Euclidean distance over the model points."""
    pts = model.points
    if pts.shape[0] < 2:
        raise InsufficientGeometryError("diameter needs >= 2 points")
    # desk-scale clouds: the O(N^2) scan is cheap and exact
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff * diff).sum(axis=2)).max())


def _sq_dists(pts: np.ndarray, q: np.ndarray) -> np.ndarray:
    # fixed component order (dx*dx + dy*dy) + dz*dz so exact float ties, and
    # therefore the lowest-index tie-break, are reproducible by a scalar oracle
    d = pts - q
    return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]


def farthest_point_sampling(
    model: ObjectModel, n: int, start_rule: str = "farthest-from-centroid"
) -> Keypoints3D:
    """Greedy max-min selection of ``n`` well-spread model points.

    The first point follows ``start_rule``; every next point maximizes its
    minimum distance to the already-selected set (compared as squared
    distances). Ties break to the lowest point index, so the output is
    deterministic.
    """
    pts = model.points
    N = pts.shape[0]
    if n < 1:
        raise InsufficientGeometryError(f"need n >= 1 keypoints, got {n}")
    if n > N:
        raise InsufficientGeometryError(f"requested {n} keypoints from a {N}-point model")
    if start_rule not in START_RULES:
        raise ValueError(f"unknown start_rule {start_rule!r}, expected one of {START_RULES}")

    if start_rule == "farthest-from-centroid":
        first = int(np.argmax(_sq_dists(pts, pts.mean(axis=0))))  # first max = lowest index
    else:
        first = 0

    selected = [first]
    min_dist = _sq_dists(pts, pts[first])
    for _ in range(1, n):
        nxt = int(np.argmax(min_dist))
        selected.append(nxt)
        min_dist = np.minimum(min_dist, _sq_dists(pts, pts[nxt]))
    idx = np.array(selected, dtype=np.int64)
    return Keypoints3D(points=pts[idx].copy(), model_name=model.name, indices=idx)
