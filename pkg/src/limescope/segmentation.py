"""Superpixel segmentation: a deterministic grid tiler and a SLIC variant.

Both segmenters produce a SegmentMap whose labels are contiguous from 0,
cover every pixel, and are each a single 4-connected component. SLIC
clusters in (L, a, b, x, y) space with the usual window-restricted
assignment; the color conversion constants are written out below so label
goldens stay stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator

from .errors import ContractError
from .fileio import atomic_write_bytes, read_json, write_json
from .image import RasterImage

# sRGB -> XYZ (D65 white point); rows are X, Y, Z.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])
_LAB_DELTA = 6.0 / 29.0


@dataclass(frozen=True, eq=False)
class SegmentMap:
    """Per-pixel segment labels 0..n_segments-1 over an image grid."""

    labels: np.ndarray
    n_segments: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.size == 0:
            raise ContractError(f"labels must be a non-empty (H, W) array, got shape {labels.shape}")
        labels = labels.astype(np.int32, copy=True)
        if self.n_segments < 1:
            raise ContractError(f"n_segments must be >= 1, got {self.n_segments}")
        if labels.min() < 0 or labels.max() >= self.n_segments:
            raise ContractError("labels must lie in [0, n_segments)")
        counts = np.bincount(labels.ravel(), minlength=self.n_segments)
        if (counts == 0).any():
            empty = np.nonzero(counts == 0)[0]
            raise ContractError(f"every label must own >= 1 pixel; empty: {empty.tolist()}")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def pixels_of(self, segment: int) -> np.ndarray:
        """Boolean (H, W) membership mask for one segment."""
        if not 0 <= segment < self.n_segments:
            raise ContractError(f"segment id {segment} out of range [0, {self.n_segments})")
        return self.labels == segment

    def to_json_dict(self) -> dict:
        flat = self.labels.ravel()
        boundaries = np.nonzero(np.diff(flat))[0] + 1
        starts = np.concatenate(([0], boundaries))
        ends = np.concatenate((boundaries, [flat.size]))
        rle = [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]
        return {"width": self.width, "height": self.height, "n_segments": self.n_segments, "rle": rle}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SegmentMap":
        width, height = int(obj["width"]), int(obj["height"])
        runs = obj["rle"]
        total = sum(int(run) for _, run in runs)
        if total != width * height:
            raise ContractError(f"RLE covers {total} pixels, expected {width * height}")
        flat = np.empty(total, dtype=np.int32)
        pos = 0
        for label, run in runs:
            flat[pos : pos + int(run)] = int(label)
            pos += int(run)
        return cls(labels=flat.reshape(height, width), n_segments=int(obj["n_segments"]))

    def save(self, path) -> None:
        write_json(path, self.to_json_dict())

    @classmethod
    def load(cls, path) -> "SegmentMap":
        return cls.from_json_dict(read_json(path))

    def save_label_png(self, path) -> None:
        """Write an 8-bit grayscale visualization (label id scaled to 0..255)."""
        from PIL import Image as PILImage
        from io import BytesIO

        span = max(self.n_segments - 1, 1)
        gray = np.rint(self.labels.astype(np.float64) * 255.0 / span).astype(np.uint8)
        buffer = BytesIO()
        PILImage.fromarray(gray, mode="L").save(buffer, format="PNG")
        atomic_write_bytes(path, buffer.getvalue())


@dataclass(frozen=True)
class SegmentationParams:
    """Knobs for the SLIC segmenter.

    The defaults (50 segments, compactness 10, 10 iterations) suit fundus
    images around 500 px. The algorithm itself is deterministic; `seed` is
    recorded for provenance and reserved for seeded variants.
    """

    target_segments: int = 50
    compactness: float = 10.0
    max_iterations: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.target_segments < 1:
            raise ContractError(f"target_segments must be >= 1, got {self.target_segments}")
        if self.compactness < 0:
            raise ContractError(f"compactness must be >= 0, got {self.compactness}")
        if self.max_iterations < 1:
            raise ContractError(f"max_iterations must be >= 1, got {self.max_iterations}")

    def validate_for(self, image: RasterImage) -> None:
        if self.target_segments > image.width * image.height:
            raise ContractError(
                f"target_segments {self.target_segments} exceeds pixel count {image.width * image.height}"
            )


@dataclass(frozen=True)
class SegmentStats:
    """Pixel count, centroid and inclusive bounding box of one segment."""

    segment: int
    pixel_count: int
    centroid: tuple[float, float]  # (x, y)
    bbox: tuple[int, int, int, int]  # (x0, y0, x1, y1) inclusive


def segment_grid(image: RasterImage, rows: int, cols: int) -> SegmentMap:
    """Tile the image into a rows x cols rectangular segmentation.

    Tile (r, c) gets label r * cols + c; remainder pixels join the last row
    or column of tiles.
    """
    if rows < 1 or cols < 1:
        raise ContractError(f"rows and cols must be >= 1, got rows={rows} cols={cols}")
    if rows > image.height or cols > image.width:
        raise ContractError(
            f"grid {rows}x{cols} exceeds image dimensions {image.height}x{image.width}"
        )
    tile_h = image.height // rows
    tile_w = image.width // cols
    row_idx = np.minimum(np.arange(image.height) // tile_h, rows - 1)
    col_idx = np.minimum(np.arange(image.width) // tile_w, cols - 1)
    labels = row_idx[:, None] * cols + col_idx[None, :]
    return SegmentMap(labels=labels.astype(np.int32), n_segments=rows * cols)


def rgb_to_lab(pixels: np.ndarray) -> np.ndarray:
    """Convert (H, W, 3) sRGB in [0, 1] to CIE L*a*b* (D65)."""
    srgb = np.asarray(pixels, dtype=np.float64)
    linear = np.where(srgb <= 0.04045, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _RGB_TO_XYZ.T
    scaled = xyz / _D65_WHITE
    cube = _LAB_DELTA**3
    f = np.where(scaled > cube, np.cbrt(scaled), scaled / (3 * _LAB_DELTA**2) + 4.0 / 29.0)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * fy - 16.0
    lab[..., 1] = 500.0 * (fx - fy)
    lab[..., 2] = 200.0 * (fy - fz)
    return lab


def _initial_centers(height: int, width: int, k: int) -> np.ndarray:
    """First k cells, row-major, of the smallest near-square grid covering k."""
    spacing = np.sqrt(height * width / k)
    ny = max(1, int(round(height / spacing)))
    nx = max(1, int(round(width / spacing)))
    while ny * nx < k:
        if nx <= ny:
            nx += 1
        else:
            ny += 1
    ys = (np.arange(ny) + 0.5) * height / ny
    xs = (np.arange(nx) + 0.5) * width / nx
    grid = np.stack(np.meshgrid(ys, xs, indexing="ij"), axis=-1).reshape(-1, 2)
    return grid[:k]


def _merge_orphans(assign: np.ndarray, n_clusters: int) -> np.ndarray:
    """Enforce 4-connectivity: keep each cluster's main component, merge the rest.

    The main component of a cluster is its largest one (ties: first pixel in
    row-major order). Every other component merges into the adjacent segment
    with the largest current pixel count; ties prefer the smaller cluster id,
    then the earlier row-major first pixel. Returns contiguous labels ordered
    by first row-major appearance.
    """
    height, width = assign.shape
    comp = np.full((height, width), -1, dtype=np.int64)
    comp_cluster: list[int] = []
    next_comp = 0
    for cluster in range(n_clusters):
        mask = assign == cluster
        if not mask.any():
            continue
        labeled, n_found = ndimage.label(mask)
        comp[mask] = labeled[mask] + next_comp - 1
        comp_cluster.extend([cluster] * n_found)
        next_comp += n_found
    n_comp = next_comp
    cluster_of = np.asarray(comp_cluster, dtype=np.int64)

    flat = comp.ravel()
    sizes = np.bincount(flat, minlength=n_comp).astype(np.int64)
    uniq, first_idx = np.unique(flat, return_index=True)
    first_of = np.empty(n_comp, dtype=np.int64)
    first_of[uniq] = first_idx

    primary = np.zeros(n_comp, dtype=bool)
    for cluster in np.unique(cluster_of):
        members = np.nonzero(cluster_of == cluster)[0]
        order = sorted(members, key=lambda c: (-sizes[c], first_of[c]))
        primary[order[0]] = True

    # undirected adjacency between distinct components (4-neighborhood)
    pairs = []
    if width > 1:
        left, right = comp[:, :-1].ravel(), comp[:, 1:].ravel()
        keep = left != right
        pairs.append(np.stack([left[keep], right[keep]], axis=1))
    if height > 1:
        up, down = comp[:-1, :].ravel(), comp[1:, :].ravel()
        keep = up != down
        pairs.append(np.stack([up[keep], down[keep]], axis=1))
    neighbors: list[set[int]] = [set() for _ in range(n_comp)]
    if pairs:
        edges = np.unique(np.sort(np.concatenate(pairs), axis=1), axis=0)
        for a, b in edges:
            neighbors[a].add(int(b))
            neighbors[b].add(int(a))

    # orphans funnel into primary-rooted regions; counts update as merges land
    root = np.arange(n_comp, dtype=np.int64)
    pending = sorted((c for c in range(n_comp) if not primary[c]), key=lambda c: first_of[c])
    while pending:
        deferred = []
        merged_any = False
        for orphan in pending:
            targets = {int(root[nb]) for nb in neighbors[orphan] if primary[root[nb]]}
            if not targets:
                deferred.append(orphan)
                continue
            best = min(targets, key=lambda t: (-sizes[t], cluster_of[t], first_of[t]))
            root[orphan] = best
            sizes[best] += sizes[orphan]
            merged_any = True
        if not merged_any and deferred:
            raise AssertionError("orphan components with no reachable primary segment")
        pending = deferred

    final_comp = root[flat]
    order = np.unique(final_comp)  # keep deterministic relabel by first appearance
    _, first_seen = np.unique(final_comp, return_index=True)
    order = order[np.argsort(first_seen, kind="stable")]
    relabel = np.empty(n_comp, dtype=np.int32)
    relabel[order] = np.arange(order.size, dtype=np.int32)
    return relabel[final_comp].reshape(height, width)


def segment_slic(image: RasterImage, params: SegmentationParams) -> SegmentMap:
    """SLIC-style superpixels over (L, a, b, x, y).

    Centers start on a regular grid; each iteration assigns pixels within a
    2S x 2S window of every center (S = sqrt(pixels / target)) using the
    squared distance d_lab^2 + (compactness / S)^2 * d_xy^2, then recomputes
    centers. Pixels outside every window fall back to the spatially nearest
    center. A connectivity pass merges stray components, so the returned
    segment count can differ from the target. Fully deterministic.
    """
    params.validate_for(image)
    height, width = image.height, image.width
    n_pixels = height * width
    k = params.target_segments

    lab = rgb_to_lab(image.pixels)
    spacing = np.sqrt(n_pixels / k)
    centers_yx = _initial_centers(height, width, k)
    center_rows = np.clip(np.rint(centers_yx[:, 0] - 0.5).astype(int), 0, height - 1)
    center_cols = np.clip(np.rint(centers_yx[:, 1] - 0.5).astype(int), 0, width - 1)
    centers_lab = lab[center_rows, center_cols]
    centers = np.concatenate([centers_lab, centers_yx], axis=1)  # (k, 5): L,a,b,y,x

    ys = np.arange(height, dtype=np.float64)
    xs = np.arange(width, dtype=np.float64)
    spatial_scale = (params.compactness / spacing) ** 2

    assign = np.zeros((height, width), dtype=np.int64)
    for _ in range(params.max_iterations):
        best = np.full((height, width), np.inf)
        assign = np.full((height, width), -1, dtype=np.int64)
        for idx in range(k):
            cl, ca, cb, cy, cx = centers[idx]
            y0 = max(0, int(np.floor(cy - spacing)))
            y1 = min(height, int(np.ceil(cy + spacing)) + 1)
            x0 = max(0, int(np.floor(cx - spacing)))
            x1 = min(width, int(np.ceil(cx + spacing)) + 1)
            if y0 >= y1 or x0 >= x1:
                continue
            window = lab[y0:y1, x0:x1]
            d_lab = ((window - centers[idx, :3]) ** 2).sum(axis=2)
            dy = ys[y0:y1, None] - cy
            dx = xs[None, x0:x1] - cx
            dist = d_lab + spatial_scale * (dy * dy + dx * dx)
            patch_best = best[y0:y1, x0:x1]
            better = dist < patch_best
            patch_best[better] = dist[better]
            assign[y0:y1, x0:x1][better] = idx

        unassigned = assign < 0
        if unassigned.any():
            uy, ux = np.nonzero(unassigned)
            d2 = (uy[:, None] - centers[:, 3]) ** 2 + (ux[:, None] - centers[:, 4]) ** 2
            assign[uy, ux] = np.argmin(d2, axis=1)

        flat = assign.ravel()
        counts = np.bincount(flat, minlength=k).astype(np.float64)
        occupied = counts > 0
        sums = np.zeros((k, 5))
        for f in range(3):
            sums[:, f] = np.bincount(flat, weights=lab[..., f].ravel(), minlength=k)
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        sums[:, 3] = np.bincount(flat, weights=yy.ravel(), minlength=k)
        sums[:, 4] = np.bincount(flat, weights=xx.ravel(), minlength=k)
        centers[occupied] = sums[occupied] / counts[occupied, None]

    labels = _merge_orphans(assign, k)
    return SegmentMap(labels=labels, n_segments=int(labels.max()) + 1)


def segment_stats(segment_map: SegmentMap) -> list[SegmentStats]:
    """Pixel count, centroid and bounding box per segment; counts sum to H*W."""
    labels = segment_map.labels
    d = segment_map.n_segments
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=d)
    yy, xx = np.meshgrid(np.arange(labels.shape[0]), np.arange(labels.shape[1]), indexing="ij")
    sum_y = np.bincount(flat, weights=yy.ravel().astype(np.float64), minlength=d)
    sum_x = np.bincount(flat, weights=xx.ravel().astype(np.float64), minlength=d)
    boxes = ndimage.find_objects(labels + 1)
    stats = []
    for seg in range(d):
        sl = boxes[seg]
        stats.append(
            SegmentStats(
                segment=seg,
                pixel_count=int(counts[seg]),
                centroid=(float(sum_x[seg] / counts[seg]), float(sum_y[seg] / counts[seg])),
                bbox=(sl[1].start, sl[0].start, sl[1].stop - 1, sl[0].stop - 1),
            )
        )
    return stats


class GridSegmenter(BaseEstimator):
    """Stateless transformer wrapping segment_grid."""

    def __init__(self, rows: int = 1, cols: int = 1):
        self.rows = rows
        self.cols = cols

    def fit(self, X=None, y=None):
        return self

    def transform(self, X: RasterImage) -> SegmentMap:
        return segment_grid(X, self.rows, self.cols)

    def fit_transform(self, X: RasterImage, y=None) -> SegmentMap:
        return self.fit(X, y).transform(X)


class SlicSegmenter(BaseEstimator):
    """Stateless transformer wrapping segment_slic."""

    def __init__(self, n_segments: int = 50, compactness: float = 10.0, max_iterations: int = 10, seed: int = 0):
        self.n_segments = n_segments
        self.compactness = compactness
        self.max_iterations = max_iterations
        self.seed = seed

    def _params(self) -> SegmentationParams:
        return SegmentationParams(
            target_segments=self.n_segments,
            compactness=self.compactness,
            max_iterations=self.max_iterations,
            seed=self.seed,
        )

    def fit(self, X=None, y=None):
        return self

    def transform(self, X: RasterImage) -> SegmentMap:
        return segment_slic(X, self._params())

    def fit_transform(self, X: RasterImage, y=None) -> SegmentMap:
        return self.fit(X, y).transform(X)
