"""Superpixel graphs and seed diffusion for unlabelled images.

Unlabelled images carry no annotations, so pixel targets for them are
synthesized geometrically: the image is partitioned into superpixels, the
superpixels whose average saliency beats the image mean in both coarse maps
become seeds, and seed confidence is diffused over a color-affinity graph by
a closed-form ranking solve.  Pixels of high-ranking superpixels become
positive targets; everything else is negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import linalg as sparse_linalg

DEFAULT_SEGMENTS = 200
DEFAULT_COMPACTNESS = 10.0
DEFAULT_SIGMA = 0.1
DEFAULT_MU = 0.01
SLIC_ITERATIONS = 10
# above this node count the ranking solve switches from direct to iterative
DIRECT_SOLVE_LIMIT = 1000
RESIDUAL_TOL = 1e-10

_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


def rgb_to_lab(image: np.ndarray) -> np.ndarray:
    """Convert an RGB image [3,H,W] with values in [0,1] to Lab [H,W,3].

    Standard sRGB linearization followed by the D65 XYZ transform; output is
    in the native Lab scale (L in [0,100], a/b roughly [-128,127]).
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"rgb_to_lab expects [3,H,W], got {img.shape}")
    rgb = np.clip(np.moveaxis(img, 0, -1), 0.0, 1.0)
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = (lin @ _RGB_TO_XYZ.T) / _D65_WHITE
    cut = (6.0 / 29.0) ** 3
    f = np.where(xyz > cut, np.cbrt(xyz), xyz / (3 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def normalize_lab(lab: np.ndarray) -> np.ndarray:
    """Affinely map Lab channels into [0,1] so color distances share one scale."""
    out = np.empty_like(lab)
    out[..., 0] = lab[..., 0] / 100.0
    out[..., 1] = (lab[..., 1] + 128.0) / 255.0
    out[..., 2] = (lab[..., 2] + 128.0) / 255.0
    return out


@dataclass
class SuperpixelLabels:
    """Dense partition of one image into 4-connected superpixels."""

    labels: np.ndarray        # [H,W] segment id per pixel, dense in [0,P)
    n_segments: int
    mean_lab: np.ndarray      # [P,3] mean segment color, Lab scaled to [0,1]
    pixels: list              # flat pixel-index array per segment


@dataclass
class AffinityGraph:
    """Color-affinity graph whose nodes are superpixels."""

    weights: sparse.csr_matrix    # [P,P] symmetric, zero diagonal
    degrees: np.ndarray           # row sums of `weights`
    boundary: np.ndarray          # ids of segments touching the image border

    @classmethod
    def from_weights(cls, weights, boundary=()) -> "AffinityGraph":
        w = sparse.csr_matrix(weights)
        degrees = np.asarray(w.sum(axis=1)).ravel()
        return cls(weights=w, degrees=degrees,
                   boundary=np.asarray(boundary, dtype=np.int64))


@dataclass
class RankingResult:
    """Seed vector, diffusion scores, and the pixel partition they induce."""

    z: np.ndarray          # [P] bool seed indicator
    scores: np.ndarray     # [P] ranking scores
    positive: np.ndarray   # [H,W] bool
    negative: np.ndarray   # [H,W] bool


def _enforce_connectivity(assign: np.ndarray, min_size: int) -> np.ndarray:
    """Split stray fragments off their k-means cluster and absorb any fragment
    smaller than `min_size` into the adjacent component sharing the longest
    border.  Returns a dense relabeling where every id is 4-connected."""
    h, w = assign.shape
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    comp = np.empty((h, w), dtype=np.int64)
    n_comp = 0
    for seg in np.unique(assign):
        mask = assign == seg
        lbl, k = ndimage.label(mask, structure=structure)
        comp[mask] = lbl[mask] + n_comp - 1
        n_comp += k

    sizes = np.bincount(comp.ravel(), minlength=n_comp)
    order = np.argsort(comp.ravel(), kind="stable")
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    pixel_sets = [order[bounds[c]:bounds[c + 1]] for c in range(n_comp)]
    parent = np.arange(n_comp)

    def find(c: int) -> int:
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return int(c)

    for c in np.argsort(sizes, kind="stable"):
        c = int(c)
        root = find(c)
        if root != c or sizes[root] >= min_size or n_comp == 1:
            continue
        py, px = np.unravel_index(pixel_sets[c], (h, w))
        neigh = []
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ny, nx = py + dy, px + dx
            ok = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
            neigh.append(comp[ny[ok], nx[ok]])
        uniq, counts = np.unique(np.concatenate(neigh), return_counts=True)
        tallies: dict = {}
        for u, cnt in zip(uniq, counts):
            r = find(int(u))
            if r != root:
                tallies[r] = tallies.get(r, 0) + int(cnt)
        if not tallies:
            continue
        best = max(sorted(tallies), key=lambda r: tallies[r])
        parent[root] = best
        sizes[best] += sizes[root]
        pixel_sets[best] = np.concatenate([pixel_sets[best], pixel_sets[root]])

    roots = np.array([find(c) for c in range(n_comp)])
    _, dense = np.unique(roots, return_inverse=True)
    return dense[comp]


def slic_segment(image: np.ndarray, n_segments: int = DEFAULT_SEGMENTS,
                 compactness: float = DEFAULT_COMPACTNESS) -> SuperpixelLabels:
    """Partition an RGB image [3,H,W] into roughly `n_segments` superpixels.

    Local k-means in joint (Lab, position) space: cluster centers start on a
    regular grid with spacing S = sqrt(H*W/n_segments), each pixel competes
    only among the centers of its own and the eight adjacent grid cells, and
    spatial distance is weighted by compactness/S.  A connectivity pass then
    absorbs stray fragments, so returned ids are dense and 4-connected.
    """
    if n_segments < 2:
        raise ValueError("n_segments must be at least 2")
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"slic_segment expects [3,H,W], got {img.shape}")
    h, w = img.shape[1], img.shape[2]
    if n_segments > h * w:
        raise ValueError("image has fewer pixels than requested segments")

    lab = rgb_to_lab(img)
    step = np.sqrt(h * w / n_segments)
    gh = max(1, int(round(h / step)))
    gw = max(1, int(round(w / step)))
    # rounding can collapse tiny images to a single cell; keep at least two
    if gh * gw < 2:
        if w >= h and w >= 2:
            gw = 2
        elif h >= 2:
            gh = 2
    k_total = gh * gw
    cell_h, cell_w = h / gh, w / gw

    center_y = np.repeat((np.arange(gh) + 0.5) * cell_h, gw)
    center_x = np.tile((np.arange(gw) + 0.5) * cell_w, gh)
    # nudge each center to the flattest pixel of its 3x3 neighborhood so no
    # cluster starts on an edge
    if h > 2 and w > 2:
        grad = np.full((h, w), np.inf)
        grad[1:-1, 1:-1] = (((lab[2:, 1:-1] - lab[:-2, 1:-1]) ** 2).sum(-1)
                            + ((lab[1:-1, 2:] - lab[1:-1, :-2]) ** 2).sum(-1))
        iy = np.clip(np.round(center_y).astype(int), 1, h - 2)
        ix = np.clip(np.round(center_x).astype(int), 1, w - 2)
        for k in range(k_total):
            window = grad[iy[k] - 1:iy[k] + 2, ix[k] - 1:ix[k] + 2]
            dy, dx = np.unravel_index(np.argmin(window), window.shape)
            center_y[k] = iy[k] - 1 + dy
            center_x[k] = ix[k] - 1 + dx
    center_lab = lab[np.clip(np.round(center_y).astype(int), 0, h - 1),
                     np.clip(np.round(center_x).astype(int), 0, w - 1)].copy()

    rows_cell = np.minimum((np.arange(h) / cell_h).astype(np.int64), gh - 1)
    cols_cell = np.minimum((np.arange(w) / cell_w).astype(np.int64), gw - 1)
    offsets = np.array([(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)])
    cand_i = rows_cell[:, None, None] + offsets[:, 0]        # [H,1,9]
    cand_j = cols_cell[None, :, None] + offsets[:, 1]        # [1,W,9]
    valid = ((cand_i >= 0) & (cand_i < gh)) & ((cand_j >= 0) & (cand_j < gw))
    cand = (np.clip(cand_i, 0, gh - 1) * gw
            + np.clip(cand_j, 0, gw - 1))                    # [H,W,9]

    py, px = np.indices((h, w), dtype=np.float64)
    spatial_weight = (compactness / step) ** 2
    assign = None
    for _ in range(SLIC_ITERATIONS):
        dc = ((lab[:, :, None, :] - center_lab[cand]) ** 2).sum(-1)
        ds = ((py[:, :, None] - center_y[cand]) ** 2
              + (px[:, :, None] - center_x[cand]) ** 2)
        dist = dc + spatial_weight * ds
        dist[~valid] = np.inf
        choice = np.argmin(dist, axis=2)
        assign = np.take_along_axis(cand, choice[..., None], axis=2)[..., 0]

        flat = assign.ravel()
        counts = np.bincount(flat, minlength=k_total).astype(np.float64)
        live = counts > 0
        for c in range(3):
            sums = np.bincount(flat, weights=lab[..., c].ravel(),
                               minlength=k_total)
            center_lab[live, c] = sums[live] / counts[live]
        ysum = np.bincount(flat, weights=py.ravel(), minlength=k_total)
        xsum = np.bincount(flat, weights=px.ravel(), minlength=k_total)
        center_y[live] = ysum[live] / counts[live]
        center_x[live] = xsum[live] / counts[live]

    min_size = max(1, (h * w // n_segments) // 4)
    labels = _enforce_connectivity(assign, min_size)
    p = int(labels.max()) + 1

    norm = normalize_lab(lab)
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=p).astype(np.float64)
    mean_lab = np.stack(
        [np.bincount(flat, weights=norm[..., c].ravel(), minlength=p)
         for c in range(3)], axis=1) / counts[:, None]
    order = np.argsort(flat, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(counts).astype(np.int64)])
    pixels = [order[bounds[i]:bounds[i + 1]] for i in range(p)]
    return SuperpixelLabels(labels=labels, n_segments=p,
                            mean_lab=mean_lab, pixels=pixels)


def salient_seeds(s_c: np.ndarray, s_p: np.ndarray,
                  labels: SuperpixelLabels) -> np.ndarray:
    """Mark superpixels whose mean saliency beats the image mean in BOTH maps.

    Both maps must already be at pixel resolution.  Returns a bool seed
    vector of length P; constant maps yield no seeds (strict inequality).
    """
    sc = np.asarray(s_c, dtype=np.float64)
    sp = np.asarray(s_p, dtype=np.float64)
    if sc.shape != labels.labels.shape or sp.shape != labels.labels.shape:
        raise ValueError("saliency maps must match the label grid shape")
    flat = labels.labels.ravel()
    counts = np.bincount(flat, minlength=labels.n_segments).astype(np.float64)
    mean_c = np.bincount(flat, weights=sc.ravel(),
                         minlength=labels.n_segments) / counts
    mean_p = np.bincount(flat, weights=sp.ravel(),
                         minlength=labels.n_segments) / counts
    return (mean_c > sc.mean()) & (mean_p > sp.mean())


def build_affinity_graph(labels: SuperpixelLabels,
                         sigma: float = DEFAULT_SIGMA) -> AffinityGraph:
    """Connect each superpixel to its two-ring neighborhood plus a clique over
    border segments, weighting edges by exp(-||c_m - c_n|| / sigma^2) on the
    [0,1]-scaled mean Lab colors.  Note the norm is not squared.
    """
    p = labels.n_segments
    if p < 2:
        raise ValueError("affinity graph requires at least two segments")
    grid = labels.labels
    adj = np.zeros((p, p), dtype=bool)
    adj[grid[:-1, :].ravel(), grid[1:, :].ravel()] = True
    adj[grid[:, :-1].ravel(), grid[:, 1:].ravel()] = True
    adj |= adj.T
    np.fill_diagonal(adj, False)

    reach = adj.astype(np.int64)
    two_ring = adj | ((reach @ reach) > 0)
    boundary = np.unique(np.concatenate(
        [grid[0], grid[-1], grid[:, 0], grid[:, -1]]))
    two_ring[np.ix_(boundary, boundary)] = True
    np.fill_diagonal(two_ring, False)

    dist = np.linalg.norm(
        labels.mean_lab[:, None, :] - labels.mean_lab[None, :, :], axis=2)
    weights = np.where(two_ring, np.exp(-dist / sigma ** 2), 0.0)
    return AffinityGraph.from_weights(weights, boundary)


def manifold_rank(graph: AffinityGraph, z: np.ndarray,
                  mu: float = DEFAULT_MU) -> np.ndarray:
    """Diffuse seed scores over the graph.

    Solves (I - gamma*L) h = z with L = D^{-1/2} W D^{-1/2} and
    gamma = 1/(1+mu); direct sparse factorization up to
    DIRECT_SOLVE_LIMIT nodes, conjugate gradients beyond.
    """
    z_vec = np.asarray(z, dtype=np.float64).ravel()
    p = graph.weights.shape[0]
    if z_vec.shape[0] != p:
        raise ValueError(f"seed vector length {z_vec.shape[0]} != node count {p}")
    if np.any(graph.degrees <= 0):
        raise ValueError("graph has an isolated node; ranking undefined")

    gamma = 1.0 / (1.0 + mu)
    inv_sqrt = 1.0 / np.sqrt(graph.degrees)
    lap = graph.weights.multiply(inv_sqrt[:, None]).multiply(inv_sqrt[None, :])
    system = (sparse.identity(p, format="csr") - gamma * lap.tocsr())
    if p <= DIRECT_SOLVE_LIMIT:
        scores = sparse_linalg.spsolve(system.tocsc(), z_vec)
    else:
        scores, info = sparse_linalg.cg(system, z_vec, rtol=1e-12, atol=0.0,
                                        maxiter=20 * p)
        if info != 0:
            raise RuntimeError(f"iterative ranking solve failed (info={info})")
    scores = np.atleast_1d(np.asarray(scores, dtype=np.float64))
    residual = float(np.abs(system @ scores - z_vec).max()) if p else 0.0
    if not np.all(np.isfinite(scores)) or residual > RESIDUAL_TOL:
        raise RuntimeError(
            f"ranking solve numerically singular: residual {residual:.3e}")
    return scores


def coherence_targets(scores: np.ndarray,
                      labels: SuperpixelLabels) -> tuple:
    """Pixels of superpixels ranked strictly above the mean score become the
    positive set; all remaining pixels the negative set.  With all scores
    equal the positive set is empty."""
    h = np.asarray(scores, dtype=np.float64).ravel()
    if h.shape[0] != labels.n_segments:
        raise ValueError("score vector length != segment count")
    if not np.all(np.isfinite(h)):
        raise ValueError("ranking scores must be finite")
    positive = (h > h.mean())[labels.labels]
    return positive, ~positive


def rank_image(image: np.ndarray, s_c: np.ndarray, s_p: np.ndarray,
               n_segments: int = DEFAULT_SEGMENTS,
               compactness: float = DEFAULT_COMPACTNESS,
               sigma: float = DEFAULT_SIGMA,
               mu: float = DEFAULT_MU) -> RankingResult:
    """Full per-image pipeline from two coarse saliency maps to pixel targets."""
    labels = slic_segment(image, n_segments=n_segments, compactness=compactness)
    z = salient_seeds(s_c, s_p, labels)
    graph = build_affinity_graph(labels, sigma=sigma)
    scores = manifold_rank(graph, z.astype(np.float64), mu=mu)
    positive, negative = coherence_targets(scores, labels)
    return RankingResult(z=z, scores=scores, positive=positive, negative=negative)


def save_ranking_debug(labels: SuperpixelLabels, scores: np.ndarray,
                       path_prefix: str) -> None:
    """Dump the segment grid as 16-bit grayscale PNG and scores as CSV."""
    from PIL import Image

    if labels.n_segments > np.iinfo(np.uint16).max:
        raise ValueError("too many segments for a 16-bit label image")
    Image.fromarray(labels.labels.astype(np.uint16)).save(
        f"{path_prefix}_segments.png")
    np.savetxt(f"{path_prefix}_scores.csv", np.asarray(scores), delimiter=",")
