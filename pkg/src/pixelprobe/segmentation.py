"""Foreground/background masks: a from-scratch GrabCut plus external mask ingestion.

GrabCut here is the hard-segmentation core: per-region color GMMs supply the
data term, an 8-connected contrast term supplies the smoothness weights, and
an exact min-cut solves each round.  Border matting is deliberately absent;
the attacks need a hard partition.

The trimap uses three labels: definite background, unknown, definite
foreground.  Pinned (definite) pixels never flip.  Trimap PNGs encode the
labels as exactly 0 / 128 / 255; mask PNGs are single-channel with value
>= 128 meaning foreground.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage
from scipy.linalg import solve_triangular

from .core import ContractViolationError, validate_image, validate_mask

TRIMAP_BG = 0
TRIMAP_UNKNOWN = 1
TRIMAP_FG = 2

_TRIMAP_PNG = {0: TRIMAP_BG, 128: TRIMAP_UNKNOWN, 255: TRIMAP_FG}

_FLOW_EPS = 1e-12


@dataclass
class GrabcutParams:
    components: int = 5  # GMM components per region
    gamma: float = 50.0  # smoothness weight
    iterations: int = 5
    epsilon: float = 1e-3  # covariance diagonal regularization
    kmeans_iters: int = 10

    def __post_init__(self):
        if self.components < 1 or self.iterations < 1 or self.gamma < 0:
            raise ContractViolationError("need components >= 1, iterations >= 1, gamma >= 0")


@dataclass
class ColorMixture:
    means: np.ndarray  # (k, 3)
    covs: np.ndarray  # (k, 3, 3), min eigenvalue >= epsilon
    weights: np.ndarray  # (k,), sums to 1


@dataclass
class GmmModel:
    foreground: ColorMixture
    background: ColorMixture


@dataclass
class GrabcutResult:
    mask: np.ndarray  # (H, W) bool, True = foreground
    energy_history: list[float] = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False
    warning: str | None = None


def validate_trimap(trimap) -> np.ndarray:
    arr = np.asarray(trimap)
    if arr.ndim != 2:
        raise ContractViolationError(f"trimap must be 2-D, got shape {arr.shape}")
    if not np.isin(arr, (TRIMAP_BG, TRIMAP_UNKNOWN, TRIMAP_FG)).all():
        raise ContractViolationError("trimap values must be in {0, 1, 2}")
    if not (arr == TRIMAP_UNKNOWN).any():
        raise ContractViolationError("trimap has no unknown pixels; nothing to segment")
    return arr.astype(np.int64)


def trimap_from_rectangle(shape, rect) -> np.ndarray:
    """Rectangle interaction: (x0, y0, x1, y1) interior is unknown, outside is background.

    The rectangle is half-open: x0 <= x < x1, y0 <= y < y1.
    """
    height, width = shape
    x0, y0, x1, y1 = rect
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise ContractViolationError(f"rectangle {rect} does not fit inside {width}x{height}")
    trimap = np.full((height, width), TRIMAP_BG, dtype=np.int64)
    trimap[y0:y1, x0:x1] = TRIMAP_UNKNOWN
    if not (trimap == TRIMAP_BG).any():
        raise ContractViolationError("rectangle covers the whole image; no background remains")
    return trimap


# ---------------------------------------------------------------------------
# GMM data term


def _kmeans_labels(pixels, k, iters):
    """Deterministic k-means: centers seeded at luminance quantiles, Lloyd updates."""
    n = pixels.shape[0]
    order = np.argsort(pixels.sum(axis=1), kind="stable")
    seed_pos = ((2 * np.arange(k) + 1) * n) // (2 * k)
    centers = pixels[order[seed_pos]].astype(np.float64)
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d2 = ((pixels[:, None, :] - centers[None]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        for j in range(k):
            chosen = labels == j
            if chosen.any():
                centers[j] = pixels[chosen].mean(axis=0)
            else:
                # reseed an empty cluster at the worst-fit pixel
                worst = int(np.argmax(d2[np.arange(n), labels]))
                centers[j] = pixels[worst]
                labels[worst] = j
    return labels


def _fit_mixture(pixels, k, epsilon, previous: ColorMixture | None, kmeans_iters) -> ColorMixture:
    pixels = np.asarray(pixels, dtype=np.float64)
    k = min(k, pixels.shape[0])
    if previous is not None:
        labels = np.argmin(_component_costs(previous, pixels), axis=1)
    else:
        labels = _kmeans_labels(pixels, k, kmeans_iters)
    means, covs, counts = [], [], []
    for j in np.unique(labels):
        members = pixels[labels == j]
        means.append(members.mean(axis=0))
        diff = members - means[-1]
        covs.append(diff.T @ diff / members.shape[0] + epsilon * np.eye(3))
        counts.append(members.shape[0])
    counts = np.asarray(counts, dtype=np.float64)
    return ColorMixture(
        means=np.asarray(means),
        covs=np.asarray(covs),
        weights=counts / counts.sum(),
    )


def fit_gmms(image, alpha, params: GrabcutParams, previous: GmmModel | None = None) -> GmmModel:
    """Fit both regions' color mixtures for the current labeling.

    Without ``previous``, pixels are partitioned by deterministic k-means;
    with it, each pixel joins the component that scores it cheapest under
    the previous model (the component-assignment step of the iteration).
    A region smaller than the component count gets that many components.
    """
    img = validate_image(image)
    alpha = validate_mask(alpha, img)
    if not alpha.any() or alpha.all():
        raise ContractViolationError("both regions must be non-empty to fit GMMs")
    fg_pixels = img[alpha]
    bg_pixels = img[~alpha]
    return GmmModel(
        foreground=_fit_mixture(fg_pixels, params.components, params.epsilon,
                                previous.foreground if previous else None, params.kmeans_iters),
        background=_fit_mixture(bg_pixels, params.components, params.epsilon,
                                previous.background if previous else None, params.kmeans_iters),
    )


def _component_costs(mixture: ColorMixture, pixels) -> np.ndarray:
    """Per (pixel, component): -log weight - log gaussian density.  Shape (N, k)."""
    pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    k = mixture.means.shape[0]
    costs = np.empty((pixels.shape[0], k))
    for j in range(k):
        chol = np.linalg.cholesky(mixture.covs[j])
        diff = pixels - mixture.means[j]
        y = solve_triangular(chol, diff.T, lower=True)
        maha = np.sum(y * y, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        costs[:, j] = (
            -np.log(mixture.weights[j])
            + 0.5 * (3.0 * np.log(2.0 * np.pi) + logdet)
            + 0.5 * maha
        )
    return costs


def data_term(colors, region: str, model: GmmModel) -> np.ndarray:
    """Cost of assigning pixel color(s) to a region: best component's -log(pi * density)."""
    if region == "foreground":
        mixture = model.foreground
    elif region == "background":
        mixture = model.background
    else:
        raise ContractViolationError(f"region must be 'foreground' or 'background', got {region!r}")
    costs = _component_costs(mixture, colors).min(axis=1)
    return costs if np.ndim(colors) > 1 else float(costs[0])


# ---------------------------------------------------------------------------
# Smoothness term and min-cut


def neighbor_pairs(height, width) -> np.ndarray:
    """8-connected undirected neighbor pairs as flat-index rows (m, n)."""
    idx = np.arange(height * width).reshape(height, width)
    pairs = [
        np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1),  # right
        np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1),  # down
        np.stack([idx[:-1, :-1].ravel(), idx[1:, 1:].ravel()], axis=1),  # down-right
        np.stack([idx[:-1, 1:].ravel(), idx[1:, :-1].ravel()], axis=1),  # down-left
    ]
    return np.concatenate(pairs, axis=0)


def smoothness_term(image, params: GrabcutParams) -> tuple[np.ndarray, np.ndarray]:
    """Contrast-weighted edge capacities gamma * exp(-beta * ||z_m - z_n||^2).

    beta is 1 / (2 <||z_m - z_n||^2>) averaged over all 8-neighbor pairs;
    a perfectly uniform image gets beta = 0 (all weights = gamma).
    """
    img = validate_image(image)
    height, width = img.shape[:2]
    flat = img.reshape(-1, 3)
    pairs = neighbor_pairs(height, width)
    d2 = ((flat[pairs[:, 0]] - flat[pairs[:, 1]]) ** 2).sum(axis=1)
    mean_d2 = d2.mean() if d2.size else 0.0
    beta = 0.0 if mean_d2 == 0.0 else 1.0 / (2.0 * mean_d2)
    return pairs, params.gamma * np.exp(-beta * d2)


class _MaxFlow:
    """Dinic max-flow on float capacities; paired edge storage (rev = index ^ 1)."""

    def __init__(self, n):
        self.n = n
        self.to = []
        self.cap = []
        self.head = [[] for _ in range(n)]

    def add_edge(self, u, v, cap_uv, cap_vu=0.0):
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(float(cap_uv))
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(float(cap_vu))

    def _levels(self, source, sink):
        level = [-1] * self.n
        level[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for ei in self.head[u]:
                v = self.to[ei]
                if self.cap[ei] > _FLOW_EPS and level[v] < 0:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level if level[sink] >= 0 else None

    def _augment(self, source, sink, level, arc):
        path = []
        u = source
        while True:
            if u == sink:
                pushed = min(self.cap[ei] for ei in path)
                for ei in path:
                    self.cap[ei] -= pushed
                    self.cap[ei ^ 1] += pushed
                return pushed
            advanced = False
            while arc[u] < len(self.head[u]):
                ei = self.head[u][arc[u]]
                v = self.to[ei]
                if self.cap[ei] > _FLOW_EPS and level[v] == level[u] + 1:
                    path.append(ei)
                    u = v
                    advanced = True
                    break
                arc[u] += 1
            if not advanced:
                if not path:
                    return 0.0
                level[u] = -1
                ei = path.pop()
                u = self.to[ei ^ 1]
                arc[u] += 1

    def max_flow(self, source, sink):
        total = 0.0
        while True:
            level = self._levels(source, sink)
            if level is None:
                return total
            arc = [0] * self.n
            while True:
                pushed = self._augment(source, sink, level, arc)
                if pushed <= 0.0:
                    break
                total += pushed

    def source_side(self, source):
        seen = [False] * self.n
        seen[source] = True
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for ei in self.head[u]:
                v = self.to[ei]
                if self.cap[ei] > _FLOW_EPS and not seen[v]:
                    seen[v] = True
                    queue.append(v)
        return np.asarray(seen)


def min_cut(data_fg, data_bg, pairs, weights, trimap) -> np.ndarray:
    """Exact minimizer of the segmentation energy for the given terms.

    ``data_fg``/``data_bg`` are per-pixel costs of the two labels, shaped
    like the trimap.  Definite trimap pixels are pinned with infinite
    terminal capacity.  Returns a boolean foreground labeling.
    """
    trimap = validate_trimap(trimap)
    shape = trimap.shape
    d_fg = np.asarray(data_fg, dtype=np.float64).reshape(-1)
    d_bg = np.asarray(data_bg, dtype=np.float64).reshape(-1)
    tri = trimap.reshape(-1)
    n = tri.size
    source, sink = n, n + 1
    graph = _MaxFlow(n + 2)
    for p in range(n):
        if tri[p] == TRIMAP_FG:
            graph.add_edge(source, p, np.inf)
        elif tri[p] == TRIMAP_BG:
            graph.add_edge(p, sink, np.inf)
        else:
            # cutting the source link labels p background and pays d_bg; the
            # sink link symmetrically pays d_fg
            if d_bg[p] > 0.0:
                graph.add_edge(source, p, d_bg[p])
            if d_fg[p] > 0.0:
                graph.add_edge(p, sink, d_fg[p])
    for (m, q), w in zip(pairs, weights):
        if w > 0.0:
            graph.add_edge(int(m), int(q), w, w)
    graph.max_flow(source, sink)
    return graph.source_side(source)[:n].reshape(shape)


def labeling_energy(alpha, data_fg, data_bg, pairs, weights) -> float:
    """Total energy of a labeling: data terms plus separated-pair penalties."""
    a = np.asarray(alpha, dtype=bool).reshape(-1)
    d_fg = np.asarray(data_fg, dtype=np.float64).reshape(-1)
    d_bg = np.asarray(data_bg, dtype=np.float64).reshape(-1)
    cut = a[pairs[:, 0]] != a[pairs[:, 1]]
    return float(np.where(a, d_fg, d_bg).sum() + weights[cut].sum())


def grabcut(image, trimap, params: GrabcutParams | None = None) -> GrabcutResult:
    """Iterate {assign components, refit GMMs, min-cut} until stable.

    Stops after ``params.iterations`` rounds or as soon as the labeling
    repeats.  The recorded energy (evaluated with that round's models) never
    increases.  If a round would empty either region, the last valid
    labeling is returned with a warning instead.
    """
    params = params or GrabcutParams()
    img = validate_image(image)
    trimap = validate_trimap(trimap)
    if trimap.shape != img.shape[:2]:
        raise ContractViolationError("trimap shape must match the image")
    pairs, weights = smoothness_term(img, params)
    flat = img.reshape(-1, 3)

    alpha = trimap != TRIMAP_BG  # unknown starts as foreground
    result = GrabcutResult(mask=alpha.copy())
    model = None
    for iteration in range(1, params.iterations + 1):
        if not alpha.any() or alpha.all():
            result.warning = "a region is empty; returning the last valid labeling"
            break
        model = fit_gmms(img, alpha, params, previous=model)
        d_fg = data_term(flat, "foreground", model)
        d_bg = data_term(flat, "background", model)
        new_alpha = min_cut(d_fg.reshape(trimap.shape), d_bg.reshape(trimap.shape),
                            pairs, weights, trimap)
        result.iterations_run = iteration
        if not new_alpha.any() or new_alpha.all():
            result.warning = "the cut emptied a region; keeping the previous labeling"
            break
        result.energy_history.append(labeling_energy(new_alpha, d_fg, d_bg, pairs, weights))
        if np.array_equal(new_alpha, alpha):
            result.converged = True
            break
        alpha = new_alpha
    result.mask = alpha.copy()
    return result


# ---------------------------------------------------------------------------
# Mask and trimap file I/O


def load_mask(path, expected_shape=None) -> np.ndarray:
    """Read a single-channel PNG mask; value >= 128 means foreground."""
    with PILImage.open(path) as im:
        if im.mode != "L":
            raise ContractViolationError(f"{path}: expected a single-channel PNG, got mode {im.mode}")
        values = np.asarray(im)
    if expected_shape is not None and values.shape != tuple(expected_shape):
        raise ContractViolationError(
            f"{path}: mask shape {values.shape} does not match image {tuple(expected_shape)}"
        )
    return values >= 128


def save_mask(mask, path) -> None:
    m = validate_mask(mask)
    PILImage.fromarray(np.where(m, 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


def load_trimap(path) -> np.ndarray:
    """Read a trimap PNG; pixel values must be exactly 0, 128 or 255."""
    with PILImage.open(path) as im:
        if im.mode != "L":
            raise ContractViolationError(f"{path}: expected a single-channel PNG, got mode {im.mode}")
        values = np.asarray(im)
    unexpected = np.setdiff1d(np.unique(values), list(_TRIMAP_PNG))
    if unexpected.size:
        raise ContractViolationError(f"{path}: trimap contains values {unexpected.tolist()}")
    trimap = np.zeros(values.shape, dtype=np.int64)
    for png_value, label in _TRIMAP_PNG.items():
        trimap[values == png_value] = label
    return validate_trimap(trimap)


def save_trimap(trimap, path) -> None:
    trimap = validate_trimap(trimap)
    png = np.zeros(trimap.shape, dtype=np.uint8)
    png[trimap == TRIMAP_UNKNOWN] = 128
    png[trimap == TRIMAP_FG] = 255
    PILImage.fromarray(png, mode="L").save(path, format="PNG")
