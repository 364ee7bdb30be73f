"""Features, prototypes and coreset-based weight prediction."""
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from assignflow.graph import window_offsets

FILTER_SIZE = 7
FILTER_SIGMA = 1.1
ORIENTATIONS = np.arange(0, 180, 15)  # degrees; abs() identifies theta and theta + 180
COEFF_EPS = 1e-6
# filter responses of [0, 1] images are O(0.1); scaled so distances are O(1) at rho = 1
FEATURE_SCALE = 10.0


def extract_patches(img, size):
    """Flattened ``size x size`` replicate-padded patches around every pixel.

    ``img`` is ``(H, W)`` or ``(H, W, C)``; the result is ``(H*W, size*size*C)``
    with window positions in row-major order and channels innermost.
    """
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        img = img[:, :, None]
    H, W, C = img.shape
    r = size // 2
    padded = np.pad(img, ((r, r), (r, r), (0, 0)), mode="edge")
    dy, dx = window_offsets(size)
    out = np.empty((H * W, size * size, C))
    for k, (oy, ox) in enumerate(zip(dy, dx)):
        out[:, k, :] = padded[r + oy:r + oy + H, r + ox:r + ox + W, :].reshape(H * W, C)
    return out.reshape(H * W, size * size * C)


def extract_letter_features(img, patch=7):
    return extract_patches(img, patch)


def derivative_filters(size=FILTER_SIZE, sigma=FILTER_SIGMA, orientations=ORIENTATIONS):
    """Oriented first- and second-order Gaussian derivative kernels.

    Returns two arrays of shape ``(len(orientations), size, size)``; every
    kernel has zero sum and unit L1 norm.  Orientation 0 differentiates along
    the image x axis (columns).
    """
    r = size // 2
    y, x = np.mgrid[-r:r + 1, -r:r + 1].astype(float)
    G = np.exp(-(x ** 2 + y ** 2) / (2 * sigma ** 2))
    Gx, Gy = -x / sigma ** 2 * G, -y / sigma ** 2 * G
    Gxx = (x ** 2 / sigma ** 4 - 1 / sigma ** 2) * G
    Gyy = (y ** 2 / sigma ** 4 - 1 / sigma ** 2) * G
    Gxy = x * y / sigma ** 4 * G
    first, second = [], []
    for deg in orientations:
        c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
        k1 = c * Gx + s * Gy
        k2 = c * c * Gxx + 2 * c * s * Gxy + s * s * Gyy
        for k, bank in ((k1, first), (k2, second)):
            k = k - k.mean()
            bank.append(k / np.abs(k).sum())
    return np.array(first), np.array(second)


def filter_responses(img):
    """Per orientation, max of |first-order| and |second-order| response: ``(H, W, 12)``."""
    img = np.asarray(img, dtype=float)
    first, second = derivative_filters()
    maps = [np.maximum(np.abs(ndimage.correlate(img, k1, mode="nearest")),
                       np.abs(ndimage.correlate(img, k2, mode="nearest")))
            for k1, k2 in zip(first, second)]
    return np.stack(maps, axis=-1)


def extract_filter_features(img, patch=3):
    """108-dimensional features: 3x3 patches of the 12 orientation responses."""
    return FEATURE_SCALE * extract_patches(filter_responses(img), patch)


def sq_distances(X, C):
    """Squared Euclidean distances ``(len(X), len(C))``, clipped at zero."""
    d = (X ** 2).sum(1)[:, None] - 2.0 * X @ C.T + (C ** 2).sum(1)[None, :]
    return np.maximum(d, 0.0)


def nearest(X, C, chunk=4096):
    """Index of the closest row of C for each row of X (lowest index on ties)."""
    out = np.empty(len(X), dtype=np.intp)
    for s in range(0, len(X), chunk):
        out[s:s + chunk] = np.argmin(sq_distances(X[s:s + chunk], C), axis=1)
    return out


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: list  # objective after each Lloyd iteration


def _kmeans_pp(X, k, rng):
    centers = [X[rng.integers(len(X))]]
    d2 = sq_distances(X, centers[0][None])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.choice(len(X), p=d2 / total) if total > 0 else rng.integers(len(X))
        centers.append(X[idx])
        d2 = np.minimum(d2, sq_distances(X, X[idx][None])[:, 0])
    return np.array(centers)


def kmeans(points, k, seed=0, max_iter=100):
    """k-means++ seeding followed by Lloyd iterations until the labels stop changing."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if k > len(X):
        raise ValueError(f"k={k} exceeds the number of points {len(X)}")
    if k < 1:
        raise ValueError("k must be positive")
    rng = np.random.default_rng(seed)
    C = _kmeans_pp(X, k, rng)
    labels = nearest(X, C)
    inertia = []
    for _ in range(max_iter):
        for j in range(k):
            members = labels == j
            if members.any():
                C[j] = X[members].mean(axis=0)
        new = nearest(X, C)
        inertia.append(float(((X - C[new]) ** 2).sum()))
        if np.array_equal(new, labels):
            break
        labels = new
    return KMeansResult(C, labels, inertia)


def learn_prototypes(features, labels, n_classes, k, seed=0):
    """k-means prototypes per class from stacked features and ground-truth labels."""
    protos = []
    for c in range(n_classes):
        pts = features[labels == c]
        if len(pts) == 0:
            raise ValueError(f"class {c} has no training features")
        protos.append(kmeans(pts, min(k, len(pts)), seed=seed + c).centroids)
    return protos


def distance_from_prototypes(F, prototypes, chunk=4096):
    """``D_ic = min_j ||f_i - l_jc||`` for per-class prototype arrays."""
    F = np.asarray(F, dtype=float)
    D = np.empty((len(F), len(prototypes)))
    for c, P in enumerate(prototypes):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        for s in range(0, len(F), chunk):
            D[s:s + chunk, c] = np.sqrt(sq_distances(F[s:s + chunk], P).min(axis=1))
    return D


def hamming_distance_matrix(img):
    """Two-label distances ``(d_H(x, 0), d_H(x, 1))`` per pixel; label 1 = foreground."""
    x = np.asarray(img).ravel()
    return np.stack([(x != 0), (x != 1)], axis=1).astype(float)


def local_assignment_patches(D, height, width, patch=15):
    """One-hot patches of the locally rounded labels ``argmin_c D_ic``."""
    n = D.shape[1]
    hard = np.eye(n)[np.argmin(D, axis=1)].reshape(height, width, n)
    return extract_patches(hard, patch)


def geometric_mean_weights(patches, coeffs=None):
    """Normalized weighted geometric mean of simplex vectors."""
    P = np.atleast_2d(np.asarray(patches, dtype=float))
    a = np.ones(len(P)) if coeffs is None else np.asarray(coeffs, dtype=float)
    if np.any(a < 0) or a.sum() <= 0:
        raise ValueError("coefficients must be nonnegative and not all zero")
    z = (a[:, None] * np.log(P)).sum(0) / a.sum()
    w = np.exp(z - z.max())
    return w / w.sum()


@dataclass
class Coreset:
    keys: np.ndarray     # (K, d) prototype key patches
    weights: np.ndarray  # (K, N) prototype weight patches
    classes: np.ndarray  # (K,) class of each entry
    key_patch: int

    def __len__(self):
        return len(self.keys)


def build_coreset(keys, weights, labels, n_classes, k_per_class, key_patch, seed=0,
                  eps=COEFF_EPS):
    """Cluster key patches per class; each cluster gets the weighted geometric mean
    of its members' weight patches with coefficients ``1 / (eps + |key - centroid|)``.

    ``keys``, ``weights`` and ``labels`` are stacked over all training pixels.
    ``k_per_class`` is capped by the number of pixels in a class.
    """
    keys = np.asarray(keys, dtype=float)
    weights = np.asarray(weights, dtype=float)
    labels = np.asarray(labels).ravel()
    if len(keys) == 0:
        raise ValueError("no training outputs")
    out_keys, out_w, out_c = [], [], []
    for c in range(n_classes):
        sel = labels == c
        if not sel.any():
            raise ValueError(f"class {c} has no training pixels")
        res = kmeans(keys[sel], min(k_per_class, int(sel.sum())), seed=seed + c)
        for j, centroid in enumerate(res.centroids):
            members = res.labels == j
            if not members.any():
                continue
            dist = np.linalg.norm(keys[sel][members] - centroid, axis=1)
            out_keys.append(centroid)
            out_w.append(geometric_mean_weights(weights[sel][members], 1.0 / (eps + dist)))
            out_c.append(c)
    return Coreset(np.array(out_keys), np.array(out_w), np.array(out_c), key_patch)


def predict_weights(keys, coreset, g=None):
    """Weight patch of the nearest coreset key for every pixel (ties: lowest index)."""
    keys = np.asarray(keys, dtype=float)
    if keys.shape[1] != coreset.keys.shape[1]:
        raise ValueError(
            f"key dimension {keys.shape[1]} does not match coreset {coreset.keys.shape[1]}")
    if g is not None and (g.m != len(keys) or g.size != coreset.weights.shape[1]):
        raise ValueError(f"graph ({g.m} pixels, N={g.size}) does not match keys/coreset "
                         f"({len(keys)} pixels, N={coreset.weights.shape[1]})")
    return coreset.weights[nearest(keys, coreset.keys)].copy()
