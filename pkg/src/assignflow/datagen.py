"""Deterministic synthetic scenes.

* binary letters in a blocky (axis-aligned strokes) and a curvilinear style,
* random Voronoi scenes with three classes ``line / homogeneous / texture``,
* input/target pairs for pattern completion and label transport.

Generator constants are versioned through ``GENERATOR_VERSION`` so fixtures
written to disk stay comparable.
"""
from dataclasses import dataclass

import numpy as np

GENERATOR_VERSION = 2

LINE, HOMOGENEOUS, TEXTURE = 0, 1, 2
CLASS_NAMES = ("line", "homogeneous", "texture")

HOMOGENEOUS_GRAY = 0.5
HOMOGENEOUS_NOISE = 0.05
TEXTURE_AMPLITUDE = 0.4
TEXTURE_CELL = 2  # checker cell size in pixels; 1-px checkers vanish under 7x7 derivative filters
LINE_GRAY = 0.0
LINE_NOISE = 0.05


@dataclass(frozen=True)
class Scene:
    image: np.ndarray         # (H, W) float in [0, 1] or {0, 1}
    ground_truth: np.ndarray  # (H, W) int labels
    seed: int
    class_count: int
    kind: str = ""

    @property
    def shape(self):
        return self.image.shape


# Glyphs on a 16x16 design grid.  Blocky glyphs are unions of axis-aligned
# rectangles (y0, y1, x0, x1), half-open.  Curvilinear glyphs are arcs
# (cy, cx, ry, rx, deg0, deg1) of stroke width 2 plus optional rectangles.
BLOCKY = {
    "E": [(2, 14, 3, 5), (2, 4, 5, 12), (7, 9, 5, 10), (12, 14, 5, 12)],
    "F": [(2, 14, 3, 5), (2, 4, 5, 12), (7, 9, 5, 10)],
    "H": [(2, 14, 3, 5), (2, 14, 11, 13), (7, 9, 5, 11)],
    "I": [(2, 4, 4, 12), (4, 12, 7, 9), (12, 14, 4, 12)],
    "L": [(2, 14, 4, 6), (12, 14, 6, 12)],
    "T": [(2, 4, 2, 14), (4, 14, 7, 9)],
}

CURVY = {
    "O": {"arcs": [(8, 8, 5, 4.5, 0, 360)]},
    "C": {"arcs": [(8, 8.5, 5, 5, 40, 320)]},
    "S": {"arcs": [(5.5, 8, 3, 4, 90, 330), (10.5, 8, 3, 4, 270, 510)]},
    "U": {"arcs": [(9, 8, 4, 4.5, 0, 180)], "rects": [(2, 9, 2.5, 4.5), (2, 9, 11.5, 13.5)]},
    "J": {"arcs": [(10, 7, 3.5, 4, 0, 180)], "rects": [(2, 10, 10, 12)]},
}

GLYPHS = {**{k: "blocky" for k in BLOCKY}, **{k.lower(): "curvy" for k in CURVY}}


def _render_blocky(rects, size):
    s = size / 16.0
    img = np.zeros((size, size), dtype=np.int64)
    for y0, y1, x0, x1 in rects:
        img[int(round(y0 * s)):int(round(y1 * s)), int(round(x0 * s)):int(round(x1 * s))] = 1
    return img


def _render_curvy(spec, size):
    s = size / 16.0
    yy, xx = np.mgrid[0:size, 0:size]
    py, px = (yy + 0.5) / s, (xx + 0.5) / s
    img = np.zeros((size, size), dtype=bool)
    for cy, cx, ry, rx, d0, d1 in spec.get("arcs", []):
        dy, dx = py - cy, px - cx
        radius = np.hypot(dy / ry, dx / rx)
        # stroke of width ~2 design units measured along the mean radius
        band = np.abs(radius - 1.0) * 0.5 * (rx + ry) <= 1.0
        # angle from +x, clockwise on screen (image y points down)
        ang = np.degrees(np.arctan2(dy, dx)) % 360
        rel = (ang - d0) % 360
        img |= band & (rel <= (d1 - d0))
    for y0, y1, x0, x1 in spec.get("rects", []):
        img |= (py >= y0) & (py < y1) & (px >= x0) & (px < x1)
    return img.astype(np.int64)


def gen_letter(glyph, size=16):
    """Binary letter; upper case is the blocky training style, lower case curvilinear.

    The image doubles as ground truth (label 1 = foreground).
    """
    if glyph in BLOCKY:
        img = _render_blocky(BLOCKY[glyph], size)
    elif glyph.isalpha() and glyph.upper() in CURVY and glyph.islower():
        img = _render_curvy(CURVY[glyph.upper()], size)
    else:
        raise ValueError(f"unsupported glyph {glyph!r}; choose from {sorted(GLYPHS)}")
    return Scene(image=img.astype(float), ground_truth=img, seed=0, class_count=2,
                 kind=f"letter-{glyph}")


def voronoi_cells(sites, height, width):
    yy, xx = np.mgrid[0:height, 0:width]
    pts = np.stack([yy.ravel() + 0.5, xx.ravel() + 0.5], axis=1)
    d2 = ((pts[:, None, :] - sites[None, :, :]) ** 2).sum(-1)
    return np.argmin(d2, axis=1).reshape(height, width)


def boundary_mask(cells):
    """Pixels whose right or lower neighbor lies in another cell."""
    mask = np.zeros(cells.shape, dtype=bool)
    mask[:, :-1] |= cells[:, :-1] != cells[:, 1:]
    mask[:-1, :] |= cells[:-1, :] != cells[1:, :]
    return mask


def _texture(rng, height, width):
    yy, xx = np.mgrid[0:height, 0:width]
    checker = np.where((yy // TEXTURE_CELL + xx // TEXTURE_CELL) % 2 == 0, 1.0, -1.0)
    return 0.5 + TEXTURE_AMPLITUDE * checker * rng.uniform(0.5, 1.0, (height, width))


def gen_voronoi_scene(seed, height=64, width=64, cells=16, max_retries=20):
    if cells < 2:
        raise ValueError("need at least 2 cells")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        sites = rng.uniform(0, 1, (cells, 2)) * [height, width]
        cell_map = voronoi_cells(sites, height, width)
        kinds = rng.integers(0, 2, cells)
        if len(np.unique(cell_map)) == cells and (cells < 4 or len(np.unique(kinds)) == 2):
            break
    else:
        raise RuntimeError(f"could not generate a nondegenerate scene for seed {seed}")
    gt = np.where(kinds[cell_map] == 0, HOMOGENEOUS, TEXTURE)
    lines = boundary_mask(cell_map)
    gt[lines] = LINE
    img = np.where(gt == TEXTURE, _texture(rng, height, width),
                   HOMOGENEOUS_GRAY + rng.normal(0, HOMOGENEOUS_NOISE, (height, width)))
    img[lines] = LINE_GRAY + rng.normal(0, LINE_NOISE, int(lines.sum()))
    return Scene(image=np.clip(img, 0.0, 1.0), ground_truth=gt.astype(np.int64), seed=seed,
                 class_count=3, kind="voronoi")


def _completion_pair(size):
    s = size / 32.0
    target = np.zeros((size, size), dtype=np.int64)

    def seg(y0, x0, y1, x1):
        n = int(4 * max(abs(y1 - y0), abs(x1 - x0)) * s) + 2
        for u in np.linspace(0, 1, n):
            y = int(round((y0 + u * (y1 - y0)) * s))
            x = int(round((x0 + u * (x1 - x0)) * s))
            target[min(y, size - 1), min(x, size - 1)] = 1

    # fern: stem with alternating leaflets
    seg(4, 16, 28, 16)
    for i, y in enumerate(range(7, 26, 4)):
        d = 7 - abs(y - 14) // 3
        seg(y, 16, y - 3, 16 - d) if i % 2 == 0 else seg(y, 16, y - 3, 16 + d)
        seg(y + 2, 16, y - 1, 16 + d) if i % 2 == 0 else seg(y + 2, 16, y - 1, 16 - d)
    inp = np.zeros_like(target)
    ys, xs = np.nonzero(target)
    keep = ((ys * 7 + xs * 3) % 5 == 0)
    inp[ys[keep], xs[keep]] = 1
    return inp, target


def _transport_pair(size):
    s = size / 32.0
    inp = np.zeros((size, size), dtype=np.int64)
    target = np.zeros_like(inp)

    def box(img, y0, y1, x0, x1):
        img[int(y0 * s):int(y1 * s), int(x0 * s):int(x1 * s)] = 1

    # the blob must grow and shift; input columns 6-9 lie outside the target
    box(inp, 12, 19, 6, 13)
    box(target, 8, 22, 10, 24)
    return inp, target


def gen_pattern_pair(kind, size=32):
    """Input scene (binary) and target labeling for the pattern-formation demos."""
    if kind == "completion":
        inp, target = _completion_pair(size)
    elif kind == "transport":
        inp, target = _transport_pair(size)
    else:
        raise ValueError(f"unknown pattern kind {kind!r}")
    scene = Scene(image=inp.astype(float), ground_truth=target, seed=0, class_count=2,
                  kind=kind)
    return scene, target
