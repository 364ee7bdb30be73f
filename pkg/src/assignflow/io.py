"""File formats: PGM/PPM images, AFW1 weights, AFC1 coresets, AFP1 prototypes,
flat ``key=value`` configs and JSON run manifests.

All binary formats are little-endian: a 4-byte magic, uint32 header fields,
then row-major float64 payloads.
"""
import csv
import json
import struct
from pathlib import Path

import numpy as np

from assignflow.predict import Coreset

LABEL_COLORS = np.array([[255, 0, 0], [0, 255, 0], [0, 0, 255]], dtype=np.uint8)
BINARY_COLORS = np.array([[255, 255, 255], [0, 0, 0]], dtype=np.uint8)

KEY_IMAGE_PATCHES = 0
KEY_ASSIGNMENT_PATCHES = 1


class FormatError(ValueError):
    pass


def _read_header_tokens(data, count):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1


def write_pgm(path, img):
    """8-bit binary PGM (P5).  Values must already lie in 0..255."""
    arr = np.asarray(img)
    if arr.min() < 0 or arr.max() > 255:
        raise FormatError("PGM values must lie in [0, 255]")
    arr = arr.astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(arr.tobytes())


def write_ppm(path, rgb):
    arr = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = arr.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(arr.tobytes())


def read_pnm(path):
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _read_header_tokens(data, 4)
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval > 255:
        raise FormatError("only 8-bit PNM files are supported")
    if magic == b"P5":
        shape = (h, w)
    elif magic == b"P6":
        shape = (h, w, 3)
    else:
        raise FormatError(f"unsupported PNM magic {magic!r}")
    n = int(np.prod(shape))
    payload = data[pos:pos + n]
    if len(payload) != n:
        raise FormatError("truncated PNM payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(shape).copy()


def gray_to_u8(img):
    return np.clip(np.rint(np.asarray(img, dtype=float) * 255.0), 0, 255).astype(np.uint8)


def u8_to_gray(arr):
    return np.asarray(arr, dtype=float) / 255.0


def colorize(labels, n_labels):
    labels = np.asarray(labels)
    table = BINARY_COLORS if n_labels == 2 else LABEL_COLORS
    return table[labels]


def _write_blob(path, magic, header, *arrays):
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<%dI" % len(header), *header))
        for a in arrays:
            f.write(np.ascontiguousarray(a).astype(a.dtype.newbyteorder("<")).tobytes())


def _check_magic(data, magic, path):
    if data[:4] != magic:
        raise FormatError(f"{path}: expected magic {magic!r}, got {data[:4]!r}")


def write_weights(path, omega, height, width, window):
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != (height * width, window * window):
        raise FormatError(f"weights shape {omega.shape} does not match {height}x{width}, "
                          f"window {window}")
    _write_blob(path, b"AFW1", (height, width, window), omega)


def read_weights(path):
    """Returns ``(omega, height, width, window)``."""
    data = Path(path).read_bytes()
    _check_magic(data, b"AFW1", path)
    height, width, window = struct.unpack_from("<3I", data, 4)
    m, N = height * width, window * window
    omega = np.frombuffer(data, dtype="<f8", count=m * N, offset=16).reshape(m, N).copy()
    return omega, height, width, window


def write_coreset(path, coreset, window, key_kind):
    K, d = coreset.keys.shape
    _write_blob(path, b"AFC1", (K, d, window, coreset.key_patch, key_kind),
                coreset.classes.astype(np.int32), coreset.keys.astype(np.float64),
                coreset.weights.astype(np.float64))


def read_coreset(path):
    """Returns ``(coreset, window, key_kind)``."""
    data = Path(path).read_bytes()
    _check_magic(data, b"AFC1", path)
    K, d, window, key_patch, key_kind = struct.unpack_from("<5I", data, 4)
    off = 4 + 20
    classes = np.frombuffer(data, dtype="<i4", count=K, offset=off).astype(np.int64)
    off += 4 * K
    keys = np.frombuffer(data, dtype="<f8", count=K * d, offset=off).reshape(K, d).copy()
    off += 8 * K * d
    N = window * window
    weights = np.frombuffer(data, dtype="<f8", count=K * N, offset=off).reshape(K, N).copy()
    return Coreset(keys, weights, classes, key_patch), window, key_kind


def write_prototypes(path, prototypes):
    d = prototypes[0].shape[1]
    counts = [len(p) for p in prototypes]
    _write_blob(path, b"AFP1", (len(prototypes), d, *counts),
                np.concatenate(prototypes).astype(np.float64))


def read_prototypes(path):
    data = Path(path).read_bytes()
    _check_magic(data, b"AFP1", path)
    n, d = struct.unpack_from("<2I", data, 4)
    counts = struct.unpack_from("<%dI" % n, data, 12)
    flat = np.frombuffer(data, dtype="<f8", count=sum(counts) * d,
                         offset=12 + 4 * n).reshape(-1, d)
    return np.split(flat.copy(), np.cumsum(counts)[:-1])


def write_matrix_csv(path, M):
    np.savetxt(path, np.asarray(M), delimiter=",", fmt="%.17g")


def write_history_csv(path, history):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "objective"])
        for k, v in enumerate(history):
            w.writerow([k, repr(float(v))])


def read_history_csv(path):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    return [float(r["objective"]) for r in rows]


def parse_config(text):
    """Flat ``key=value`` lines; ``#`` starts a comment.  Values stay strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def format_config(values):
    return "".join(f"{k} = {v}\n" for k, v in values.items())


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o)}")
