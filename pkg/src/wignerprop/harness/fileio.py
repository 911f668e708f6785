"""Grid text files and P6 heatmaps.

Text layout::

    # p_min p_max np
    # q_min q_max nq
    # frame <tag>
    <nq rows, each holding np values: row iq is q_iq, p ascending within a row>

Values are written with 17 significant digits so a read-back is
bit-identical.  Heatmaps put q on the horizontal axis (left to right) and
p on the vertical axis (bottom to top).
"""

from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..fields import GridSpec, PhaseSpaceField

__all__ = ["write_grid", "read_grid", "diverging_rgb", "write_ppm", "read_ppm", "emit_field",
           "pixel_of_cell"]


def write_grid(field, path):
    g = field.grid
    lines = [
        f"# {g.p_range[0]:.17g} {g.p_range[1]:.17g} {g.np}",
        f"# {g.q_range[0]:.17g} {g.q_range[1]:.17g} {g.nq}",
        f"# frame {field.frame}",
    ]
    # row iq holds W(p_0..p_{np-1}, q_iq)
    for row in field.values.T:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def read_grid(path):
    text = Path(path).read_text().splitlines()
    if len(text) < 3 or not all(line.startswith("#") for line in text[:3]):
        raise ValidationError(f"{path}: missing grid header")
    try:
        p0, p1, n_p = text[0][1:].split()
        q0, q1, n_q = text[1][1:].split()
        grid = GridSpec((float(p0), float(p1)), (float(q0), float(q1)), int(n_p), int(n_q))
    except ValueError as exc:
        raise ValidationError(f"{path}: bad grid header ({exc})") from exc
    frame_line = text[2][1:].strip()
    frame = frame_line[len("frame"):].strip() if frame_line.startswith("frame") else "absolute"
    rows = [line for line in text[3:] if line.strip()]
    data = np.array([[float(x) for x in line.split()] for line in rows]) if rows else np.zeros((0, 0))
    if data.shape != (grid.nq, grid.np):
        raise ValidationError(f"{path}: expected {grid.nq} rows of {grid.np} values, got {data.shape}")
    return PhaseSpaceField(grid, data.T.copy(), frame=frame)


def diverging_rgb(values, vmax=None):
    """Red (negative) -> white (zero) -> blue (positive), symmetric in ``max|values|``."""
    v = np.asarray(values, dtype=float)
    vmax = float(np.max(np.abs(v))) if vmax is None else float(vmax)
    x = np.zeros_like(v) if vmax == 0 else np.clip(v / vmax, -1.0, 1.0)
    rgb = np.full(v.shape + (3,), 255.0)
    neg = x < 0
    pos = x > 0
    rgb[neg, 1] = rgb[neg, 2] = 255.0 * (1.0 + x[neg])
    rgb[pos, 0] = rgb[pos, 1] = 255.0 * (1.0 - x[pos])
    return np.rint(rgb).astype(np.uint8)


def pixel_of_cell(grid, ip, iq):
    """(row, column) of the heatmap pixel showing cell (ip, iq)."""
    return grid.np - 1 - ip, iq


def write_ppm(field, path, vmax=None):
    # rows top to bottom = p descending, columns = q ascending
    img = diverging_rgb(field.values, vmax)[::-1, :, :]
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(img).tobytes())
    return Path(path)


def read_ppm(path):
    """Minimal P6 reader (no comments), returns an (h, w, 3) uint8 array."""
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValidationError(f"{path}: not a P6 image")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValidationError(f"{path}: only 8-bit images are supported")
    data = np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8)
    return data.reshape(h, w, 3)


def emit_field(field, path, heatmap=True):
    """Write ``<path>.txt`` and, optionally, ``<path>.ppm``; returns the paths."""
    base = Path(path)
    if base.suffix in (".txt", ".ppm"):
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    out = [write_grid(field, base.with_suffix(".txt"))]
    if heatmap:
        out.append(write_ppm(field, base.with_suffix(".ppm")))
    return out
