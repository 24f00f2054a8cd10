"""Deterministic synthetic crack images with pixel-exact ground truth."""

import csv
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import DomainError
from .imageio import save_binary, save_rgb, write_bytes_atomic

BACKGROUNDS = ("plain", "speckle", "brick")
MANIFEST_HEADER = ["path", "mask_path", "seed", "truth_length"]

SPECKLE_AMPLITUDE = 12
SPECKLE_CELL = 8
BRICK_SIZE = (20, 48)  # rows, cols including mortar
MORTAR_THICKNESS = 2
# mortar level as a mix between crack (0) and brick-face (1) intensity
LIGHT_JOINT_MIX = 0.8
DARK_JOINT_MIX = 0.2
JOINT_PATCH_CELL = 24
# per-channel gain applied to the gray field to give a faint concrete tint
TINT = (1.0, 0.97, 0.92)


class Rng:
    """Seeded stream of uniforms and normals built only on raw PCG64 output.

    Uniforms use the top 53 bits of each 64-bit draw; normals use the
    Box-Muller transform. Both are fixed here rather than delegated to
    numpy's distribution code, whose algorithms may change between releases.
    """

    def __init__(self, seed: int):
        self._bits = np.random.PCG64(seed & (2**64 - 1))

    def uniform(self, n: int) -> np.ndarray:
        raw = self._bits.random_raw(n)
        return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)

    def uniform1(self, low=0.0, high=1.0) -> float:
        return low + (high - low) * float(self.uniform(1)[0])

    def normal(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u1 = 1.0 - self.uniform(pairs)  # (0, 1], keeps log finite
        u2 = self.uniform(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([radius * np.cos(2 * np.pi * u2), radius * np.sin(2 * np.pi * u2)])
        return z[:n]


@dataclass(frozen=True)
class SynthParams:
    width: int = 256
    height: int = 256
    seed: int = 0
    crack_width: int = 3
    crack_intensity: int = 40
    background: str = "speckle"
    background_mean: int = 170
    noise_sigma: float = 8.0
    n_cracks: int = 3
    impulse_rate: float = 0.002
    # steps per crack; None draws 0.5..0.9 of the shorter image side
    crack_length: float | None = None
    max_turn_degrees: float = 30.0
    drift_degrees: float = 3.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DomainError("synthetic image must have non-zero area")
        if not 1 <= self.crack_width <= 7:
            raise DomainError("crack_width must lie in [1, 7]")
        if not 0 <= self.crack_intensity <= 100:
            raise DomainError("crack_intensity must lie in [0, 100]")
        if not 0 <= self.background_mean <= 255:
            raise DomainError("background_mean must lie in [0, 255]")
        if self.crack_intensity >= self.background_mean:
            raise DomainError("cracks must be darker than the background")
        if self.background not in BACKGROUNDS:
            raise DomainError(f"background must be one of {BACKGROUNDS}")
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be >= 0")
        if self.n_cracks < 0:
            raise DomainError("n_cracks must be >= 0")
        if not 0.0 <= self.impulse_rate <= 1.0:
            raise DomainError("impulse_rate must lie in [0, 1]")


# ---------------------------------------------------------------------------
# geometry


def random_walk(rng: Rng, params: SynthParams) -> np.ndarray:
    """Unit-step polyline whose heading jitters around a slowly drifting course."""
    h, w = params.height, params.width
    margin = params.crack_width / 2 + 1
    y = rng.uniform1(0.2 * h, 0.8 * h)
    x = rng.uniform1(0.2 * w, 0.8 * w)
    course = rng.uniform1(0.0, 2 * math.pi)
    if params.crack_length is None:
        steps = int(rng.uniform1(0.5, 0.9) * min(h, w))
    else:
        steps = int(params.crack_length)
    turn = math.radians(params.max_turn_degrees)
    drift = math.radians(params.drift_degrees)
    jitter = rng.uniform(2 * steps) * 2 - 1
    points = [(y, x)]
    for k in range(steps):
        course += drift * jitter[2 * k]
        heading = course + turn * jitter[2 * k + 1]
        ny, nx = y + math.sin(heading), x + math.cos(heading)
        if not (margin <= ny <= h - 1 - margin and margin <= nx <= w - 1 - margin):
            break
        y, x = ny, nx
        points.append((y, x))
    return np.array(points, dtype=np.float64)


def polyline_length(points) -> float:
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    return float(np.hypot(*np.diff(pts, axis=0).T).sum())


def render_polyline(shape, points, width: int) -> np.ndarray:
    """Pixels whose centres lie within ``width / 2`` of the polyline.

    The radius never drops below sqrt(2)/2 so width-1 lines stay 8-connected.
    Caps are round.
    """
    h, w = shape
    radius = max(width / 2, math.sqrt(0.5))
    mask = np.zeros(shape, dtype=bool)
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) == 1:
        pts = np.vstack([pts, pts])
    for (y0, x0), (y1, x1) in zip(pts[:-1], pts[1:]):
        top = max(int(math.floor(min(y0, y1) - radius)), 0)
        bottom = min(int(math.ceil(max(y0, y1) + radius)), h - 1)
        left = max(int(math.floor(min(x0, x1) - radius)), 0)
        right = min(int(math.ceil(max(x0, x1) + radius)), w - 1)
        if top > bottom or left > right:
            continue
        yy, xx = np.mgrid[top : bottom + 1, left : right + 1].astype(np.float64)
        dy, dx = y1 - y0, x1 - x0
        seg2 = dy * dy + dx * dx
        if seg2 == 0:
            t = np.zeros_like(yy)
        else:
            t = np.clip(((yy - y0) * dy + (xx - x0) * dx) / seg2, 0.0, 1.0)
        dist2 = (yy - y0 - t * dy) ** 2 + (xx - x0 - t * dx) ** 2
        mask[top : bottom + 1, left : right + 1] |= dist2 <= radius * radius + 1e-9
    return mask


# ---------------------------------------------------------------------------
# textures


def _smooth_field(rng: Rng, shape, cell: int) -> np.ndarray:
    """Bilinearly upsampled coarse uniform noise in [0, 1]."""
    h, w = shape
    gh, gw = h // cell + 2, w // cell + 2
    grid = rng.uniform(gh * gw).reshape(gh, gw)
    ys = np.arange(h) / cell
    xs = np.arange(w) / cell
    y0, x0 = ys.astype(int), xs.astype(int)
    fy, fx = (ys - y0)[:, None], (xs - x0)[None, :]
    top = grid[y0][:, x0] * (1 - fx) + grid[y0][:, x0 + 1] * fx
    bottom = grid[y0 + 1][:, x0] * (1 - fx) + grid[y0 + 1][:, x0 + 1] * fx
    return top * (1 - fy) + bottom * fy


def mortar_intensity(params: SynthParams) -> int:
    """Intensity of undamaged mortar joints, between crack and brick face."""
    return int(round(params.crack_intensity + LIGHT_JOINT_MIX * (params.background_mean - params.crack_intensity)))


def texture(rng: Rng, params: SynthParams):
    """Return ``(field, floor)``: the noise-free background and its minimum."""
    shape = (params.height, params.width)
    mean = params.background_mean
    if params.background == "plain":
        return np.full(shape, float(mean)), mean

    speckle = SPECKLE_AMPLITUDE * (2 * _smooth_field(rng, shape, SPECKLE_CELL) - 1)
    if params.background == "speckle":
        field = np.clip(np.rint(mean + speckle), 0, 255)
        return field, int(field.min())

    rows, cols = BRICK_SIZE
    course_count = params.height // rows + 2
    bricks_per_course = params.width // cols + 2
    shade = 10 * (2 * rng.uniform(course_count * bricks_per_course) - 1)
    shade = shade.reshape(course_count, bricks_per_course)
    yy, xx = np.mgrid[0 : params.height, 0 : params.width]
    course = yy // rows
    # running bond: alternate courses shift by half a brick
    xs = xx + (course % 2) * (cols // 2)
    brick = xs // cols
    field = mean + speckle / 2 + shade[course, brick]
    mortar = (yy % rows < MORTAR_THICKNESS) | (xs % cols < MORTAR_THICKNESS)
    # joints darken in patches, down to DARK_JOINT_MIX of the way from the crack
    patch = np.clip((_smooth_field(rng, shape, JOINT_PATCH_CELL) - 0.6) / 0.4, 0.0, 1.0)
    light = mortar_intensity(params)
    dark = params.crack_intensity + DARK_JOINT_MIX * (params.background_mean - params.crack_intensity)
    field = np.where(mortar, light - (light - dark) * patch, field)
    field = np.clip(np.rint(field), 0, 255)
    return field, int(field.min())


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True, eq=False)
class CleanRender:
    """Noise-free render: gray field, truth mask, crack polylines."""

    field: np.ndarray
    truth: np.ndarray
    floor: int
    polylines: tuple
    truth_length: float


def render_clean(params: SynthParams, rng: Rng | None = None) -> CleanRender:
    rng = Rng(params.seed) if rng is None else rng
    shape = (params.height, params.width)
    polylines = tuple(random_walk(rng, params) for _ in range(params.n_cracks))
    field, floor = texture(rng, params)
    truth = np.zeros(shape, dtype=bool)
    for points in polylines:
        truth |= render_polyline(shape, points, params.crack_width)
    field = np.where(truth, float(params.crack_intensity), field)
    length = sum(polyline_length(p) for p in polylines)
    return CleanRender(field, truth, floor, polylines, length)


def generate(params: SynthParams):
    """Render one image; returns ``(rgb, truth_mask, truth_length)``."""
    rng = Rng(params.seed)
    clean = render_clean(params, rng)
    shape = clean.field.shape
    n = clean.field.size
    noisy = clean.field + params.noise_sigma * rng.normal(n).reshape(shape)
    hit, polarity = rng.uniform(n).reshape(shape), rng.uniform(n).reshape(shape)
    impulses = hit < params.impulse_rate
    noisy = np.where(impulses, np.where(polarity < 0.5, 0.0, 255.0), noisy)
    gray = np.clip(np.floor(noisy + 0.5), 0, 255)
    rgb = np.stack([np.clip(np.floor(gray * g + 0.5), 0, 255) for g in TINT], axis=-1)
    return rgb.astype(np.uint8), clean.truth, clean.truth_length


def _manifest_rows(base: SynthParams, count: int):
    for i in range(count):
        yield i, replace(base, seed=base.seed + i)


def generate_corpus(base: SynthParams, count: int, out_dir) -> Path:
    """Write ``count`` image/truth pairs plus ``manifest.csv``; returns the manifest path.

    Images go in ``out_dir``, truth masks in ``out_dir/masks``; manifest
    paths are relative to the manifest's directory.
    """
    if count < 0:
        raise DomainError("count must be >= 0")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if count:
            (out / "masks").mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create corpus directory {out}: {exc}") from exc
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for i, params in _manifest_rows(base, count):
        rgb, truth, length = generate(params)
        image_name, mask_name = f"synth_{i:04d}.png", f"masks/synth_{i:04d}.png"
        for name, save, data in ((image_name, save_rgb, rgb), (mask_name, save_binary, truth)):
            try:
                save(data, out / name)
            except OSError as exc:
                raise OSError(f"cannot write {out / name}: {exc}") from exc
        writer.writerow([image_name, mask_name, params.seed, f"{length:.6f}"])
    manifest = out / "manifest.csv"
    try:
        write_bytes_atomic(manifest, buf.getvalue().encode("utf-8"))
    except OSError as exc:
        raise OSError(f"cannot write {manifest}: {exc}") from exc
    return manifest


def read_manifest(path):
    """Rows of a corpus manifest with paths resolved against its directory."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_HEADER:
            raise ValueError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}")
        return [
            {
                "path": path.parent / row["path"],
                "mask_path": path.parent / row["mask_path"],
                "seed": int(row["seed"]),
                "truth_length": float(row["truth_length"]),
            }
            for row in reader
        ]
