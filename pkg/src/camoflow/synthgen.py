"""Synthetic camouflage sequences with exact motion ground truth.

A large procedurally textured *source* canvas is viewed through a moving
quadrilateral viewport: frame ``t`` is the projective image of viewport
``Q_t``, so consecutive frames are related by the exact background
homography ``V_{t+1}^{-1} . V_t`` (``V_t`` maps normalized frame
coordinates onto the normalized source quad).  Jittering the viewport
vertices produces parallax-free camera motion; a textured sprite composited
on top moves rigidly along its own trajectory and is the only thing that
violates the background model.

Because every moving part is an analytic map, the generator emits exact
by-products alongside the frames: per-pair homographies, dense forward
flow (background from the homography, sprite from its rigid motion),
per-frame sprite masks, and per-pair grid inlier maps.  Everything is
derived from a single seed, so identical configurations reproduce
byte-identical sequences on disk.

The sprite's texture is drawn from the same statistics as the background,
which makes it appearance-camouflaged: only motion gives it away.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from os import PathLike
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DegenerateConfigurationError
from .flow import read_flo, write_flo
from .geometry import (
    Correspondences,
    apply_homography,
    build_dlt_matrix,
    bilinear_sample,
    canonicalize_homography,
    invert_homography,
    normalized_grid,
    normalized_to_pixels,
    pixels_to_normalized,
    solve_weighted_dlt,
)
from .imgio import read_image, read_mask, write_image, write_mask

#: Normalized frame corners in TL, TR, BR, BL order (x right, y down).
FRAME_CORNERS = np.array(
    [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]
)

_META_FORMAT = "camoflow-synth-v1"


@dataclass(frozen=True)
class SpriteConfig:
    """The independently moving object composited over the background.

    ``shape`` is ``"ellipse"``, ``"polygon"``, or ``"none"`` (no sprite).
    ``size`` is the semi-major axis in pixels, ``aspect`` the minor/major
    ratio, ``velocity`` the per-frame translation in pixels (reflected off
    the frame borders), ``angular_velocity`` the per-frame rotation in
    degrees.  ``start`` fixes the initial center in pixels; ``None`` draws
    it from the seed.
    """

    shape: str = "ellipse"
    size: float = 36.0
    aspect: float = 0.7
    vertices: int = 5
    velocity: tuple[float, float] = (3.0, 2.0)
    angular_velocity: float = 0.0
    start: tuple[float, float] | None = None

    def __post_init__(self):
        if self.shape not in ("ellipse", "polygon", "none"):
            raise ConfigError(f"unknown sprite shape {self.shape!r}")
        if self.shape != "none":
            if self.size <= 2.0:
                raise ConfigError(f"sprite size must exceed 2 px, got {self.size}")
            if not 0.1 <= self.aspect <= 1.0:
                raise ConfigError(f"sprite aspect must lie in [0.1, 1], got {self.aspect}")
            if self.shape == "polygon" and self.vertices < 3:
                raise ConfigError("polygon sprite needs at least 3 vertices")


@dataclass(frozen=True)
class SynthConfig:
    """Full description of a synthetic sequence.

    ``mode`` selects the camera: ``"continuous"`` interpolates the viewport
    linearly between two jittered endpoint quads, ``"random"`` re-jitters
    every frame.  ``jitter`` is the vertex jitter amplitude as a fraction
    of the frame side.  ``static_interval = (a, b)`` freezes the sprite
    pose over frames ``a..b`` inclusive; ``brightness = (f0, f1)`` applies
    a linear multiplicative intensity drift across the sequence.
    """

    mode: str = "continuous"
    length: int = 29
    frame_size: tuple[int, int] = (256, 256)
    source_scale: float = 2.0
    jitter: float = 0.05
    static_interval: tuple[int, int] | None = None
    brightness: tuple[float, float] | None = None
    sprite: SpriteConfig = field(default_factory=SpriteConfig)
    grid_m: int = 64
    grid_n: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("continuous", "random"):
            raise ConfigError(f"unknown camera mode {self.mode!r}")
        if self.length < 2:
            raise ConfigError(f"sequence length must be >= 2, got {self.length}")
        w, h = self.frame_size
        if w < 32 or h < 32:
            raise ConfigError(f"frame size must be at least 32 x 32, got {w} x {h}")
        if self.source_scale < 1.2:
            raise ConfigError("source_scale must be >= 1.2 to leave jitter margin")
        if not 0.0 <= self.jitter <= 0.25:
            raise ConfigError(f"jitter must lie in [0, 0.25], got {self.jitter}")
        margin = (self.source_scale - 1.0) * min(w, h) / 2.0
        if self.jitter * min(w, h) > margin - 2.0:
            raise ConfigError(
                f"jitter amplitude {self.jitter * min(w, h):.1f} px exceeds the "
                f"source margin {margin:.1f} px; increase source_scale"
            )
        if self.static_interval is not None:
            a, b = self.static_interval
            if not (0 <= a <= b <= self.length - 1):
                raise ConfigError(
                    f"static_interval must satisfy 0 <= a <= b < length, got ({a}, {b})"
                )
        if self.brightness is not None:
            f0, f1 = self.brightness
            if f0 <= 0.0 or f1 <= 0.0:
                raise ConfigError("brightness factors must be positive")
        if self.grid_m < 2 or self.grid_n < 2:
            raise ConfigError("grid must be at least 2 x 2")

    @property
    def source_size(self) -> tuple[int, int]:
        w, h = self.frame_size
        return int(round(self.source_scale * w)), int(round(self.source_scale * h))


@dataclass
class SyntheticSequence:
    """A generated sequence plus all of its exact ground truth.

    ``homographies[t]`` maps frame-``t`` normalized coordinates to frame
    ``t+1``; ``flows[t]`` is the matching dense forward flow with the
    sprite's rigid motion composited in; ``inlier_maps[t]`` flags the grid
    points that follow the background model.  ``viewports`` are the
    per-frame source-pixel quads the homographies derive from.
    """

    frames: list[np.ndarray]
    masks: list[np.ndarray]
    flows: list[np.ndarray]
    homographies: list[np.ndarray]
    inlier_maps: list[np.ndarray]
    viewports: np.ndarray
    config: SynthConfig


# ---------------------------------------------------------------------------
# Quadrilaterals
# ---------------------------------------------------------------------------

def quad_is_convex(quad) -> bool:
    """Strict convexity test (no three vertices collinear)."""
    q = np.asarray(quad, dtype=np.float64)
    if q.shape != (4, 2):
        raise ValueError(f"quad must have shape (4, 2), got {q.shape}")
    edges = np.roll(q, -1, axis=0) - q
    crosses = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(
        edges, -1, axis=0
    )[:, 0]
    scale = float((edges ** 2).sum(axis=1).max())
    if scale <= 0.0:
        return False
    if np.any(np.abs(crosses) <= 1e-9 * scale):
        return False
    return bool(np.all(crosses > 0) or np.all(crosses < 0))


def quad_to_homography(src_quad, dst_quad) -> np.ndarray:
    """Exact homography sending one convex quadrilateral onto another.

    Both quads are ``(4, 2)`` vertex arrays in matching order.  Solved as a
    four-point DLT system, so each source vertex lands on its destination
    vertex to machine precision (best conditioned for coordinates near unit
    scale).  Degenerate quads (non-convex or with collinear vertices) raise
    :class:`DegenerateConfigurationError`.
    """
    src = np.asarray(src_quad, dtype=np.float64)
    dst = np.asarray(dst_quad, dtype=np.float64)
    for name, q in (("source", src), ("destination", dst)):
        if not quad_is_convex(q):
            raise DegenerateConfigurationError(
                f"{name} quadrilateral is degenerate (non-convex or collinear)"
            )
    corr = Correspondences(src, dst)
    return solve_weighted_dlt(build_dlt_matrix(corr), np.ones(4))


def viewport_pair_homography(quad_t, quad_t1, source_size) -> np.ndarray:
    """Frame-to-frame background homography of two stored viewports.

    Given consecutive viewport quads in source-pixel coordinates, returns
    the canonical homography mapping frame-``t`` normalized coordinates to
    frame-``t+1``.  This is the exact function the generator uses, so
    recomputing it from a sequence's stored viewports reproduces its
    ``homographies`` bit for bit.
    """
    sw, sh = source_size
    v_t = quad_to_homography(FRAME_CORNERS, pixels_to_normalized(quad_t, sw, sh))
    v_t1 = quad_to_homography(FRAME_CORNERS, pixels_to_normalized(quad_t1, sw, sh))
    return canonicalize_homography(np.linalg.inv(v_t1) @ v_t)


# ---------------------------------------------------------------------------
# Texture and sprite
# ---------------------------------------------------------------------------

def _textured_canvas(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Smooth multi-scale noise texture, RGB in ``[0.02, 0.98]``."""
    luma = np.zeros((height, width))
    for sigma, gain in ((2.0, 0.6), (6.0, 1.2), (16.0, 2.0)):
        luma += gain * ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma)
    lo, hi = float(luma.min()), float(luma.max())
    luma = (luma - lo) / (hi - lo + 1e-12)

    canvas = np.empty((height, width, 3))
    for c in range(3):
        chroma = ndimage.gaussian_filter(rng.standard_normal((height, width)), 24.0)
        chroma /= np.abs(chroma).max() + 1e-12
        canvas[:, :, c] = 0.10 + 0.78 * luma + 0.08 * chroma
    return np.clip(canvas, 0.02, 0.98)


class _Sprite:
    """Pose track and rasterizer for the independently moving object."""

    def __init__(
        self,
        cfg: SpriteConfig,
        synth: SynthConfig,
        rng_texture: np.random.Generator,
        rng_track: np.random.Generator,
    ):
        self.cfg = cfg
        width, height = synth.frame_size
        self.rx = float(cfg.size)
        self.ry = float(cfg.size * cfg.aspect)

        side = 2 * int(np.ceil(self.rx)) + 9
        self.texture = _textured_canvas(rng_texture, side, side)
        self.tex_center = (side - 1) / 2.0

        margin = self.rx + 4.0
        lo = margin
        hi_x, hi_y = width - 1.0 - margin, height - 1.0 - margin
        if hi_x <= lo or hi_y <= lo:
            raise ConfigError(
                f"sprite of size {cfg.size} px does not fit a {width} x {height} frame"
            )

        if cfg.start is None:
            fx, fy = rng_track.uniform(0.30, 0.70, size=2)
            center = np.array([fx * (width - 1.0), fy * (height - 1.0)])
        else:
            center = np.asarray(cfg.start, dtype=np.float64)
        center = np.clip(center, [lo, lo], [hi_x, hi_y])

        velocity = np.asarray(cfg.velocity, dtype=np.float64).copy()
        omega = np.deg2rad(cfg.angular_velocity)
        theta = 0.0
        frozen = synth.static_interval

        self.poses = [(center.copy(), theta)]
        for t in range(1, synth.length):
            if frozen is not None and frozen[0] < t <= frozen[1]:
                self.poses.append(self.poses[-1])
                continue
            center = center + velocity
            for axis, hi in ((0, hi_x), (1, hi_y)):
                if center[axis] < lo:
                    center[axis] = 2.0 * lo - center[axis]
                    velocity[axis] = -velocity[axis]
                elif center[axis] > hi:
                    center[axis] = 2.0 * hi - center[axis]
                    velocity[axis] = -velocity[axis]
            theta = theta + omega
            self.poses.append((center.copy(), theta))

    def _local_coords(self, t: int, gx: np.ndarray, gy: np.ndarray):
        (cx, cy), theta = self.poses[t][0], self.poses[t][1]
        dx, dy = gx - cx, gy - cy
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        lx = cos_t * dx + sin_t * dy
        ly = -sin_t * dx + cos_t * dy
        return lx, ly

    def mask(self, t: int, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
        lx, ly = self._local_coords(t, gx, gy)
        if self.cfg.shape == "ellipse":
            return (lx / self.rx) ** 2 + (ly / self.ry) ** 2 <= 1.0
        # Regular polygon, squashed by the aspect ratio.
        ux, uy = lx, ly / self.cfg.aspect
        radius = np.hypot(ux, uy)
        phi = np.arctan2(uy, ux)
        k = self.cfg.vertices
        sector = 2.0 * np.pi / k
        delta = np.mod(phi, sector) - sector / 2.0
        boundary = self.rx * np.cos(sector / 2.0) / np.cos(delta)
        return radius <= boundary

    def colors(self, t: int, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
        lx, ly = self._local_coords(t, gx, gy)
        values, _ = bilinear_sample(
            self.texture, lx + self.tex_center, ly + self.tex_center
        )
        return values

    def displace(self, t: int, gx: np.ndarray, gy: np.ndarray):
        """Rigid-motion image of pixel positions from frame t to t+1."""
        (c0, th0) = self.poses[t]
        (c1, th1) = self.poses[t + 1]
        dth = th1 - th0
        cos_d, sin_d = np.cos(dth), np.sin(dth)
        dx, dy = gx - c0[0], gy - c0[1]
        nx = c1[0] + cos_d * dx - sin_d * dy
        ny = c1[1] + sin_d * dx + cos_d * dy
        return nx, ny


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def _generate_viewports(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    width, height = cfg.frame_size
    sw, sh = cfg.source_size
    x0, y0 = (sw - width) / 2.0, (sh - height) / 2.0
    base = np.array(
        [
            [x0, y0],
            [x0 + width - 1.0, y0],
            [x0 + width - 1.0, y0 + height - 1.0],
            [x0, y0 + height - 1.0],
        ]
    )
    amplitude = cfg.jitter * min(width, height)
    if amplitude == 0.0:
        return np.tile(base, (cfg.length, 1, 1))

    def jittered() -> np.ndarray:
        for _ in range(200):
            quad = base + rng.uniform(-amplitude, amplitude, size=(4, 2))
            if quad_is_convex(quad):
                return quad
        raise ConfigError("could not draw a convex viewport; lower the jitter")

    if cfg.mode == "random":
        return np.stack([jittered() for _ in range(cfg.length)])

    # Continuous camera: interpolate linearly between two jittered endpoints,
    # redrawing until every intermediate quad stays convex.
    steps = np.linspace(0.0, 1.0, cfg.length)[:, None, None]
    for _ in range(200):
        first, last = jittered(), jittered()
        quads = (1.0 - steps) * first[None] + steps * last[None]
        if all(quad_is_convex(q) for q in quads):
            return quads
    raise ConfigError("could not draw a convex viewport path; lower the jitter")


def _render_view(source: np.ndarray, view: np.ndarray, width: int, height: int) -> np.ndarray:
    sh, sw = source.shape[:2]
    gx, gy = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    src_norm = apply_homography(view, pixels_to_normalized(pts, width, height))
    src_px = normalized_to_pixels(src_norm, sw, sh)
    values, valid = bilinear_sample(source, src_px[:, 0], src_px[:, 1])
    if not np.all(valid):
        raise AssertionError("internal error: viewport sampled outside the source")
    return values.reshape(height, width, 3)


def generate_sequence(config: SynthConfig | None = None) -> SyntheticSequence:
    """Generate a fully ground-truthed synthetic sequence.

    Deterministic in ``config.seed``; independent seed streams drive the
    background texture, the sprite texture, the camera path, and the sprite
    trajectory, so (for example) changing the camera jitter never changes
    the sprite's track or appearance.
    """
    cfg = config or SynthConfig()
    width, height = cfg.frame_size
    sw, sh = cfg.source_size

    streams = np.random.SeedSequence(cfg.seed).spawn(4)
    rng_bg = np.random.default_rng(streams[0])
    rng_sprite_tex = np.random.default_rng(streams[1])
    rng_view = np.random.default_rng(streams[2])
    rng_track = np.random.default_rng(streams[3])

    source = _textured_canvas(rng_bg, sh, sw)
    viewports = _generate_viewports(cfg, rng_view)
    views = [
        quad_to_homography(FRAME_CORNERS, pixels_to_normalized(q, sw, sh))
        for q in viewports
    ]
    sprite = (
        None
        if cfg.sprite.shape == "none"
        else _Sprite(cfg.sprite, cfg, rng_sprite_tex, rng_track)
    )

    gx, gy = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    grid_px = np.column_stack([gx.ravel(), gy.ravel()])
    grid_norm = pixels_to_normalized(grid_px, width, height)

    frames: list[np.ndarray] = []
    masks: list[np.ndarray] = []
    for t in range(cfg.length):
        frame = _render_view(source, views[t], width, height)
        if sprite is not None:
            mask = sprite.mask(t, gx, gy)
            frame = np.where(mask[:, :, None], sprite.colors(t, gx, gy), frame)
        else:
            mask = np.zeros((height, width), dtype=bool)
        frames.append(frame)
        masks.append(mask)

    homographies: list[np.ndarray] = []
    flows: list[np.ndarray] = []
    inlier_maps: list[np.ndarray] = []
    src_grid_norm = normalized_grid(width, height, cfg.grid_m, cfg.grid_n)
    src_grid_px = normalized_to_pixels(src_grid_norm, width, height)
    col = np.rint(src_grid_px[:, 0]).astype(np.intp)
    row = np.rint(src_grid_px[:, 1]).astype(np.intp)

    # Anchor the flow at the round-tripped grid and evaluate the homography
    # with its corner entry scaled to exactly 1: a static pair (canonical
    # identity) then maps every point bit-for-bit onto itself and its flow
    # is exactly zero, not 1-ulp rounding noise.
    grid_anchor_px = normalized_to_pixels(grid_norm, width, height)
    for t in range(cfg.length - 1):
        h_t = viewport_pair_homography(viewports[t], viewports[t + 1], (sw, sh))
        homographies.append(h_t)

        h_eval = h_t / h_t[2, 2] if abs(h_t[2, 2]) > 1e-6 else h_t
        target_norm = apply_homography(h_eval, grid_norm)
        target_px = normalized_to_pixels(target_norm, width, height)
        flow = (target_px - grid_anchor_px).reshape(height, width, 2)
        if sprite is not None:
            nx, ny = sprite.displace(t, gx, gy)
            sprite_flow = np.stack([nx - gx, ny - gy], axis=-1)
            flow = np.where(masks[t][:, :, None], sprite_flow, flow)
        flows.append(flow)
        inlier_maps.append(~masks[t][row, col].reshape(cfg.grid_m, cfg.grid_n))

    if cfg.brightness is not None:
        factors = np.linspace(cfg.brightness[0], cfg.brightness[1], cfg.length)
        frames = [np.clip(f * k, 0.0, 1.0) for f, k in zip(frames, factors)]

    return SyntheticSequence(
        frames=frames,
        masks=masks,
        flows=flows,
        homographies=homographies,
        inlier_maps=inlier_maps,
        viewports=viewports,
        config=cfg,
    )


def make_pair(config: SynthConfig | None = None) -> SyntheticSequence:
    """Two-frame convenience wrapper around :func:`generate_sequence`."""
    cfg = config or SynthConfig()
    if cfg.length != 2:
        cfg = _replace_length(cfg, 2)
    return generate_sequence(cfg)


def _replace_length(cfg: SynthConfig, length: int) -> SynthConfig:
    payload = asdict(cfg)
    payload["length"] = length
    return config_from_dict(payload)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def config_from_dict(payload: dict) -> SynthConfig:
    """Rebuild a :class:`SynthConfig` from its ``asdict`` representation."""
    data = dict(payload)
    unknown = set(data) - {f for f in SynthConfig.__dataclass_fields__}
    if unknown:
        raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
    if "sprite" in data and data["sprite"] is not None:
        sprite = dict(data["sprite"])
        unknown = set(sprite) - {f for f in SpriteConfig.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown sprite config keys: {sorted(unknown)}")
        for key in ("velocity", "start"):
            if sprite.get(key) is not None:
                sprite[key] = tuple(sprite[key])
        data["sprite"] = SpriteConfig(**sprite)
    for key in ("frame_size", "static_interval", "brightness"):
        if data.get(key) is not None:
            data[key] = tuple(data[key])
    return SynthConfig(**data)


def save_sequence(sequence: SyntheticSequence, outdir: str | PathLike) -> Path:
    """Write a sequence and its ground truth into a directory.

    Layout: ``frame_%04d.png``, ``mask_%04d.png`` per frame;
    ``flow_%04d.flo`` per pair (float32); ``homographies.json`` with the
    per-pair matrices and the viewport quads; ``inliers.json`` with the
    grid inlier maps; ``meta.json`` with the generating configuration.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(sequence.frames):
        write_image(frame, out / f"frame_{t:04d}.png")
    for t, mask in enumerate(sequence.masks):
        write_mask(mask, out / f"mask_{t:04d}.png")
    for t, flow in enumerate(sequence.flows):
        write_flo(flow.astype(np.float32), out / f"flow_{t:04d}.flo")

    width, height = sequence.config.frame_size
    with open(out / "homographies.json", "w") as fh:
        json.dump(
            {
                "frame_size": [width, height],
                "source_size": list(sequence.config.source_size),
                "matrices": [h.ravel().tolist() for h in sequence.homographies],
                "viewports": sequence.viewports.tolist(),
            },
            fh,
            indent=2,
            sort_keys=True,
        )
    with open(out / "inliers.json", "w") as fh:
        json.dump(
            {
                "grid_shape": [sequence.config.grid_m, sequence.config.grid_n],
                "maps": [m.astype(int).tolist() for m in sequence.inlier_maps],
            },
            fh,
            indent=2,
            sort_keys=True,
        )
    with open(out / "meta.json", "w") as fh:
        json.dump(
            {"format": _META_FORMAT, "config": asdict(sequence.config)},
            fh,
            indent=2,
            sort_keys=True,
        )
    return out


def load_sequence(directory: str | PathLike) -> SyntheticSequence:
    """Load a directory written by :func:`save_sequence`.

    Frames come back 8-bit quantized and flows float32 — exactly what the
    CLI consumes; the JSON ground truth round-trips at full precision.
    """
    root = Path(directory)
    with open(root / "meta.json") as fh:
        meta = json.load(fh)
    if meta.get("format") != _META_FORMAT:
        raise ConfigError(f"{root}: not a synthetic sequence directory")
    cfg = config_from_dict(meta["config"])

    frames = [read_image(root / f"frame_{t:04d}.png") for t in range(cfg.length)]
    masks = [read_mask(root / f"mask_{t:04d}.png") for t in range(cfg.length)]
    flows = [
        np.asarray(read_flo(root / f"flow_{t:04d}.flo"), dtype=np.float64)
        for t in range(cfg.length - 1)
    ]
    with open(root / "homographies.json") as fh:
        hdata = json.load(fh)
    homographies = [
        np.asarray(m, dtype=np.float64).reshape(3, 3) for m in hdata["matrices"]
    ]
    viewports = np.asarray(hdata["viewports"], dtype=np.float64)
    with open(root / "inliers.json") as fh:
        idata = json.load(fh)
    inlier_maps = [np.asarray(m, dtype=bool) for m in idata["maps"]]

    return SyntheticSequence(
        frames=frames,
        masks=masks,
        flows=flows,
        homographies=homographies,
        inlier_maps=inlier_maps,
        viewports=viewports,
        config=cfg,
    )
