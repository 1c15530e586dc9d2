"""Synthetic microscope frames and the centroid mask tracker.

Rendering stands in for the camera: robots become bright discs on a dark
background at a fixed um-per-pixel scale.  Tracking is the classic
crop -> blur -> threshold band -> dilate -> center-of-mass pipeline with a
bounding box recentered on every hit and a 15-frame velocity window.
"""

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Optional, Tuple

import cv2
import numpy as np

DEFAULT_FRAME_WIDTH = 2448
DEFAULT_FRAME_HEIGHT = 2048
DEFAULT_FPS = 24.0
SENSOR_PITCH_UM = 3.45       # camera pixel pitch; um/px = pitch / magnification
VELOCITY_WINDOW = 15         # frames; balances noise against responsiveness
LOST_TRACK_LIMIT = 24        # consecutive empty masks (1 s) before a track goes stale

BACKGROUND_LEVEL = 16
DISC_LEVEL = 230
RIM_LEVEL = 120  # 1 px dim edge; thresholding above it keeps touching discs apart


@dataclass(frozen=True)
class Optics:
    """Camera and objective geometry.  um_per_px normally derives from the
    objective magnification; pass it explicitly to pin a round number."""

    magnification: float = 10.0
    um_per_px: Optional[float] = None
    frame_width: int = DEFAULT_FRAME_WIDTH
    frame_height: int = DEFAULT_FRAME_HEIGHT
    fps: float = DEFAULT_FPS

    @property
    def scale(self) -> float:
        if self.um_per_px is not None:
            if self.um_per_px <= 0:
                raise ValueError("um_per_px must be positive")
            return self.um_per_px
        return SENSOR_PITCH_UM / self.magnification

    def world_to_px(self, x_um: float, y_um: float) -> Tuple[float, float]:
        s = self.scale
        return (self.frame_width / 2.0 + x_um / s, self.frame_height / 2.0 + y_um / s)

    def px_to_world(self, x_px: float, y_px: float) -> Tuple[float, float]:
        s = self.scale
        return ((x_px - self.frame_width / 2.0) * s, (y_px - self.frame_height / 2.0) * s)


@dataclass
class Frame:
    pixels: np.ndarray       # uint8 grayscale, shape (height, width)
    frame_index: int
    timestamp: float         # frame_index / fps

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class MaskParams:
    crop_length: int = 48
    blur: int = 1            # box kernel radius, px; 0 disables
    dilation: int = 0        # structuring element radius, px; 0 disables
    lower_thresh: int = 100
    upper_thresh: int = 255

    def __post_init__(self):
        if self.crop_length <= 0:
            raise ValueError("crop_length must be positive")
        if self.lower_thresh > self.upper_thresh:
            raise ValueError("lower_thresh must not exceed upper_thresh")


def render_frame(world, optics: Optics, frame_index: int = 0) -> Frame:
    """Rasterize the world: a bright disc per robot with a 1 px dim rim,
    radius scaled by the optics.

    Disc membership uses a strict inequality, and masking above RIM_LEVEL
    sees only the interiors, so two spheres in surface contact segment as
    two blobs at every subpixel phase.
    """
    h, w = optics.frame_height, optics.frame_width
    pixels = np.full((h, w), BACKGROUND_LEVEL, dtype=np.uint8)
    for r in world.robots:
        cx, cy = optics.world_to_px(r.x, r.y)
        r_px = r.radius_um / optics.scale
        x0 = max(0, int(math.floor(cx - r_px)) - 1)
        x1 = min(w, int(math.ceil(cx + r_px)) + 2)
        y0 = max(0, int(math.floor(cy - r_px)) - 1)
        y1 = min(h, int(math.ceil(cy + r_px)) + 2)
        if x0 >= x1 or y0 >= y1:
            continue
        ys, xs = np.mgrid[y0:y1, x0:x1]
        d2 = (xs - cx) ** 2 + (ys - cy) ** 2
        region = pixels[y0:y1, x0:x1]
        region[d2 < r_px * r_px] = RIM_LEVEL
        core = max(r_px - 1.0, 0.0)
        region[d2 < core * core] = DISC_LEVEL
    return Frame(pixels, frame_index, frame_index / optics.fps)


def write_pgm(frame: Frame, path) -> None:
    """Binary PGM (P5), maxval 255, rows top to bottom."""
    with open(path, "wb") as f:
        f.write(f"P5 {frame.width} {frame.height} 255\n".encode())
        f.write(frame.pixels.tobytes())


def clip_bbox(bbox: Tuple[int, int, int], width: int, height: int):
    """Clip (x, y, side) to the frame; returns (x0, y0, x1, y1) or None if
    nothing remains."""
    x, y, side = bbox
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(width, x + side), min(height, y + side)
    if x0 >= x1 or y0 >= y1:
        return None
    return (x0, y0, x1, y1)


def segment(frame: Frame, bbox: Tuple[int, int, int], params: MaskParams) -> np.ndarray:
    """Binary mask (uint8 0/255) over the crop.  A degenerate bbox yields a
    zero-size mask; an in-range but featureless crop yields an all-black one."""
    clipped = clip_bbox(bbox, frame.width, frame.height)
    if clipped is None:
        return np.zeros((0, 0), dtype=np.uint8)
    x0, y0, x1, y1 = clipped
    crop = frame.pixels[y0:y1, x0:x1]
    if params.blur > 0:
        k = 2 * params.blur + 1
        crop = cv2.blur(crop, (k, k))
    mask = cv2.inRange(crop, params.lower_thresh, params.upper_thresh)
    if params.dilation > 0:
        k = 2 * params.dilation + 1
        mask = cv2.dilate(mask, np.ones((k, k), dtype=np.uint8))
    return mask


def centroid(mask: np.ndarray) -> Optional[Tuple[float, float]]:
    """Arithmetic mean of the white-pixel coordinates, (x, y) within the crop.
    None signals an empty mask (lost track)."""
    if mask.size == 0:
        return None
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        return None
    return (float(xs.mean()), float(ys.mean()))


@dataclass
class Track:
    """Vision-side estimate of one object."""

    bbox: Tuple[int, int, int]                    # (x, y, side), top-left px
    centroid: Tuple[float, float]                 # full-frame px
    params: MaskParams
    history: Deque[Tuple[float, float]] = field(
        default_factory=lambda: deque(maxlen=VELOCITY_WINDOW)
    )
    velocity: Optional[float] = None              # um/s; None until 2 samples
    velocity_vec: Optional[Tuple[float, float]] = None
    size_px: int = 0
    misses: int = 0
    stale: bool = False

    @staticmethod
    def from_click(x_px: float, y_px: float, params: MaskParams) -> "Track":
        """Seed a track from a user click near the object of interest."""
        side = params.crop_length
        bbox = (int(round(x_px - side / 2)), int(round(y_px - side / 2)), side)
        return Track(bbox=bbox, centroid=(x_px, y_px), params=params)

    def motion_direction(self) -> Optional[Tuple[float, float]]:
        """Unit vector of recent motion, or None while motion is negligible."""
        if self.velocity_vec is None:
            return None
        vx, vy = self.velocity_vec
        norm = math.hypot(vx, vy)
        if norm < 1e-9:
            return None
        return (vx / norm, vy / norm)

    def instant_direction(self, min_px: float = 0.5) -> Optional[Tuple[float, float]]:
        """Unit vector of the latest frame-to-frame displacement; unlike the
        windowed velocity it has no lag, so it can be paired with the command
        that caused the motion.  None while the step stays under min_px."""
        if len(self.history) < 2:
            return None
        (x0, y0), (x1, y1) = self.history[-2], self.history[-1]
        dx, dy = x1 - x0, y1 - y0
        norm = math.hypot(dx, dy)
        if norm < min_px:
            return None
        return (dx / norm, dy / norm)


def estimate_velocity(
    history, fps: float, um_per_px: float
) -> Optional[float]:
    """Finite-difference speed over the buffered window: endpoint displacement
    divided by the window span (n - 1 frame intervals).  None with fewer than
    two samples."""
    n = len(history)
    if n < 2:
        return None
    (x0, y0), (x1, y1) = history[0], history[-1]
    dist_um = math.hypot(x1 - x0, y1 - y0) * um_per_px
    return dist_um / ((n - 1) / fps)


def _select_component(
    mask: np.ndarray, ref_xy: Tuple[float, float]
) -> Optional[np.ndarray]:
    """Keep only the connected blob nearest the reference point (per-track
    nearest-centroid association); None if the mask is empty."""
    if mask.size == 0 or not mask.any():
        return None
    count, labels, stats, centers = cv2.connectedComponentsWithStats(mask)
    if count <= 1:
        return None
    best, best_d = None, None
    for lbl in range(1, count):
        cx, cy = centers[lbl]
        d = (cx - ref_xy[0]) ** 2 + (cy - ref_xy[1]) ** 2
        if best_d is None or d < best_d:
            best, best_d = lbl, d
    return (labels == best).astype(np.uint8) * 255


def update_track(track: Track, frame: Frame, optics: Optics) -> Track:
    """One tracker update: segment the crop, localize the nearest blob,
    recenter the bbox on it and refresh the velocity window.

    Empty masks keep the last bbox and flag the track stale after
    LOST_TRACK_LIMIT consecutive misses.
    """
    params = track.params
    clipped = clip_bbox(track.bbox, frame.width, frame.height)
    mask = segment(frame, track.bbox, params)
    ref = None
    if clipped is not None:
        ref = (track.centroid[0] - clipped[0], track.centroid[1] - clipped[1])
    blob = _select_component(mask, ref) if ref is not None else None
    if blob is None:
        track.misses += 1
        if track.misses >= LOST_TRACK_LIMIT:
            track.stale = True
        return track

    cx_crop, cy_crop = centroid(blob)
    x0, y0 = clipped[0], clipped[1]
    cx, cy = cx_crop + x0, cy_crop + y0
    side = params.crop_length
    track.bbox = (int(round(cx - side / 2)), int(round(cy - side / 2)), side)
    track.centroid = (cx, cy)
    track.size_px = int(np.count_nonzero(blob))
    track.misses = 0
    track.stale = False
    track.history.append((cx, cy))
    track.velocity = estimate_velocity(track.history, optics.fps, optics.scale)
    if len(track.history) >= 2:
        (hx0, hy0), (hx1, hy1) = track.history[0], track.history[-1]
        span = (len(track.history) - 1) / optics.fps
        track.velocity_vec = (
            (hx1 - hx0) * optics.scale / span,
            (hy1 - hy0) * optics.scale / span,
        )
    return track
