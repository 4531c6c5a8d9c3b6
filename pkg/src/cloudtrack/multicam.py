"""Multicamera front-end: segmentation, three-view pixel matching, DLT.

Grayscale sequences from three synchronized cameras are segmented by median
background subtraction over a sliding window; active pixels are matched
across cameras by walking epipolar bands (so the expected cost is linear in
the pixel count) and validated by the RMS reprojection error of their DLT
triangulation. Accepted triplets become the 3D points of a FrameCloud.
Matching is deliberately not one-to-one: ghost triplets are allowed here and
removed downstream by trajectory length and Y-cuts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import FrameCloud


@dataclass
class CameraModel:
    """Finite projective camera: 3x4 projection plus image size."""

    P: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64).reshape(3, 4)
        if abs(np.linalg.det(self.P[:, :3])) < 1e-12:
            raise ValueError("camera matrix is not finite (singular 3x3 block)")

    @property
    def center(self) -> np.ndarray:
        return -np.linalg.solve(self.P[:, :3], self.P[:, 3])

    def project(self, points: np.ndarray) -> np.ndarray:
        """(N,3) world points -> (N,2) pixel (u, v) = (col, row)."""
        pts = np.atleast_2d(points)
        h = np.hstack([pts, np.ones((len(pts), 1))]) @ self.P.T
        return h[:, :2] / h[:, 2:3]


def look_at_camera(position, target, focal_px, width, height, up=(0.0, 0.0, 1.0)) -> CameraModel:
    """Convenience constructor: camera at `position` looking at `target`."""
    position = np.asarray(position, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - position
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, [0.0, 1.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    K = np.array(
        [[focal_px, 0, (width - 1) / 2], [0, focal_px, (height - 1) / 2], [0, 0, 1.0]]
    )
    P = K @ np.hstack([R, -(R @ position)[:, None]])
    return CameraModel(P=P, width=width, height=height)


def validate_rig(cams) -> None:
    """Three-view matching needs non-collinear camera centers."""
    if len(cams) < 2:
        raise ValueError("need at least two cameras")
    centers = np.array([c.center for c in cams])
    if len(cams) >= 3:
        v1 = centers[1] - centers[0]
        v2 = centers[2] - centers[0]
        if np.linalg.norm(np.cross(v1, v2)) < 1e-9 * max(np.linalg.norm(v1), 1.0):
            raise ValueError("degenerate camera configuration: collinear centers")


def fundamental(cam_a: CameraModel, cam_b: CameraModel) -> np.ndarray:
    """F with x_b^T F x_a = 0 for corresponding pixels."""
    e_b = cam_b.P @ np.append(cam_a.center, 1.0)
    ex = np.array([[0, -e_b[2], e_b[1]], [e_b[2], 0, -e_b[0]], [-e_b[1], e_b[0], 0]])
    return ex @ cam_b.P @ np.linalg.pinv(cam_a.P)


@dataclass
class PixelSet:
    frame: int
    camera: int
    pixels: np.ndarray  # (N, 2) int, (row, col)
    truncated: bool = False  # background window clipped at a sequence end


def segment(window, center_index: int, tau: float, frame: int = 0, camera: int = 0,
            truncated: bool = False) -> PixelSet:
    """Active pixels of the window's central frame by median background
    subtraction: |I - median| > tau (tau normalized to [0, 1])."""
    if len(window) < 3 or len(window) % 2 == 0:
        raise ValueError("segmentation window must be odd and >= 3")
    if tau <= 0:
        raise ValueError("segmentation threshold must be positive")
    stack = np.stack([np.asarray(f, dtype=np.int16) for f in window])
    background = np.sort(stack, axis=0)[(len(window) - 1) // 2]
    active = np.abs(stack[center_index] - background) > tau * 255.0
    rows, cols = np.nonzero(active)
    return PixelSet(
        frame=frame,
        camera=camera,
        pixels=np.column_stack([rows, cols]).astype(np.int64),
        truncated=truncated,
    )


class _PixelGrid:
    """Bucket pixels into square cells for band and disc queries."""

    def __init__(self, pixels: np.ndarray, cell: float):
        self.cell = cell
        self.pixels = pixels
        self.cells: dict[tuple[int, int], list[int]] = {}
        for i, (r, c) in enumerate(pixels):
            self.cells.setdefault((int(r // cell), int(c // cell)), []).append(i)

    def near_cells(self, keys) -> np.ndarray:
        found: list[int] = []
        for key in keys:
            members = self.cells.get(key)
            if members:
                found.extend(members)
        return np.array(sorted(set(found)), dtype=np.int64)

    def around(self, r: float, c: float) -> list[tuple[int, int]]:
        kr, kc = int(np.floor(r / self.cell)), int(np.floor(c / self.cell))
        return [(kr + dr, kc + dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)]


def _hom(pixels: np.ndarray) -> np.ndarray:
    """(N,2) row/col pixels -> homogeneous (u, v, 1) image points."""
    return np.column_stack([pixels[:, 1], pixels[:, 0], np.ones(len(pixels))]).astype(np.float64)


def _line_point_distance(line: np.ndarray, pts_h: np.ndarray) -> np.ndarray:
    return np.abs(pts_h @ line) / np.hypot(line[0], line[1])


def _band_candidates(grid: _PixelGrid, line: np.ndarray, width: int, height: int,
                     band: float) -> np.ndarray:
    """Pixel indices within `band` of the epipolar line, gathered by walking
    grid cells along the line."""
    a, b, c = line
    cell = grid.cell
    keys = set()
    if abs(b) >= abs(a):  # closer to horizontal: sample columns
        for u in np.arange(-cell, width + cell, cell):
            v = -(a * u + c) / b
            if -2 * cell <= v <= height + 2 * cell:
                keys.update(grid.around(v, u))
    else:
        for v in np.arange(-cell, height + cell, cell):
            u = -(b * v + c) / a
            if -2 * cell <= u <= width + 2 * cell:
                keys.update(grid.around(v, u))
    cand = grid.near_cells(sorted(keys))
    if not len(cand):
        return cand
    d = _line_point_distance(line, _hom(grid.pixels[cand]))
    return cand[d <= band]


def epipolar_pairs(px_a: np.ndarray, px_b: np.ndarray, cam_a: CameraModel, cam_b: CameraModel,
                   band: float) -> list[tuple[int, int]]:
    """Candidate pixel pairs within an epipolar band of each other.

    This is the two-view stage of the matcher: with only two cameras, two
    targets on the same epipolar plane yield four candidates (two of them
    ghosts); the third view prunes those.
    """
    F = fundamental(cam_a, cam_b)
    grid = _PixelGrid(px_b, cell=max(8.0, 2.0 * band)) if len(px_b) else None
    pairs = []
    ha = _hom(px_a) if len(px_a) else np.empty((0, 3))
    for i in range(len(px_a)):
        if grid is None:
            break
        line = F @ ha[i]
        for j in _band_candidates(grid, line, cam_b.width, cam_b.height, band):
            pairs.append((i, int(j)))
    return pairs


def triangulate_dlt(pixels, cams) -> tuple[np.ndarray, float, bool]:
    """DLT triangulation from >= 2 views.

    Returns (point, rms reprojection error, low_confidence). The flag is set
    when the two smallest singular values nearly coincide (degenerate rays)
    or the solution lies near the plane at infinity.
    """
    if len(pixels) < 2 or len(pixels) != len(cams):
        raise ValueError("need one pixel per camera and at least two views")
    rows = []
    for (r, c), cam in zip(pixels, cams):
        u, v = float(c), float(r)
        rows.append(u * cam.P[2] - cam.P[0])
        rows.append(v * cam.P[2] - cam.P[1])
    A = np.array(rows)
    _, s, vt = np.linalg.svd(A)
    h = vt[-1]
    low_conf = (s[-2] - s[-1]) <= 1e-9 * s[0] or abs(h[3]) <= 1e-12 * np.linalg.norm(h[:3])
    if abs(h[3]) < 1e-300:
        return np.full(3, np.inf), np.inf, True
    point = h[:3] / h[3]
    errs = []
    for (r, c), cam in zip(pixels, cams):
        uv = cam.project(point[None, :])[0]
        errs.append((uv[0] - c) ** 2 + (uv[1] - r) ** 2)
    rms = float(np.sqrt(np.mean(errs)))
    return point, rms, bool(low_conf)


@dataclass
class MatchedTriplet:
    indices: tuple[int, int, int]  # rows into the three PixelSets
    point: np.ndarray
    error: float


def match_pixels(p1: PixelSet, p2: PixelSet, p3: PixelSet, cams, max_error: float
                 ) -> list[MatchedTriplet]:
    """Triplets of active pixels consistent across the three views.

    Candidates are generated by the epipolar band of camera 1 in camera 2,
    then gated in camera 3 near the intersection of the two transferred
    epipolar lines; a triplet is accepted when the RMS reprojection error of
    its triangulation stays below `max_error`. Triplets are not forced
    one-to-one.
    """
    if max_error <= 0:
        raise ValueError("max_error must be positive")
    validate_rig(cams)
    cam1, cam2, cam3 = cams
    out: list[MatchedTriplet] = []
    if not (len(p1.pixels) and len(p2.pixels) and len(p3.pixels)):
        return out
    F12 = fundamental(cam1, cam2)
    F13 = fundamental(cam1, cam3)
    F23 = fundamental(cam2, cam3)
    grid2 = _PixelGrid(p2.pixels, cell=max(8.0, 2.0 * max_error))
    grid3 = _PixelGrid(p3.pixels, cell=max(8.0, 3.0 * max_error))
    h1 = _hom(p1.pixels)
    h2 = _hom(p2.pixels)
    h3 = _hom(p3.pixels)
    for i in range(len(p1.pixels)):
        l2 = F12 @ h1[i]
        cands2 = _band_candidates(grid2, l2, cam2.width, cam2.height, max_error)
        if not len(cands2):
            continue
        l3a = F13 @ h1[i]
        for j in cands2:
            l3b = F23 @ h2[j]
            q = np.cross(l3a, l3b)
            if abs(q[2]) < 1e-12 * max(np.linalg.norm(l3a), 1.0):
                continue  # parallel transferred lines: no stable gate point
            qu, qv = q[0] / q[2], q[1] / q[2]
            keys = grid3.around(qv, qu)
            cands3 = grid3.near_cells(keys)
            if not len(cands3):
                continue
            d_a = _line_point_distance(l3a, h3[cands3])
            d_b = _line_point_distance(l3b, h3[cands3])
            for k in cands3[(d_a <= max_error) & (d_b <= max_error)]:
                point, rms, low_conf = triangulate_dlt(
                    [p1.pixels[i], p2.pixels[j], p3.pixels[k]], cams
                )
                if rms < max_error and not low_conf:
                    out.append(MatchedTriplet(indices=(i, int(j), int(k)), point=point, error=rms))
    return out


@dataclass
class FrameStats:
    frame: int
    active: tuple[int, int, int]
    triplets: int
    rejected: int
    truncated: bool


def reconstruct_sequence(sequences, cams, tau: float, window: int, max_error: float
                         ) -> tuple[list[FrameCloud], list[FrameStats]]:
    """Segment, match, and triangulate three synchronized image sequences."""
    validate_rig(cams)
    lengths = {len(s) for s in sequences}
    if len(lengths) != 1:
        raise ValueError("sequences must have equal length")
    n_frames = lengths.pop()
    if window % 2 == 0 or window < 3:
        raise ValueError("segmentation window must be odd and >= 3")
    half = window // 2
    clouds = []
    stats = []
    for f in range(n_frames):
        lo = max(0, f - half)
        hi = min(n_frames, f + half + 1)
        truncated = hi - lo < window
        sets = []
        for ci, seq in enumerate(sequences):
            win = seq[lo:hi]
            sets.append(
                segment(win, f - lo, tau, frame=f, camera=ci, truncated=truncated)
            )
        triplets = match_pixels(sets[0], sets[1], sets[2], cams, max_error)
        points = np.array([t.point for t in triplets]).reshape(-1, 3)
        clouds.append(FrameCloud(frame=f, points=points))
        stats.append(
            FrameStats(
                frame=f,
                active=tuple(len(s.pixels) for s in sets),
                triplets=len(triplets),
                rejected=0,
                truncated=truncated,
            )
        )
    return clouds, stats


def read_pgm(path) -> np.ndarray:
    """8-bit binary PGM (P5)."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    i = 0
    while len(tokens) < 4:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported")
    raster = data[i + 1 : i + 1 + width * height]
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(image: np.ndarray, path) -> None:
    image = np.asarray(image, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode())
        fh.write(image.tobytes())


def load_calibration(path) -> list[CameraModel]:
    """Structured text: per camera a `camera i` line, `size W H`, and `P`
    followed by the 12 projection entries in row-major order."""
    cams: list[CameraModel] = []
    size = None
    P = None

    def flush(line_no):
        nonlocal size, P
        if size is None or P is None:
            raise ValueError(f"{path}:{line_no}: incomplete camera block")
        cams.append(CameraModel(P=np.array(P).reshape(3, 4), width=size[0], height=size[1]))
        size = P = None

    started = False
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#")[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "camera":
                if started:
                    flush(line_no)
                started = True
            elif parts[0] == "size":
                size = (int(parts[1]), int(parts[2]))
            elif parts[0] == "P":
                if len(parts) != 13:
                    raise ValueError(f"{path}:{line_no}: P needs 12 entries")
                P = [float(v) for v in parts[1:]]
            else:
                raise ValueError(f"{path}:{line_no}: unknown key {parts[0]!r}")
    if started:
        flush(0)
    return cams


def save_calibration(cams, path) -> None:
    with open(path, "w") as fh:
        for i, cam in enumerate(cams):
            fh.write(f"camera {i}\n")
            fh.write(f"size {cam.width} {cam.height}\n")
            fh.write("P " + " ".join(repr(v) for v in cam.P.ravel()) + "\n")
