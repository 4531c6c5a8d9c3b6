"""Seeded synthetic scenes: ground-truth targets, engineered crossings,
injected ghosts, and rendering through synthetic cameras.

Targets move at constant speed with bounded random turning inside an arena.
Scripted crossings steer a pair smoothly (a cosine bump whose derivative
vanishes at the crossing frame, so crossing velocities stay distinct) to a
given minimum approach. Ghosts are short-lived clusters that shadow a host
track and aim their final prediction at the host, manufacturing exactly one
wrong temporal link (a Y-shape) per ghost.

All randomness derives from counter-based Philox streams keyed by (seed,
stream, frame, target), so outputs are bit-identical for a given seed under
any evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import FrameCloud
from .trajectories import Trajectory

_STREAM_PATH = 1
_STREAM_CLOUD = 2
_STREAM_GHOST = 3
_STREAM_RENDER = 4

_CLIP_SIGMA = 2.5  # target clouds are truncated at this many spreads


def _rng(seed: int, stream: int, a: int = 0, b: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(counter=[a, b, 0, 0], key=[seed, stream]))


@dataclass
class Crossing:
    a: int
    b: int
    frame: int
    approach: float  # minimum gap between the two point clouds at the frame


@dataclass
class GhostInfo:
    index: int
    target: int  # host track
    t0: int
    t1: int  # last ghost frame; the wrong link goes t1 -> t1+1

    @property
    def label(self) -> int:
        return -1 - self.index


@dataclass
class SceneConfig:
    n_targets: int
    n_frames: int
    bounds: tuple[float, float, float, float, float, float]
    speed_min: float
    speed_max: float
    points_per_target: int
    spread: float
    crossings: list[Crossing] = field(default_factory=list)
    ghost_rate: float = 0.0
    clearance: float = 0.0  # enforced pairwise target distance (0 = off)
    max_turn_deg: float = 3.0
    cross_rel_speed: float = 0.0  # relative-speed floor at scripted crossings
    seed: int = 0

    def __post_init__(self):
        if self.n_targets < 1 or self.n_frames < 2:
            raise ValueError("need at least one target and two frames")
        if not (0 < self.speed_min <= self.speed_max):
            raise ValueError("invalid speed range")
        if self.spread <= 0 or self.points_per_target < 1:
            raise ValueError("invalid target cloud parameters")
        lo = self.bounds[0::2]
        hi = self.bounds[1::2]
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("invalid arena bounds")


@dataclass
class Scene:
    config: SceneConfig
    centers: np.ndarray  # (T, n_targets, 3) ground-truth positions
    clouds: list[FrameCloud]
    labels: list[np.ndarray]  # per frame: target index per point, ghosts < 0
    ghosts: list[GhostInfo]


def _truncated_blob(rng, center, k, sigma) -> np.ndarray:
    pts = rng.standard_normal((k, 3)) * sigma
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    cap = _CLIP_SIGMA * sigma
    pts *= np.minimum(1.0, cap / np.maximum(norms, 1e-300))
    return center + pts


def _bump(t: np.ndarray, t_c: int, radius: int) -> np.ndarray:
    w = 0.5 * (1.0 + np.cos(np.pi * (t - t_c) / radius))
    return np.where(np.abs(t - t_c) <= radius, w, 0.0)


def _base_paths(config: SceneConfig, active) -> np.ndarray:
    """Constant-speed paths with bounded random turning.

    Walls and pairwise clearance are handled by smooth heading steering (no
    instantaneous velocity jumps, which would defeat any constant-velocity
    tracker); hard reflection/projection remains only as a rare backstop.
    `active(t)` names the target pairs excused from clearance at frame t.
    """
    n, T = config.n_targets, config.n_frames
    lo = np.array(config.bounds[0::2])
    hi = np.array(config.bounds[1::2])
    rng = _rng(config.seed, _STREAM_PATH)
    margin = 0.08 * (hi - lo)
    pos = lo + margin + rng.random((n, 3)) * (hi - lo - 2 * margin)
    speed = rng.uniform(config.speed_min, config.speed_max, size=n)[:, None]
    head = rng.standard_normal((n, 3))
    head /= np.linalg.norm(head, axis=1, keepdims=True)
    turn = np.deg2rad(config.max_turn_deg)
    wall_margin = np.maximum(12.0 * config.speed_max, 0.05 * (hi - lo))

    centers = np.empty((T, n, 3))
    centers[0] = pos
    for t in range(1, T):
        steer = np.zeros((n, 3))
        # walls: push the heading inward, harder the deeper into the margin
        prox_lo = np.clip((lo + wall_margin - pos) / wall_margin, 0.0, 1.0)
        prox_hi = np.clip((pos - (hi - wall_margin)) / wall_margin, 0.0, 1.0)
        steer += 0.3 * (prox_lo - prox_hi)
        if config.clearance > 0 and n > 1:
            excused = active(t)
            reach = 2.0 * config.clearance
            diff = pos[:, None, :] - pos[None, :, :]
            dist = np.sqrt((diff**2).sum(-1))
            ii, jj = np.nonzero(np.triu(dist < reach, k=1))
            for i, j in zip(ii, jj):
                if (min(i, j), max(i, j)) in excused:
                    continue
                d = pos[i] - pos[j]
                norm = np.linalg.norm(d)
                axis = d / norm if norm > 1e-9 else np.array([1.0, 0.0, 0.0])
                strength = 0.4 * (reach - norm) / reach
                steer[i] += strength * axis
                steer[j] -= strength * axis
        # bounded per-frame turn: random jitter plus capped steering
        cap = np.minimum(np.linalg.norm(steer, axis=1, keepdims=True), 0.3)
        norm = np.linalg.norm(steer, axis=1, keepdims=True)
        steer = np.where(norm > 1e-12, steer / np.maximum(norm, 1e-300) * cap, steer)
        head = head + turn * rng.standard_normal((n, 3)) + steer
        head /= np.linalg.norm(head, axis=1, keepdims=True)
        pos = pos + head * speed
        # backstops, should rarely trigger
        under = pos < lo
        pos = np.where(under, 2 * lo - pos, pos)
        over = pos > hi
        pos = np.where(over, 2 * hi - pos, pos)
        head = np.where(under | over, -head, head)
        if config.clearance > 0 and n > 1:
            excused = active(t)
            for _ in range(4):
                diff = pos[:, None, :] - pos[None, :, :]
                dist = np.sqrt((diff**2).sum(-1))
                ii, jj = np.nonzero(np.triu(dist < config.clearance, k=1))
                hard = [(i, j) for i, j in zip(ii, jj) if (min(i, j), max(i, j)) not in excused]
                if not hard:
                    break
                for i, j in hard:
                    d = pos[i] - pos[j]
                    norm = np.linalg.norm(d)
                    axis = d / norm if norm > 1e-9 else np.array([1.0, 0.0, 0.0])
                    shift = 0.5 * (config.clearance - norm)
                    pos[i] = np.clip(pos[i] + axis * shift, lo, hi)
                    pos[j] = np.clip(pos[j] - axis * shift, lo, hi)
        centers[t] = pos
    return centers


def _max_radius(config: SceneConfig, crossing: Crossing) -> int:
    return min(40, crossing.frame, config.n_frames - 1 - crossing.frame)


def _center_distance_for_gap(config: SceneConfig, c: Crossing, u: np.ndarray) -> float:
    """Center separation along u that puts the two sampled clouds at exactly
    the scripted surface gap. The cloud offsets are deterministic (Philox
    keyed by frame and target), so the gap can be solved for up front."""
    o_a = _truncated_blob(
        _rng(config.seed, _STREAM_CLOUD, c.frame, c.a),
        np.zeros(3),
        config.points_per_target,
        config.spread,
    )
    o_b = _truncated_blob(
        _rng(config.seed, _STREAM_CLOUD, c.frame, c.b),
        np.zeros(3),
        config.points_per_target,
        config.spread,
    )
    rel = o_a[:, None, :] - o_b[None, :, :]  # pair offsets at zero separation

    def gap(d: float) -> float:
        return float(np.sqrt(((rel + d * u) ** 2).sum(-1)).min())

    hi = c.approach + 2 * _CLIP_SIGMA * config.spread * 2.5
    # scan down from fully separated to the first spacing at/below the gap,
    # then refine: gap(d) is monotone on that last step
    step = config.spread / 64.0
    d = hi
    while d > 0 and gap(d) > c.approach:
        d -= step
    lo_d, hi_d = max(d, 0.0), min(d + step, hi)
    for _ in range(60):
        mid = 0.5 * (lo_d + hi_d)
        if gap(mid) > c.approach:
            hi_d = mid
        else:
            lo_d = mid
    return 0.5 * (lo_d + hi_d)


def _apply_crossings(config: SceneConfig, centers: np.ndarray) -> dict[int, list[tuple[int, int]]]:
    """Steer each scripted pair to its minimum approach; returns the frame
    windows actually perturbed, per target."""
    T = config.n_frames
    budget = 2.0 * config.speed_max  # steering speed allowance on top of base
    windows: dict[int, list[tuple[int, int]]] = {}
    for c in config.crossings:
        if c.a == c.b or not (0 <= c.a < config.n_targets) or not (0 <= c.b < config.n_targets):
            raise ValueError("unsatisfiable occlusion script: bad target pair")
        if c.approach < 0:
            raise ValueError("unsatisfiable occlusion script: negative approach")
        max_radius = _max_radius(config, c)
        if max_radius < 10:
            raise ValueError("unsatisfiable occlusion script: crossing too close to sequence edge")
        pa = centers[c.frame, c.a]
        pb = centers[c.frame, c.b]
        mid = 0.5 * (pa + pb)
        rel = centers[c.frame, c.a] - centers[c.frame - 1, c.a] - (
            centers[c.frame, c.b] - centers[c.frame - 1, c.b]
        )
        u = np.cross(rel, [0.0, 0.0, 1.0])
        if np.linalg.norm(u) < 1e-9:
            u = np.array([1.0, 0.0, 0.0])
        u /= np.linalg.norm(u)
        sep = _center_distance_for_gap(config, c, u)
        t = np.arange(T)
        for tgt, target_pos in ((c.a, mid + 0.5 * sep * u), (c.b, mid - 0.5 * sep * u)):
            delta = target_pos - centers[c.frame, tgt]
            # cosine bump slope peaks at pi/(2 radius): widen until in budget
            radius = int(np.clip(np.ceil(np.linalg.norm(delta) * np.pi / (2 * budget)), 10, max_radius))
            w = _bump(t, c.frame, radius)
            if np.abs(np.diff(w)).max() * np.linalg.norm(delta) > budget * 1.01:
                raise ValueError("unsatisfiable occlusion script: required speed out of range")
            for w0, w1 in windows.get(tgt, []):
                if c.frame - radius <= w1 and w0 <= c.frame + radius:
                    raise ValueError("unsatisfiable occlusion script: overlapping crossings")
            windows.setdefault(tgt, []).append((c.frame - radius, c.frame + radius))
            centers[:, tgt, :] += w[:, None] * delta[None, :]
    return windows


def _place_ghosts(
    config: SceneConfig, centers: np.ndarray, crossing_windows: dict[int, list[tuple[int, int]]]
) -> list[GhostInfo]:
    n_ghosts = int(round(config.ghost_rate * config.n_targets))
    if n_ghosts == 0:
        return []
    T = config.n_frames
    blocked_windows: dict[int, list[tuple[int, int]]] = {
        tgt: [(w0 - 5, w1 + 5) for w0, w1 in spans]
        for tgt, spans in crossing_windows.items()
    }
    taken: dict[int, list[tuple[int, int]]] = {}
    ghosts = []
    for g in range(n_ghosts):
        rng = _rng(config.seed, _STREAM_GHOST, g)
        placed = False
        for _ in range(64):
            host = int(rng.integers(config.n_targets))
            span = int(rng.integers(3, 8))
            t0 = int(rng.integers(3, T - span - 3))
            t1 = t0 + span - 1
            blocked = blocked_windows.get(host, []) + taken.get(host, [])
            if any(t0 - 3 <= w1 and w0 <= t1 + 3 for w0, w1 in blocked):
                continue
            taken.setdefault(host, []).append((t0, t1))
            ghosts.append(GhostInfo(index=g, target=host, t0=t0, t1=t1))
            placed = True
            break
        if not placed:
            raise ValueError("could not place ghost away from crossings")
    return ghosts


def _ghost_centers(config: SceneConfig, centers: np.ndarray, ghost: GhostInfo) -> np.ndarray:
    """Center track of one ghost: shadows the host at a shrinking offset and
    positions its last frame so the constant-velocity prediction lands on the
    host cluster one frame later."""
    rng = _rng(config.seed, _STREAM_GHOST, ghost.index, 1)
    e = rng.standard_normal(3)
    e /= np.linalg.norm(e)
    sigma = config.spread
    frames = np.arange(ghost.t0, ghost.t1 + 1)
    offsets = np.linspace(28.0 * sigma, 20.0 * sigma, len(frames))
    track = centers[frames, ghost.target] + offsets[:, None] * e
    if len(frames) >= 2:
        track[-1] = 0.5 * (track[-2] + centers[ghost.t1 + 1, ghost.target])
    return track


def generate(config: SceneConfig) -> Scene:
    """Deterministic scene synthesis; returns ground truth, clouds, and
    per-point labels (target index, or -1-g for ghost g)."""
    # clearance is waived over the widest possible steering window; the
    # effective bump radii are only known once the base paths exist
    crossing_spans = {}
    for c in config.crossings:
        radius = _max_radius(config, c)
        key = (min(c.a, c.b), max(c.a, c.b))
        crossing_spans.setdefault(key, []).append((c.frame - radius, c.frame + radius))

    def active(t):
        return {pair for pair, spans in crossing_spans.items() if any(a <= t <= b for a, b in spans)}

    centers = _base_paths(config, active)
    windows = _apply_crossings(config, centers)
    ghosts = _place_ghosts(config, centers, windows)
    ghost_tracks = {g.index: _ghost_centers(config, centers, g) for g in ghosts}

    clouds = []
    labels = []
    k = config.points_per_target
    for t in range(config.n_frames):
        pts = []
        labs = []
        for i in range(config.n_targets):
            rng = _rng(config.seed, _STREAM_CLOUD, t, i)
            pts.append(_truncated_blob(rng, centers[t, i], k, config.spread))
            labs.append(np.full(k, i, dtype=np.int64))
        for g in ghosts:
            if g.t0 <= t <= g.t1:
                rng = _rng(config.seed, _STREAM_CLOUD, t, config.n_targets + g.index)
                pts.append(_truncated_blob(rng, ghost_tracks[g.index][t - g.t0], k, config.spread))
                labs.append(np.full(k, g.label, dtype=np.int64))
        clouds.append(FrameCloud(frame=t, points=np.concatenate(pts)))
        labels.append(np.concatenate(labs))
    return Scene(config=config, centers=centers, clouds=clouds, labels=labels, ghosts=ghosts)


def truth_trajectories(scene: Scene) -> list[Trajectory]:
    frames = np.arange(scene.config.n_frames, dtype=np.int64)
    return [
        Trajectory(
            identity=i, frames=frames.copy(), positions=scene.centers[:, i, :], provenance=[]
        )
        for i in range(scene.config.n_targets)
    ]


@dataclass
class RenderResult:
    images: list  # [camera][frame] uint8 arrays (H, W)
    centers: list  # [camera][frame] float (N, 2) splat centers as (row, col)
    warnings: list


def render(
    scene: Scene,
    cams,
    noise_px: float = 0.0,
    disc_radius: float = 1.5,
    background: int = 20,
    foreground: int = 255,
) -> RenderResult:
    """Project every cloud point through each camera and splat a bright disc
    on a dark background; optional Gaussian jitter of the splat center."""
    images = [[] for _ in cams]
    centers = [[] for _ in cams]
    warnings = []
    for ci, cam in enumerate(cams):
        H, W = cam.height, cam.width
        for cloud in scene.clouds:
            canvas = np.full((H, W), background, dtype=np.uint8)
            pts_h = np.hstack([cloud.points, np.ones((len(cloud), 1))])
            proj = pts_h @ cam.P.T
            rng = _rng(scene.config.seed, _STREAM_RENDER, cloud.frame, ci)
            jitter = noise_px * rng.standard_normal((len(cloud), 2)) if noise_px > 0 else 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                uv = proj[:, :2] / proj[:, 2:3]
            rc = np.column_stack([uv[:, 1], uv[:, 0]]) + jitter
            centers[ci].append(rc)
            for idx, (r, c) in enumerate(rc):
                if proj[idx, 2] <= 0 or not (0 <= r < H and 0 <= c < W):
                    warnings.append(f"frame {cloud.frame} cam {ci}: point {idx} outside frustum")
                    continue
                if disc_radius < 0.5:
                    canvas[int(np.rint(r)), int(np.rint(c))] = foreground
                    continue
                r0 = max(0, int(np.floor(r - disc_radius)))
                r1 = min(H - 1, int(np.ceil(r + disc_radius)))
                c0 = max(0, int(np.floor(c - disc_radius)))
                c1 = min(W - 1, int(np.ceil(c + disc_radius)))
                rr, cc = np.mgrid[r0 : r1 + 1, c0 : c1 + 1]
                mask = (rr - r) ** 2 + (cc - c) ** 2 <= disc_radius**2
                canvas[rr[mask], cc[mask]] = foreground
            images[ci].append(canvas)
    return RenderResult(images=images, centers=centers, warnings=warnings)


def parse_scene_config(path) -> SceneConfig:
    """Read the key = value scene description (crossing lines repeat)."""
    values: dict[str, str] = {}
    crossings = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#")[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key = value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key == "crossing":
                a, b, frame, approach = val.split(",")
                crossings.append(Crossing(int(a), int(b), int(frame), float(approach)))
            else:
                values[key] = val
    known = {
        "n_targets",
        "n_frames",
        "bounds",
        "speed",
        "points_per_target",
        "spread",
        "ghost_rate",
        "clearance",
        "max_turn_deg",
        "seed",
    }
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown scene keys: {sorted(unknown)}")
    missing = {"n_targets", "n_frames", "bounds", "speed", "points_per_target", "spread"} - set(
        values
    )
    if missing:
        raise ValueError(f"missing scene keys: {sorted(missing)}")
    bounds = tuple(float(v) for v in values["bounds"].split(","))
    if len(bounds) != 6:
        raise ValueError("bounds needs 6 comma-separated values")
    speed = [float(v) for v in values["speed"].split(",")]
    return SceneConfig(
        n_targets=int(values["n_targets"]),
        n_frames=int(values["n_frames"]),
        bounds=bounds,
        speed_min=speed[0],
        speed_max=speed[1],
        points_per_target=int(values["points_per_target"]),
        spread=float(values["spread"]),
        crossings=crossings,
        ghost_rate=float(values.get("ghost_rate", "0")),
        clearance=float(values.get("clearance", "0")),
        max_turn_deg=float(values.get("max_turn_deg", "3")),
        seed=int(values.get("seed", "0")),
    )


def save_scene_config(config: SceneConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"n_targets = {config.n_targets}\n")
        fh.write(f"n_frames = {config.n_frames}\n")
        fh.write(f"bounds = {','.join(repr(b) for b in config.bounds)}\n")
        fh.write(f"speed = {config.speed_min!r},{config.speed_max!r}\n")
        fh.write(f"points_per_target = {config.points_per_target}\n")
        fh.write(f"spread = {config.spread!r}\n")
        fh.write(f"ghost_rate = {config.ghost_rate!r}\n")
        fh.write(f"clearance = {config.clearance!r}\n")
        fh.write(f"max_turn_deg = {config.max_turn_deg!r}\n")
        fh.write(f"seed = {config.seed}\n")
        for c in config.crossings:
            fh.write(f"crossing = {c.a},{c.b},{c.frame},{c.approach!r}\n")
