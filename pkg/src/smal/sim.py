"""Deterministic grid-world rescue environment.

A rectangular occupancy grid holds one robot (cell position plus one of
four headings), one victim cell, and per-cell texture seeds drawn from a
small palette. The renderer paints a first-person view of the nine cells
ahead of the robot (three depths, three lateral offsets) in flat palette
colors, so the number of distinct views is controlled by the palette
size: shrinking it raises the fraction of world poses that look alike,
which is the perceptual-aliasing knob the recognition experiments turn.

Everything is purely functional: stepping returns a new world, equal
poses render equal frames, and a scripted breadth-first expert replaces
human teleoperation wherever reproducibility matters.
"""

from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Tuple

import numpy as np

from .errors import NoPathError
from .features import Frame
from .mdp import AtomMovement

__all__ = [
    "Heading",
    "Pose",
    "SimWorld",
    "EpisodeResult",
    "parse_world",
    "load_world",
    "step",
    "render",
    "scripted_expert",
    "run_episode",
]

_DELTA = {"N": (0, -1), "E": (1, 0), "S": (0, 1), "W": (-1, 0)}
_LEFT_OF = {"N": "W", "W": "S", "S": "E", "E": "N"}
_RIGHT_OF = {v: k for k, v in _LEFT_OF.items()}

VICTIM_COLOR = (230, 25, 25)


class Heading(str, Enum):
    N = "N"
    E = "E"
    S = "S"
    W = "W"

    @property
    def delta(self) -> Tuple[int, int]:
        return _DELTA[self.value]

    @property
    def left(self) -> "Heading":
        return Heading(_LEFT_OF[self.value])

    @property
    def right(self) -> "Heading":
        return Heading(_RIGHT_OF[self.value])


@dataclass(frozen=True)
class Pose:
    x: int
    y: int
    heading: Heading


@dataclass(frozen=True)
class SimWorld:
    """Immutable world snapshot; step() produces successors."""

    walls: np.ndarray
    textures: np.ndarray
    palette: int
    robot: Pose
    victim: Tuple[int, int]
    step_count: int = 0
    collision_count: int = 0
    frame_size: int = 32

    def __post_init__(self):
        if self.walls.ndim != 2 or self.walls.shape != self.textures.shape:
            raise ValueError("walls and textures must be equal 2-d grids")
        if not self.in_bounds(self.robot.x, self.robot.y):
            raise ValueError("robot outside the grid")
        if self.walls[self.robot.y, self.robot.x]:
            raise ValueError("robot on a wall cell")
        vx, vy = self.victim
        if not self.in_bounds(vx, vy) or self.walls[vy, vx]:
            raise ValueError("victim must sit on a free cell")
        if self.palette < 1:
            raise ValueError("palette must have at least one entry")
        if self.frame_size < 8:
            raise ValueError("frame size too small to band")

    @property
    def width(self) -> int:
        return self.walls.shape[1]

    @property
    def height(self) -> int:
        return self.walls.shape[0]

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and not self.walls[y, x]

    @property
    def at_victim(self) -> bool:
        return (self.robot.x, self.robot.y) == tuple(self.victim)


def _mix(*vals: int) -> int:
    h = 0xCBF29CE484222325
    for v in vals:
        h ^= v & 0xFFFFFFFFFFFFFFFF
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    h ^= h >> 33
    h = (h * 0xFF51AFD7ED558CCD) & 0xFFFFFFFFFFFFFFFF
    h ^= h >> 29
    return h


def _palette_color(index: int) -> Tuple[int, int, int]:
    # channels kept off the extremes so the victim red stays unique
    m = _mix(0xC0105, index)
    return (40 + (m & 0xFF) % 216, 60 + ((m >> 8) & 0xFF) % 196,
            40 + ((m >> 16) & 0xFF) % 216)


def _wall_color(index: int) -> Tuple[int, int, int]:
    r, g, b = _palette_color(index)
    return (r * 2 // 5, g * 2 // 5, b * 2 // 5)


def parse_world(text: str) -> SimWorld:
    """Build a SimWorld from its text form.

    Grid rows use '#' (wall), '.' (free), 'R' (robot start, free) and
    'V' (victim, free); all rows must be equally long. Optional
    directive lines follow the grid: ``heading N|E|S|W`` (default E),
    ``palette N`` (default 6), ``seed N`` (default 0), ``frame N``
    (default 32).
    """
    grid_rows: List[str] = []
    directives = {}
    for raw in text.splitlines():
        line = raw.rstrip()
        if not line:
            continue
        if set(line) <= set("#.RV"):
            grid_rows.append(line)
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0] not in ("heading", "palette", "seed", "frame"):
            raise ValueError(f"unrecognized world line: {line!r}")
        directives[parts[0]] = parts[1]

    if not grid_rows:
        raise ValueError("world has no grid rows")
    width = len(grid_rows[0])
    if any(len(r) != width for r in grid_rows):
        raise ValueError("grid rows must be equally long")

    walls = np.zeros((len(grid_rows), width), dtype=bool)
    robot_cell = victim_cell = None
    for y, row in enumerate(grid_rows):
        for x, ch in enumerate(row):
            if ch == "#":
                walls[y, x] = True
            elif ch == "R":
                if robot_cell is not None:
                    raise ValueError("world must contain exactly one robot")
                robot_cell = (x, y)
            elif ch == "V":
                if victim_cell is not None:
                    raise ValueError("world must contain exactly one victim")
                victim_cell = (x, y)
    if robot_cell is None or victim_cell is None:
        raise ValueError("world needs one robot and one victim")

    heading = Heading(directives.get("heading", "E"))
    palette = int(directives.get("palette", "6"))
    seed = int(directives.get("seed", "0"))
    frame_size = int(directives.get("frame", "32"))

    textures = np.empty_like(walls, dtype=np.int64)
    for y in range(walls.shape[0]):
        for x in range(width):
            textures[y, x] = _mix(seed, x, y) % palette

    return SimWorld(
        walls=walls, textures=textures, palette=palette,
        robot=Pose(robot_cell[0], robot_cell[1], heading),
        victim=victim_cell, frame_size=frame_size,
    )


def load_world(path) -> SimWorld:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_world(fh.read())


def step(world: SimWorld, atom: AtomMovement) -> SimWorld:
    """Apply one atom movement; blocked translations count a collision."""
    atom = AtomMovement(atom)
    pose = world.robot
    if atom in (AtomMovement.TURN_LEFT, AtomMovement.TURN_RIGHT):
        new_heading = pose.heading.left if atom == AtomMovement.TURN_LEFT else pose.heading.right
        return replace(world, robot=replace(pose, heading=new_heading),
                       step_count=world.step_count + 1)
    dx, dy = pose.heading.delta
    if atom == AtomMovement.BACKWARD:
        dx, dy = -dx, -dy
    tx, ty = pose.x + dx, pose.y + dy
    if not world.is_free(tx, ty):
        return replace(world, step_count=world.step_count + 1,
                       collision_count=world.collision_count + 1)
    return replace(world, robot=replace(pose, x=tx, y=ty),
                   step_count=world.step_count + 1)


def _band_bounds(size: int) -> np.ndarray:
    return np.floor(np.linspace(0, size, 4)).astype(int)


def render(world: SimWorld) -> Frame:
    """First-person view of the nine cells ahead of the robot.

    The image splits into a 3x3 grid of flat color patches: rows are
    depths 3 (top), 2, 1 (bottom) along the heading; columns are the
    robot's left, center, right. Free cells take their palette color,
    walls a darkened version, out-of-grid cells black, and the victim
    cell a fixed red. Depends only on (pose, grid, textures), never on
    step or collision counters.
    """
    size = world.frame_size
    pixels = np.zeros((size, size, 3), dtype=np.float64)
    bounds = _band_bounds(size)
    fx, fy = world.robot.heading.delta
    lx, ly = world.robot.heading.left.delta

    for band, depth in enumerate((3, 2, 1)):
        cy = world.robot.y + fy * depth
        cx = world.robot.x + fx * depth
        for col, lateral in enumerate((1, 0, -1)):
            x = cx + lx * lateral
            y = cy + ly * lateral
            if not world.in_bounds(x, y):
                color = (0, 0, 0)
            elif (x, y) == tuple(world.victim):
                color = VICTIM_COLOR
            elif world.walls[y, x]:
                color = _wall_color(int(world.textures[y, x]))
            else:
                color = _palette_color(int(world.textures[y, x]))
            r0, r1 = bounds[band], bounds[band + 1]
            c0, c1 = bounds[col], bounds[col + 1]
            pixels[r0:r1, c0:c1] = np.array(color, dtype=np.float64) / 255.0
    return Frame(pixels=pixels)


_EXPERT_MOVES = (AtomMovement.FORWARD, AtomMovement.TURN_LEFT, AtomMovement.TURN_RIGHT)


def scripted_expert(world: SimWorld) -> List[AtomMovement]:
    """Shortest atom sequence from the robot pose to the victim cell.

    Breadth-first search over (cell, heading) with unit cost per atom.
    The expert drives like a cautious teleoperator: forward and turns
    only, no blind reversing. Replaying the result through step()
    reaches the victim without a single collision.
    """
    start = (world.robot.x, world.robot.y, world.robot.heading)
    if (world.robot.x, world.robot.y) == tuple(world.victim):
        return []
    parent = {start: None}
    queue = deque([start])
    goal = None
    while queue:
        node = queue.popleft()
        x, y, h = node
        if (x, y) == tuple(world.victim):
            goal = node
            break
        succs = []
        dx, dy = h.delta
        if world.is_free(x + dx, y + dy):
            succs.append(((x + dx, y + dy, h), AtomMovement.FORWARD))
        succs.append(((x, y, h.left), AtomMovement.TURN_LEFT))
        succs.append(((x, y, h.right), AtomMovement.TURN_RIGHT))
        for nxt, atom in succs:
            if nxt not in parent:
                parent[nxt] = (node, atom)
                queue.append(nxt)
    if goal is None:
        raise NoPathError("victim is unreachable from the robot pose")
    atoms: List[AtomMovement] = []
    node = goal
    while parent[node] is not None:
        node, atom = parent[node]
        atoms.append(atom)
    return atoms[::-1]


@dataclass(frozen=True)
class EpisodeResult:
    """Outcome of one execution episode."""

    success: bool
    steps: int
    collision_count: int
    trajectory: Tuple[Pose, ...]


def run_episode(world: SimWorld, stack, budget: int) -> EpisodeResult:
    """Drive the world with a trained policy stack until victim or budget.

    ``stack`` must expose ``seq_len`` (the window length l) and
    ``plan(frames) -> Action`` mapping the latest l rendered frames to
    the next action. The first window repeats the initial view l times,
    mirroring how demonstrations begin at rest; afterwards each executed
    atom contributes one frame and identification happens every l atoms.
    Budget counts atoms; exhausting it mid-action stops the episode.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    collisions_before = world.collision_count
    poses = [world.robot]
    if world.at_victim:
        return EpisodeResult(True, 0, 0, tuple(poses))

    l = int(stack.seq_len)
    window = [render(world)] * l
    steps = 0
    success = False
    while steps < budget and not success:
        action = stack.plan(list(window))
        next_window: List[Frame] = []
        for atom in action.atoms:
            if steps >= budget:
                break
            world = step(world, atom)
            steps += 1
            poses.append(world.robot)
            next_window.append(render(world))
            if world.at_victim:
                success = True
                break
        if len(next_window) < l:
            break
        window = next_window
    return EpisodeResult(
        success=success, steps=steps,
        collision_count=world.collision_count - collisions_before,
        trajectory=tuple(poses),
    )
