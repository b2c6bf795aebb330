"""Online deep Q-learning for road following.

The camera-plus-segmentation front end is replaced by a renderer that
rasterises the known road geometry into a binary mask in the robot frame.
The agent picks one of five steering rates every control period and is
rewarded +1 for each step that ends on the road and -1 otherwise.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import nn
from .geo import GeoPoint
from .world import Polyline, Pose, Road, WorldConfig, rate_step


class Action(enum.IntEnum):
    SHARP_LEFT = 0
    SLIGHT_LEFT = 1
    STRAIGHT = 2
    SLIGHT_RIGHT = 3
    SHARP_RIGHT = 4


HEADING_RATES = (-45.0, -15.0, 0.0, 15.0, 45.0)
N_ACTIONS = len(Action)


class EpisodeOver(RuntimeError):
    pass


@dataclass(frozen=True)
class MaskSpec:
    rows: int = 16
    cols: int = 16
    depth: float = 8.0
    width: float = 8.0

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @cached_property
    def _grid(self) -> tuple[np.ndarray, np.ndarray]:
        ahead = self.depth * (1.0 - (np.arange(self.rows) + 0.5) / self.rows)
        left = self.width * (0.5 - (np.arange(self.cols) + 0.5) / self.cols)
        a, l = np.meshgrid(ahead, left, indexing="ij")
        return a.ravel(), l.ravel()

    def offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """(ahead, left) meters of every cell centre, row-major; row 0 is farthest, col 0 leftmost."""
        return self._grid


DEFAULT_MASK = MaskSpec()


def render_observation(pose: Pose, world: WorldConfig, spec: MaskSpec = DEFAULT_MASK) -> np.ndarray:
    """Ground-truth road mask (rows x cols of 0/1) for the window ahead of ``pose``."""
    ahead, left = spec.offsets()
    h = math.radians(pose.heading)
    fwd = np.array([math.sin(h), math.cos(h)])
    lft = np.array([-math.cos(h), math.sin(h)])
    pts = np.array(pose.xy) + ahead[:, None] * fwd + left[:, None] * lft
    return world.geometry.on_road(pts).astype(np.uint8).reshape(spec.rows, spec.cols)


@dataclass(frozen=True)
class Track:
    """A road-following course: road network plus the centreline route the episode runs along."""

    world: WorldConfig
    route: Polyline
    name: str = "track"

    @classmethod
    def from_centerline(cls, points, width: float = 2.0, name: str = "track", **world_kwargs) -> Track:
        pts = np.asarray(points, dtype=float)
        world = WorldConfig(origin=world_kwargs.pop("origin", GeoPoint(33.646, -117.842)),
                            roads=(Road(tuple(map(tuple, pts)), width),), **world_kwargs)
        return cls(world=world, route=Polyline.from_points(pts), name=name)

    @property
    def width(self) -> float:
        return self.world.roads[0].width


def _arc(start: np.ndarray, heading: float, radius: float, turn: float, step: float = 0.5) -> tuple[list[np.ndarray], float]:
    """Points along a circular arc; ``turn`` degrees, negative = left."""
    n = max(1, int(math.ceil(abs(math.radians(turn)) * radius / step)))
    pts = []
    pos = start.astype(float)
    hd = heading
    dh = turn / n
    chord = 2.0 * radius * math.sin(math.radians(abs(dh)) / 2.0)
    for _ in range(n):
        mid = math.radians(hd + dh / 2.0)
        pos = pos + chord * np.array([math.sin(mid), math.cos(mid)])
        hd += dh
        pts.append(pos)
    return pts, hd


def _straight(start: np.ndarray, heading: float, length: float, step: float = 0.5) -> tuple[list[np.ndarray], float]:
    n = max(1, int(math.ceil(length / step)))
    d = np.array([math.sin(math.radians(heading)), math.cos(math.radians(heading))])
    return [start + d * length * (k + 1) / n for k in range(n)], heading


def build_centerline(pieces, start=(0.0, 0.0), heading: float = 0.0) -> np.ndarray:
    """Chain ``("straight", length)`` and ``("arc", radius, turn_deg)`` pieces."""
    pts = [np.array(start, dtype=float)]
    hd = heading
    for piece in pieces:
        if piece[0] == "straight":
            new, hd = _straight(pts[-1], hd, piece[1])
        elif piece[0] == "arc":
            new, hd = _arc(pts[-1], hd, piece[1], piece[2])
        else:
            raise ValueError(f"unknown track piece {piece[0]!r}")
        pts.extend(new)
    return np.array(pts)


def straight_track(length: float = 120.0, width: float = 2.0) -> Track:
    return Track.from_centerline(build_centerline([("straight", length)]), width, name="straight")


def s_curve_track(width: float = 2.0, radius: float = 25.0) -> Track:
    pieces = [
        ("straight", 10.0),
        ("arc", radius, -90.0),
        ("arc", radius, 90.0),
        ("straight", 10.0),
        ("arc", radius, 90.0),
        ("arc", radius, -90.0),
        ("straight", 10.0),
    ]
    return Track.from_centerline(build_centerline(pieces), width, name="s-curve")


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.95
    batch: int = 32
    buffer_capacity: int = 10_000
    target_sync_every: int = 200
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 5_000
    control_dt: float = 0.4
    max_episode_steps: int = 500
    offroad_margin: float = 1.0
    lr: float = 1e-3
    hidden: tuple[int, ...] = (128, 64)
    huber_delta: float = 1.0
    start_lateral_jitter: float = 0.3
    start_heading_jitter: float = 10.0

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    def epsilon(self, env_steps: int) -> float:
        if env_steps >= self.epsilon_decay_steps:
            return self.epsilon_end
        frac = env_steps / self.epsilon_decay_steps
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def layer_sizes(self, spec: MaskSpec = DEFAULT_MASK) -> list[int]:
        return [spec.size, *self.hidden, N_ACTIONS]


@dataclass
class StepResult:
    pose: Pose
    obs: np.ndarray
    reward: float
    done: bool
    offroad_terminal: bool


class RoadEnv:
    """One road-following episode on a :class:`Track`."""

    def __init__(self, track: Track, config: AgentConfig = AgentConfig(), spec: MaskSpec = DEFAULT_MASK) -> None:
        self.track = track
        self.config = config
        self.spec = spec
        self.pose: Pose | None = None
        self.progress = 0.0
        self.steps = 0
        self.on_road_steps = 0
        self.done = True
        self.offroad = False

    @property
    def step_length(self) -> float:
        return self.track.world.robot_speed * self.config.control_dt

    def reset(self, rng: np.random.Generator | None = None, pose: Pose | None = None) -> np.ndarray:
        route = self.track.route
        if pose is None:
            e, n = route.point_at(0.0)
            hd = route.heading_at(0.0)
            lat = hd_off = 0.0
            if rng is not None:
                lat = self.config.start_lateral_jitter * (2.0 * rng.random() - 1.0)
                hd_off = self.config.start_heading_jitter * (2.0 * rng.random() - 1.0)
            h = math.radians(hd)
            pose = Pose(e - lat * math.cos(h), n + lat * math.sin(h), hd + hd_off)
        self.pose = pose
        self.progress, _ = route.project(pose.east, pose.north)
        self.steps = 0
        self.on_road_steps = 0
        self.done = False
        self.offroad = False
        return self.observe()

    def observe(self) -> np.ndarray:
        assert self.pose is not None
        return render_observation(self.pose, self.track.world, self.spec)

    def step(self, action: int) -> StepResult:
        if self.done or self.pose is None:
            raise EpisodeOver("episode has terminated; call reset()")
        cfg = self.config
        world = self.track.world
        self.pose = rate_step(self.pose, HEADING_RATES[int(action)], world.robot_speed, cfg.control_dt)
        self.steps += 1
        self.progress, _ = self.track.route.project(self.pose.east, self.pose.north, near=self.progress)
        dist = float(world.geometry.distance(np.array([self.pose.xy]))[0])
        road = bool(world.geometry.on_road(np.array([self.pose.xy]))[0])
        reward = 1.0 if road else -1.0
        self.on_road_steps += road
        self.offroad = dist > self.track.width / 2.0 + cfg.offroad_margin
        finished = self.progress >= self.track.route.length - 1e-6
        self.done = self.offroad or finished or self.steps >= cfg.max_episode_steps
        return StepResult(self.pose, self.observe(), reward, self.done, self.offroad)

    def on_road_fraction(self) -> float:
        """On-road steps over the steps the episode should have lasted.

        An off-road termination counts the remaining track (at nominal speed)
        as steps spent off the road.
        """
        denom = self.steps
        if self.offroad:
            remaining = max(0.0, self.track.route.length - self.progress)
            denom += int(math.ceil(remaining / self.step_length))
            denom = min(denom, self.config.max_episode_steps)
            denom = max(denom, self.steps)
        return self.on_road_steps / denom if denom else 0.0


class ReplayBuffer:
    """FIFO ring buffer of transitions with uniform sampling."""

    def __init__(self, capacity: int, obs_size: int, rng: np.random.Generator) -> None:
        self.capacity = capacity
        self.rng = rng
        self.s = np.zeros((capacity, obs_size), dtype=np.uint8)
        self.s2 = np.zeros((capacity, obs_size), dtype=np.uint8)
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity, dtype=np.float64)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, s: np.ndarray, a: int, r: float, s2: np.ndarray, terminal: bool) -> None:
        k = self.inserted % self.capacity
        self.s[k] = s.ravel()
        self.a[k] = a
        self.r[k] = r
        self.s2[k] = s2.ravel()
        self.terminal[k] = terminal
        self.inserted += 1

    def sample(self, batch: int) -> tuple[np.ndarray, ...]:
        if len(self) < batch:
            raise ValueError("not enough transitions to sample a batch")
        idx = self.rng.integers(0, len(self), size=batch)
        return (self.s[idx].astype(np.float64), self.a[idx], self.r[idx],
                self.s2[idx].astype(np.float64), self.terminal[idx])


def select_action(net: nn.DenseNet, obs: np.ndarray, epsilon: float, u: float, u2: float) -> Action:
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    if u < epsilon:
        return Action(min(N_ACTIONS - 1, int(u2 * N_ACTIONS)))
    q = net.forward(np.asarray(obs, dtype=np.float64).ravel())
    return Action(int(np.argmax(q)))


@dataclass
class Learner:
    net: nn.DenseNet
    target: nn.DenseNet
    optimizer: nn.Adam
    buffer: ReplayBuffer
    config: AgentConfig
    train_steps: int = 0

    @classmethod
    def create(cls, config: AgentConfig, rng: np.random.Generator, spec: MaskSpec = DEFAULT_MASK) -> Learner:
        init_rng, buffer_rng = rng.spawn(2)
        net = nn.DenseNet.create(config.layer_sizes(spec), init_rng)
        return cls(net, net.copy(), nn.Adam(lr=config.lr),
                   ReplayBuffer(config.buffer_capacity, spec.size, buffer_rng), config)


def td_targets(target_net: nn.DenseNet, r: np.ndarray, s2: np.ndarray, terminal: np.ndarray, gamma: float) -> np.ndarray:
    q_next = target_net.forward(s2).max(axis=1)
    return r + gamma * np.where(terminal, 0.0, q_next)


def train_step(learner: Learner) -> float | None:
    """One minibatch update; ``None`` when the buffer is still too small."""
    cfg = learner.config
    if len(learner.buffer) < cfg.batch:
        return None
    s, a, r, s2, terminal = learner.buffer.sample(cfg.batch)
    y = td_targets(learner.target, r, s2, terminal, cfg.gamma)
    q, cache = learner.net.forward(s, keep_cache=True)
    rows = np.arange(len(a))
    loss, g = nn.huber(q[rows, a] - y, cfg.huber_delta)
    grad_out = np.zeros_like(q)
    grad_out[rows, a] = g
    grads, _ = learner.net.backward(cache, grad_out)
    learner.optimizer.step(learner.net, grads)
    learner.train_steps += 1
    if learner.train_steps % cfg.target_sync_every == 0:
        learner.target.load_from(learner.net)
    return loss


@dataclass
class EpisodeStats:
    episode: int
    reward_sum: float
    on_road_fraction: float
    epsilon: float
    steps: int


@dataclass
class TrainingResult:
    curve: list[EpisodeStats]
    net: nn.DenseNet
    optimizer: nn.Adam
    env_steps: int = 0
    losses: list[float] = field(default_factory=list)


def train_road(track: Track, config: AgentConfig = AgentConfig(), episodes: int = 500, seed: int = 0) -> TrainingResult:
    """Online DQN: act, store, and learn on every environment step."""
    root = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    agent_rng, env_rng, act_rng = root.spawn(3)
    learner = Learner.create(config, agent_rng)
    env = RoadEnv(track, config)
    curve: list[EpisodeStats] = []
    env_steps = 0
    losses: list[float] = []
    for ep in range(episodes):
        obs = env.reset(env_rng)
        total = 0.0
        eps = config.epsilon(env_steps)
        while not env.done:
            eps = config.epsilon(env_steps)
            u, u2 = act_rng.random(2)
            action = select_action(learner.net, obs, eps, float(u), float(u2))
            res = env.step(action)
            learner.buffer.add(obs, int(action), res.reward, res.obs, res.offroad_terminal)
            loss = train_step(learner)
            if loss is not None:
                losses.append(loss)
            obs = res.obs
            total += res.reward
            env_steps += 1
        curve.append(EpisodeStats(ep, total, env.on_road_fraction(), eps, env.steps))
    return TrainingResult(curve, learner.net, learner.optimizer, env_steps, losses)


@dataclass(frozen=True)
class EvalResult:
    on_road_fraction: float
    episode_length: float
    reward: float


def oracle_action(obs: np.ndarray, spec: MaskSpec = DEFAULT_MASK, gain: float = 15.0) -> Action:
    """Steer toward the centroid of the road cells 1.5-6 m ahead."""
    mask = np.asarray(obs).reshape(spec.rows, spec.cols)
    ahead, left = spec.offsets()
    ahead = ahead.reshape(spec.rows, spec.cols)
    left = left.reshape(spec.rows, spec.cols)
    band = (ahead >= 1.5) & (ahead <= 6.0) & (mask > 0)
    if not band.any():
        band = mask > 0
    if not band.any():
        return Action.STRAIGHT
    offset = float(left[band].mean())
    rate = -gain * offset
    return Action(int(np.argmin([abs(rate - r) for r in HEADING_RATES])))


def run_policy(track: Track, policy, episodes: int, seed: int, config: AgentConfig = AgentConfig()) -> EvalResult:
    env_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE7A1]))
    env = RoadEnv(track, config)
    fr, lengths, rewards = [], [], []
    for _ in range(episodes):
        obs = env.reset(env_rng)
        total = 0.0
        while not env.done:
            res = env.step(policy(obs))
            obs = res.obs
            total += res.reward
        fr.append(env.on_road_fraction())
        lengths.append(env.steps)
        rewards.append(total)
    return EvalResult(float(np.mean(fr)), float(np.mean(lengths)), float(np.mean(rewards)))


def greedy_policy(net: nn.DenseNet):
    def act(obs: np.ndarray) -> Action:
        return select_action(net, obs, 0.0, 1.0, 0.0)
    return act


def eval_road(net: nn.DenseNet, track: Track, episodes: int = 20, seed: int = 0,
              config: AgentConfig = AgentConfig(), spec: MaskSpec = DEFAULT_MASK) -> EvalResult:
    """Greedy rollouts without learning."""
    if net.input_dim != spec.size or net.output_dim != N_ACTIONS:
        raise nn.ShapeError(f"network {net.sizes} does not fit a {spec.rows}x{spec.cols} mask with {N_ACTIONS} actions")
    return run_policy(track, greedy_policy(net), episodes, seed, config)


def learning_curve_csv(curve: list[EpisodeStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "reward_sum", "on_road_fraction", "epsilon"])
    for st in curve:
        w.writerow([st.episode, f"{st.reward_sum:.1f}", f"{st.on_road_fraction:.6f}", f"{st.epsilon:.6f}"])
    return buf.getvalue()


def read_learning_curve(text: str) -> list[tuple[int, float, float, float]]:
    rows = list(csv.reader(io.StringIO(text)))
    if rows[0] != ["episode", "reward_sum", "on_road_fraction", "epsilon"]:
        raise ValueError("not a learning curve file")
    return [(int(a), float(b), float(c), float(d)) for a, b, c, d in rows[1:]]
