"""Urban V2X spectrum-sharing environment.

N vehicle-to-infrastructure (V2I) uplinks own one orthogonal sub-channel
each; K vehicle-to-vehicle (V2V) links reuse those sub-channels and each
must push a fixed payload to its receiver within the slot budget of an
episode.  Vehicles drive on a Manhattan street grid.  Large-scale gains
(path loss plus log-normal shadowing) are frozen within an episode;
Rayleigh fast fading is redrawn every slot.

reset() drops a fresh world.  next_episode() instead keeps the vehicles
driving and opens the next delivery window on the same world: payloads
and slot budgets renew, path losses refresh from the current positions,
and shadowing evolves with the distance driven (exponential
decorrelation), so consecutive episodes see correlated radio conditions
the way a real vehicle network would.

All powers are handled in watts internally; config fields carry a _dbm
suffix where the value is in dBm.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class ConfigError(ValueError):
    """Invalid scenario or run configuration."""


class EpisodeFinishedError(RuntimeError):
    """step() was called after the episode's slot budget ran out."""


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


# Observation encoding: channel gains and interference powers are mapped
# from dB to roughly [-1, 1] so that MLP inputs share one scale.
OBS_GAIN_CENTER_DB = -100.0
OBS_GAIN_HALF_RANGE_DB = 60.0
OBS_INTF_CENTER_DBW = -110.0
OBS_INTF_HALF_RANGE_DB = 60.0


@dataclass
class ScenarioConfig:
    """Scenario geometry, radio parameters and episode bookkeeping.

    n_v2i doubles as the number of orthogonal sub-channels; V2I link n
    transmits on sub-channel n only.
    """

    n_v2i: int = 4
    n_v2v: int = 8
    bandwidth_per_channel: float = 1e6          # Hz
    noise_power: float = 10.0 ** ((-114.0 - 30.0) / 10.0)  # W (-114 dBm)
    v2i_tx_power_dbm: float = 23.0
    v2v_power_levels_dbm: tuple[float, ...] = (23.0, 15.0, 5.0, -100.0)
    payload_bytes: float = 2120.0               # per V2V link, >= 0
    slot_duration: float = 1e-3                 # s
    slots_per_episode: int = 100
    area_width: float = 1299.0                  # m
    area_height: float = 750.0                  # m
    blocks_x: int = 3
    blocks_y: int = 3
    vehicle_speed: float = 10.0                 # m/s (36 km/h)
    turn_probability: float = 0.4
    neighbor_distance_min: float = 50.0         # V2V receiver distance, m
    neighbor_distance_max: float = 250.0
    carrier_ghz: float = 2.0
    v2i_pl_intercept_db: float = 128.1          # at 1 km
    v2i_pl_slope_db: float = 37.6               # per decade of km
    v2v_los_intercept_db: float = 33.0          # at 1 m
    v2v_los_slope_db: float = 22.7              # per decade of m
    v2v_nlos_intercept_db: float = 45.0
    v2v_nlos_slope_db: float = 36.8
    los_lateral_threshold: float = 7.0          # same-street rule, m
    shadow_std_v2i_db: float = 8.0
    shadow_std_v2v_db: float = 3.0
    shadow_decorr_v2i_m: float = 50.0           # decorrelation distance, m
    shadow_decorr_v2v_m: float = 10.0
    fast_fading: bool = True
    bs_height: float = 25.0                     # m
    vehicle_height: float = 1.5                 # m
    obs_pairwise_gains: bool = True             # include per-interferer gain block
    rng_seed: int = 0

    def __post_init__(self) -> None:
        problems = []
        if self.n_v2i < 1:
            problems.append("n_v2i must be >= 1")
        if self.n_v2v < 1:
            problems.append("n_v2v must be >= 1")
        if self.bandwidth_per_channel <= 0:
            problems.append("bandwidth_per_channel must be > 0")
        if self.noise_power <= 0:
            problems.append("noise_power must be > 0")
        if len(self.v2v_power_levels_dbm) == 0:
            problems.append("v2v_power_levels_dbm must be non-empty")
        elif any(a <= b for a, b in zip(self.v2v_power_levels_dbm,
                                        self.v2v_power_levels_dbm[1:])):
            problems.append("v2v_power_levels_dbm must be strictly decreasing")
        if self.payload_bytes < 0:
            problems.append("payload_bytes must be >= 0")
        if self.slot_duration <= 0:
            problems.append("slot_duration must be > 0")
        if self.slots_per_episode < 1:
            problems.append("slots_per_episode must be >= 1")
        if self.area_width <= 0 or self.area_height <= 0:
            problems.append("area dimensions must be > 0")
        if self.blocks_x < 1 or self.blocks_y < 1:
            problems.append("block counts must be >= 1")
        if not 0.0 <= self.turn_probability <= 1.0:
            problems.append("turn_probability must be in [0, 1]")
        if self.vehicle_speed < 0:
            problems.append("vehicle_speed must be >= 0")
        if self.neighbor_distance_min <= 0 or \
                self.neighbor_distance_max < self.neighbor_distance_min:
            problems.append("neighbor distance range must satisfy 0 < min <= max")
        if self.shadow_decorr_v2i_m <= 0 or self.shadow_decorr_v2v_m <= 0:
            problems.append("shadow decorrelation distances must be > 0")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def n_actions(self) -> int:
        return len(self.v2v_power_levels_dbm) * self.n_v2i

    @property
    def observation_dim(self) -> int:
        n, k = self.n_v2i, self.n_v2v
        if self.obs_pairwise_gains:
            return n * (k + 3) + 5
        return n * 4 + 5

    def power_levels_watt(self) -> np.ndarray:
        return _levels_watt_cached(self.v2v_power_levels_dbm).copy()


@dataclass
class VehicleState:
    """Position in metres plus an axis-aligned heading on the street grid."""

    x: float
    y: float
    heading_x: int  # one of -1, 0, 1; exactly one of heading_x/heading_y is nonzero
    heading_y: int
    speed: float


@dataclass
class ChannelState:
    """Linear power gains for the current slot (fast fading included).

    h_v2i[n]          V2I transmitter n -> base station on its own sub-channel
    h_v2v_to_bs[k,n]  V2V transmitter k -> base station on sub-channel n
    g_v2v[k,j,n]      V2V transmitter j -> V2V receiver k on sub-channel n
    h_v2i_to_v2v[k,n] V2I transmitter n -> V2V receiver k
    """

    h_v2i: np.ndarray
    h_v2v_to_bs: np.ndarray
    g_v2v: np.ndarray
    h_v2i_to_v2v: np.ndarray


@dataclass
class LinkBookkeeping:
    """Per-V2V-link payload and deadline accounting."""

    remaining_bytes: np.ndarray   # float, floor at 0
    remaining_slots: np.ndarray   # int
    active: np.ndarray            # bool; active[k] iff remaining_bytes[k] > 0


@dataclass(frozen=True)
class Action:
    """One V2V agent's choice: transmit power level index and sub-channel."""

    power_index: int
    channel_index: int


def action_from_index(index: int, n_power_levels: int) -> Action:
    """Decode a flat action index: channel-major, power-minor."""
    return Action(power_index=index % n_power_levels,
                  channel_index=index // n_power_levels)


def action_to_index(action: Action, n_power_levels: int) -> int:
    return action.channel_index * n_power_levels + action.power_index


def shared_reward(delivered_count: int, v2i_se_sum: float) -> float:
    """Slot reward shared by every agent.

    Payload completions this slot count 0.5 each; the sum of V2I
    spectral efficiencies (bit/s/Hz) enters with weight 0.1 so that both
    terms live on comparable scales.
    """
    return 0.5 * delivered_count + 0.1 * v2i_se_sum


def street_grid(config: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Street coordinates: vertical street x values and horizontal y values."""
    xs = np.linspace(0.0, config.area_width, config.blocks_x + 1)
    ys = np.linspace(0.0, config.area_height, config.blocks_y + 1)
    return xs, ys


@lru_cache(maxsize=32)
def _levels_watt_cached(levels_dbm: tuple[float, ...]) -> np.ndarray:
    return np.array([dbm_to_watt(p) for p in levels_dbm])


def _actions_to_arrays(actions, config: ScenarioConfig):
    levels_w = _levels_watt_cached(config.v2v_power_levels_dbm)
    chan = np.fromiter((a.channel_index for a in actions), dtype=np.int64,
                       count=len(actions))
    power_w = levels_w[[a.power_index for a in actions]]
    if chan.min(initial=0) < 0 or chan.max(initial=0) >= config.n_v2i:
        raise ValueError("channel_index out of range")
    return chan, power_w


def _v2v_interference(ch: ChannelState, chan: np.ndarray, tx_w: np.ndarray,
                      config: ScenarioConfig):
    """Received interference power at each V2V receiver on every sub-channel.

    Returns (from_v2i, from_v2v), each (K, N).  tx_w must already be zero
    for silent or inactive transmitters.
    """
    k = ch.g_v2v.shape[0]
    n = config.n_v2i
    rho = np.zeros((k, n))
    rho[np.arange(k), chan] = 1.0
    on_air = rho * tx_w[:, None]                               # (K, N)
    from_v2i = ch.h_v2i_to_v2v * dbm_to_watt(config.v2i_tx_power_dbm)
    # zero the own-signal slot before reducing; subtracting it afterwards
    # loses precision whenever the own term dominates the sum
    contrib = ch.g_v2v * on_air[None, :, :]
    contrib[np.arange(k), np.arange(k), :] = 0.0
    from_v2v = contrib.sum(axis=1)
    return from_v2i, from_v2v


def sinr_v2i(ch: ChannelState, actions, config: ScenarioConfig,
             active: np.ndarray | None = None) -> np.ndarray:
    """Uplink SINR of each V2I link on its own sub-channel.

    Interference comes from V2V transmitters that picked the same
    sub-channel; inactive agents contribute nothing.
    """
    chan, power_w = _actions_to_arrays(actions, config)
    if active is not None:
        power_w = np.where(active, power_w, 0.0)
    k = len(chan)
    rho = np.zeros((k, config.n_v2i))
    rho[np.arange(k), chan] = 1.0
    interference = (rho * power_w[:, None] * ch.h_v2v_to_bs).sum(axis=0)
    p_i = dbm_to_watt(config.v2i_tx_power_dbm)
    return ch.h_v2i * p_i / (config.noise_power + interference)


def sinr_v2v(ch: ChannelState, actions, config: ScenarioConfig,
             active: np.ndarray | None = None) -> np.ndarray:
    """SINR of each V2V link, (K, N); zero on sub-channels not selected.

    The denominator collects noise, the co-channel V2I transmitter and
    every other active V2V transmitter on the same sub-channel.
    """
    chan, power_w = _actions_to_arrays(actions, config)
    if active is not None:
        power_w = np.where(active, power_w, 0.0)
    k = len(chan)
    rho = np.zeros((k, config.n_v2i))
    rho[np.arange(k), chan] = 1.0
    from_v2i, from_v2v = _v2v_interference(ch, chan, power_w, config)
    g_self = ch.g_v2v[np.arange(k), np.arange(k), :]
    signal = g_self * power_w[:, None] * rho
    return signal / (config.noise_power + from_v2i + from_v2v)


def rates(sinr_i: np.ndarray, sinr_v: np.ndarray,
          config: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Shannon rates in bit/s: per V2I link and per V2V link (summed over n)."""
    w = config.bandwidth_per_channel
    rate_i = w * np.log2(1.0 + sinr_i)
    rate_v = w * np.log2(1.0 + sinr_v).sum(axis=1)
    return rate_i, rate_v


def update_mobility(vehicles: list[VehicleState], config: ScenarioConfig,
                    dt: float, rng: np.random.Generator,
                    grid: tuple | None = None) -> list[VehicleState]:
    """Advance every vehicle dt seconds along the street grid in place.

    A vehicle crossing an intersection turns onto the perpendicular
    street with probability config.turn_probability (direction chosen
    uniformly); at the area boundary it reflects.  grid may carry
    precomputed street coordinates as two sorted tuples.
    """
    if grid is None:
        xs_a, ys_a = street_grid(config)
        xs, ys = tuple(map(float, xs_a)), tuple(map(float, ys_a))
    else:
        xs, ys = grid
    turn_p = config.turn_probability
    for v in vehicles:
        dist = v.speed * dt
        # A few segment events per step at most; dt * speed is tiny
        # compared to a block, so this loop almost never iterates twice.
        for _ in range(64):
            if dist <= 0.0:
                break
            if v.heading_x == 0:
                lines, pos, direction = ys, v.y, v.heading_y
            else:
                lines, pos, direction = xs, v.x, v.heading_x
            target = pos + direction * dist
            if direction > 0:
                i = bisect.bisect_right(lines, pos)
                cross = lines[i] if i < len(lines) and target >= lines[i] \
                    else None
            else:
                i = bisect.bisect_left(lines, pos) - 1
                cross = lines[i] if i >= 0 and target <= lines[i] else None
            if cross is None:
                lo, hi = 0.0, (config.area_height if v.heading_x == 0
                               else config.area_width)
                if target < lo or target > hi:
                    # reflect at the boundary
                    bound = lo if target < lo else hi
                    target = 2.0 * bound - target
                    target = min(max(target, lo), hi)
                    if v.heading_x == 0:
                        v.heading_y = -v.heading_y
                    else:
                        v.heading_x = -v.heading_x
                if v.heading_x == 0:
                    v.y = target
                else:
                    v.x = target
                break
            dist -= abs(cross - pos)
            if v.heading_x == 0:
                v.y = cross
            else:
                v.x = cross
            if rng.random() < turn_p:
                sign = 1 if rng.random() < 0.5 else -1
                if v.heading_x == 0:
                    v.heading_x, v.heading_y = sign, 0
                else:
                    v.heading_x, v.heading_y = 0, sign
    return vehicles


class V2XEnv:
    """Episodic simulator driven by joint V2V actions.

    Usage: obs = env.reset(seed); then repeatedly
    obs, reward, done = env.step(actions) until done.  The scalar reward
    is shared by all agents.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self._levels_w = config.power_levels_watt()
        xs, ys = street_grid(config)
        self._grid = (tuple(map(float, xs)), tuple(map(float, ys)))
        k, n = config.n_v2v, config.n_v2i
        # per-agent index rows excluding the agent itself, for the
        # pairwise-gain observation block
        if k > 1:
            grid = np.tile(np.arange(k), (k, 1))
            self._others = grid[~np.eye(k, dtype=bool)].reshape(k, k - 1)
        else:
            self._others = np.zeros((1, 0), dtype=np.int64)
        self._ar_k = np.arange(k)
        self._rows = self._ar_k[:, None]
        self._p_i = dbm_to_watt(config.v2i_tx_power_dbm)
        self._n_levels = len(config.v2v_power_levels_dbm)
        self._diag_norm = math.hypot(config.area_width, config.area_height)
        self._agent_frac = (self._ar_k / k)[:, None]
        self._inv_slots = 1.0 / config.slots_per_episode
        self._inv_payload = 1.0 / max(config.payload_bytes, 1.0)
        self._fading_size = n + k * n + k * k * n + k * n
        self._kkn = np.empty((k, k, n))
        self.vehicles_v2i: list[VehicleState] = []
        self.v2v_tx: list[VehicleState] = []
        self.v2v_rx: list[VehicleState] = []
        self.channels: ChannelState | None = None
        self.books: LinkBookkeeping | None = None
        self.slot = 0
        self._rng: np.random.Generator | None = None
        self._prev_interference = np.zeros((k, n))

    # -- episode lifecycle -------------------------------------------------

    def reset(self, seed: int | None = None):
        """Start a fresh episode; deterministic for a fixed seed.

        Returns (vehicles, ChannelState, LinkBookkeeping); vehicles is
        the concatenation of V2I transmitters, V2V transmitters and V2V
        receivers.
        """
        cfg = self.config
        if seed is None:
            seed = cfg.rng_seed
        self._rng = np.random.default_rng(seed)
        self.vehicles_v2i = [self._place_vehicle() for _ in range(cfg.n_v2i)]
        self.v2v_tx = []
        self.v2v_rx = []
        for _ in range(cfg.n_v2v):
            tx = self._place_vehicle()
            self.v2v_tx.append(tx)
            self.v2v_rx.append(self._place_neighbor(tx))
        self._init_shadowing()
        self._refresh_large_scale()
        self._draw_fading(fresh=True)
        self._open_window()
        return self.all_vehicles(), self.channels, self.books

    def next_episode(self):
        """Open the next delivery window without re-dropping the world.

        Vehicles and shadowing carry over from the previous episode: one
        boundary mobility tick closes the last slot (step() advances
        positions after every slot except the final one), path losses
        are recomputed from the moved positions, shadowing evolves with
        the distance driven over the window, fast fading is redrawn, and
        payloads and slot budgets renew.  Returns the same triple as
        reset().
        """
        cfg = self.config
        if self._rng is None:
            raise EpisodeFinishedError(
                "reset() must be called before next_episode()")
        update_mobility(self.all_vehicles(), cfg, cfg.slot_duration,
                        self._rng, grid=self._grid)
        driven = cfg.vehicle_speed * cfg.slot_duration * cfg.slots_per_episode
        self._evolve_shadowing(driven)
        self._refresh_large_scale()
        self._draw_fading(fresh=True)
        self._open_window()
        return self.all_vehicles(), self.channels, self.books

    def _open_window(self) -> None:
        cfg = self.config
        self.books = LinkBookkeeping(
            remaining_bytes=np.full(cfg.n_v2v, float(cfg.payload_bytes)),
            remaining_slots=np.full(cfg.n_v2v, cfg.slots_per_episode,
                                    dtype=np.int64),
            active=np.full(cfg.n_v2v, cfg.payload_bytes > 0, dtype=bool),
        )
        self.slot = 1
        self._prev_interference = np.zeros((cfg.n_v2v, cfg.n_v2i))

    def step(self, actions):
        """Apply one joint action, advance one slot.

        actions is either a sequence of K Action objects or an integer
        array of K flat action indices (channel-major).  Returns
        (observations (K, d), reward, done).  Channel gains used for
        this slot's rates are the ones agents just observed; fading and
        positions then advance for the next slot.
        """
        cfg = self.config
        if self.books is None:
            raise EpisodeFinishedError("reset() must be called before step()")
        if self.done:
            raise EpisodeFinishedError("episode is over; call reset()")
        if len(actions) != cfg.n_v2v:
            raise ValueError(f"expected {cfg.n_v2v} actions, got {len(actions)}")

        k, n = cfg.n_v2v, cfg.n_v2i
        if isinstance(actions, np.ndarray):
            idx = actions
            if idx.min() < 0 or idx.max() >= self._n_levels * n:
                raise ValueError("action index out of range")
            chan = idx // self._n_levels
            power_w = self._levels_w[idx % self._n_levels]
        else:
            chan, power_w = _actions_to_arrays(actions, cfg)
        books = self.books
        power_w = np.where(books.active, power_w, 0.0)
        ar = self._ar_k
        rho = np.zeros((k, n))
        rho[ar, chan] = 1.0
        on_air = rho * power_w[:, None]
        ch = self.channels

        # interference terms are reused for both SINRs and the
        # next-slot observation block
        bs_interf = (on_air * ch.h_v2v_to_bs).sum(axis=0)
        g_i = ch.h_v2i * self._p_i / (cfg.noise_power + bs_interf)
        from_v2i = ch.h_v2i_to_v2v * self._p_i
        np.multiply(ch.g_v2v, on_air[None, :, :], out=self._kkn)
        self._kkn[ar, ar, :] = 0.0
        from_v2v = self._kkn.sum(axis=1)
        signal = ch.g_v2v[ar, ar, :] * on_air
        g_v = signal / (cfg.noise_power + from_v2i + from_v2v)

        rate_v = cfg.bandwidth_per_channel * np.log2(1.0 + g_v).sum(axis=1)
        drained_bytes = cfg.slot_duration / 8.0 * rate_v
        after = np.maximum(books.remaining_bytes - drained_bytes, 0.0)
        still_active = after > 0.0
        delivered_now = int(np.count_nonzero(books.active & ~still_active))
        books.remaining_bytes = after
        books.active = still_active
        books.remaining_slots = books.remaining_slots - 1

        v2i_se = np.log2(1.0 + g_i)
        reward = shared_reward(delivered_now, float(v2i_se.sum()))

        self._prev_interference = from_v2i + from_v2v
        self.slot += 1
        if not self.done:
            update_mobility(self.all_vehicles(), cfg, cfg.slot_duration,
                            self._rng, grid=self._grid)
            self._draw_fading()
        return self.observe_all(), reward, self.done

    @property
    def done(self) -> bool:
        return self.slot > self.config.slots_per_episode

    def all_vehicles(self) -> list[VehicleState]:
        return self.vehicles_v2i + self.v2v_tx + self.v2v_rx

    # -- observations ------------------------------------------------------

    def observe_all(self) -> np.ndarray:
        """Stacked per-agent observation vectors, shape (K, observation_dim).

        Layout per agent k: own-channel V2I gains (N), V2I-to-receiver-k
        gains (N), own direct gains (N), gains from every other V2V
        transmitter into k (N each, ascending agent order, only when
        obs_pairwise_gains), previous-slot received interference (N),
        transmitter-to-receiver offset (2), remaining slots (1),
        remaining payload (1), agent index (1).  Gains and interference
        are dB values affinely squashed to roughly [-1, 1]; exact-zero
        interference (first slot) stays exactly 0.
        """
        cfg = self.config
        k, n = cfg.n_v2v, cfg.n_v2i
        ch = self.channels
        ar = self._ar_k
        gain_blocks = [
            np.broadcast_to(ch.h_v2i, (k, n)),
            ch.h_v2i_to_v2v,
            ch.g_v2v[ar, ar, :],
        ]
        if cfg.obs_pairwise_gains:
            cross = ch.g_v2v[self._rows, self._others, :]
            gain_blocks.append(cross.reshape(k, (k - 1) * n))
        blocks = [_encode_gain(np.concatenate(gain_blocks, axis=1))]
        blocks.append(_encode_interference(self._prev_interference))
        tx = np.array([[v.x, v.y] for v in self.v2v_tx])
        rx = np.array([[v.x, v.y] for v in self.v2v_rx])
        blocks.append((rx - tx) / self._diag_norm)
        blocks.append(self.books.remaining_slots[:, None] * self._inv_slots)
        blocks.append(self.books.remaining_bytes[:, None] * self._inv_payload)
        blocks.append(self._agent_frac)
        return np.concatenate(blocks, axis=1)

    def observe(self, k: int) -> np.ndarray:
        """Observation vector of agent k for the current slot."""
        return self.observe_all()[k]

    # -- internal geometry / channel draws ----------------------------------

    def _place_vehicle(self) -> VehicleState:
        cfg = self.config
        rng = self._rng
        xs, ys = self._grid
        if rng.random() < 0.5:  # vertical street
            x = xs[rng.integers(len(xs))]
            y = float(rng.uniform(0.0, cfg.area_height))
            sign = 1 if rng.random() < 0.5 else -1
            return VehicleState(x, y, 0, sign, cfg.vehicle_speed)
        y = ys[rng.integers(len(ys))]
        x = float(rng.uniform(0.0, cfg.area_width))
        sign = 1 if rng.random() < 0.5 else -1
        return VehicleState(x, y, sign, 0, cfg.vehicle_speed)

    def _place_neighbor(self, tx: VehicleState) -> VehicleState:
        """Receiver on a street within the configured distance band.

        Rejection sampling over ordinary street placements keeps the
        receiver on a lane and yields a natural mix of same-street
        (line-of-sight) and around-the-corner neighbors.  If the band is
        too narrow to hit, fall back to a same-street offset.
        """
        cfg = self.config
        lo, hi = cfg.neighbor_distance_min, cfg.neighbor_distance_max
        for _ in range(64):
            cand = self._place_vehicle()
            if lo <= math.hypot(cand.x - tx.x, cand.y - tx.y) <= hi:
                return cand
        d = float(self._rng.uniform(lo, min(hi, lo + 50.0)))
        x = tx.x + tx.heading_x * d
        y = tx.y + tx.heading_y * d
        if not (0.0 <= x <= cfg.area_width and 0.0 <= y <= cfg.area_height):
            x = tx.x - tx.heading_x * d
            y = tx.y - tx.heading_y * d
        x = min(max(x, 0.0), cfg.area_width)
        y = min(max(y, 0.0), cfg.area_height)
        return VehicleState(x, y, tx.heading_x, tx.heading_y, cfg.vehicle_speed)

    def _init_shadowing(self) -> None:
        """Independent log-normal shadowing per link, stored in dB."""
        cfg = self.config
        rng = self._rng
        k, n = cfg.n_v2v, cfg.n_v2i
        s_i = cfg.shadow_std_v2i_db
        s_v = cfg.shadow_std_v2v_db
        self._shadow_v2i = rng.normal(0.0, s_i, n)
        self._shadow_txbs = rng.normal(0.0, s_i, k)
        self._shadow_pair = rng.normal(0.0, s_v, (k, k))
        self._shadow_iv = rng.normal(0.0, s_v, (k, n))

    def _evolve_shadowing(self, distance_m: float) -> None:
        """Advance shadowing by the given driven distance.

        Shadowing decorrelates exponentially with distance, so each dB
        value follows an AR(1) update that keeps its stationary standard
        deviation: s' = rho s + sqrt(1 - rho^2) w with
        rho = exp(-d / d_corr).
        """
        cfg = self.config
        rng = self._rng
        updates = (
            ("_shadow_v2i", cfg.shadow_std_v2i_db, cfg.shadow_decorr_v2i_m),
            ("_shadow_txbs", cfg.shadow_std_v2i_db, cfg.shadow_decorr_v2i_m),
            ("_shadow_pair", cfg.shadow_std_v2v_db, cfg.shadow_decorr_v2v_m),
            ("_shadow_iv", cfg.shadow_std_v2v_db, cfg.shadow_decorr_v2v_m),
        )
        for name, std, d_corr in updates:
            old = getattr(self, name)
            rho = math.exp(-distance_m / d_corr)
            fresh = rng.normal(0.0, std, old.shape)
            setattr(self, name, rho * old + math.sqrt(1.0 - rho * rho) * fresh)

    def _refresh_large_scale(self) -> None:
        """Path loss from current geometry plus stored shadowing, linear."""
        cfg = self.config
        bs = np.array([cfg.area_width / 2.0, cfg.area_height / 2.0])
        v2i_pos = np.array([[v.x, v.y] for v in self.vehicles_v2i])
        tx_pos = np.array([[v.x, v.y] for v in self.v2v_tx])
        rx_pos = np.array([[v.x, v.y] for v in self.v2v_rx])

        pl_v2i = self._v2i_path_loss_db(np.linalg.norm(v2i_pos - bs, axis=1))
        pl_txbs = self._v2i_path_loss_db(np.linalg.norm(tx_pos - bs, axis=1))
        # tx j -> rx k, (K, K)
        d_pair = rx_pos[:, None, :] - tx_pos[None, :, :]
        pl_pair = self._v2v_path_loss_db(d_pair[..., 0], d_pair[..., 1])
        # V2I transmitter n -> V2V receiver k is vehicle-to-vehicle geometry
        d_iv = rx_pos[:, None, :] - v2i_pos[None, :, :]
        pl_iv = self._v2v_path_loss_db(d_iv[..., 0], d_iv[..., 1])

        self._base_h_v2i = _db_to_gain(-pl_v2i + self._shadow_v2i)
        self._base_h_v2v_to_bs = _db_to_gain(-pl_txbs + self._shadow_txbs)
        self._base_g_v2v = _db_to_gain(-pl_pair + self._shadow_pair)
        self._base_h_v2i_to_v2v = _db_to_gain(-pl_iv + self._shadow_iv)

    def _v2i_path_loss_db(self, d2d: np.ndarray) -> np.ndarray:
        cfg = self.config
        d3d = np.hypot(d2d, cfg.bs_height - cfg.vehicle_height)
        d_km = np.maximum(d3d, 1.0) / 1000.0
        return cfg.v2i_pl_intercept_db + cfg.v2i_pl_slope_db * np.log10(d_km)

    def _v2v_path_loss_db(self, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
        """Line of sight when the endpoints share a street, else one
        Manhattan corner is in the way and the NLOS law applies."""
        cfg = self.config
        d = np.maximum(np.hypot(dx, dy), 3.0)
        los = np.minimum(np.abs(dx), np.abs(dy)) <= cfg.los_lateral_threshold
        pl_los = cfg.v2v_los_intercept_db + cfg.v2v_los_slope_db * np.log10(d)
        pl_nlos = cfg.v2v_nlos_intercept_db + cfg.v2v_nlos_slope_db * np.log10(d)
        return np.where(los, pl_los, pl_nlos)

    def _draw_fading(self, fresh: bool = False) -> None:
        """Per-slot, per-sub-channel Rayleigh fading on top of the base gains.

        Squared Rayleigh amplitudes are unit-mean exponentials, drawn in
        one flat block per slot.  With fast_fading off the base gains
        apply to every sub-channel unchanged, so the per-episode gains
        built at reset (fresh=True) are kept for later slots.
        """
        cfg = self.config
        k, n = cfg.n_v2v, cfg.n_v2i
        if not cfg.fast_fading:
            if not fresh:
                return
            self.channels = ChannelState(
                h_v2i=self._base_h_v2i.copy(),
                h_v2v_to_bs=np.repeat(self._base_h_v2v_to_bs[:, None], n, axis=1),
                g_v2v=np.repeat(self._base_g_v2v[:, :, None], n, axis=2),
                h_v2i_to_v2v=self._base_h_v2i_to_v2v.copy(),
            )
            return
        f = self._rng.exponential(1.0, self._fading_size)
        o1 = n
        o2 = o1 + k * n
        o3 = o2 + k * k * n
        self.channels = ChannelState(
            h_v2i=self._base_h_v2i * f[:o1],
            h_v2v_to_bs=self._base_h_v2v_to_bs[:, None] * f[o1:o2].reshape(k, n),
            g_v2v=self._base_g_v2v[:, :, None] * f[o2:o3].reshape(k, k, n),
            h_v2i_to_v2v=self._base_h_v2i_to_v2v * f[o3:].reshape(k, n),
        )


def _db_to_gain(db: np.ndarray) -> np.ndarray:
    return 10.0 ** (db / 10.0)


def _encode_gain(linear: np.ndarray) -> np.ndarray:
    db = 10.0 * np.log10(np.maximum(linear, 1e-30))
    return (db - OBS_GAIN_CENTER_DB) / OBS_GAIN_HALF_RANGE_DB


def _encode_interference(power_w: np.ndarray) -> np.ndarray:
    db = 10.0 * np.log10(np.maximum(power_w, 1e-30))
    scaled = (db - OBS_INTF_CENTER_DBW) / OBS_INTF_HALF_RANGE_DB
    return np.where(power_w > 0.0, scaled, 0.0)
