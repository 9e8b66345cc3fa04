"""Discrete-event simulator of N mining nodes contending via CSMA/CA.

Time is organized exactly like the analytic chain sees it: contention
phases are slotted (boundaries at the last busy-period end plus integer
multiples of the slot time; the busy times already include the trailing
DIFS), and each busy period is a single chain step.  A node whose counter
reaches zero at a boundary transmits there; two or more simultaneous
transmitters collide.  Mining clocks are exponential and memoryless, so
pausing a clock and redrawing on resume is distribution-equivalent to
suspending it.

Per-step accounting mirrors the chain: a step is an idle slot or one busy
period, the empirical transmit probability is transmission attempts over
steps, and the first 5% of the horizon is excluded from all rates.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass
from typing import Callable, Sequence

from .scenario import BacVariant, ScenarioParams, channel_times, window_schedule

__all__ = ["NodeState", "SimReport", "run"]

WARMUP_FRACTION = 0.05

_INF = math.inf


@dataclass(frozen=True)
class NodeState:
    """Public snapshot of one node at a slot boundary."""

    mode: str  # "NoBlock" | "Backoff" | "Transmitting"
    backoff_stage: int
    backoff_counter: int
    queue_len: int
    mining_active: bool
    next_block_time: float


@dataclass(frozen=True)
class SimReport:
    """Empirical counterparts of the analytic metrics from one seeded run.

    Block counters cover the whole run so conservation holds exactly
    (generated = success + discarded + in flight at the horizon), while the
    empirical_* rates exclude the warm-up window.
    """

    sim_time_s: float
    blocks_generated: int
    blocks_success: int
    blocks_discarded: int
    tx_confirmed: int
    empirical_tau: float
    empirical_theta_t: float
    empirical_theta_s: float
    empirical_theta_d: float
    empirical_eta: float
    empirical_p_m: float
    collision_count: int
    seed: int
    max_queue_len: int = 0


class _Node:
    __slots__ = (
        "node_id",
        "lam",
        "rng",
        "holder",
        "pending",
        "doomed",
        "stage",
        "transmit_slot",
        "queue",
        "mining",
        "active_since",
        "epoch",
        "next_arrival",
        "mining_time",
        "tx_steps",
    )

    def __init__(self, node_id: int, lam: float, rng):
        self.node_id = node_id
        self.lam = lam
        self.rng = rng
        self.holder = False
        self.pending = False
        self.doomed = False
        self.stage = 0
        self.transmit_slot: int | None = None
        self.queue = 0
        self.mining = False
        self.active_since = 0.0
        self.epoch = 0
        self.next_arrival = _INF
        self.mining_time = 0.0
        self.tx_steps = 0

    def draw_gap(self) -> float:
        if self.lam <= 0.0:
            return _INF
        return -math.log(1.0 - self.rng.random()) / self.lam

    def state(self, mode: str, counter: int) -> NodeState:
        return NodeState(
            mode=mode,
            backoff_stage=self.stage,
            backoff_counter=counter,
            queue_len=self.queue,
            mining_active=self.mining,
            next_block_time=self.next_arrival,
        )


class _Engine:
    """One seeded simulation run."""

    def __init__(
        self,
        params: ScenarioParams,
        variant: BacVariant,
        horizon_s: float,
        seed: int,
        lambda_overrides: Sequence[float] | None,
        trace: Callable[[float, int, str, str], None] | None,
        on_boundary,
    ):
        if horizon_s <= 0:
            raise ValueError("horizon_s must be positive")
        self.params = params
        self.variant = variant
        self.horizon = float(horizon_s)
        self.seed = seed
        self.trace = trace
        self.on_boundary = on_boundary
        self.sigma = params.slot_sigma_s
        times = channel_times(params)
        self.t_success = times.t_success_s
        self.t_collision = times.t_collision_s
        self.windows = window_schedule(params)
        self.m = params.m_stages
        self.t_warm = WARMUP_FRACTION * self.horizon
        if lambda_overrides is not None and len(lambda_overrides) != params.n_nodes:
            raise ValueError("lambda_overrides must list one rate per node")
        self.nodes = [
            _Node(
                i,
                params.lambda_bkps if lambda_overrides is None else lambda_overrides[i],
                random.Random(seed * 1_000_003 + i),
            )
            for i in range(params.n_nodes)
        ]
        self.heap: list[tuple[float, int, int]] = []
        # channel timeline
        self.t0 = 0.0  # current contention-phase origin (a slot boundary)
        self.min_slot: int | None = None  # cached min transmit_slot
        # counters: full-run + post-warm-up window
        self.generated_full = 0
        self.success_full = 0
        self.discarded_full = 0
        self.collisions_full = 0
        self.gen_w = 0
        self.succ_w = 0
        self.disc_w = 0
        self.steps_w = 0
        self.max_queue = 0

    # -- mining clock management --------------------------------------------

    def _push(self, node: _Node) -> None:
        heapq.heappush(self.heap, (node.next_arrival, node.node_id, node.epoch))

    def resume(self, node: _Node, t: float) -> None:
        if node.mining:
            return
        node.mining = True
        node.active_since = t
        node.epoch += 1
        gap = node.draw_gap()
        node.next_arrival = t + gap
        if gap < _INF:
            self._push(node)

    def pause(self, node: _Node, t: float) -> None:
        if not node.mining:
            return
        node.mining = False
        node.mining_time += self._clip(node.active_since, t)
        node.epoch += 1
        node.next_arrival = _INF

    def rearm(self, node: _Node, t: float) -> None:
        """Next arrival after a mint while mining continues."""
        node.epoch += 1
        gap = node.draw_gap()
        node.next_arrival = t + gap
        if gap < _INF:
            self._push(node)

    def _clip(self, start: float, end: float) -> float:
        lo = max(start, self.t_warm)
        return max(0.0, end - lo) if end > lo else 0.0

    def _next_arrival(self) -> tuple[float, _Node | None]:
        while self.heap:
            t, node_id, epoch = self.heap[0]
            node = self.nodes[node_id]
            if node.mining and node.epoch == epoch:
                return t, node
            heapq.heappop(self.heap)
        return _INF, None

    def _pop_arrival(self) -> None:
        heapq.heappop(self.heap)

    # -- contenders -----------------------------------------------------------

    def _contender_min(self) -> int | None:
        if self.min_slot is None:
            slots = [n.transmit_slot for n in self.nodes if n.transmit_slot is not None]
            self.min_slot = min(slots) if slots else -1
        return None if self.min_slot == -1 else self.min_slot

    def _invalidate_min(self) -> None:
        self.min_slot = None

    def _join(self, node: _Node, boundary_slot: int, stage: int) -> None:
        """Start (or restart) the backoff procedure at a boundary."""
        node.stage = stage
        counter = node.rng.randrange(self.windows[stage])
        node.transmit_slot = boundary_slot + counter
        node.pending = False
        if self.min_slot is not None:
            if self.min_slot == -1 or node.transmit_slot < self.min_slot:
                self.min_slot = node.transmit_slot
        if self.trace:
            self.trace(
                self.t0 + boundary_slot * self.sigma,
                node.node_id,
                "JOIN",
                f"stage={stage} counter={counter}",
            )

    # -- block bookkeeping ----------------------------------------------------

    def _mint(self, node: _Node, t: float) -> None:
        self.generated_full += 1
        if t >= self.t_warm:
            self.gen_w += 1
        if self.trace:
            self.trace(t, node.node_id, "MINT", f"holder={node.holder}")

    def collision_trace(self, t: float, n_colliders: int) -> None:
        if self.trace:
            self.trace(t, -1, "COLLISION", f"n={n_colliders}")

    def _discard(self, node: _Node, t: float, reason: str) -> None:
        """Drop the head-of-line block and the entire queue."""
        count = 1 + node.queue
        self.discarded_full += count
        if t >= self.t_warm:
            self.disc_w += count
        if self.trace:
            self.trace(t, node.node_id, "DISCARD", f"count={count} reason={reason}")
        node.holder = False
        node.pending = False
        node.doomed = False
        node.queue = 0
        node.stage = 0
        node.transmit_slot = None

    # -- mint handling by context ---------------------------------------------

    def _mint_in_contention(self, node: _Node, t: float) -> None:
        self._mint(node, t)
        if node.holder:
            node.queue += 1
            if node.queue > self.max_queue:
                self.max_queue = node.queue
            self.rearm(node, t)
            return
        node.holder = True
        boundary = math.ceil((t - self.t0) / self.sigma)
        self._join(node, boundary, stage=0)
        if self.variant.has_mining_strategy_2:
            self.pause(node, t)
        else:
            self.rearm(node, t)

    def _mint_in_busy(self, node: _Node, t: float, success: bool) -> None:
        self._mint(node, t)
        if node.holder:
            node.queue += 1
            if node.queue > self.max_queue:
                self.max_queue = node.queue
            self.rearm(node, t)
            return
        node.holder = True
        if success:
            node.doomed = True  # discarded when the transmission completes
        else:
            node.pending = True  # backoff starts after the busy period
        if self.variant.has_mining_strategy_2:
            self.pause(node, t)
        else:
            self.rearm(node, t)

    # -- episode (busy period) --------------------------------------------------

    def _run_episode(self, t_tx: float, transmitters: list[_Node]) -> float:
        success = len(transmitters) == 1
        duration = self.t_success if success else self.t_collision
        end = t_tx + duration
        in_window = t_tx >= self.t_warm
        if in_window:
            self.steps_w += 1
            for node in transmitters:
                node.tx_steps += 1
        if not success:
            self.collisions_full += 1
        if self.trace:
            for node in transmitters:
                self.trace(t_tx, node.node_id, "TX_START", f"stage={node.stage}")

        # mining pauses at the start of the busy period
        transmitter_ids = {node.node_id for node in transmitters}
        if self.variant.has_mining_strategy_1:
            for node in self.nodes:
                if node.node_id not in transmitter_ids:
                    self.pause(node, t_tx)
        # mints landing inside the busy period
        while True:
            t_next, node = self._next_arrival()
            if t_next >= end:
                break
            self._pop_arrival()
            if node.node_id in transmitter_ids or node.holder:
                self._mint(node, t_next)
                node.queue += 1
                if node.queue > self.max_queue:
                    self.max_queue = node.queue
                self.rearm(node, t_next)
            else:
                self._mint_in_busy(node, t_next, success)

        self._resolve_episode(end, transmitters, success)
        return end

    def _resolve_episode(self, end: float, transmitters: list[_Node], success: bool) -> None:
        in_window = end >= self.t_warm
        self.t0 = end
        self._invalidate_min()
        prev_slot_base = None
        if success:
            winner = transmitters[0]
            self.success_full += 1
            if in_window:
                self.succ_w += 1
            if self.trace:
                self.trace(end, winner.node_id, "SUCCESS", f"queue={winner.queue}")
            for node in self.nodes:
                if node is winner:
                    continue
                if node.holder:
                    reason = "doomed" if node.doomed else "peer_success"
                    self._discard(node, end, reason)
            winner.holder = False
            winner.transmit_slot = None
            if winner.queue > 0 and self.variant.has_queueing:
                winner.queue -= 1
                winner.holder = True
                self._join(winner, 0, stage=0)
                if self.trace:
                    self.trace(end, winner.node_id, "QUEUE_POP", f"queue={winner.queue}")
        else:
            # colliders advance a stage or discard at the final one; frozen
            # contenders keep their remaining counters
            self.collision_trace(end, len(transmitters))
            tx_slot = transmitters[0].transmit_slot
            prev_slot_base = tx_slot
            for node in transmitters:
                if node.stage >= self.m:
                    self._discard(node, end, "max_stage")
                else:
                    self._join(node, 0, stage=node.stage + 1)
            for node in self.nodes:
                if (
                    node.holder
                    and not node.pending
                    and node.transmit_slot is not None
                    and node not in transmitters
                ):
                    node.transmit_slot -= prev_slot_base

        # pending minters start their backoff now
        for node in self.nodes:
            if node.pending:
                self._join(node, 0, stage=0)
        # mining resumes wherever the variant allows it in idle air
        for node in self.nodes:
            if node.holder:
                if not self.variant.has_mining_strategy_2 and not node.mining:
                    self.resume(node, end)
            else:
                if not node.mining:
                    self.resume(node, end)

    # -- main loop ---------------------------------------------------------------

    def run(self) -> SimReport:
        sigma = self.sigma
        for node in self.nodes:
            self.resume(node, 0.0)
        while True:
            min_slot = self._contender_min()
            t_tx = self.t0 + min_slot * sigma if min_slot is not None else _INF
            t_arrival, node = self._next_arrival()
            if min(t_tx, t_arrival) >= self.horizon:
                break
            if t_arrival < t_tx:
                self._pop_arrival()
                self._mint_in_contention(node, t_arrival)
                continue
            # idle slots elapsed before this transmission boundary
            self._count_idle_slots(min_slot)
            transmitters = sorted(
                (n for n in self.nodes if n.transmit_slot == min_slot),
                key=lambda n: n.node_id,
            )
            if self.on_boundary is not None:
                self._observe(t_tx, transmitters)
            end = self._run_episode(t_tx, transmitters)
            if end >= self.horizon:
                self._flush_tail(end)
                return self._report(end)
        # idled out at the horizon
        n_tail = max(0, math.floor((self.horizon - self.t0) / sigma))
        self._count_idle_slots(n_tail)
        self._flush_tail(self.horizon)
        return self._report(self.horizon)

    def _count_idle_slots(self, n_slots: int) -> None:
        if n_slots <= 0:
            return
        if self.t0 >= self.t_warm:
            counted = n_slots
        else:
            skip = math.ceil((self.t_warm - self.t0) / self.sigma)
            counted = max(0, n_slots - skip)
        self.steps_w += counted

    def _flush_tail(self, t_end: float) -> None:
        for node in self.nodes:
            if node.mining:
                node.mining_time += self._clip(node.active_since, t_end)

    def _observe(self, t_tx: float, transmitters: list[_Node]) -> None:
        min_slot = self._contender_min()
        states = []
        for node in self.nodes:
            if node in transmitters:
                states.append(node.state("Transmitting", 0))
            elif node.holder and node.transmit_slot is not None:
                states.append(node.state("Backoff", node.transmit_slot - min_slot))
            else:
                states.append(node.state("NoBlock", 0))
        self.on_boundary(t_tx, states)

    def _report(self, t_end: float) -> SimReport:
        n = self.params.n_nodes
        window = max(t_end - self.t_warm, 0.0)
        in_flight = sum((1 if nd.holder else 0) + nd.queue for nd in self.nodes)
        assert self.generated_full == self.success_full + self.discarded_full + in_flight
        if self.steps_w > 0:
            tau = sum(nd.tx_steps / self.steps_w for nd in self.nodes) / n
        else:
            tau = 0.0
        theta_s = self.succ_w / window if window > 0 else 0.0
        theta_d = self.disc_w / window if window > 0 else 0.0
        denom = self.success_full + self.discarded_full
        eta = self.success_full / denom if denom > 0 else 0.0
        if window > 0:
            mining_fraction = sum(nd.mining_time / window for nd in self.nodes) / n
            p_m = max(0.0, 1.0 - mining_fraction)
        else:
            p_m = 0.0
        return SimReport(
            sim_time_s=t_end,
            blocks_generated=self.generated_full,
            blocks_success=self.success_full,
            blocks_discarded=self.discarded_full,
            tx_confirmed=self.success_full * self.params.n_tx_per_block,
            empirical_tau=tau,
            empirical_theta_t=theta_s * self.params.n_tx_per_block,
            empirical_theta_s=theta_s,
            empirical_theta_d=theta_d,
            empirical_eta=eta,
            empirical_p_m=p_m,
            collision_count=self.collisions_full,
            seed=self.seed,
            max_queue_len=self.max_queue,
        )


def run(
    params: ScenarioParams,
    variant: BacVariant,
    horizon_s: float,
    seed: int,
    *,
    lambda_overrides: Sequence[float] | None = None,
    trace: Callable[[float, int, str, str], None] | None = None,
    on_boundary=None,
) -> SimReport:
    """Simulate one seeded run and return its empirical report.

    ``lambda_overrides`` (one rate per node) is a testing hook; ``trace``
    receives (time_s, node_id, event_kind, detail) lines; ``on_boundary``
    receives (time_s, [NodeState...]) at every transmission boundary.
    """
    return _Engine(params, variant, horizon_s, seed, lambda_overrides, trace, on_boundary).run()
