"""Per-node Markov-chain solutions for the four block access control variants.

A node cycles through a no-block state, backoff states {i,k} (stage i,
counter k >= 1) and transmitting states {i,0}.  Channel conditions enter as
the per-step probabilities (p_s, p_c): another node's successful
transmission, a collision, else an idle slot.  The transmit probability tau
is the fixed point of the self-consistency loop

    tau -> (p, p_s, p_c) -> leave/queue quantities -> stationary masses -> tau'

solved by damped iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .scenario import BacVariant, ScenarioParams, channel_times, window_schedule

__all__ = [
    "ChainSolution",
    "ChannelProbabilities",
    "NoConvergence",
    "SingularDenominator",
    "channel_probabilities",
    "exit_distribution",
    "leave_probability",
    "queue_occupancy",
    "solve_tau",
    "stationary_closed_form",
]

# Damped fixed-point iteration settings.  The seed is the classic saturation
# starting point 2/(w_min+1); damping tames the oscillation the raw map
# develops at high load.
DAMPING = 0.5
TOLERANCE = 1e-10
MAX_ITERATIONS = 100_000

# Threshold below which (1-x^W)/(1-x) switches to its analytic limit W.
_GEOM_EPS = 1e-9


class SingularDenominator(ArithmeticError):
    """A printed closed-form denominator came out non-positive."""


class NoConvergence(RuntimeError):
    """Fixed-point iteration exhausted its budget; carries the best iterate."""

    def __init__(self, message: str, solution: "ChainSolution"):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class ChannelProbabilities:
    """Per-step channel view of one node, plus the slot-level probabilities.

    p_s / p_c: probability a step carries another node's success / a
    collision; p = p_s + p_c is also the collision probability seen by the
    node's own transmitted block.  p0 / p1: probability a slot is idle /
    carries exactly one transmission, network-wide.
    """

    p_s: float
    p_c: float
    p: float
    p0: float
    p1: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_s and 0.0 <= self.p_c and self.p <= 1.0 + 1e-12):
            raise ValueError(f"inconsistent channel probabilities: {self}")
        if abs((self.p_s + self.p_c) - self.p) > 1e-12:
            raise ValueError("p must equal p_s + p_c")


def channel_probabilities(tau: float, n_nodes: int) -> ChannelProbabilities:
    """Channel probabilities generated by n-1 peers each transmitting w.p. tau."""
    n = n_nodes
    p = 1.0 - (1.0 - tau) ** (n - 1)
    p_s = (n - 1) * tau * (1.0 - tau) ** (n - 2)
    return ChannelProbabilities(
        p_s=p_s,
        p_c=p - p_s,
        p=p,
        p0=(1.0 - tau) ** n,
        p1=n * tau * (1.0 - tau) ** (n - 1),
    )


@dataclass(frozen=True)
class ChainSolution:
    """Converged fixed point for one variant.

    alpha and t_q_s are identically 0 for the queue-free variants.  The
    ``clamped`` flag records that lambda*T_q exceeded 1 somewhere along the
    iteration and the queue-nonempty probability was held at 1; metrics
    derived from such a solution sit at the model's validity boundary.
    """

    variant: BacVariant
    tau: float
    channel: ChannelProbabilities
    p_a: float
    alpha: float
    t_q_s: float
    p_exit: tuple[float, ...]
    pi_noblock: float
    pi_transmit: tuple[float, ...]
    iterations: int
    residual: float
    clamped: bool = False
    converged: bool = True


# --- elementary pieces ------------------------------------------------------


def _survival_ratio(p: float, p_c: float) -> float:
    """x = (1-p)/(1-p_c): per-slot odds of decrementing before a discard."""
    return (1.0 - p) / (1.0 - p_c)


def _geometric_sum(x: float, w: int) -> float:
    """sum_{t=0}^{w-1} x^t with the analytic limit at x -> 1.

    The power is taken in log space; for x below the underflow point of
    x**w the term flushes cleanly to zero.
    """
    if abs(1.0 - x) < _GEOM_EPS:
        return float(w)
    if x <= 0.0:
        return 1.0 if w >= 1 else 0.0
    return (1.0 - math.exp(w * math.log(x))) / (1.0 - x)


def _stage_factors(p: float, p_c: float, windows: list[int]) -> list[float]:
    """Per-stage factor p * S_n / W_n, where S_n is the survival-weighted
    geometric sum over the W_n equiprobable initial counters."""
    x = _survival_ratio(p, p_c)
    return [p * _geometric_sum(x, w) / w for w in windows]


def leave_probability(
    params: ScenarioParams, ch: ChannelProbabilities, variant: BacVariant
) -> float:
    """Probability of minting (and keeping) a block during one chain step.

    Without mining strategy I the node mines through collisions as well as
    idle slots; blocks minted during another node's success are discarded
    immediately and do not leave the no-block state.  With strategy I only
    idle-slot mining counts.
    """
    lam = params.lambda_bkps
    sigma = params.slot_sigma_s
    idle = (1.0 - ch.p_s - ch.p_c) * (1.0 - math.exp(-lam * sigma))
    if variant.has_mining_strategy_1:
        return idle
    t_c = channel_times(params).t_collision_s
    return ch.p_c * (1.0 - math.exp(-lam * t_c)) + idle


def exit_distribution(p: float, p_c: float, windows: list[int]) -> list[float]:
    """p_e(i): probability a block exits via a successful transmission at stage i.

    The p -> 0 limit is evaluated analytically: the first transmission
    always succeeds.
    """
    if not 0.0 <= p_c <= p:
        raise ValueError("require 0 <= p_c <= p")
    if p >= 1.0:
        raise ValueError("exit distribution undefined at p >= 1")
    if p == 0.0:
        return [1.0] + [0.0] * (len(windows) - 1)
    factors = _stage_factors(p, p_c, windows)
    out: list[float] = []
    prod = 1.0
    for g in factors:
        prod *= g
        out.append(prod * (1.0 - p) / p)
    return out


def queue_occupancy(
    params: ScenarioParams, ch: ChannelProbabilities, variant: BacVariant
) -> tuple[float, float]:
    """(T_q, alpha): expected backoff+transmit sojourn of a block, and the
    queue-nonempty probability lambda*T_q clamped to [0, 1].

    Queue-free variants (mining strategy II) return (0, 0).  Without
    strategy I each backoff slot also pays the expected collision freeze
    time; with it the node only mines through idle slots, so the per-slot
    term is the slot time alone.
    """
    if variant.has_mining_strategy_2:
        return 0.0, 0.0
    if ch.p >= 1.0:
        raise ValueError("queue occupancy undefined at p = 1")
    times = channel_times(params)
    t_s, t_c = times.t_success_s, times.t_collision_s
    windows = window_schedule(params)
    per_slot = params.slot_sigma_s
    if not variant.has_mining_strategy_1:
        per_slot += ch.p_c / (1.0 - ch.p) * t_c
    p_exit = exit_distribution(ch.p, ch.p_c, windows)
    t_q = 0.0
    cum_halfwindow = 0.0
    for i, w in enumerate(windows):
        cum_halfwindow += (w - 1) / 2.0
        t_q += p_exit[i] * ((i * t_c + t_s) + cum_halfwindow * per_slot)
    alpha = min(max(params.lambda_bkps * t_q, 0.0), 1.0)
    return t_q, alpha


# --- stationary closed forms ------------------------------------------------
#
# The two chain families use structurally identical stage products but are
# kept as separate functions on purpose: sharing invites transcription bugs.


def _f_queued(p: float, p_c: float, p_a: float, windows: list[int]) -> list[float]:
    """Stage weights f(i) for the queueing chain (BAC-1/2)."""
    if p == 0.0:
        return [p_a] + [0.0] * (len(windows) - 1)
    factors = _stage_factors(p, p_c, windows)
    out: list[float] = []
    prod = 1.0
    for g in factors:
        prod *= g
        out.append(prod * p_a / p)
    return out


def _f_queue_free(p: float, p_c: float, p_a: float, windows: list[int]) -> list[float]:
    """Stage weights f(i) for the queue-free chain (BAC-3/4)."""
    if p == 0.0:
        return [p_a] + [0.0] * (len(windows) - 1)
    factors = _stage_factors(p, p_c, windows)
    out: list[float] = []
    prod = 1.0
    for g in factors:
        prod *= g
        out.append(prod * p_a / p)
    return out


def _stage_ratios(p: float, p_c: float, windows: list[int]) -> list[float]:
    """h(i) = pi_{i,0}/pi_{0,0}: per-stage attenuation of transmit mass."""
    if p == 0.0:
        return [1.0] + [0.0] * (len(windows) - 1)
    factors = _stage_factors(p, p_c, windows)
    out = [1.0]
    prod = 1.0
    for g in factors[1:]:
        prod *= g
        out.append(prod)
    return out


def stationary_closed_form(
    params: ScenarioParams,
    ch: ChannelProbabilities,
    p_a: float,
    alpha: float,
    variant: BacVariant,
) -> tuple[float, list[float]]:
    """Closed-form stationary mass of the no-block state and of each
    transmitting state {i,0}, with (p_s, p_c, p_a, alpha) exogenous.

    Raises SingularDenominator when a printed denominator is non-positive;
    degenerate inputs are reported, never silently clamped.
    """
    windows = window_schedule(params)
    p, p_s, p_c = ch.p, ch.p_s, ch.p_c
    if variant.has_mining_strategy_2:
        f = _f_queue_free(p, p_c, p_a, windows)
        den = p_a + p_s - (1.0 - p - p_s) * sum(f) - p * f[-1]
        if den <= 0.0:
            raise SingularDenominator(
                f"no-block denominator {den!r} <= 0 for {variant.value} "
                f"(p={p}, p_s={p_s}, p_c={p_c}, p_a={p_a})"
            )
        pi_noblock = p_s / den
        pi_transmit = [fi * pi_noblock for fi in f]
        return pi_noblock, pi_transmit

    f = _f_queued(p, p_c, p_a, windows)
    if p_a + p_s <= 0.0:
        raise SingularDenominator(f"p_a + p_s = {p_a + p_s!r} <= 0 for {variant.value}")
    if p_a <= 0.0:
        raise SingularDenominator(f"p_a = {p_a!r} <= 0 for {variant.value}")
    pas = p_a + p_s
    den = (
        1.0
        + (p_s / pas - (1.0 - p) * (1.0 - alpha) / pas - (1.0 - p) * alpha / p_a) * sum(f)
        - (p / pas) * f[-1]
    )
    if den <= 0.0:
        raise SingularDenominator(
            f"pi_00 denominator {den!r} <= 0 for {variant.value} "
            f"(p={p}, p_s={p_s}, p_c={p_c}, p_a={p_a}, alpha={alpha})"
        )
    pi_00 = (p_s / pas) * f[0] / den
    ratios = _stage_ratios(p, p_c, windows)
    pi_transmit = [h * pi_00 for h in ratios]
    total_transmit = sum(pi_transmit)
    pi_noblock = (
        (1.0 - p) * (1.0 - alpha) * total_transmit
        + p * pi_transmit[-1]
        + p_s * (1.0 - total_transmit)
    ) / pas
    return pi_noblock, pi_transmit


def _evaluate_map(params: ScenarioParams, variant: BacVariant, tau: float):
    """One application of the self-consistency map at a given tau."""
    ch = channel_probabilities(tau, params.n_nodes)
    p_a = leave_probability(params, ch, variant)
    t_q, alpha = queue_occupancy(params, ch, variant)
    pi_noblock, pi_transmit = stationary_closed_form(params, ch, p_a, alpha, variant)
    return ch, p_a, t_q, alpha, pi_noblock, pi_transmit


def solve_tau(
    params: ScenarioParams,
    variant: BacVariant,
    *,
    damping: float = DAMPING,
    tolerance: float = TOLERANCE,
    max_iterations: int = MAX_ITERATIONS,
    raise_on_failure: bool = True,
) -> ChainSolution:
    """Damped fixed-point solve for the transmit probability of one variant.

    After the residual first drops below ``tolerance`` the iteration is
    polished toward the numerical floor so the stored solution is
    self-consistent to machine precision.  Raises NoConvergence (carrying
    the best iterate, flagged ``converged=False``) if the budget runs out.
    """
    windows = window_schedule(params)
    tau = 2.0 / (params.w_min + 1)
    best = None  # (residual, iteration, tau, map evaluation)
    hit_tolerance_at: int | None = None
    polish_budget = 400
    prev_residual = math.inf
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        evaluation = _evaluate_map(params, variant, tau)
        tau_next = sum(evaluation[5])
        residual = abs(tau_next - tau)
        if best is None or residual < best[0]:
            best = (residual, iterations, tau, evaluation)
        if residual < tolerance:
            if hit_tolerance_at is None:
                hit_tolerance_at = iterations
            at_floor = residual < 1e-16 or residual >= prev_residual
            if at_floor or iterations - hit_tolerance_at >= polish_budget:
                break
        prev_residual = residual
        tau = (1.0 - damping) * tau + damping * tau_next
    residual, _, tau, evaluation = best
    ch, p_a, t_q, alpha, pi_noblock, pi_transmit = evaluation
    converged = residual < tolerance
    solution = ChainSolution(
        variant=variant,
        tau=sum(pi_transmit),
        channel=ch,
        p_a=p_a,
        alpha=alpha,
        t_q_s=t_q,
        p_exit=tuple(exit_distribution(ch.p, ch.p_c, windows)),
        pi_noblock=pi_noblock,
        pi_transmit=tuple(pi_transmit),
        iterations=iterations,
        residual=residual,
        clamped=params.lambda_bkps * t_q > 1.0,
        converged=converged,
    )
    if not converged and raise_on_failure:
        raise NoConvergence(
            f"{variant.value}: no fixed point within {max_iterations} iterations "
            f"(residual {residual:.3e})",
            solution,
        )
    return solution
