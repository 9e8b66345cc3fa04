"""Closed-form performance metrics evaluated from a converged chain solution."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .chain import ChainSolution
from .scenario import BacVariant, ScenarioParams, channel_times

__all__ = [
    "MetricsReport",
    "ZeroActivity",
    "discard_rate",
    "evaluate_metrics",
    "throughput",
    "utilization_and_pause",
]


class ZeroActivity(ArithmeticError):
    """Block utilization is undefined when no blocks succeed or get discarded."""


@dataclass(frozen=True)
class MetricsReport:
    """Steady-state performance of one (scenario, variant) pair.

    theta_t: transactions confirmed per second; theta_s / theta_d: blocks
    succeeding / discarded per second, network wide; eta: fraction of minted
    blocks that make it into the ledger; p_m: fraction of potential mining
    time spent paused.  ``negative_rate_clamped`` records that floating-point
    cancellation produced a slightly negative rate that was zeroed.
    """

    theta_t: float
    theta_s: float
    theta_d: float
    eta: float
    p_m: float
    clamped: bool
    negative_rate_clamped: bool = False


def _slot_denominator(params: ScenarioParams, sol: ChainSolution) -> float:
    """Mean duration of one channel step: idle slot, success or collision."""
    times = channel_times(params)
    p0, p1 = sol.channel.p0, sol.channel.p1
    return (
        p0 * params.slot_sigma_s
        + p1 * times.t_success_s
        + (1.0 - p0 - p1) * times.t_collision_s
    )


def throughput(params: ScenarioParams, sol: ChainSolution) -> tuple[float, float]:
    """(theta_t, theta_s): transaction and block success rates."""
    den = _slot_denominator(params, sol)
    theta_s = sol.channel.p1 / den
    return theta_s * params.n_tx_per_block, theta_s


def discard_rate(params: ScenarioParams, sol: ChainSolution) -> tuple[float, bool]:
    """Network-wide block discard rate for the solution's variant.

    Returns (theta_d, negative_rate_clamped); tiny negative values from
    cancellation are clamped to zero and flagged.
    """
    lam, n = params.lambda_bkps, params.n_nodes
    tau = sol.tau
    den = _slot_denominator(params, sol)
    times = channel_times(params)
    t_s, t_c = times.t_success_s, times.t_collision_s
    _, theta_s = throughput(params, sol)
    variant = sol.variant

    if variant is BacVariant.BAC1:
        theta_d = lam * n - theta_s
    elif variant is BacVariant.BAC2:
        # Mining time per step: all nodes in idle slots, the transmitter
        # during a success, the j colliders during a collision.
        collision_term = 0.0
        for j in range(2, n + 1):
            collision_term += (
                math.comb(n, j) * tau**j * (1.0 - tau) ** (n - j) * j * lam * t_c
            )
        generated = (
            sol.channel.p0 * n * lam * params.slot_sigma_s
            + sol.channel.p1 * lam * t_s
            + collision_term
        ) / den
        theta_d = generated - theta_s
    else:
        # Discards at a success: every backoff peer plus (without strategy I)
        # every no-block peer that mints during the transmission.  Discards
        # at a collision: every collider already at the final backoff stage.
        pi_noblock = sol.pi_noblock
        pi_final = sol.pi_transmit[-1]
        backoff_mass = 1.0 - tau - pi_noblock
        mint_during_success = 1.0 - math.exp(-lam * t_s)
        success_sum = 0.0
        for n_b in range(0, n):
            weight = (
                math.comb(n - 1, n_b)
                * pi_noblock ** (n - 1 - n_b)
                * backoff_mass**n_b
            )
            if variant is BacVariant.BAC3:
                discarded = n_b + (n - 1 - n_b) * mint_during_success
            else:
                discarded = n_b
            success_sum += discarded * n * tau * weight
        collision_sum = 0.0
        for j in range(2, n + 1):
            outer = math.comb(n, j) * (1.0 - tau) ** (n - j)
            for n_c in range(0, j + 1):
                collision_sum += (
                    n_c
                    * outer
                    * math.comb(j, n_c)
                    * (tau - pi_final) ** (j - n_c)
                    * pi_final**n_c
                )
        theta_d = (success_sum + collision_sum) / den

    if theta_d < 0.0:
        return 0.0, True
    return theta_d, False


def utilization_and_pause(
    params: ScenarioParams,
    sol: ChainSolution,
    theta_s: float,
    theta_d: float,
) -> tuple[float, float]:
    """(eta, p_m): block utilization and mining pause probability.

    p_m is a long-run time proportion, so cancellation noise is clamped
    into [0, 1].
    """
    if theta_s + theta_d <= 0.0:
        raise ZeroActivity("eta undefined: theta_s + theta_d = 0")
    eta = theta_s / (theta_s + theta_d)
    lam_n = params.lambda_bkps * params.n_nodes
    p_m = (lam_n - theta_s - theta_d) / lam_n
    return eta, min(max(p_m, 0.0), 1.0)


def evaluate_metrics(params: ScenarioParams, sol: ChainSolution) -> MetricsReport:
    """Full metrics report for one converged solution."""
    theta_t, theta_s = throughput(params, sol)
    theta_d, neg_clamped = discard_rate(params, sol)
    eta, p_m = utilization_and_pause(params, sol, theta_s, theta_d)
    return MetricsReport(
        theta_t=theta_t,
        theta_s=theta_s,
        theta_d=theta_d,
        eta=eta,
        p_m=p_m,
        clamped=sol.clamped,
        negative_rate_clamped=neg_clamped,
    )
