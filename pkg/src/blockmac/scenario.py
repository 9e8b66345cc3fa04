"""Network, MAC, PHY and blockchain parameterization shared by both engines.

All sizes are carried in bits and converted to seconds only inside
:func:`channel_times`, so unit conversion happens in exactly one place.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace
from pathlib import Path

__all__ = [
    "BacVariant",
    "ChannelTimes",
    "ConfigError",
    "DEFAULT_PARAMS",
    "ScenarioParams",
    "channel_times",
    "load_scenario",
    "parse_kv_file",
    "window_schedule",
]


class ConfigError(ValueError):
    """Raised when a scenario/sweep configuration is invalid."""


class BacVariant(enum.Enum):
    """The four block access control approaches.

    Every variant runs the discard strategy.  Mining strategy I pauses
    mining while another node's block transmission occupies the channel;
    mining strategy II pauses mining while the node itself holds a
    pending block.
    """

    BAC1 = "BAC1"  # discard strategy only
    BAC2 = "BAC2"  # discard + mining strategy I
    BAC3 = "BAC3"  # discard + mining strategy II
    BAC4 = "BAC4"  # discard + both mining strategies

    @property
    def has_mining_strategy_1(self) -> bool:
        return self in (BacVariant.BAC2, BacVariant.BAC4)

    @property
    def has_mining_strategy_2(self) -> bool:
        return self in (BacVariant.BAC3, BacVariant.BAC4)

    @property
    def has_queueing(self) -> bool:
        """Blocks minted while one is pending queue up (no strategy II)."""
        return not self.has_mining_strategy_2


@dataclass(frozen=True)
class ScenarioParams:
    """Full scenario parameterization.

    ``lambda_bkps`` is the per-node block generation rate in blocks per
    second.  Hashrate and hash difficulty are not modeled separately:
    every downstream formula consumes only their ratio.
    """

    n_nodes: int = 10
    lambda_bkps: float = 10.0
    w_min: int = 16
    w_max: int = 1024
    m_stages: int = 6
    slot_sigma_s: float = 50e-6
    header_bits: int = 400
    ack_bits: int = 240
    bitrate_bps: float = 1e6
    delta_s: float = 1e-6
    sifs_s: float = 28e-6
    difs_s: float = 128e-6
    block_header_bits: int = 640
    tx_bits: int = 2000
    n_tx_per_block: int = 10

    def __post_init__(self) -> None:
        if self.n_nodes < 2:
            raise ConfigError("n_nodes must be >= 2 (a single node degenerates the model)")
        if self.n_tx_per_block < 1:
            raise ConfigError("n_tx_per_block must be >= 1")
        if self.m_stages < 0:
            raise ConfigError("m_stages must be >= 0")
        if self.w_min < 1 or self.w_max < 1:
            raise ConfigError("contention windows must be >= 1")
        if self.w_min * 2**self.m_stages > self.w_max:
            raise ConfigError(
                f"w_min*2^m_stages = {self.w_min * 2 ** self.m_stages} exceeds w_max = {self.w_max}"
            )
        positive = (
            "lambda_bkps",
            "slot_sigma_s",
            "header_bits",
            "ack_bits",
            "bitrate_bps",
            "delta_s",
            "sifs_s",
            "difs_s",
            "block_header_bits",
            "tx_bits",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")

    @property
    def block_bits(self) -> int:
        """Block size: header plus all carried transactions."""
        return self.block_header_bits + self.n_tx_per_block * self.tx_bits

    def with_(self, **overrides) -> "ScenarioParams":
        """Copy with some fields replaced (re-validates)."""
        return replace(self, **overrides)


DEFAULT_PARAMS = ScenarioParams()


@dataclass(frozen=True)
class ChannelTimes:
    """Mean channel busy times for a successful transmission and a collision."""

    t_success_s: float
    t_collision_s: float

    def __post_init__(self) -> None:
        if not self.t_success_s > self.t_collision_s > 0:
            raise ConfigError("require t_success_s > t_collision_s > 0")


def window_schedule(params: ScenarioParams) -> list[int]:
    """Contention window per backoff stage: doubled each stage, capped at w_max."""
    return [min(params.w_min * 2**i, params.w_max) for i in range(params.m_stages + 1)]


def channel_times(params: ScenarioParams) -> ChannelTimes:
    """Busy time of a success (with SIFS/ACK exchange) and of a collision."""
    payload_s = (params.header_bits + params.block_bits) / params.bitrate_bps
    t_c = payload_s + params.difs_s + params.delta_s
    t_s = (
        payload_s
        + params.sifs_s
        + params.delta_s
        + params.ack_bits / params.bitrate_bps
        + params.difs_s
        + params.delta_s
    )
    return ChannelTimes(t_success_s=t_s, t_collision_s=t_c)


# --- scenario config files -------------------------------------------------
#
# Flat key = value text, one setting per line.  '#' starts a comment, blank
# lines are ignored.  Keys are exactly the ScenarioParams field names; keys
# not in the schema are errors.  Missing keys fall back to the defaults above.

_INT_FIELDS = {
    "n_nodes",
    "w_min",
    "w_max",
    "m_stages",
    "header_bits",
    "ack_bits",
    "block_header_bits",
    "tx_bits",
    "n_tx_per_block",
}
_SCENARIO_FIELDS = {f.name for f in fields(ScenarioParams)}


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Read a `key = value` document into an ordered dict of raw strings."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{path}:{lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _convert(key: str, value: str):
    try:
        if key in _INT_FIELDS:
            as_float = float(value)
            as_int = int(as_float)
            if as_int != as_float:
                raise ValueError
            return as_int
        return float(value)
    except ValueError:
        kind = "integer" if key in _INT_FIELDS else "number"
        raise ConfigError(f"key {key!r}: expected {kind}, got {value!r}") from None


def scenario_from_mapping(mapping: dict[str, str]) -> ScenarioParams:
    """Build ScenarioParams from raw key/value strings; unknown keys are errors."""
    unknown = sorted(set(mapping) - _SCENARIO_FIELDS)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {', '.join(unknown)}")
    kwargs = {key: _convert(key, value) for key, value in mapping.items()}
    return ScenarioParams(**kwargs)


def load_scenario(path: str | Path) -> ScenarioParams:
    """Load a scenario config file."""
    return scenario_from_mapping(parse_kv_file(path))
