"""INI representation of :class:`SimConfig`.

Sections and keys mirror the dataclass fields::

    [overlay]   n_clusters nodes_per_cluster intra_degree wiring wiring_param
                seed gateways_per_cluster
    [gossip]    fanout gossip_period node_ttl file_ttl full_refresh_period
                rumor_emissions
    [bloom]     m k seed_a seed_b          (omit the section for auto sizing)
    [workload]  alpha n_files coverage repeat_probability request_probability
    [churn]     join_probability leave_probability
    [run]       forward_strategy rounds warmup_rounds seed record_events

Only ``[overlay]`` is required; missing keys take the dataclass defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path

from ..bloom import BloomError, BloomParams
from ..topology import OverlaySpec, TopologyError
from ..workload import WorkloadError, ZipfWorkload
from .engine import ChurnConfig, SimConfig
from .node import GossipConfig, SimError


class ConfigError(ValueError):
    """Bad configuration; ``key`` names the offending ``section.key`` when known."""

    def __init__(self, message: str, key: str | None = None) -> None:
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _bool(text: str) -> bool:
    try:
        return _BOOL[text.strip().lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {text!r}") from None


_SCHEMA: dict[str, dict[str, type]] = {
    "overlay": {
        "n_clusters": int, "nodes_per_cluster": int, "intra_degree": int, "wiring": str,
        "wiring_param": float, "seed": int, "gateways_per_cluster": int,
    },
    "gossip": {f.name: int for f in dataclasses.fields(GossipConfig)},
    "bloom": {"m": int, "k": int, "seed_a": int, "seed_b": int},
    "workload": {
        "alpha": float, "n_files": int, "coverage": float,
        "repeat_probability": float, "request_probability": float,
    },
    "churn": {"join_probability": float, "leave_probability": float},
    "run": {
        "forward_strategy": str, "rounds": int, "warmup_rounds": int, "seed": int,
        "record_events": _bool,
    },
}

_REQUIRED = {"overlay": ("n_clusters", "nodes_per_cluster", "intra_degree"), "bloom": ("m", "k")}


def _section(parser: configparser.ConfigParser, name: str) -> dict:
    if not parser.has_section(name):
        return {}
    schema = _SCHEMA[name]
    out = {}
    for key, raw in parser.items(name):
        if key not in schema:
            raise ConfigError("unknown key", f"{name}.{key}")
        conv = schema[key]
        try:
            out[key] = conv(raw.strip()) if conv is not str else raw.strip()
        except ValueError:
            raise ConfigError(f"cannot parse {raw!r}", f"{name}.{key}") from None
    for key in _REQUIRED.get(name, ()):
        if key not in out:
            raise ConfigError("missing required key", f"{name}.{key}")
    return out


def _build(kind, section: str, values: dict):
    try:
        return kind(**values)
    except (SimError, TopologyError, WorkloadError, BloomError) as exc:
        key = next((f"{section}.{k}" for k in values if k in str(exc)), section)
        raise ConfigError(str(exc), key) from exc


def parse_config(text: str) -> SimConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparsable config: {exc}") from exc
    for name in parser.sections():
        if name not in _SCHEMA:
            raise ConfigError("unknown section", name)
    if not parser.has_section("overlay"):
        raise ConfigError("missing required section", "overlay")

    overlay = _build(OverlaySpec, "overlay", _section(parser, "overlay"))
    gossip = _build(GossipConfig, "gossip", _section(parser, "gossip"))
    bloom_values = _section(parser, "bloom")
    bloom = _build(BloomParams, "bloom", bloom_values) if bloom_values else None
    wl = _section(parser, "workload")
    workload = _build(
        ZipfWorkload, "workload", {"alpha": wl.pop("alpha", 1.0), "n_files": wl.pop("n_files", 10_000)}
    )
    churn = _build(ChurnConfig, "churn", _section(parser, "churn"))
    run = _section(parser, "run")
    return _build(
        SimConfig, "run",
        dict(overlay=overlay, gossip=gossip, workload=workload, bloom=bloom, churn=churn, **wl, **run),
    )


def load_config(path: str | Path) -> SimConfig:
    return parse_config(Path(path).read_text())


def dump_config(config: SimConfig) -> str:
    """INI text that :func:`parse_config` maps back to ``config``."""
    sections: dict[str, dict] = {
        "overlay": dataclasses.asdict(config.overlay),
        "gossip": dataclasses.asdict(config.gossip),
    }
    if config.bloom is not None:
        b = config.bloom
        sections["bloom"] = {"m": b.m, "k": b.k, "seed_a": b.seed_a, "seed_b": b.seed_b}
    sections["workload"] = {
        "alpha": config.workload.alpha,
        "n_files": config.workload.n_files,
        "coverage": config.coverage,
        "repeat_probability": config.repeat_probability,
        "request_probability": config.request_probability,
    }
    sections["churn"] = dataclasses.asdict(config.churn)
    sections["run"] = {
        "forward_strategy": config.forward_strategy,
        "rounds": config.rounds,
        "warmup_rounds": config.warmup_rounds,
        "seed": config.seed,
        "record_events": str(config.record_events).lower(),
    }
    lines = []
    for name, values in sections.items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in values.items())
        lines.append("")
    return "\n".join(lines)
