"""Deterministic generator of labelled flow-like datasets.

Rows come out in temporal order. Attacks arrive in bursts of geometric
length separated by runs of normal traffic. One categorical column carries
most of the attack signal: with probability ``signal`` an attack row takes
one of a few attack-associated values and a normal row one of the remaining
values; otherwise either class draws uniformly from all values. Numeric
columns are two-component lognormal mixtures; informative ones shift their
log-mean for attack rows, noise ones ignore the label.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import ColumnSchema, Dataset, Kind, encode_categories, write_csv, write_schema

PROTOCOL_NAMES = ("tcp", "udp", "icmp", "arp", "igmp", "rtp", "sctp", "gre", "esp", "ah",
                  "pim", "ospf", "rsvp", "ipv6", "llc", "stp")
INFORMATIVE_NAMES = ("SrcBytes", "DstBytes", "SrcLoad", "DstLoad", "SrcJitter", "DstJitter",
                     "Dur", "SIntPkt", "DIntPkt", "TotPkts", "Rate", "Loss")


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    The defaults give a high-cardinality categorical column whose attack
    values are individually rare among all values but each more frequent
    than any normal value, and numeric columns weak enough that the
    categorical column ranks first by permutation importance.
    """

    rows: int = 20000
    attack_fraction: float = 0.125
    cardinality: int = 3000
    attack_values: int = 150
    signal: float = 0.9
    informative: int = 5
    noise: int = 5
    numeric_shift: float = 0.5
    burst_mean: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.attack_fraction < 1:
            raise ValueError("attack_fraction must be in (0, 1)")
        if self.cardinality < 2:
            raise ValueError("cardinality must be >= 2")
        if not 1 <= self.attack_values < self.cardinality:
            raise ValueError("attack_values must be in [1, cardinality)")
        if self.rows < 100:
            raise ValueError("rows must be >= 100")
        if not 0 <= self.signal <= 1:
            raise ValueError("signal must be in [0, 1]")
        if self.informative < 0 or self.noise < 0 or self.informative + self.noise < 1:
            raise ValueError("need at least one numeric column")
        if self.burst_mean < 1:
            raise ValueError("burst_mean must be >= 1")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def category_names(cardinality: int) -> list[str]:
    out = []
    for i in range(cardinality):
        base = PROTOCOL_NAMES[i % len(PROTOCOL_NAMES)]
        out.append(base if i < len(PROTOCOL_NAMES) else f"{base}{i // len(PROTOCOL_NAMES)}")
    return out


def burst_labels(rows: int, attacks: int, burst_mean: float, rng) -> np.ndarray:
    """Label sequence with exactly ``attacks`` ones grouped into separated bursts."""
    lengths = []
    remaining = attacks
    while remaining > 0:
        run = min(int(rng.geometric(1.0 / burst_mean)), remaining)
        lengths.append(run)
        remaining -= run
    normals = rows - attacks
    n_bursts = len(lengths)
    # interior gaps need at least one normal row to keep bursts apart
    while n_bursts - 1 > normals:
        last = lengths.pop()
        lengths[-1] += last
        n_bursts -= 1
    free = normals - max(n_bursts - 1, 0)
    # split the free normal rows into n_bursts + 1 gaps at random cut points
    cuts = np.sort(rng.integers(0, free + 1, size=n_bursts))
    gaps = np.diff(np.concatenate([[0], cuts, [free]]))
    gaps[1:-1] += 1
    labels = np.empty(rows, dtype=np.int8)
    pos = 0
    for gap, run in zip(gaps, lengths + [0]):
        labels[pos:pos + gap] = 0
        pos += gap
        labels[pos:pos + run] = 1
        pos += run
    return labels


def _categorical(labels, cfg: SynthConfig, rng) -> np.ndarray:
    n = labels.size
    attack_set = np.arange(cfg.attack_values)
    normal_set = np.arange(cfg.attack_values, cfg.cardinality)
    focused = rng.random(n) < cfg.signal
    anywhere = rng.integers(0, cfg.cardinality, n)
    in_attack = attack_set[rng.integers(0, attack_set.size, n)]
    in_normal = normal_set[rng.integers(0, normal_set.size, n)]
    chosen = np.where(labels == 1, in_attack, in_normal)
    return np.where(focused, chosen, anywhere)


def _lognormal_mixture(labels, shift: float, rng) -> np.ndarray:
    n = labels.size
    busy = rng.random(n) < 0.3
    mu = np.where(busy, 3.0, 0.5) + shift * labels
    sigma = np.where(busy, 0.6, 1.0)
    return np.exp(mu + sigma * rng.standard_normal(n))


def generate_dataset(cfg: SynthConfig = SynthConfig()) -> Dataset:
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x5E7]))
    attacks = int(round(cfg.rows * cfg.attack_fraction))
    attacks = min(max(attacks, 1), cfg.rows - 1)
    labels = burst_labels(cfg.rows, attacks, cfg.burst_mean, rng)

    names = category_names(cfg.cardinality)
    codes = _categorical(labels, cfg, rng)

    schema = [
        ColumnSchema("FlowId", Kind.IDENTIFIER),
        ColumnSchema("SrcAddr", Kind.IDENTIFIER),
        ColumnSchema("StartTime", Kind.TIMESTAMP),
        ColumnSchema("Proto", Kind.CATEGORICAL),
    ]
    gaps = rng.exponential(0.05, cfg.rows)
    data = {
        "FlowId": [str(i) for i in range(cfg.rows)],
        "SrcAddr": [f"10.0.{a}.{b}" for a, b in rng.integers(0, 256, (cfg.rows, 2))],
        "StartTime": [f"{t:.6f}" for t in np.cumsum(gaps)],
        "Proto": [names[c] for c in codes],
    }
    for i in range(cfg.informative):
        name = INFORMATIVE_NAMES[i % len(INFORMATIVE_NAMES)]
        if i >= len(INFORMATIVE_NAMES):
            name = f"{name}{i // len(INFORMATIVE_NAMES)}"
        schema.append(ColumnSchema(name, Kind.NUMERIC))
        data[name] = np.round(_lognormal_mixture(labels, cfg.numeric_shift, rng), 6)
    for i in range(cfg.noise):
        name = f"Noise{i + 1}"
        schema.append(ColumnSchema(name, Kind.NUMERIC))
        data[name] = np.round(_lognormal_mixture(np.zeros_like(labels), 0.0, rng), 6)
    schema.append(ColumnSchema("Label", Kind.LABEL))
    data["Label"] = labels
    return encode_categories(Dataset.from_columns(schema, data))


def write_dataset(d: Dataset, out_dir, stem: str = "data") -> tuple[Path, Path]:
    """Write ``<stem>.csv`` and its ``<stem>.schema`` sidecar; return both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    schema_path = out_dir / f"{stem}.schema"
    write_csv(d, csv_path)
    write_schema(d.schema, schema_path)
    return csv_path, schema_path
