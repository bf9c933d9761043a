"""Event-based energy accounting.

The machine emits one event per priced action; this module turns an
event log and a cost table (femtojoules per event) into a per-component
report.  Event keys and their attribution:

    ("imem_fetch", bits)             -> IMEM     bits * fJ-per-bit
    ("loopbuf_replay",)              -> IMEM     flat
    ("move", "scalar"|"vector")      -> interconnect
    ("fu_op", kind, opcode)          -> vMAC for kind "vmac", else other-logic
    ("rf_access", class, rw)         -> RF       class "scalar"|"vector"
    ("sram_bank", mem, bank, rw)     -> component named after the memory
    ("idle_cycle",)                  -> idle

Every executed cycle carries exactly one imem_fetch or loopbuf_replay,
so a log also knows its cycle count.  Logs are additive: accounting a
concatenation equals the sum of accounting the parts.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

COST_SCHEMA_VERSION = 1

COMPONENTS = ("vMAC", "interconnect", "IMEM", "DMEM", "PMEM", "RF",
              "other-logic", "idle")

MAC_OPCODES = ("macb", "mact", "mac8")


class EventLog:
    """Aggregated multiset of energy events."""

    __slots__ = ("counts",)

    def __init__(self, counts: Counter | None = None):
        self.counts: Counter = counts if counts is not None else Counter()

    def add(self, key: tuple, n: int = 1) -> None:
        self.counts[key] += n

    def update(self, other: dict) -> None:
        self.counts.update(other)

    def __add__(self, other: "EventLog") -> "EventLog":
        return EventLog(self.counts + other.counts)

    def __eq__(self, other) -> bool:
        return isinstance(other, EventLog) and self.counts == other.counts

    def total_events(self) -> int:
        return sum(self.counts.values())

    @property
    def cycles(self) -> int:
        return sum(n for key, n in self.counts.items()
                   if key[0] in ("imem_fetch", "loopbuf_replay"))

    def count(self, kind: str) -> int:
        return sum(n for key, n in self.counts.items() if key[0] == kind)

    def mac_triggers(self) -> int:
        return sum(n for key, n in self.counts.items()
                   if key[0] == "fu_op" and key[2] in MAC_OPCODES)


@dataclass
class CostTable:
    """Per-event energies in femtojoules."""

    imem_fetch_per_bit: float
    loopbuf_replay: float
    move: dict[str, float]                   # "scalar" | "vector"
    rf_access: dict[str, float]              # "scalar_read" | ... | "vector_write"
    sram_bank: dict[str, float]              # "read" | "write"
    fu_op: dict[str, dict[str, float]]       # kind -> opcode (or "*") -> fJ
    idle_cycle: float = 0.0

    def to_dict(self) -> dict:
        return {
            "version": COST_SCHEMA_VERSION,
            "units": "fJ",
            "imem_fetch_per_bit": self.imem_fetch_per_bit,
            "loopbuf_replay": self.loopbuf_replay,
            "move": dict(self.move),
            "rf_access": dict(self.rf_access),
            "sram_bank": dict(self.sram_bank),
            "fu_op": {k: dict(v) for k, v in self.fu_op.items()},
            "idle_cycle": self.idle_cycle,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CostTable":
        version = d.get("version")
        if version != COST_SCHEMA_VERSION:
            raise ValueError(
                f"unsupported cost table version {version!r}, "
                f"expected {COST_SCHEMA_VERSION}")
        return cls(
            imem_fetch_per_bit=float(d["imem_fetch_per_bit"]),
            loopbuf_replay=float(d["loopbuf_replay"]),
            move={k: float(v) for k, v in d["move"].items()},
            rf_access={k: float(v) for k, v in d["rf_access"].items()},
            sram_bank={k: float(v) for k, v in d["sram_bank"].items()},
            fu_op={k: {o: float(v) for o, v in ops.items()}
                   for k, ops in d["fu_op"].items()},
            idle_cycle=float(d.get("idle_cycle", 0.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CostTable":
        return cls.from_dict(json.loads(text))

    def fu_cost(self, kind: str, opcode: str) -> float:
        ops = self.fu_op.get(kind)
        if ops is None:
            raise KeyError(f"cost table has no FU kind '{kind}'")
        if opcode in ops:
            return ops[opcode]
        if "*" in ops:
            return ops["*"]
        raise KeyError(f"cost table has no cost for {kind}.{opcode}")


def default_cost_table() -> CostTable:
    """Cost table shipped with the package.

    Calibrated once against the reference binary 3x3 conv (16x16x128 in,
    128 out) so it reports about 35 fJ/op; the ternary and 8-bit figures
    then follow from event structure alone.
    """
    text = (resources.files("ttasim") / "data" /
            "cost_table_default.json").read_text()
    return CostTable.from_json(text)


@dataclass
class EnergyReport:
    components_fj: dict[str, float]
    op_count: int
    cycles: int
    clock_mhz: float

    @property
    def total_fj(self) -> float:
        return sum(self.components_fj.values())

    @property
    def fj_per_op(self) -> float:
        return self.total_fj / self.op_count if self.op_count else 0.0

    @property
    def achieved_gops(self) -> float:
        # ops per second / 1e9 at the configured clock
        if self.cycles == 0:
            return 0.0
        return self.op_count * self.clock_mhz / self.cycles / 1000.0

    def to_dict(self) -> dict:
        return {
            "components_fj": {k: self.components_fj[k] for k in COMPONENTS},
            "total_fj": self.total_fj,
            "op_count": self.op_count,
            "fj_per_op": self.fj_per_op,
            "cycles": self.cycles,
            "clock_mhz": self.clock_mhz,
            "achieved_gops": self.achieved_gops,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        lines = [f"{'component':<12} {'energy [fJ]':>16} {'share':>7}"]
        total = self.total_fj
        for name in COMPONENTS:
            fj = self.components_fj[name]
            share = fj / total if total else 0.0
            lines.append(f"{name:<12} {fj:>16.1f} {share:>6.1%}")
        lines.append(f"{'total':<12} {total:>16.1f}")
        lines.append(f"ops            {self.op_count}")
        lines.append(f"cycles         {self.cycles}")
        lines.append(f"fJ/op          {self.fj_per_op:.3f}")
        lines.append(f"GOPS           {self.achieved_gops:.1f} "
                     f"@ {self.clock_mhz:g} MHz")
        return "\n".join(lines) + "\n"


def account(events: EventLog, table: CostTable, op_count: int, *,
            clock_mhz: float = 300.0) -> EnergyReport:
    """Price an event log.  Unknown event kinds raise ValueError."""
    comp = {name: 0.0 for name in COMPONENTS}
    for key, n in events.counts.items():
        kind = key[0]
        if kind == "imem_fetch":
            comp["IMEM"] += n * key[1] * table.imem_fetch_per_bit
        elif kind == "loopbuf_replay":
            comp["IMEM"] += n * table.loopbuf_replay
        elif kind == "move":
            comp["interconnect"] += n * table.move[key[1]]
        elif kind == "fu_op":
            target = "vMAC" if key[1] == "vmac" else "other-logic"
            comp[target] += n * table.fu_cost(key[1], key[2])
        elif kind == "rf_access":
            comp["RF"] += n * table.rf_access[f"{key[1]}_{key[2]}"]
        elif kind == "sram_bank":
            mem = key[1]
            if mem not in comp:
                raise ValueError(f"no energy component for memory '{mem}'")
            comp[mem] += n * table.sram_bank[key[3]]
        elif kind == "idle_cycle":
            comp["idle"] += n * table.idle_cycle
        else:
            raise ValueError(f"unknown event kind '{kind}'")
    return EnergyReport(comp, op_count, events.cycles, clock_mhz)


# -- layer ops and roofline ----------------------------------------------------

def ops_of_layer(desc) -> int:
    """Nominal operation count of a layer (MAC = 2 ops, adds = 1 op).

    Requantization and activation functions are not counted.
    """
    s = desc.shape
    if desc.kind in ("conv", "fc"):
        return 2 * s.m * s.c * s.r * s.s * s.oh * s.ow
    if desc.kind == "dwconv":
        return 2 * s.c * s.r * s.s * s.oh * s.ow
    if desc.kind == "residual":
        return s.h * s.w * s.c
    if desc.kind == "requant":
        return 0
    raise ValueError(f"unknown layer kind '{desc.kind}'")


def peak_gops(mode: str, machine) -> float:
    """Dense-MAC roofline: lanes * elements(mode) * 2 per cycle."""
    from .funits import ELEMS
    lanes = max(machine.bus_widths) // 32
    return lanes * ELEMS[mode] * 2 * machine.clock_mhz / 1000.0
