"""Machine configuration for the transport-triggered vector core.

The default machine models a small TTA core with an exposed datapath:

    buses       0-5  scalar, 32 bit
    buses       6-11 vector, 1024 bit
    cu          control unit (jump / cjump / loop / halt)
    salu0..3    scalar ALUs, mainly address arithmetic
    lsu_d       load/store unit on DMEM (feature maps)
    lsu_p       load/store unit on PMEM (weights, per-tile constants)
    vmac        32-lane multiply-accumulate unit, 32-bit accumulators
    vadd        elementwise vector adder (16/32-bit elements)
    vops        vector utility unit (requantize, relu, max, bcast, ...)
    rf          16 x 32-bit general registers
    brf         4 x 1-bit guard registers
    vrf0, vrf1  8 x 1024-bit vector registers each
    DMEM, PMEM  32 banks x 16 KiB each, word interleaved

Every FU input port is a latch; writing a trigger port additionally
launches an opcode whose result appears on the output port after
`latency` cycles.  Connectivity is a full crossbar within each width
class unless the config restricts which units attach to which bus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

WORD_BITS = 32
VEC_BITS = 1024
VEC_LANES = VEC_BITS // WORD_BITS

CONFIG_SCHEMA_VERSION = 1

# Opcode tables per FU kind: opcode name -> trigger port that launches it.
SALU_OPS = ("add", "sub", "and", "or", "xor", "shl", "shr_s", "shr_u",
            "eq", "lt_s", "lt_u", "mul")

_LSU_WIDTHS = tuple(range(WORD_BITS, VEC_BITS + 1, WORD_BITS))

FU_KINDS: dict[str, dict] = {
    "cu": {
        "ports": {"a": ("in", WORD_BITS), "t": ("trig", WORD_BITS)},
        "opcodes": {op: "t" for op in ("jump", "cjump", "loop", "halt")},
    },
    "salu": {
        "ports": {"a": ("in", WORD_BITS), "t": ("trig", WORD_BITS),
                  "r": ("out", WORD_BITS)},
        "opcodes": {op: "t" for op in SALU_OPS},
    },
    "lsu": {
        "ports": {"x": ("in", WORD_BITS), "xv": ("in", VEC_BITS),
                  "t": ("trig", WORD_BITS),
                  "r": ("out", WORD_BITS), "rv": ("out", VEC_BITS)},
        # The trigger carries the byte address; ld/st exist for every
        # multiple of 32 bits up to a full vector (banks enable selectively).
        "opcodes": {f"ld{w}": "t" for w in _LSU_WIDTHS}
                   | {f"st{w}": "t" for w in _LSU_WIDTHS},
    },
    "vmac": {
        "ports": {"a": ("in", VEC_BITS), "t": ("trig", VEC_BITS),
                  "ts": ("trig", WORD_BITS), "r": ("out", VEC_BITS)},
        "opcodes": {"macb": "t", "mact": "t", "mac8": "t", "initacc": "t",
                    "rd32": "ts", "rd16": "ts"},
    },
    "vadd": {
        "ports": {"a": ("in", VEC_BITS), "t": ("trig", VEC_BITS),
                  "r": ("out", VEC_BITS)},
        "opcodes": {"add16": "t", "add32": "t"},
    },
    "vops": {
        "ports": {"a": ("in", VEC_BITS), "sx": ("in", WORD_BITS),
                  "qm": ("in", WORD_BITS), "qs": ("in", WORD_BITS),
                  "qz": ("in", WORD_BITS),
                  "t": ("trig", VEC_BITS), "ts": ("trig", WORD_BITS),
                  "r": ("out", VEC_BITS), "rs": ("out", WORD_BITS)},
        "opcodes": {"qi8": "t", "qb": "t", "qt": "t",
                    "relu16": "t", "relu32": "t", "max16": "t", "max32": "t",
                    "bcast": "ts", "ins": "ts", "ext": "ts"},
    },
}


@dataclass(frozen=True)
class FUSpec:
    name: str
    kind: str              # key into FU_KINDS
    memory: str | None = None   # lsu only: which memory it addresses
    latency: int = 1

    @property
    def ports(self) -> dict[str, tuple[str, int]]:
        return FU_KINDS[self.kind]["ports"]

    @property
    def opcodes(self) -> dict[str, str]:
        return FU_KINDS[self.kind]["opcodes"]


@dataclass(frozen=True)
class RFSpec:
    name: str
    entries: int
    width: int


@dataclass(frozen=True)
class MemSpec:
    name: str
    banks: int
    bank_bytes: int

    @property
    def size_bytes(self) -> int:
        return self.banks * self.bank_bytes

    @property
    def words(self) -> int:
        return self.size_bytes // 4


@dataclass
class MachineConfig:
    bus_widths: list[int] = field(
        default_factory=lambda: [WORD_BITS] * 6 + [VEC_BITS] * 6)
    fus: list[FUSpec] = field(default_factory=list)
    rfs: list[RFSpec] = field(default_factory=list)
    memories: list[MemSpec] = field(default_factory=list)
    guard_rf: str = "brf"
    loopbuffer_entries: int = 64
    loopbuffer_enabled: bool = True
    imem_entries: int = 8192
    clock_mhz: float = 300.0
    # None = full crossbar within each width class; otherwise a map
    # bus index -> unit names (FUs and RFs) attached to that bus.
    connectivity: dict[int, list[str]] | None = None

    def __post_init__(self) -> None:
        self._fu_by_name = {f.name: f for f in self.fus}
        self._rf_by_name = {r.name: r for r in self.rfs}
        self._mem_by_name = {m.name: m for m in self.memories}
        names = [f.name for f in self.fus] + [r.name for r in self.rfs]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise ValueError(f"duplicate unit names in config: {sorted(dup)}")

    def fu(self, name: str) -> FUSpec | None:
        return self._fu_by_name.get(name)

    def rf(self, name: str) -> RFSpec | None:
        return self._rf_by_name.get(name)

    def memory(self, name: str) -> MemSpec | None:
        return self._mem_by_name.get(name)

    @property
    def num_buses(self) -> int:
        return len(self.bus_widths)

    def bus_is_scalar(self, bus: int) -> bool:
        return self.bus_widths[bus] <= WORD_BITS

    def unit_on_bus(self, bus: int, unit: str) -> bool:
        """Whether a unit (FU or RF) attaches to a bus at all."""
        if self.connectivity is None:
            return True
        return unit in self.connectivity.get(bus, [])

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": CONFIG_SCHEMA_VERSION,
            "bus_widths": list(self.bus_widths),
            "fus": [{"name": f.name, "kind": f.kind, "memory": f.memory,
                     "latency": f.latency} for f in self.fus],
            "rfs": [{"name": r.name, "entries": r.entries, "width": r.width}
                    for r in self.rfs],
            "memories": [{"name": m.name, "banks": m.banks,
                          "bank_bytes": m.bank_bytes} for m in self.memories],
            "guard_rf": self.guard_rf,
            "loopbuffer_entries": self.loopbuffer_entries,
            "loopbuffer_enabled": self.loopbuffer_enabled,
            "imem_entries": self.imem_entries,
            "clock_mhz": self.clock_mhz,
            "connectivity": (None if self.connectivity is None else
                             {str(b): list(u)
                              for b, u in self.connectivity.items()}),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MachineConfig":
        version = d.get("version")
        if version != CONFIG_SCHEMA_VERSION:
            raise ValueError(
                f"unsupported machine config version {version!r}, "
                f"expected {CONFIG_SCHEMA_VERSION}")
        conn = d.get("connectivity")
        if conn is not None:
            conn = {int(b): list(u) for b, u in conn.items()}
        return cls(
            bus_widths=list(d["bus_widths"]),
            fus=[FUSpec(f["name"], f["kind"], f.get("memory"),
                        f.get("latency", 1)) for f in d["fus"]],
            rfs=[RFSpec(r["name"], r["entries"], r["width"])
                 for r in d["rfs"]],
            memories=[MemSpec(m["name"], m["banks"], m["bank_bytes"])
                      for m in d["memories"]],
            guard_rf=d.get("guard_rf", "brf"),
            loopbuffer_entries=d.get("loopbuffer_entries", 64),
            loopbuffer_enabled=d.get("loopbuffer_enabled", True),
            imem_entries=d.get("imem_entries", 8192),
            clock_mhz=d.get("clock_mhz", 300.0),
            connectivity=conn,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MachineConfig":
        return cls.from_dict(json.loads(text))


def default_machine() -> MachineConfig:
    return MachineConfig(
        fus=[
            FUSpec("cu", "cu"),
            FUSpec("salu0", "salu"),
            FUSpec("salu1", "salu"),
            FUSpec("salu2", "salu"),
            FUSpec("salu3", "salu"),
            FUSpec("lsu_d", "lsu", memory="DMEM"),
            FUSpec("lsu_p", "lsu", memory="PMEM"),
            FUSpec("vmac", "vmac"),
            FUSpec("vadd", "vadd"),
            FUSpec("vops", "vops"),
        ],
        rfs=[
            RFSpec("rf", 16, WORD_BITS),
            RFSpec("brf", 4, 1),
            RFSpec("vrf0", 8, VEC_BITS),
            RFSpec("vrf1", 8, VEC_BITS),
        ],
        memories=[
            MemSpec("DMEM", 32, 16 * 1024),
            MemSpec("PMEM", 32, 16 * 1024),
        ],
    )
