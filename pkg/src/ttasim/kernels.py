"""Layer-to-program generator with an output-stationary schedule.

Convolution family (conv / fc / dwconv).  Output channels are split
into tiles of 32, one per accumulator lane, and each tile becomes an
unrolled program section.  Per output pixel the schedule runs one MAC
per cycle in steady state: the activation word is loaded (lsu_d),
broadcast across lanes (vops), and multiplied into the accumulators
with a streamed weight vector (lsu_p -> vmac).  Activation loads are
issued two rows ahead of their MAC and weight vectors one row ahead,
so every MAC row also stages work for the rows after it.  Addresses
live in scalar-ALU output registers that walk the access pattern via
latched per-row delta immediates:

    salu0   activation address     salu2   output address
    salu1   weight address         salu3   loop counters

Schedule variants:

    pixel_loop   hardware loop over output x, body = one whole pixel
                 (MACs, readout, store); output rows via a guarded
                 jump; channel tiles unrolled
    walk_loop    hardware loop inside the pixel over channel groups
                 (body = one filter-window pass), for pixels that do
                 not fit the loopbuffer; the last group pass is
                 unrolled so the staged loads of the next pixel use
                 loop-invariant address deltas
    unrolled     no hardware loops at all

The MAC walk enumerates (filter row, filter col, channel group); the
order is configurable for pixel_loop/unrolled, while walk_loop always
loops channel groups outermost because then the step into the next
pixel is indistinguishable from one more group step.  Weight vectors
are laid out in walk order so the weight stream is contiguous.  Loop
bodies are emitted once and replayed, so every address stream
simulates the replay and rejects deltas that are not loop invariant.
The staged loads of the last pass run a little past the live data and
the input map gets a slack margin (computed exactly) before the next
region.

Residual add and standalone requantization are flat three-row loops
over 32-element chunks.  The residual store lags its loads by one
iteration; a scratch chunk right before the destination absorbs the
first (garbage) store.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from . import funits, oracle
from .config import MachineConfig, default_machine
from .isa import (Guard, Imm, Instruction, Move, PortRead, PortWrite,
                  Program, RegRead, RegWrite, Trigger, validate)
from .machine import run

ELEMS = funits.ELEMS
VEC_BYTES = 128
_BLOCK_WORDS = {"w32": 32, "w16": 16, "i8": 8, "b": 1, "t": 2}
_MAC_OP = {"b": "macb", "t": "mact", "i8": "mac8"}

DESC_SCHEMA_VERSION = 1

__all__ = [
    "LayerShape", "QuantSpec", "LayerDesc", "GenOptions", "GenError",
    "Region", "TensorLayout", "layout_tensors", "gen_program",
    "desc_to_dict", "desc_from_dict",
    "random_tensors", "random_quant", "build_images", "reference_output",
    "unpack_output", "verify_layer", "verify_batch", "VerifyResult",
]


class GenError(Exception):
    """Unsupported shape, capacity overflow, or scheduling conflict."""


@dataclass(frozen=True)
class LayerShape:
    h: int = 1
    w: int = 1
    c: int = 1
    m: int = 1
    r: int = 1
    s: int = 1

    @property
    def oh(self) -> int:
        return self.h - self.r + 1

    @property
    def ow(self) -> int:
        return self.w - self.s + 1


@dataclass(frozen=True)
class QuantSpec:
    """Requantization constants, one scalar per 32-channel tile/group."""
    kind: str                          # "i8" | "b" | "t"
    mult: tuple[int, ...] = ()
    shift: tuple[int, ...] = ()
    zp: tuple[int, ...] = ()
    thr: tuple[int, ...] = ()


@dataclass(frozen=True)
class LayerDesc:
    kind: str                          # conv fc dwconv residual requant
    mode: str = "i8"                   # b t i8 (conv-family input domain)
    shape: LayerShape = field(default_factory=LayerShape)
    quant: QuantSpec | None = None
    emode: str | None = None           # residual/requant element width


@dataclass(frozen=True)
class GenOptions:
    use_loopbuffer: bool = True
    walk_order: tuple[str, str, str] = ("r", "s", "tc")
    weights_in_vrf: bool = False
    variant: str | None = None         # force a schedule variant


@dataclass(frozen=True)
class Region:
    memory: str
    base: int
    nbytes: int

    @property
    def end(self) -> int:
        return self.base + self.nbytes


@dataclass
class TensorLayout:
    regions: dict[str, Region]
    meta: dict

    def base(self, name: str) -> int:
        return self.regions[name].base


# -- descriptor files ----------------------------------------------------------

def desc_to_dict(desc: LayerDesc, options: GenOptions | None = None) -> dict:
    d: dict = {
        "version": DESC_SCHEMA_VERSION,
        "kind": desc.kind,
        "mode": desc.mode,
        "shape": {f: getattr(desc.shape, f)
                  for f in ("h", "w", "c", "m", "r", "s")},
    }
    if desc.quant is not None:
        q: dict = {"kind": desc.quant.kind}
        for fld in ("mult", "shift", "zp", "thr"):
            vals = getattr(desc.quant, fld)
            if vals:
                q[fld] = list(vals)
        d["quant"] = q
    if desc.emode is not None:
        d["emode"] = desc.emode
    if options is not None:
        d["options"] = {
            "use_loopbuffer": options.use_loopbuffer,
            "walk_order": list(options.walk_order),
            "weights_in_vrf": options.weights_in_vrf,
            "variant": options.variant,
        }
    return d


def desc_from_dict(d: dict) -> tuple[LayerDesc, GenOptions]:
    """Inverse of desc_to_dict.  Schema problems raise ValueError;
    shape legality is checked later by gen_program."""
    version = d.get("version")
    if version != DESC_SCHEMA_VERSION:
        raise ValueError(f"unsupported layer descriptor version {version!r}, "
                         f"expected {DESC_SCHEMA_VERSION}")
    if "kind" not in d:
        raise ValueError("layer descriptor needs a 'kind'")
    try:
        shape = LayerShape(**{k: int(v) for k, v in d.get("shape", {}).items()})
    except TypeError as e:
        raise ValueError(f"bad shape field: {e}") from None
    quant = None
    if d.get("quant") is not None:
        q = d["quant"]
        if "kind" not in q:
            raise ValueError("quant spec needs a 'kind'")
        quant = QuantSpec(q["kind"],
                          mult=tuple(q.get("mult", ())),
                          shift=tuple(q.get("shift", ())),
                          zp=tuple(q.get("zp", ())),
                          thr=tuple(q.get("thr", ())))
    desc = LayerDesc(kind=d["kind"], mode=d.get("mode", "i8"), shape=shape,
                     quant=quant, emode=d.get("emode"))
    o = d.get("options") or {}
    options = GenOptions(
        use_loopbuffer=bool(o.get("use_loopbuffer", True)),
        walk_order=tuple(o.get("walk_order", ("r", "s", "tc"))),
        weights_in_vrf=bool(o.get("weights_in_vrf", False)),
        variant=o.get("variant"))
    return desc, options


def _align(n: int, a: int = VEC_BYTES) -> int:
    return (n + a - 1) // a * a


def _ofm_fmt(desc: LayerDesc) -> str:
    if desc.quant is not None:
        return desc.quant.kind
    return "w32" if desc.mode == "i8" else "w16"


# -- geometry ----------------------------------------------------------------

def _conv_geom(desc: LayerDesc, options: GenOptions) -> dict:
    """Shape checks plus walk order and relative address functions."""
    sh = desc.shape
    if desc.kind == "fc":
        sh = LayerShape(h=1, w=1, c=sh.c, m=sh.m, r=1, s=1)
    dw = desc.kind == "dwconv"
    if sh.h < sh.r or sh.w < sh.s:
        raise GenError(f"input {sh.h}x{sh.w} smaller than filter "
                       f"{sh.r}x{sh.s}")
    if dw:
        if sh.c % 32:
            raise GenError(f"dwconv channels {sh.c} not a multiple of 32")
        tc, sections = 1, sh.c // 32
        walk = ("r", "s", "tc")
    else:
        elems = ELEMS[desc.mode]
        if sh.c % elems:
            raise GenError(f"channels {sh.c} not a multiple of {elems} "
                           f"(mode {desc.mode})")
        if sh.m % 32:
            raise GenError(f"output channels {sh.m} not a multiple of 32")
        tc, sections = sh.c // elems, sh.m // 32
        walk = tuple(options.walk_order)
        if sorted(walk) != ["r", "s", "tc"]:
            raise GenError(f"walk order {walk} is not a permutation of "
                           f"r/s/tc")
    counts = {"r": sh.r, "s": sh.s, "tc": tc}
    order = tuple(counts[d] for d in walk)
    n_mac = sh.r * sh.s * tc
    act_item = VEC_BYTES if dw else 4
    # activation words per pixel: tc words (conv), one vector per
    # 32-channel group (dwconv)
    px_bytes = sections * VEC_BYTES if dw else tc * 4

    def walk_coord(n: int) -> tuple[int, int, int]:
        """MAC index -> (i, j, cg); n may extrapolate past n_mac."""
        c2 = n % order[2]
        rest = n // order[2]
        c1 = rest % order[1]
        c0 = rest // order[1]
        coord = dict(zip(walk, (c0, c1, c2)))
        return coord["r"], coord["s"], coord["tc"]

    def act_addr(sec: int, y: int, x: int, n: int) -> int:
        i, j, cg = walk_coord(n)
        px = (y + i) * sh.w + (x + j)
        if dw:
            return (px * sections + sec) * VEC_BYTES
        return (px * tc + cg) * 4

    def act_addr_ext(sec: int, y: int, x: int, n: int) -> int:
        # past the pixel's last MAC, continue the row's pixel stride so
        # staged loads keep replayable deltas
        return act_addr(sec, y, x + n // n_mac, n % n_mac)

    return {
        "shape": sh, "dw": dw, "tc": tc, "sections": sections,
        "n_mac": n_mac, "walk": walk, "walk_coord": walk_coord,
        "act_addr": act_addr, "act_addr_ext": act_addr_ext,
        "act_item": act_item, "px_bytes": px_bytes,
        "lead": 1 if dw else 2,
        "mac_op": "mact" if dw and desc.mode in ("b", "t")
                  else _MAC_OP[desc.mode],
    }


def layout_tensors(desc: LayerDesc, machine: MachineConfig | None = None,
                   options: GenOptions | None = None) -> TensorLayout:
    """Assign memory regions; raises GenError when a memory is too small."""
    machine = machine or default_machine()
    options = options or GenOptions()

    def fit(regions: dict[str, Region]) -> None:
        used: dict[str, int] = {}
        for r in regions.values():
            used[r.memory] = max(used.get(r.memory, 0), r.end)
        for name, end in used.items():
            size = machine.memory(name).size_bytes
            if end > size:
                raise GenError(f"{name} needs {end} bytes, has {size} "
                               f"(short {end - size})")

    if desc.kind in ("conv", "fc", "dwconv"):
        g = _conv_geom(desc, options)
        sh, n_mac = g["shape"], g["n_mac"]
        fmt = _ofm_fmt(desc)
        if desc.quant is not None:
            want = {"i8": ("mult", "shift", "zp"), "b": ("thr",),
                    "t": ("thr",)}[desc.quant.kind]
            for fld in want:
                if len(getattr(desc.quant, fld)) != g["sections"]:
                    raise GenError(f"quant '{fld}' needs one value per "
                                   f"32-channel tile ({g['sections']})")
        ifm_bytes = sh.h * sh.w * g["px_bytes"]
        # staged loads run up to `lead` steps into a phantom pixel
        over = max(g["act_addr_ext"](g["sections"] - 1, sh.oh - 1, sh.ow, n)
                   for n in range(g["lead"] + 1))
        slack = _align(max(256, over + g["act_item"] - ifm_bytes + 128))
        wgt_bytes = g["sections"] * n_mac * VEC_BYTES
        ofm_bytes = g["sections"] * sh.oh * sh.ow * _BLOCK_WORDS[fmt] * 4
        regions = {
            "ifm": Region("DMEM", 0, ifm_bytes),
            "ofm": Region("DMEM", _align(ifm_bytes) + slack, ofm_bytes),
            "wgt": Region("PMEM", 0, wgt_bytes),
            "bias": Region("PMEM", _align(wgt_bytes) + 256,
                           g["sections"] * VEC_BYTES),
        }
        fit(regions)
        meta = {"fmt": fmt, "tc": g["tc"], "sections": g["sections"],
                "n_mac": n_mac, "walk": g["walk"], "dw": g["dw"],
                "block_words": _BLOCK_WORDS[fmt], "shape": sh}
        return TensorLayout(regions, meta)

    if desc.kind == "residual":
        if desc.emode not in ("e16", "e32"):
            raise GenError("residual needs emode e16 or e32")
        n = desc.shape.h * desc.shape.w * desc.shape.c
        if n % 32:
            raise GenError(f"residual length {n} not a multiple of 32")
        cb = 128 if desc.emode == "e32" else 64
        k = n // 32
        a = Region("DMEM", 0, k * cb)
        b = Region("DMEM", _align(a.end), k * cb)
        scratch = Region("DMEM", _align(b.end), cb)
        dst = Region("DMEM", scratch.end, k * cb)
        regions = {"a": a, "b": b, "scratch": scratch, "dst": dst}
        fit(regions)
        return TensorLayout(regions, {"chunks": k, "chunk_bytes": cb,
                                      "n": n})

    if desc.kind == "requant":
        if desc.quant is None:
            raise GenError("requant needs a QuantSpec")
        combo = {"i8": "e32", "b": "e16", "t": "e16"}[desc.quant.kind]
        if desc.emode != combo:
            raise GenError(f"requant to {desc.quant.kind} takes {combo} "
                           f"input, not {desc.emode}")
        n, groups = desc.shape.c, desc.shape.m
        if n % groups or (n // groups) % 32:
            raise GenError(f"{n} elements in {groups} groups must give a "
                           f"multiple of 32 per group")
        want = ("mult", "shift", "zp") if desc.quant.kind == "i8" \
            else ("thr",)
        for fld in want:
            if len(getattr(desc.quant, fld)) != groups:
                raise GenError(f"quant '{fld}' needs one value per group "
                               f"({groups})")
        cb = 128 if desc.emode == "e32" else 64
        ob = _BLOCK_WORDS[desc.quant.kind] * 4
        k = n // 32
        src = Region("DMEM", 0, k * cb)
        dst = Region("DMEM", _align(src.end), _align(k * ob))
        regions = {"src": src, "dst": dst}
        fit(regions)
        return TensorLayout(regions, {"chunks": k, "chunk_bytes": cb,
                                      "out_bytes": ob, "groups": groups,
                                      "n": n})

    raise GenError(f"unknown layer kind '{desc.kind}'")


# -- scheduling ---------------------------------------------------------------

def _r(fu: str, port: str = "r") -> PortRead:
    return PortRead(fu, port)


def _w(fu: str, port: str) -> PortWrite:
    return PortWrite(fu, port)


def _t(fu: str, port: str, op: str) -> Trigger:
    return Trigger(fu, port, op)


class _Sched:
    """Packs moves into instruction rows, lowest usable bus first."""

    def __init__(self, machine: MachineConfig):
        self.machine = machine
        self.rows: list[dict[int, Move]] = []
        self.scalar = [i for i in range(machine.num_buses)
                       if machine.bus_is_scalar(i)]
        self.vector = [i for i in range(machine.num_buses)
                       if not machine.bus_is_scalar(i)]
        self.labels: dict[str, int] = {}

    @property
    def n(self) -> int:
        return len(self.rows)

    def row(self, idx: int) -> dict[int, Move]:
        while len(self.rows) <= idx:
            self.rows.append({})
        return self.rows[idx]

    def _units(self, move: Move) -> tuple[bool, list[str]]:
        """(needs a vector bus, unit names the bus must reach)."""
        units = []
        src = move.src
        if isinstance(src, Imm):
            wide = False
        elif isinstance(src, RegRead):
            wide = self.machine.rf(src.rf).width > 32
            units.append(src.rf)
        else:
            wide = self.machine.fu(src.fu).ports[src.port][1] > 32
            units.append(src.fu)
        dst = move.dst
        units.append(dst.rf if isinstance(dst, RegWrite) else dst.fu)
        return wide, units

    def put(self, idx: int, move: Move) -> None:
        row = self.row(idx)
        if isinstance(move.dst, Trigger):
            for m in row.values():
                if isinstance(m.dst, Trigger) and m.dst.fu == move.dst.fu:
                    raise GenError(f"row {idx}: second launch on "
                                   f"{move.dst.fu}")
        wide, units = self._units(move)
        for b in (self.vector if wide else self.scalar):
            if b in row:
                continue
            if all(self.machine.unit_on_bus(b, u) for u in units):
                row[b] = move
                return
        raise GenError(f"row {idx}: out of "
                       f"{'vector' if wide else 'scalar'} slots")

    def label(self, name: str) -> int:
        self.labels[name] = self.n
        return self.n

    def program(self) -> Program:
        nb = self.machine.num_buses
        instrs = [Instruction(tuple(row.get(b) for b in range(nb)))
                  for row in self.rows]
        return Program(instrs, dict(self.labels), [])


class _AddrStream:
    """One scalar ALU walking a compile-time address sequence at run time.

    seq[k] is the k-th value of the ALU result register.  A step latches
    the delta immediate (only when it changes) and triggers an add.
    Loop bodies are emitted once but replayed, so end_loop() simulates
    the replay move-by-move and rejects the loop unless the latched
    delta matches the required one at every step of every iteration.
    """

    def __init__(self, sched: _Sched, salu: str, seq: list[int]):
        self.s = sched
        self.salu = salu
        self.seq = seq
        self.k = 0
        self.latched: int | None = None
        self.ops: list = []                 # runtime op stream: (d,) | "A"
        self._marks: list[tuple[int, int, int]] = []

    def init_at(self, row: int) -> None:
        # latch the start address and add 0: the result register holds
        # seq[0] from the next row on
        self.s.put(row, Move(Imm(self.seq[0]), _w(self.salu, "a")))
        self.s.put(row, Move(Imm(0), _t(self.salu, "t", "add")))
        self.latched = None

    def read(self) -> PortRead:
        return _r(self.salu)

    def advance(self, row: int, *, force_latch: bool = False) -> None:
        d = self.seq[self.k + 1] - self.seq[self.k]
        if force_latch or d != self.latched:
            self.s.put(row, Move(Imm(d), _w(self.salu, "a")))
            self.latched = d
            self.ops.append((d,))
        self.s.put(row, Move(self.read(), _t(self.salu, "t", "add")))
        self.ops.append("A")
        self.k += 1

    def begin_loop(self, iters: int) -> None:
        self._marks.append((len(self.ops), self.k, iters))

    def end_loop(self) -> None:
        mark, k0, iters = self._marks.pop()
        body = self.ops[mark:]
        latch = self.latched
        k = k0
        for _ in range(iters):
            for op in body:
                if op == "A":
                    need = self.seq[k + 1] - self.seq[k]
                    if latch != need:
                        raise GenError(
                            f"{self.salu}: delta {need} at step {k} not "
                            f"loop invariant (latch holds {latch})")
                    k += 1
                else:
                    latch = op[0]
        self.ops[mark:] = body * iters      # outer loops replay all of it
        self.k = k
        self.latched = latch


class _NullStream:
    """Stands in for the weight stream when weights live in registers."""

    def init_at(self, row):
        pass

    def advance(self, row, *, force_latch=False):
        pass

    def begin_loop(self, iters):
        pass

    def end_loop(self):
        pass


# -- convolution family -------------------------------------------------------

class _ConvGen:
    def __init__(self, desc: LayerDesc, machine: MachineConfig,
                 options: GenOptions):
        self.desc = desc
        self.machine = machine
        self.g = _conv_geom(desc, options)
        self.N = self.g["n_mac"]
        self.fused = desc.quant is not None
        dw = self.g["dw"]
        self.B = self.N + ((3 if dw else 4) if self.fused
                           else (2 if dw else 3))
        self.variant = self._pick_variant(options)
        if self.variant == "walk_loop":
            # channel groups outermost: the pixel step then equals one
            # more group step and the staged loads stay loop invariant
            options = replace(options, walk_order=("tc", "r", "s"))
            self.g = _conv_geom(desc, options)
        self.opt = options
        self.layout = layout_tensors(desc, machine, options)
        self.fmt = self.layout.meta["fmt"]
        self.sched = _Sched(machine)
        if options.weights_in_vrf:
            if self.N > 15:
                raise GenError(f"weight working set of {self.N} vectors "
                               f"exceeds the 15 free vector registers")
            if self.variant == "walk_loop":
                raise GenError("weights_in_vrf needs a pixel-sized or "
                               "unrolled body")

    def _pick_variant(self, options: GenOptions) -> str:
        cap = self.machine.loopbuffer_entries
        sh = self.g["shape"]
        nb = sh.r * sh.s
        forced = options.variant
        if forced is not None:
            if forced not in ("pixel_loop", "walk_loop", "unrolled"):
                raise GenError(f"unknown variant '{forced}'")
            if forced == "pixel_loop" and self.B > cap:
                raise GenError(f"pixel body of {self.B} rows exceeds the "
                               f"loopbuffer ({cap})")
            if forced == "walk_loop" and (self.g["dw"] or self.g["tc"] < 2
                                          or not 2 <= nb <= cap):
                raise GenError("walk_loop needs a non-depthwise layer "
                               "with at least 2 channel groups and a "
                               "multi-position filter pass that fits "
                               "the loopbuffer")
            return forced
        if not options.use_loopbuffer:
            return "unrolled"
        if self.B <= cap:
            return "pixel_loop"
        if not self.g["dw"] and self.g["tc"] >= 2 and 2 <= nb <= cap:
            return "walk_loop"
        return "unrolled"

    # ---- address sequences (values the ALU result register steps through)

    def _act_seq(self, sec: int) -> list[int]:
        g, sh, N = self.g, self.g["shape"], self.N
        base = self.layout.base("ifm")
        lead = g["lead"]
        seq: list[int] = []
        for y in range(sh.oh):
            for x in range(sh.ow):
                seq.extend(base + g["act_addr"](sec, y, x, n)
                           for n in range(N))
            # staged loads run `lead` steps into a phantom pixel, plus
            # one more value as the final advance target
            seq.extend(base + g["act_addr_ext"](sec, y, sh.ow, n)
                       for n in range(lead + 1))
        row_len = sh.ow * N + lead + 1
        entry_delta = (seq[row_len] - seq[row_len - 1] if sh.oh > 1
                       else -g["act_item"])
        return [seq[0] - entry_delta] + seq

    def _wgt_seq(self, sec: int) -> list[int]:
        base = self.layout.base("wgt") + sec * self.N * VEC_BYTES
        sh, N = self.g["shape"], self.N
        # a single-weight pixel never leaves base; otherwise each row
        # enters and leaves one vector past it so the row correction and
        # restore deltas stay uniform
        tail = base + (VEC_BYTES if N >= 2 else 0)
        seq = [tail]
        for y in range(sh.oh):
            seq.append(base)
            for x in range(sh.ow):
                seq.extend(base + k * VEC_BYTES for k in range(1, N))
                seq.append(base)            # wraps to the next pixel
            seq.append(tail)
        return seq

    def _out_seq(self, sec: int) -> list[int]:
        sh = self.g["shape"]
        bw = self.layout.meta["block_words"] * 4
        base = self.layout.base("ofm") + sec * sh.oh * sh.ow * bw
        return [base + k * bw for k in range(sh.oh * sh.ow + 1)]

    # ---- move helpers

    def _act_load(self, row: int, act, *, force_latch: bool = False) -> None:
        op = "ld1024" if self.g["dw"] else "ld32"
        self.sched.put(row, Move(act.read(), _t("lsu_d", "t", op)))
        act.advance(row, force_latch=force_latch)

    def _wgt_load(self, row: int, wgt) -> None:
        if self.opt.weights_in_vrf:
            return
        self.sched.put(row, Move(wgt.read(), _t("lsu_p", "t", "ld1024")))
        wgt.advance(row)

    def _bcast(self, row: int) -> None:
        self.sched.put(row, Move(_r("lsu_d"), _t("vops", "ts", "bcast")))

    def _vrf_slot(self, n: int) -> tuple[str, int]:
        return ("vrf0", n + 1) if n < 7 else ("vrf1", n - 7)

    def _mac(self, row: int, n: int) -> None:
        operand = _r("lsu_d", "rv") if self.g["dw"] else _r("vops")
        self.sched.put(row, Move(operand, _w("vmac", "a")))
        wsrc = (RegRead(*self._vrf_slot(n)) if self.opt.weights_in_vrf
                else _r("lsu_p", "rv"))
        self.sched.put(row, Move(wsrc, _t("vmac", "t", self.g["mac_op"])))

    def _readout(self, row: int) -> None:
        op = "rd32" if self.fmt in ("w32", "i8") else "rd16"
        self.sched.put(row, Move(Imm(0), _t("vmac", "ts", op)))

    def _initacc(self, row: int) -> None:
        self.sched.put(row, Move(RegRead("vrf0", 0),
                                 _t("vmac", "t", "initacc")))

    def _quant(self, row: int) -> None:
        op = {"i8": "qi8", "b": "qb", "t": "qt"}[self.desc.quant.kind]
        self.sched.put(row, Move(_r("vmac"), _t("vops", "t", op)))

    def _store(self, row: int, out) -> None:
        nbits = self.layout.meta["block_words"] * 32
        if not self.fused:
            data, port = _r("vmac"), "xv"
        elif self.desc.quant.kind == "b":
            data, port = _r("vops", "rs"), "x"
        else:
            data, port = _r("vops"), "xv"
        self.sched.put(row, Move(data, _w("lsu_d", port)))
        self.sched.put(row, Move(out.read(), _t("lsu_d", "t", f"st{nbits}")))
        out.advance(row)

    def _counter(self, r0: int, rf_idx: int, brf_idx: int) -> None:
        """rf[i] -= 1 and brf[j] = (rf[i] == 0), spread over rows r0..r0+4."""
        s = self.sched
        s.put(r0, Move(RegRead("rf", rf_idx), _w("salu3", "a")))
        s.put(r0 + 1, Move(Imm(1), _t("salu3", "t", "sub")))
        s.put(r0 + 2, Move(_r("salu3"), RegWrite("rf", rf_idx)))
        s.put(r0 + 2, Move(_r("salu3"), _w("salu3", "a")))
        s.put(r0 + 3, Move(Imm(0), _t("salu3", "t", "eq")))
        s.put(r0 + 4, Move(_r("salu3"), RegWrite("brf", brf_idx)))

    def _jump_unless(self, row: int, brf_idx: int, target: int) -> None:
        self.sched.put(row, Move(Imm(target), _t("cu", "t", "jump"),
                                 Guard(brf_idx, negate=True)))

    # ---- program assembly

    def build(self) -> Program:
        for sec in range(self.g["sections"]):
            self._section(sec)
        self.sched.put(self.sched.n, Move(Imm(0), _t("cu", "t", "halt")))
        prog = self.sched.program()
        errs = [d for d in validate(prog, self.machine)
                if d.severity == "error"]
        if errs:
            raise GenError("generated program failed validation: "
                           + "; ".join(d.message for d in errs[:4]))
        return prog

    def _section(self, sec: int) -> None:
        s, sh = self.sched, self.g["shape"]
        act = _AddrStream(s, "salu0", self._act_seq(sec))
        wgt = (_NullStream() if self.opt.weights_in_vrf
               else _AddrStream(s, "salu1", self._wgt_seq(sec)))
        out = _AddrStream(s, "salu2", self._out_seq(sec))

        si = s.n
        act.init_at(si)
        wgt.init_at(si)
        out.init_at(si)
        s.put(si + 1, Move(Imm(self.layout.base("bias") + sec * VEC_BYTES),
                           _t("lsu_p", "t", "ld1024")))
        q = self.desc.quant
        if q is not None:
            if q.kind == "i8":
                s.put(si + 1, Move(Imm(q.mult[sec]), _w("vops", "qm")))
                s.put(si + 1, Move(Imm(q.shift[sec]), _w("vops", "qs")))
                s.put(si + 1, Move(Imm(q.zp[sec]), _w("vops", "qz")))
            else:
                s.put(si + 1, Move(Imm(q.thr[sec]), _w("vops", "qm")))
        if sh.oh > 1:
            s.put(si + 1, Move(Imm(sh.oh), RegWrite("rf", 0)))
        if self.variant == "pixel_loop":
            s.put(si + 1, Move(Imm(self.B), _w("cu", "a")))
        elif self.variant == "walk_loop":
            s.put(si + 1, Move(Imm(sh.r * sh.s), _w("cu", "a")))
        s.put(si + 2, Move(_r("lsu_p", "rv"), RegWrite("vrf0", 0)))
        if self.opt.weights_in_vrf:
            self._preload_weights(sec, si + 2)
        s.row(max(s.n - 1, si + 2))

        hstart = s.label(f"sec{sec}_row")
        for st in (act, wgt, out):
            st.begin_loop(sh.oh)
        if self.variant == "pixel_loop":
            self._rows_pixel_loop(act, wgt, out)
        elif self.variant == "walk_loop":
            self._rows_walk_loop(sec, act, wgt, out)
        else:
            self._rows_unrolled(act, wgt, out)
        if sh.oh > 1:
            e0 = s.n
            self._counter(e0, 0, 0)
            self._jump_unless(e0 + 5, 0, hstart)
            s.row(e0 + 5)
        for st in (act, wgt, out):
            st.end_loop()

    def _preload_weights(self, sec: int, row: int) -> None:
        base = self.layout.base("wgt") + sec * self.N * VEC_BYTES
        s = self.sched
        for n in range(self.N):
            s.put(row + n, Move(Imm(base + n * VEC_BYTES),
                                _t("lsu_p", "t", "ld1024")))
            s.put(row + n + 1, Move(_r("lsu_p", "rv"),
                                    RegWrite(*self._vrf_slot(n))))

    def _prologue(self, act, wgt) -> None:
        """Row correction plus staging for the first pixel of the row."""
        s, dw = self.sched, self.g["dw"]
        p0 = s.n
        act.advance(p0)
        wgt.advance(p0)
        self._act_load(p0 + 1, act)
        self._wgt_load(p0 + 1, wgt)
        p2 = p0 + 2
        if not dw:
            self._bcast(p2)
            self._act_load(p2, act)
        self._initacc(p2)
        s.row(p2)

    def _pixel_rows(self, base: int, act, wgt, out) -> None:
        """One pixel: MACs, readout, store; the staged loads run into
        the next pixel (past the last one, into its slack margin)."""
        N, dw, fused = self.N, self.g["dw"], self.fused
        s = self.sched
        for p in range(N):
            row = base + p
            self._mac(row, p)
            if dw:
                self._act_load(row, act)
                self._wgt_load(row, wgt)
            else:
                if p <= N - 2:
                    self._bcast(row)
                if p <= N - 3:
                    self._act_load(row, act)
                if p <= N - 2:
                    self._wgt_load(row, wgt)
        rd = base + N
        self._readout(rd)
        if dw:
            if not fused:
                self._store(rd + 1, out)
                self._initacc(rd + 1)
                s.row(rd + 1)
            else:
                self._quant(rd + 1)
                self._initacc(rd + 1)
                self._store(rd + 2, out)
                s.row(rd + 2)
            return
        # a one-MAC pixel needs only one staged load, which then leads
        # by two pixels instead of two MACs
        if not fused:
            if N >= 2:
                self._act_load(rd, act)
            self._store(rd + 1, out)
            self._initacc(rd + 1)
            # the weight vector rides out two rows to the next MAC
            self._wgt_load(rd + 1, wgt)
            self._bcast(rd + 2)
            self._act_load(rd + 2, act)
            s.row(rd + 2)
        else:
            self._quant(rd + 1)
            if N >= 2:
                self._act_load(rd + 1, act)
            self._wgt_load(rd + 1, wgt)
            self._store(rd + 2, out)
            self._initacc(rd + 3)
            self._bcast(rd + 3)
            self._act_load(rd + 3, act)
            s.row(rd + 3)

    def _rows_pixel_loop(self, act, wgt, out) -> None:
        s, sh = self.sched, self.g["shape"]
        self._prologue(act, wgt)
        s.put(s.n, Move(Imm(sh.ow), _t("cu", "t", "loop")))
        body = s.n
        for st in (act, wgt, out):
            st.begin_loop(sh.ow)
        self._pixel_rows(body, act, wgt, out)
        assert s.n - body == self.B
        for st in (act, wgt, out):
            st.end_loop()

    def _rows_unrolled(self, act, wgt, out) -> None:
        sh = self.g["shape"]
        self._prologue(act, wgt)
        for _ in range(sh.ow):
            self._pixel_rows(self.sched.n, act, wgt, out)

    def _rows_walk_loop(self, sec: int, act, wgt, out) -> None:
        s, sh, N = self.sched, self.g["shape"], self.N
        nb = sh.r * sh.s
        iters = self.g["tc"]
        self._prologue(act, wgt)
        if sh.ow > 1:
            s.put(s.n - 1, Move(Imm(sh.ow), RegWrite("rf", 1)))
        wstart = s.label(f"sec{sec}_px")
        for st in (act, wgt, out):
            st.begin_loop(sh.ow)
        s.put(s.n, Move(Imm(iters - 1), _t("cu", "t", "loop")))
        body = s.n
        act.begin_loop(iters - 1)
        wgt.begin_loop(iters - 1)
        for p in range(nb):
            self._mac(body + p, p)
            self._bcast(body + p)
            self._act_load(body + p, act, force_latch=p == 0)
            self._wgt_load(body + p, wgt)
        act.end_loop()
        wgt.end_loop()
        # the last group pass is unrolled: its staged loads step into
        # the next pixel, which a replayed body could not express
        fin = body + nb
        for p in range(nb):
            self._mac(fin + p, (iters - 1) * nb + p)
            if p <= nb - 2:
                self._bcast(fin + p)
                self._wgt_load(fin + p, wgt)
            if p <= nb - 3:
                self._act_load(fin + p, act)
        e0 = fin + nb
        self._readout(e0)
        if sh.ow > 1:
            s.put(e0, Move(RegRead("rf", 1), _w("salu3", "a")))
            s.put(e0 + 1, Move(Imm(1), _t("salu3", "t", "sub")))
        if self.fused:
            self._quant(e0 + 1)
        self._initacc(e0 + 1)
        self._store(e0 + 2, out)
        if sh.ow > 1:
            s.put(e0 + 2, Move(_r("salu3"), RegWrite("rf", 1)))
            s.put(e0 + 2, Move(_r("salu3"), _w("salu3", "a")))
            s.put(e0 + 3, Move(Imm(0), _t("salu3", "t", "eq")))
        self._act_load(e0 + 3, act)
        self._bcast(e0 + 4)
        self._act_load(e0 + 4, act)
        if sh.ow > 1:
            s.put(e0 + 4, Move(_r("salu3"), RegWrite("brf", 1)))
        self._wgt_load(e0 + 5, wgt)
        if sh.ow > 1:
            self._jump_unless(e0 + 5, 1, wstart)
        s.row(e0 + 5)
        for st in (act, wgt, out):
            st.end_loop()


def _gen_conv(desc, machine, options):
    gen = _ConvGen(desc, machine, options)
    return gen.build(), gen.layout


# -- residual and standalone requantization -----------------------------------

def _validated(sched: _Sched, machine: MachineConfig) -> Program:
    prog = sched.program()
    errs = [d for d in validate(prog, machine) if d.severity == "error"]
    if errs:
        raise GenError("generated program failed validation: "
                       + "; ".join(d.message for d in errs[:4]))
    return prog


def _gen_residual(desc, machine, options):
    layout = layout_tensors(desc, machine, options)
    k = layout.meta["chunks"]
    cb = layout.meta["chunk_bytes"]
    nbits = cb * 8
    addop = "add32" if desc.emode == "e32" else "add16"
    s = _Sched(machine)
    a = _AddrStream(s, "salu0",
                    [layout.base("a") + i * cb for i in range(k + 1)])
    b = _AddrStream(s, "salu1",
                    [layout.base("b") + i * cb for i in range(k + 1)])
    st = _AddrStream(s, "salu2",
                     [layout.base("scratch")]
                     + [layout.base("dst") + i * cb for i in range(k)]
                     + [layout.base("dst") + k * cb])
    a.init_at(0)
    b.init_at(0)
    st.init_at(0)
    loop = options.use_loopbuffer and k > 1
    if loop:
        s.put(1, Move(Imm(3), _w("cu", "a")))
        s.put(1, Move(Imm(k), _t("cu", "t", "loop")))
        body = 2
        for stream in (a, b, st):
            stream.begin_loop(k)
        reps = 1
    else:
        body = 1
        reps = k
    for it in range(reps):
        r = body + 3 * it
        s.put(r, Move(a.read(), _t("lsu_d", "t", f"ld{nbits}")))
        a.advance(r)
        s.put(r + 1, Move(b.read(), _t("lsu_d", "t", f"ld{nbits}")))
        b.advance(r + 1)
        s.put(r + 1, Move(_r("lsu_d", "rv"), _w("vadd", "a")))
        # the sum of the previous iteration leaves as this one's store
        s.put(r + 2, Move(_r("vadd"), _w("lsu_d", "xv")))
        s.put(r + 2, Move(st.read(), _t("lsu_d", "t", f"st{nbits}")))
        st.advance(r + 2)
        s.put(r + 2, Move(_r("lsu_d", "rv"), _t("vadd", "t", addop)))
    if loop:
        for stream in (a, b, st):
            stream.end_loop()
    e = body + 3 * reps
    s.put(e, Move(_r("vadd"), _w("lsu_d", "xv")))
    s.put(e, Move(st.read(), _t("lsu_d", "t", f"st{nbits}")))
    s.put(e + 1, Move(Imm(0), _t("cu", "t", "halt")))
    return _validated(s, machine), layout


def _gen_requant(desc, machine, options):
    layout = layout_tensors(desc, machine, options)
    q = desc.quant
    k = layout.meta["chunks"]
    groups = layout.meta["groups"]
    per = k // groups
    cb = layout.meta["chunk_bytes"]
    ob = layout.meta["out_bytes"]
    op = {"i8": "qi8", "b": "qb", "t": "qt"}[q.kind]
    s = _Sched(machine)
    src = _AddrStream(s, "salu0",
                      [layout.base("src") + i * cb for i in range(k + 1)])
    dst = _AddrStream(s, "salu2",
                      [layout.base("dst") + i * ob for i in range(k + 1)])
    src.init_at(0)
    dst.init_at(0)
    loop = options.use_loopbuffer and per > 1
    if loop:
        s.put(0, Move(Imm(3), _w("cu", "a")))
    for grp in range(groups):
        row = max(s.n, 1)
        if q.kind == "i8":
            s.put(row, Move(Imm(q.mult[grp]), _w("vops", "qm")))
            s.put(row, Move(Imm(q.shift[grp]), _w("vops", "qs")))
            s.put(row, Move(Imm(q.zp[grp]), _w("vops", "qz")))
        else:
            s.put(row, Move(Imm(q.thr[grp]), _w("vops", "qm")))
        if loop:
            s.put(row, Move(Imm(per), _t("cu", "t", "loop")))
            src.begin_loop(per)
            dst.begin_loop(per)
            reps = 1
        else:
            reps = per
        body = row + 1
        for it in range(reps):
            r = body + 3 * it
            s.put(r, Move(src.read(), _t("lsu_d", "t", f"ld{cb * 8}")))
            src.advance(r)
            s.put(r + 1, Move(_r("lsu_d", "rv"), _t("vops", "t", op)))
            data, port = ((_r("vops", "rs"), "x") if q.kind == "b"
                          else (_r("vops"), "xv"))
            s.put(r + 2, Move(data, _w("lsu_d", port)))
            s.put(r + 2, Move(dst.read(), _t("lsu_d", "t", f"st{ob * 8}")))
            dst.advance(r + 2)
        if loop:
            src.end_loop()
            dst.end_loop()
        s.row(body + 3 * reps - 1)
    s.put(s.n, Move(Imm(0), _t("cu", "t", "halt")))
    return _validated(s, machine), layout


def gen_program(desc: LayerDesc, machine: MachineConfig | None = None,
                options: GenOptions | None = None
                ) -> tuple[Program, TensorLayout]:
    machine = machine or default_machine()
    options = options or GenOptions()
    for unit in ("cu", "salu0", "salu1", "salu2", "salu3",
                 "lsu_d", "lsu_p", "vmac", "vadd", "vops"):
        if machine.fu(unit) is None:
            raise GenError(f"machine has no functional unit '{unit}'")
    if desc.kind in ("conv", "fc", "dwconv"):
        return _gen_conv(desc, machine, options)
    if desc.kind == "residual":
        return _gen_residual(desc, machine, options)
    if desc.kind == "requant":
        return _gen_requant(desc, machine, options)
    raise GenError(f"unknown layer kind '{desc.kind}'")


# -- tensors, images, verification --------------------------------------------

def _rand_elem(mode: str, rng: random.Random) -> int:
    if mode == "b":
        return rng.choice((-1, 1))
    if mode == "t":
        return rng.choice((-1, 0, 1))
    return rng.randrange(-128, 128)


def random_quant(kind: str, groups: int, seed: int = 0) -> QuantSpec:
    rng = random.Random(seed ^ 0x5EED)
    if kind == "i8":
        return QuantSpec(
            kind,
            mult=tuple(rng.randrange(1, 4096) for _ in range(groups)),
            shift=tuple(rng.randrange(4, 16) for _ in range(groups)),
            zp=tuple(rng.randrange(-64, 64) for _ in range(groups)))
    return QuantSpec(kind, thr=tuple(rng.randrange(0, 64)
                                     for _ in range(groups)))


def random_tensors(desc: LayerDesc, seed: int = 0) -> dict:
    rng = random.Random(seed)
    sh = desc.shape
    if desc.kind in ("conv", "fc", "dwconv"):
        h, w = (1, 1) if desc.kind == "fc" else (sh.h, sh.w)
        r, s = (1, 1) if desc.kind == "fc" else (sh.r, sh.s)
        ifm = [[[_rand_elem(desc.mode, rng) for _ in range(sh.c)]
                for _ in range(w)] for _ in range(h)]
        if desc.kind == "dwconv":
            wgt = [[[_rand_elem(desc.mode, rng) for _ in range(sh.c)]
                    for _ in range(s)] for _ in range(r)]
            bias = [rng.randrange(-1000, 1000) for _ in range(sh.c)]
        else:
            wgt = [[[[_rand_elem(desc.mode, rng) for _ in range(sh.c)]
                     for _ in range(s)] for _ in range(r)]
                   for _ in range(sh.m)]
            bias = [rng.randrange(-1000, 1000) for _ in range(sh.m)]
        return {"ifm": ifm, "wgt": wgt, "bias": bias}
    if desc.kind == "residual":
        n = sh.h * sh.w * sh.c
        lo, hi = ((-2**15, 2**15) if desc.emode == "e16"
                  else (-2**31, 2**31))
        return {"a": [rng.randrange(lo, hi) for _ in range(n)],
                "b": [rng.randrange(lo, hi) for _ in range(n)]}
    if desc.kind == "requant":
        lo, hi = ((-2**15, 2**15) if desc.emode == "e16"
                  else (-2**31, 2**31))
        return {"vals": [rng.randrange(lo, hi) for _ in range(sh.c)]}
    raise GenError(f"unknown layer kind '{desc.kind}'")


_PACK = {"b": funits.pack_b, "t": funits.pack_t, "i8": funits.pack_i8}


def _vec_words(vec: int) -> list[int]:
    return [(vec >> (32 * i)) & 0xFFFFFFFF for i in range(32)]


def _pack_halves(vals: list[int]) -> list[int]:
    return [(vals[i] & 0xFFFF) | ((vals[i + 1] & 0xFFFF) << 16)
            for i in range(0, len(vals), 2)]


def build_images(desc: LayerDesc, layout: TensorLayout, tensors: dict
                 ) -> dict[str, list[tuple[int, list[int]]]]:
    """Pack logical tensors into initial DMEM/PMEM contents."""
    if desc.kind in ("conv", "fc", "dwconv"):
        return _conv_images(desc, layout, tensors)
    if desc.kind == "residual":
        pack = ((lambda v: [x & 0xFFFFFFFF for x in v])
                if desc.emode == "e32" else _pack_halves)
        return {"DMEM": [(layout.base("a"), pack(tensors["a"])),
                         (layout.base("b"), pack(tensors["b"]))]}
    if desc.kind == "requant":
        vals = tensors["vals"]
        words = ([v & 0xFFFFFFFF for v in vals] if desc.emode == "e32"
                 else _pack_halves(vals))
        return {"DMEM": [(layout.base("src"), words)]}
    raise GenError(f"unknown layer kind '{desc.kind}'")


def _conv_images(desc, layout, tensors):
    meta = layout.meta
    sh = meta["shape"]
    tc, sections, n_mac = meta["tc"], meta["sections"], meta["n_mac"]
    dw = meta["dw"]
    # depthwise binary/ternary data rides in the ternary datapath,
    # one element per lane (zero padding contributes nothing)
    dwmode = "t" if desc.mode in ("b", "t") else "i8"
    pack = _PACK[dwmode if dw else desc.mode]
    lane_pad = ELEMS[dwmode] - 1

    def lane_word(v: int) -> int:
        return pack([v] + [0] * lane_pad)

    elems = ELEMS[desc.mode]
    g = _conv_geom(desc, GenOptions(walk_order=tuple(meta["walk"])))
    ifm, wgt, bias = tensors["ifm"], tensors["wgt"], tensors["bias"]

    dmem_words: list[int] = []
    for y in range(sh.h):
        for x in range(sh.w):
            if dw:
                for ct in range(sections):
                    vec = funits.from_lanes(
                        [lane_word(ifm[y][x][ct * 32 + lane])
                         for lane in range(32)])
                    dmem_words.extend(_vec_words(vec))
            else:
                for cg in range(tc):
                    dmem_words.append(pack(
                        ifm[y][x][cg * elems:(cg + 1) * elems]))

    wgt_words: list[int] = []
    for sec in range(sections):
        for n in range(n_mac):
            i, j, cg = g["walk_coord"](n)
            if dw:
                vec = funits.from_lanes(
                    [lane_word(wgt[i][j][sec * 32 + lane])
                     for lane in range(32)])
            else:
                vec = funits.from_lanes(
                    [pack(wgt[sec * 32 + lane][i][j]
                          [cg * elems:(cg + 1) * elems])
                     for lane in range(32)])
            wgt_words.extend(_vec_words(vec))
    bias_words: list[int] = []
    for sec in range(sections):
        vec = funits.from_lanes([bias[sec * 32 + lane] & 0xFFFFFFFF
                                 for lane in range(32)])
        bias_words.extend(_vec_words(vec))
    return {"DMEM": [(layout.base("ifm"), dmem_words)],
            "PMEM": [(layout.base("wgt"), wgt_words),
                     (layout.base("bias"), bias_words)]}


def _quant_dict(desc: LayerDesc, n_ch: int):
    q = desc.quant
    if q is None:
        return None if desc.mode == "i8" else "w16"
    expand = lambda vals: [vals[m // 32] for m in range(n_ch)]
    if q.kind == "i8":
        return {"kind": "i8", "mult": expand(q.mult),
                "shift": expand(q.shift), "zp": expand(q.zp)}
    return {"kind": q.kind, "thr": expand(q.thr)}


def reference_output(desc: LayerDesc, tensors: dict):
    """Expected stored values, via the scalar reference model."""
    sh = desc.shape
    if desc.kind in ("conv", "fc"):
        acc = oracle.conv_ref(tensors["ifm"], tensors["wgt"],
                              tensors["bias"])
        q = _quant_dict(desc, sh.m)
        return [[oracle.finalize(px, q) for px in row] for row in acc]
    if desc.kind == "dwconv":
        acc = oracle.dwconv_ref(tensors["ifm"], tensors["wgt"],
                                tensors["bias"])
        q = _quant_dict(desc, sh.c)
        return [[oracle.finalize(px, q) for px in row] for row in acc]
    if desc.kind == "residual":
        return oracle.residual_ref(tensors["a"], tensors["b"], desc.emode)
    if desc.kind == "requant":
        q = desc.quant
        vals = tensors["vals"]
        per = len(vals) // desc.shape.m
        out = []
        for grp in range(desc.shape.m):
            part = vals[grp * per:(grp + 1) * per]
            if q.kind == "i8":
                out.extend(oracle.requant_i8_ref(part, q.mult[grp],
                                                 q.shift[grp], q.zp[grp]))
            elif q.kind == "b":
                out.extend(oracle.requant_bin_ref(part, q.thr[grp]))
            else:
                out.extend(oracle.requant_tern_ref(part, q.thr[grp]))
        return out
    raise GenError(f"unknown layer kind '{desc.kind}'")


def unpack_output(desc: LayerDesc, layout: TensorLayout,
                  mem_words: list[int]):
    """Decode what a run left in DMEM into logical output values."""
    if desc.kind in ("conv", "fc", "dwconv"):
        meta = layout.meta
        sh = meta["shape"]
        reg = layout.regions["ofm"]
        words = mem_words[reg.base // 4: reg.end // 4]
        n_ch = sh.m if desc.kind != "dwconv" else sh.c
        return oracle.unpack_ofm(words, meta["fmt"], sh.oh, sh.ow, n_ch)
    reg = layout.regions["dst"]
    words = mem_words[reg.base // 4: reg.end // 4]
    if desc.kind == "residual":
        fmt = "w32" if desc.emode == "e32" else "w16"
        return oracle.unpack_values(words, fmt, layout.meta["n"])
    if desc.kind == "requant":
        return oracle.unpack_values(words, desc.quant.kind,
                                    layout.meta["n"])
    raise GenError(f"unknown layer kind '{desc.kind}'")


@dataclass
class VerifyResult:
    desc: LayerDesc
    ok: bool
    mismatches: list[str]
    cycles: int
    mac_triggers: int
    utilization: float
    halt_reason: str | None
    fault: str | None
    events: object
    program: Program
    layout: TensorLayout


def verify_layer(desc: LayerDesc, machine: MachineConfig | None = None, *,
                 seed: int = 0, options: GenOptions | None = None,
                 max_cycles: int = 5_000_000) -> VerifyResult:
    """Generate, run, decode, and compare one layer against the oracle."""
    machine = machine or default_machine()
    options = options or GenOptions()
    program, layout = gen_program(desc, machine, options)
    tensors = random_tensors(desc, seed)
    images = build_images(desc, layout, tensors)
    res = run(program, machine, images=images, max_cycles=max_cycles)
    if res.halt_reason != "halted":
        return VerifyResult(desc, False,
                            [f"run ended with {res.halt_reason}: "
                             f"{res.fault}"],
                            res.cycles, res.mac_triggers, res.utilization,
                            res.halt_reason, res.fault, res.events,
                            program, layout)
    got = unpack_output(desc, layout, res.state.mem["DMEM"])
    want = reference_output(desc, tensors)
    mism = oracle.compare(got, want)
    return VerifyResult(desc, not mism, mism, res.cycles, res.mac_triggers,
                        res.utilization, res.halt_reason, res.fault,
                        res.events, program, layout)


def verify_batch(descs, machine: MachineConfig | None = None, *,
                 seed: int = 0, options: GenOptions | None = None
                 ) -> list[VerifyResult]:
    return [verify_layer(d, machine, seed=seed + i, options=options)
            for i, d in enumerate(descs)]
