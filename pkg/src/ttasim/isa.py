"""Move assembly: program types, assembler, disassembler, validator.

One instruction per source line; an instruction is up to one move per
bus, separated by ";".  A move is "SRC -> DST" with an optional guard
prefix.  Empty slots may be written "nop" or left out; slot position
selects the bus, so vector moves (buses 6-11 on the default machine)
need leading nops.

    sources       #5  #-12  #0x1F00        32-bit immediate (scalar buses)
                  rf.3  brf.0  vrf0.2      register read
                  salu0.r  lsu_d.rv        FU output port
                  some_label               label, resolves to its index
    destinations  rf.3  vrf1.0             register write
                  salu0.a  vmac.a          FU input latch
                  salu0.t.add  vmac.t.macb trigger: latch + launch opcode
    guards        ?b0 MOVE   execute iff guard register 0 is 1
                  !b2 MOVE   execute iff guard register 2 is 0
    labels        name:      alone on a line, names the next instruction
    data          .data DMEM 0x100 0xDEADBEEF 17   words at a byte address
    comments      // to end of line

Label definitions and references are resolved in a second pass; in the
resulting Program a label reference is an ordinary immediate holding the
instruction index.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .config import WORD_BITS, MachineConfig

PROGRAM_SCHEMA_VERSION = 1

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_INT_RE = re.compile(r"-?(0[xX][0-9a-fA-F]+|[0-9]+)\Z")


@dataclass(frozen=True)
class SrcLoc:
    file: str
    line: int   # 1-based
    col: int    # 1-based

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


@dataclass(frozen=True)
class Guard:
    index: int
    negate: bool = False

    def __str__(self) -> str:
        return f"{'!' if self.negate else '?'}b{self.index}"


@dataclass(frozen=True)
class Imm:
    value: int  # signed 32-bit

    def __str__(self) -> str:
        return f"#{self.value}"


@dataclass(frozen=True)
class RegRead:
    rf: str
    index: int

    def __str__(self) -> str:
        return f"{self.rf}.{self.index}"


@dataclass(frozen=True)
class PortRead:
    fu: str
    port: str

    def __str__(self) -> str:
        return f"{self.fu}.{self.port}"


@dataclass(frozen=True)
class RegWrite:
    rf: str
    index: int

    def __str__(self) -> str:
        return f"{self.rf}.{self.index}"


@dataclass(frozen=True)
class PortWrite:
    fu: str
    port: str

    def __str__(self) -> str:
        return f"{self.fu}.{self.port}"


@dataclass(frozen=True)
class Trigger:
    fu: str
    port: str
    opcode: str

    def __str__(self) -> str:
        return f"{self.fu}.{self.port}.{self.opcode}"


Source = Imm | RegRead | PortRead
Destination = RegWrite | PortWrite | Trigger


@dataclass(frozen=True)
class Move:
    src: Source
    dst: Destination
    guard: Guard | None = None
    loc: SrcLoc | None = field(default=None, compare=False, repr=False)

    def __str__(self) -> str:
        g = f"{self.guard} " if self.guard else ""
        return f"{g}{self.src} -> {self.dst}"


@dataclass(frozen=True)
class Instruction:
    slots: tuple[Move | None, ...]

    @property
    def moves(self) -> list[Move]:
        return [m for m in self.slots if m is not None]


@dataclass(frozen=True)
class DataDirective:
    memory: str
    addr: int
    words: tuple[int, ...]


@dataclass
class Program:
    instructions: list[Instruction] = field(default_factory=list)
    labels: dict[str, int] = field(default_factory=dict)
    data: list[DataDirective] = field(default_factory=list)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Program)
                and self.instructions == other.instructions
                and self.labels == other.labels
                and self.data == other.data)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        def src_d(s: Source) -> dict:
            if isinstance(s, Imm):
                return {"imm": s.value}
            if isinstance(s, RegRead):
                return {"reg": [s.rf, s.index]}
            return {"port": [s.fu, s.port]}

        def dst_d(d: Destination) -> dict:
            if isinstance(d, RegWrite):
                return {"reg": [d.rf, d.index]}
            if isinstance(d, PortWrite):
                return {"port": [d.fu, d.port]}
            return {"trig": [d.fu, d.port, d.opcode]}

        def move_d(m: Move | None):
            if m is None:
                return None
            out = {"src": src_d(m.src), "dst": dst_d(m.dst)}
            if m.guard:
                out["guard"] = [m.guard.index, m.guard.negate]
            return out

        return {
            "version": PROGRAM_SCHEMA_VERSION,
            "instructions": [[move_d(m) for m in i.slots]
                             for i in self.instructions],
            "labels": dict(self.labels),
            "data": [{"memory": d.memory, "addr": d.addr,
                      "words": list(d.words)} for d in self.data],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Program":
        version = d.get("version")
        if version != PROGRAM_SCHEMA_VERSION:
            raise ValueError(f"unsupported program version {version!r}")

        def src_p(s: dict) -> Source:
            if "imm" in s:
                return Imm(s["imm"])
            if "reg" in s:
                return RegRead(s["reg"][0], s["reg"][1])
            return PortRead(s["port"][0], s["port"][1])

        def dst_p(x: dict) -> Destination:
            if "reg" in x:
                return RegWrite(x["reg"][0], x["reg"][1])
            if "port" in x:
                return PortWrite(x["port"][0], x["port"][1])
            return Trigger(x["trig"][0], x["trig"][1], x["trig"][2])

        def move_p(m) -> Move | None:
            if m is None:
                return None
            guard = None
            if "guard" in m:
                guard = Guard(m["guard"][0], m["guard"][1])
            return Move(src_p(m["src"]), dst_p(m["dst"]), guard)

        return cls(
            instructions=[Instruction(tuple(move_p(m) for m in slots))
                          for slots in d["instructions"]],
            labels=dict(d.get("labels", {})),
            data=[DataDirective(x["memory"], x["addr"], tuple(x["words"]))
                  for x in d.get("data", [])],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict()) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Program":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Diagnostic:
    severity: str   # "error" | "warning"
    message: str
    loc: SrcLoc | None = None

    def __str__(self) -> str:
        where = f"{self.loc}: " if self.loc else ""
        return f"{where}{self.severity}: {self.message}"


class AsmError(Exception):
    """Raised for syntax or (when a machine is supplied) validity errors."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


# -- assembler ----------------------------------------------------------------

def _parse_int(tok: str) -> int | None:
    if not _INT_RE.match(tok):
        return None
    return int(tok, 0)


def _fold_imm(v: int) -> int | None:
    """Fold a literal into signed 32-bit; hex >= 2**31 is a bit pattern."""
    if v >= 1 << 31:
        v -= 1 << 32
    if not -(1 << 31) <= v < (1 << 31):
        return None
    return v


class _Parser:
    def __init__(self, text: str, filename: str, num_slots: int):
        self.lines = text.splitlines()
        self.filename = filename
        self.num_slots = num_slots
        self.errors: list[Diagnostic] = []
        self.labels: dict[str, int] = {}
        self.label_locs: dict[str, SrcLoc] = {}
        self.refs: list[tuple[str, int, int, SrcLoc]] = []  # name, instr, slot
        self.instructions: list[Instruction] = []
        self.data: list[DataDirective] = []

    def err(self, line: int, col: int, msg: str) -> None:
        self.errors.append(
            Diagnostic("error", msg, SrcLoc(self.filename, line, col)))

    def run(self) -> Program:
        for lineno, raw in enumerate(self.lines, start=1):
            line = raw.split("//", 1)[0]
            if not line.strip():
                continue
            stripped = line.strip()
            if stripped.startswith(".data"):
                self.parse_data(lineno, line)
            elif stripped.endswith(":") and ";" not in stripped:
                self.parse_label(lineno, line)
            else:
                self.parse_instruction(lineno, line)

        # second pass: resolve label references
        for name, instr, slot, loc in self.refs:
            if name not in self.labels:
                self.err(loc.line, loc.col, f"unresolved label '{name}'")
                continue
            old = self.instructions[instr]
            move = old.slots[slot]
            assert move is not None
            new = Move(Imm(self.labels[name]), move.dst, move.guard, move.loc)
            slots = list(old.slots)
            slots[slot] = new
            self.instructions[instr] = Instruction(tuple(slots))

        if self.errors:
            raise AsmError(self.errors)
        return Program(self.instructions, self.labels, self.data)

    def parse_label(self, lineno: int, line: str) -> None:
        name = line.strip()[:-1].strip()
        col = line.index(name[0]) + 1 if name else 1
        if not _NAME_RE.match(name or ""):
            self.err(lineno, col, f"bad label name '{name}'")
            return
        if name in self.labels:
            prev = self.label_locs[name]
            self.err(lineno, col,
                     f"duplicate label '{name}' (first defined at {prev})")
            return
        self.labels[name] = len(self.instructions)
        self.label_locs[name] = SrcLoc(self.filename, lineno, col)

    def parse_data(self, lineno: int, line: str) -> None:
        toks = line.split()
        if len(toks) < 3:
            self.err(lineno, 1, ".data needs a memory name and an address")
            return
        memory = toks[1]
        addr = _parse_int(toks[2])
        if addr is None or addr < 0:
            self.err(lineno, 1, f"bad .data address '{toks[2]}'")
            return
        words = []
        for tok in toks[3:]:
            v = _parse_int(tok)
            if v is None or not -(1 << 31) <= v < (1 << 32):
                self.err(lineno, 1, f"bad .data word '{tok}'")
                return
            words.append(v & 0xFFFFFFFF)
        self.data.append(DataDirective(memory, addr, tuple(words)))

    def parse_instruction(self, lineno: int, line: str) -> None:
        segments = line.split(";")
        # A trailing separator leaves one empty segment; drop it.
        if segments and not segments[-1].strip():
            segments.pop()
        if len(segments) > self.num_slots:
            self.err(lineno, 1,
                     f"instruction has {len(segments)} slots, machine has "
                     f"{self.num_slots} buses")
            return
        slots: list[Move | None] = []
        col = 1
        instr_index = len(self.instructions)
        for seg in segments:
            text = seg.strip()
            if text in ("", "nop"):
                slots.append(None)
            else:
                move = self.parse_move(lineno, col + len(seg) - len(seg.lstrip()),
                                       text, instr_index, len(slots))
                slots.append(move)
            col += len(seg) + 1
        slots += [None] * (self.num_slots - len(slots))
        self.instructions.append(Instruction(tuple(slots)))

    def parse_move(self, lineno: int, col: int, text: str,
                   instr_index: int, slot: int) -> Move | None:
        loc = SrcLoc(self.filename, lineno, col)
        guard = None
        rest = text
        if rest[0] in "?!":
            parts = rest.split(None, 1)
            gtok = parts[0]
            m = re.match(r"[?!]b([0-9]+)\Z", gtok)
            if not m or len(parts) < 2:
                self.err(lineno, col, f"bad guard '{gtok}'")
                return None
            guard = Guard(int(m.group(1)), negate=gtok[0] == "!")
            rest = parts[1]
        if "->" not in rest:
            self.err(lineno, col, f"move needs '->': '{text}'")
            return None
        src_txt, dst_txt = (p.strip() for p in rest.split("->", 1))

        src = self.parse_source(lineno, col, src_txt, instr_index, slot)
        dst = self.parse_dest(lineno, col, dst_txt)
        if src is None or dst is None:
            return None
        return Move(src, dst, guard, loc)

    def parse_source(self, lineno: int, col: int, text: str,
                     instr_index: int, slot: int) -> Source | None:
        if not text:
            self.err(lineno, col, "empty move source")
            return None
        if text.startswith("#"):
            v = _parse_int(text[1:])
            if v is None:
                self.err(lineno, col, f"bad immediate '{text}'")
                return None
            v = _fold_imm(v)
            if v is None:
                self.err(lineno, col,
                         f"immediate out of 32-bit range: '{text}'")
                return None
            return Imm(v)
        parts = text.split(".")
        if len(parts) == 1:
            if not _NAME_RE.match(text):
                self.err(lineno, col, f"bad source '{text}'")
                return None
            # Label reference; resolved in the second pass.  Placeholder 0.
            self.refs.append(
                (text, instr_index, slot, SrcLoc(self.filename, lineno, col)))
            return Imm(0)
        if len(parts) == 2 and _NAME_RE.match(parts[0]):
            idx = _parse_int(parts[1])
            if idx is not None:
                return RegRead(parts[0], idx)
            if _NAME_RE.match(parts[1]):
                return PortRead(parts[0], parts[1])
        self.err(lineno, col, f"bad source '{text}'")
        return None

    def parse_dest(self, lineno: int, col: int, text: str) -> Destination | None:
        parts = text.split(".")
        if len(parts) == 2 and _NAME_RE.match(parts[0]):
            idx = _parse_int(parts[1])
            if idx is not None:
                return RegWrite(parts[0], idx)
            if _NAME_RE.match(parts[1]):
                return PortWrite(parts[0], parts[1])
        elif (len(parts) == 3 and all(_NAME_RE.match(p) for p in parts)):
            return Trigger(parts[0], parts[1], parts[2])
        self.err(lineno, col, f"bad destination '{text}'")
        return None


def parse_asm(text: str, machine: MachineConfig | None = None, *,
              filename: str = "<asm>", num_slots: int = 12) -> Program:
    """Assemble source text.  With a machine, also validate against it.

    Raises AsmError carrying one diagnostic per problem found.
    """
    if machine is not None:
        num_slots = machine.num_buses
    program = _Parser(text, filename, num_slots).run()
    if machine is not None:
        diags = [d for d in validate(program, machine) if d.severity == "error"]
        if diags:
            raise AsmError(diags)
    return program


# -- disassembler -------------------------------------------------------------

def emit_asm(program: Program) -> str:
    """Canonical text form; parse_asm(emit_asm(p)) == p."""
    out = ["// tta move assembly"]
    for d in program.data:
        words = " ".join(f"0x{w:08x}" for w in d.words)
        out.append(f".data {d.memory} 0x{d.addr:x} {words}".rstrip())
    by_index: dict[int, list[str]] = {}
    for name in sorted(program.labels):
        by_index.setdefault(program.labels[name], []).append(name)
    for i, instr in enumerate(program.instructions):
        for name in by_index.get(i, []):
            out.append(f"{name}:")
        texts = ["nop" if m is None else str(m) for m in instr.slots]
        while texts and texts[-1] == "nop":
            texts.pop()
        if not texts:
            out.append("nop ;")
        else:
            out.append(" ; ".join(texts) + " ;")
    for name in by_index.get(len(program.instructions), []):
        out.append(f"{name}:")
    return "\n".join(out) + "\n"


# -- validation ---------------------------------------------------------------

def _width_class(bits: int) -> str:
    return "scalar" if bits <= WORD_BITS else "vector"


def validate(program: Program, machine: MachineConfig) -> list[Diagnostic]:
    """Static checks; a clean program executes without configuration errors."""
    diags: list[Diagnostic] = []

    def err(msg: str, loc: SrcLoc | None = None) -> None:
        diags.append(Diagnostic("error", msg, loc))

    if len(program.instructions) > machine.imem_entries:
        err(f"program has {len(program.instructions)} instructions, "
            f"IMEM holds {machine.imem_entries}")

    guard_rf = machine.rf(machine.guard_rf)
    n_instr = len(program.instructions)

    for d in program.data:
        mem = machine.memory(d.memory)
        if mem is None:
            err(f".data references unknown memory '{d.memory}'")
        elif d.addr % 4 != 0:
            err(f".data address 0x{d.addr:x} not word aligned")
        elif d.addr + 4 * len(d.words) > mem.size_bytes:
            err(f".data block [{d.addr:#x}, +{4 * len(d.words)}] exceeds "
                f"{d.memory} size {mem.size_bytes}")

    for label, idx in program.labels.items():
        if not 0 <= idx <= n_instr:
            err(f"label '{label}' index {idx} out of range")

    for pc, instr in enumerate(program.instructions):
        if len(instr.slots) != machine.num_buses:
            err(f"instruction {pc} has {len(instr.slots)} slots, machine "
                f"has {machine.num_buses} buses")
            continue
        seen_dst: dict[str, int] = {}
        seen_trig: dict[str, int] = {}
        imm_cu_a: int | None = None   # statically known cu body-length latch
        for slot, move in enumerate(instr.slots):
            if move is None:
                continue
            where = move.loc
            bus_class = _width_class(machine.bus_widths[slot])

            # guard
            if move.guard is not None:
                if guard_rf is None:
                    err(f"instr {pc} slot {slot}: no guard register file "
                        f"'{machine.guard_rf}' in machine", where)
                elif not 0 <= move.guard.index < guard_rf.entries:
                    err(f"instr {pc} slot {slot}: guard index "
                        f"{move.guard.index} out of range", where)

            # source
            src = move.src
            if isinstance(src, Imm):
                if bus_class != "scalar":
                    err(f"instr {pc} slot {slot}: immediate on vector bus",
                        where)
            elif isinstance(src, RegRead):
                rf = machine.rf(src.rf)
                if rf is None:
                    err(f"instr {pc} slot {slot}: unknown register file "
                        f"'{src.rf}'", where)
                else:
                    if not 0 <= src.index < rf.entries:
                        err(f"instr {pc} slot {slot}: register {src} out of "
                            f"range (0..{rf.entries - 1})", where)
                    if _width_class(rf.width) != bus_class:
                        err(f"instr {pc} slot {slot}: {src.rf} is "
                            f"{_width_class(rf.width)}, bus {slot} is "
                            f"{bus_class}", where)
                    if not machine.unit_on_bus(slot, src.rf):
                        err(f"instr {pc} slot {slot}: {src.rf} not connected "
                            f"to bus {slot}", where)
            else:
                fu = machine.fu(src.fu)
                if fu is None:
                    err(f"instr {pc} slot {slot}: unknown FU '{src.fu}'",
                        where)
                elif src.port not in fu.ports:
                    err(f"instr {pc} slot {slot}: unknown port "
                        f"'{src.fu}.{src.port}'", where)
                else:
                    direction, width = fu.ports[src.port]
                    if direction != "out":
                        err(f"instr {pc} slot {slot}: source port "
                            f"'{src.fu}.{src.port}' is not an output", where)
                    if _width_class(width) != bus_class:
                        err(f"instr {pc} slot {slot}: port width mismatch on "
                            f"bus {slot}", where)
                    if not machine.unit_on_bus(slot, src.fu):
                        err(f"instr {pc} slot {slot}: {src.fu} not connected "
                            f"to bus {slot}", where)

            # destination
            dst = move.dst
            key = str(dst)
            if key in seen_dst:
                err(f"instr {pc}: slots {seen_dst[key]} and {slot} both "
                    f"write {key}", where)
            seen_dst[key] = slot
            if isinstance(dst, RegWrite):
                rf = machine.rf(dst.rf)
                if rf is None:
                    err(f"instr {pc} slot {slot}: unknown register file "
                        f"'{dst.rf}'", where)
                else:
                    if not 0 <= dst.index < rf.entries:
                        err(f"instr {pc} slot {slot}: register {dst} out of "
                            f"range (0..{rf.entries - 1})", where)
                    if _width_class(rf.width) != bus_class:
                        err(f"instr {pc} slot {slot}: {dst.rf} is "
                            f"{_width_class(rf.width)}, bus {slot} is "
                            f"{bus_class}", where)
                    if not machine.unit_on_bus(slot, dst.rf):
                        err(f"instr {pc} slot {slot}: {dst.rf} not connected "
                            f"to bus {slot}", where)
            else:
                fu = machine.fu(dst.fu)
                if fu is None:
                    err(f"instr {pc} slot {slot}: unknown FU '{dst.fu}'",
                        where)
                    continue
                if dst.port not in fu.ports:
                    err(f"instr {pc} slot {slot}: unknown port "
                        f"'{dst.fu}.{dst.port}'", where)
                    continue
                direction, width = fu.ports[dst.port]
                if _width_class(width) != bus_class:
                    err(f"instr {pc} slot {slot}: port width mismatch on "
                        f"bus {slot}", where)
                if not machine.unit_on_bus(slot, dst.fu):
                    err(f"instr {pc} slot {slot}: {dst.fu} not connected to "
                        f"bus {slot}", where)
                if isinstance(dst, Trigger):
                    if dst.fu in seen_trig:
                        err(f"instr {pc}: slots {seen_trig[dst.fu]} and "
                            f"{slot} both launch an opcode on {dst.fu}",
                            where)
                    seen_trig[dst.fu] = slot
                    if direction != "trig":
                        err(f"instr {pc} slot {slot}: "
                            f"'{dst.fu}.{dst.port}' is not a trigger port",
                            where)
                    elif dst.opcode not in fu.opcodes:
                        err(f"instr {pc} slot {slot}: unknown opcode "
                            f"'{dst.opcode}' on {dst.fu}", where)
                    elif fu.opcodes[dst.opcode] != dst.port:
                        err(f"instr {pc} slot {slot}: opcode "
                            f"'{dst.opcode}' launches from port "
                            f"'{fu.opcodes[dst.opcode]}', not "
                            f"'{dst.port}'", where)
                    elif fu.kind == "cu" and isinstance(move.src, Imm):
                        if dst.opcode in ("jump", "cjump"):
                            if not 0 <= move.src.value < n_instr:
                                err(f"instr {pc} slot {slot}: jump target "
                                    f"{move.src.value} out of range", where)
                        elif dst.opcode == "loop":
                            if move.src.value < 1:
                                err(f"instr {pc} slot {slot}: loop iteration "
                                    f"count must be >= 1", where)
                else:
                    if direction == "trig":
                        err(f"instr {pc} slot {slot}: trigger port "
                            f"'{dst.fu}.{dst.port}' written without an "
                            f"opcode", where)
                    elif direction != "in":
                        err(f"instr {pc} slot {slot}: destination port "
                            f"'{dst.fu}.{dst.port}' is not an input", where)
                    if (fu.kind == "cu" and dst.port == "a"
                            and isinstance(move.src, Imm)):
                        imm_cu_a = move.src.value

        # statically known loop body length
        if imm_cu_a is not None:
            for move in instr.moves:
                if (isinstance(move.dst, Trigger)
                        and move.dst.opcode == "loop"):
                    if imm_cu_a < 1:
                        err(f"instr {pc}: loop body length must be >= 1",
                            move.loc)
                    elif (machine.loopbuffer_enabled
                            and imm_cu_a > machine.loopbuffer_entries):
                        err(f"instr {pc}: loop body of {imm_cu_a} exceeds "
                            f"loopbuffer ({machine.loopbuffer_entries} "
                            f"entries)", move.loc)
                    elif pc + 1 + imm_cu_a > n_instr:
                        err(f"instr {pc}: loop body runs past end of "
                            f"program", move.loc)

    return diags


# -- instruction encoding width ------------------------------------------------

def _bits_for(n_choices: int) -> int:
    """ceil(log2(n)) with 0 bits for a single choice."""
    return max(0, (n_choices - 1).bit_length())


def encode_width(program: Program, machine: MachineConfig) -> int:
    """Modelled instruction width in bits for this machine.

    Per bus slot: a source field choosing among every reachable register,
    FU output port, an immediate marker (scalar buses) and "empty"; a full
    32-bit immediate field on scalar buses; a destination field choosing
    among every reachable register, input port, (trigger port, opcode)
    pair and "empty"; and a guard field (both polarities per guard
    register, plus "always").  The program argument fixes the interface;
    the width is a property of the machine alone.
    """
    del program
    total = 0
    guard_rf = machine.rf(machine.guard_rf)
    guard_choices = 2 * guard_rf.entries + 1 if guard_rf else 1
    for bus in range(machine.num_buses):
        bus_class = _width_class(machine.bus_widths[bus])
        src_choices = 1   # empty
        dst_choices = 1   # empty
        imm_bits = 0
        if bus_class == "scalar":
            src_choices += 1
            imm_bits = WORD_BITS
        for rf in machine.rfs:
            if (_width_class(rf.width) == bus_class
                    and machine.unit_on_bus(bus, rf.name)):
                src_choices += rf.entries
                dst_choices += rf.entries
        for fu in machine.fus:
            if not machine.unit_on_bus(bus, fu.name):
                continue
            for port, (direction, width) in fu.ports.items():
                if _width_class(width) != bus_class:
                    continue
                if direction == "out":
                    src_choices += 1
                elif direction == "in":
                    dst_choices += 1
                else:   # trigger: one destination per opcode it launches
                    dst_choices += sum(
                        1 for trig in fu.opcodes.values() if trig == port)
        total += (_bits_for(src_choices) + imm_bits
                  + _bits_for(dst_choices) + _bits_for(guard_choices))
    return total
