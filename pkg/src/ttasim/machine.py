"""Cycle-accurate execution of move programs.

Per-cycle semantics:

  1. FU results whose latency elapsed commit to their output ports.
  2. The instruction at pc is fetched from IMEM, or replayed from the
     loopbuffer when inside a captured loop body past its first pass.
  3. Guards are evaluated against the pre-cycle guard registers.
  4. Every surviving move reads its source from pre-cycle state; all
     reads happen before any write (transports are atomic, so a register
     swap in one instruction works).
  5. Writes land: register files, FU input latches, trigger latches.
  6. Triggered opcodes launch in slot order.  They see operand latches
     written this cycle, FU-internal state (accumulators, memory) as
     left by earlier launches, and schedule results for pc + latency.
  7. The next pc is resolved: halt, jump, loop wrap, or fall through.

Faults (bad address, nested loop, jump inside an active loop, ...) halt
the machine with reason "error" and a message naming cycle and cause.
A program that falls off the end without halting is a fault.

The loopbuffer captures the body on its first pass (ordinary fetches)
and replays it afterwards; with `loopbuffer_enabled` false the loop
still executes but every pass fetches from IMEM, which only changes
fetch/replay events.  Memory is byte-addressed in 32-bit little-endian
words; an N-bit access must be N/8-aligned and touches word banks
((addr/4 + i) mod banks), one bank event per word.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import funits
from .config import (VEC_BITS, WORD_BITS, FUSpec, MachineConfig, MemSpec,
                     RFSpec, default_machine)
from .energy import EventLog
from .isa import (Imm, Instruction, PortRead, PortWrite, Program, RegRead,
                  RegWrite, Trigger, encode_width)

__all__ = [
    "MachineConfig", "FUSpec", "RFSpec", "MemSpec", "default_machine",
    "MachineError", "CoreState", "RunResult", "make_state", "run", "step",
    "load_memory_image", "dump_memory_image",
]

MASK32 = funits.MASK32
_MAC_MODE = {"macb": "b", "mact": "t", "mac8": "i8"}


class MachineError(Exception):
    """Configuration-level problem; validated programs never raise this."""


@dataclass
class LoopState:
    start: int
    body_len: int
    remaining: int
    first_pass: bool = True


class FUState:
    __slots__ = ("spec", "latches", "outputs", "pending", "acc")

    def __init__(self, spec: FUSpec):
        self.spec = spec
        self.latches = {p: 0 for p, (d, _w) in spec.ports.items()
                        if d in ("in", "trig")}
        self.outputs = {p: 0 for p, (d, _w) in spec.ports.items()
                        if d == "out"}
        self.pending: list[tuple[int, str, int]] = []
        self.acc = [0] * funits.LANES if spec.kind == "vmac" else None


@dataclass
class CoreState:
    machine: MachineConfig
    pc: int = 0
    cycle: int = 0
    halted: bool = False
    halt_reason: str | None = None
    fault: str | None = None
    loop: LoopState | None = None
    rf: dict[str, list[int]] = field(default_factory=dict)
    fu: dict[str, FUState] = field(default_factory=dict)
    mem: dict[str, list[int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        # intra-cycle control scratch, not architectural state
        self._next_pc: int | None = None
        self._pending_loop: LoopState | None = None


def make_state(machine: MachineConfig) -> CoreState:
    state = CoreState(machine)
    for rf in machine.rfs:
        state.rf[rf.name] = [0] * rf.entries
    for fu in machine.fus:
        state.fu[fu.name] = FUState(fu)
    for mem in machine.memories:
        state.mem[mem.name] = [0] * mem.words
    return state


# -- memory images ---------------------------------------------------------

def load_memory_image(text: str) -> list[tuple[int, list[int]]]:
    """Parse "@hexaddr" cursors and 8-digit hex words into (addr, words)."""
    chunks: list[tuple[int, list[int]]] = []
    cursor = 0
    words: list[int] = []
    start = 0
    for tok in text.split():
        if tok.startswith("@"):
            if words:
                chunks.append((start, words))
            cursor = int(tok[1:], 16)
            if cursor % 4 != 0:
                raise ValueError(f"image cursor @{tok[1:]} not word aligned")
            start = cursor
            words = []
        else:
            words.append(int(tok, 16) & MASK32)
            cursor += 4
    if words:
        chunks.append((start, words))
    return chunks


def dump_memory_image(words: list[int]) -> str:
    """Sparse readmemh-style dump; zero gaps are skipped."""
    out: list[str] = []
    i = 0
    n = len(words)
    while i < n:
        if words[i] == 0:
            i += 1
            continue
        j = i
        zeros = 0
        run = []
        # extend the run across short zero gaps to keep the file compact
        while j < n and zeros <= 8:
            if words[j] == 0:
                zeros += 1
            else:
                run.extend(words[i:j + 1])
                i = j + 1
                zeros = 0
            j += 1
        out.append(f"@{(i - len(run)) * 4:x}")
        for k in range(0, len(run), 8):
            out.append(" ".join(f"{w:08x}" for w in run[k:k + 8]))
        i = j
    return "\n".join(out) + "\n" if out else "@0\n"


def write_words(state: CoreState, memory: str, addr: int,
                words: list[int]) -> None:
    mem = state.mem.get(memory)
    if mem is None:
        raise MachineError(f"unknown memory '{memory}'")
    if addr % 4 != 0 or addr < 0 or addr + 4 * len(words) > 4 * len(mem):
        raise MachineError(
            f"image block [{addr:#x}, +{4 * len(words)}] does not fit "
            f"{memory}")
    mem[addr // 4: addr // 4 + len(words)] = [w & MASK32 for w in words]


# -- decoded program ---------------------------------------------------------

class _DMove:
    __slots__ = ("slot", "bus_kind", "guard", "src", "dst")

    def __init__(self, slot, bus_kind, guard, src, dst):
        self.slot = slot
        self.bus_kind = bus_kind
        self.guard = guard     # None | (index, negate)
        self.src = src         # ("i", value) ("r", name, idx) ("p", fu, port)
        self.dst = dst         # ("r", name, idx, width)
                               # ("p", fu, port, width) ("t", fu, port, op)


class _DInstr:
    __slots__ = ("moves", "static", "text")

    def __init__(self, moves, static, text):
        self.moves = moves
        self.static = static   # event-count dict for unguarded moves
        self.text = text


def _decode(program: Program, machine: MachineConfig) -> list[_DInstr]:
    decoded = []
    for instr in program.instructions:
        moves = []
        static: dict[tuple, int] = {}

        def bump(key: tuple) -> None:
            static[key] = static.get(key, 0) + 1

        for slot, move in enumerate(instr.slots):
            if move is None:
                continue
            if slot >= machine.num_buses:
                raise MachineError(f"slot {slot} has no bus")
            bus_kind = "scalar" if machine.bus_is_scalar(slot) else "vector"
            guard = None
            if move.guard is not None:
                guard = (move.guard.index, move.guard.negate)
                bump(("rf_access", "scalar", "read"))

            src = move.src
            if isinstance(src, Imm):
                dsrc = ("i", src.value & MASK32)
            elif isinstance(src, RegRead):
                rf = machine.rf(src.rf)
                if rf is None:
                    raise MachineError(f"unknown register file '{src.rf}'")
                cls = "scalar" if rf.width <= WORD_BITS else "vector"
                dsrc = ("r", src.rf, src.index, cls)
            else:
                fu = machine.fu(src.fu)
                if fu is None or src.port not in fu.ports:
                    raise MachineError(f"unknown source {src}")
                dsrc = ("p", src.fu, src.port)

            dst = move.dst
            if isinstance(dst, RegWrite):
                rf = machine.rf(dst.rf)
                if rf is None:
                    raise MachineError(f"unknown register file '{dst.rf}'")
                cls = "scalar" if rf.width <= WORD_BITS else "vector"
                ddst = ("r", dst.rf, dst.index, rf.width, cls)
            elif isinstance(dst, PortWrite):
                fu = machine.fu(dst.fu)
                if fu is None or dst.port not in fu.ports:
                    raise MachineError(f"unknown destination {dst}")
                ddst = ("p", dst.fu, dst.port, fu.ports[dst.port][1])
            else:
                fu = machine.fu(dst.fu)
                if (fu is None or dst.port not in fu.ports
                        or dst.opcode not in fu.opcodes):
                    raise MachineError(f"unknown trigger {dst}")
                ddst = ("t", dst.fu, dst.port, dst.opcode, fu.kind,
                        fu.latency, fu.ports[dst.port][1])

            if guard is None:
                bump(("move", bus_kind))
                if dsrc[0] == "r":
                    bump(("rf_access", dsrc[3], "read"))
                if ddst[0] == "r":
                    bump(("rf_access", ddst[4], "write"))
                elif ddst[0] == "t":
                    bump(("fu_op", ddst[4], ddst[3]))
            moves.append(_DMove(slot, bus_kind, guard, dsrc, ddst))

        texts = ["-" if m is None else str(m) for m in instr.slots]
        decoded.append(_DInstr(moves, static, " | ".join(texts)))
    return decoded


# -- LSU ----------------------------------------------------------------------

def _lsu_widths() -> dict[str, tuple[bool, int]]:
    table = {}
    for w in range(WORD_BITS, VEC_BITS + 1, WORD_BITS):
        table[f"ld{w}"] = (True, w)
        table[f"st{w}"] = (False, w)
    return table


_LSU_OPS = _lsu_widths()


# -- execution ----------------------------------------------------------------

@dataclass
class RunResult:
    cycles: int
    halt_reason: str            # "halted" | "max_cycles" | "error"
    fault: str | None
    events: EventLog
    state: CoreState
    trace: list[str] | None = None

    @property
    def mac_triggers(self) -> int:
        return self.events.mac_triggers()

    @property
    def utilization(self) -> float:
        return self.mac_triggers / self.cycles if self.cycles else 0.0


def _fault(state: CoreState, msg: str) -> None:
    state.halted = True
    state.halt_reason = "error"
    state.fault = f"cycle {state.cycle}: {msg}"


def _launch(state: CoreState, fustate: FUState, kind: str, opcode: str,
            value: int, log: EventLog, n_instr: int) -> None:
    """Run one triggered opcode; schedule results, apply memory/control."""
    spec = fustate.spec
    ready = state.cycle + spec.latency
    latch = fustate.latches

    if kind == "salu":
        fustate.pending.append(
            (ready, "r", funits.salu_op(opcode, latch["a"], value)))
        return

    if kind == "vmac":
        if opcode == "initacc":
            fustate.acc = funits.mac_init(value)
        elif opcode in _MAC_MODE:
            fustate.acc = _mac_fast(_MAC_MODE[opcode], latch["a"], value,
                                    fustate.acc)
        elif opcode == "rd32":
            fustate.pending.append(
                (ready, "r", funits.mac_read32(fustate.acc)))
        elif opcode == "rd16":
            fustate.pending.append(
                (ready, "r", funits.mac_read16(fustate.acc)))
        return

    if kind == "vadd":
        emode = "e16" if opcode == "add16" else "e32"
        fustate.pending.append(
            (ready, "r", funits.vadd(emode, latch["a"], value)))
        return

    if kind == "vops":
        try:
            if opcode == "qi8":
                res = funits.requant_i8(value, funits.s32(latch["qm"]),
                                        funits.s32(latch["qs"]),
                                        funits.s32(latch["qz"]))
                fustate.pending.append((ready, "r", res))
            elif opcode == "qb":
                res = funits.requant_bin(value, funits.s32(latch["qm"]))
                fustate.pending.append((ready, "rs", res))
            elif opcode == "qt":
                res = funits.requant_tern(value, funits.s32(latch["qm"]))
                fustate.pending.append((ready, "r", res))
            elif opcode in ("relu16", "relu32"):
                emode = "e16" if opcode == "relu16" else "e32"
                fustate.pending.append((ready, "r", funits.relu(emode, value)))
            elif opcode in ("max16", "max32"):
                emode = "e16" if opcode == "max16" else "e32"
                fustate.pending.append(
                    (ready, "r", funits.vmax(emode, latch["a"], value)))
            elif opcode == "bcast":
                fustate.pending.append((ready, "r", funits.bcast32(value)))
            elif opcode == "ins":
                # sx holds the lane index, the trigger carries the word
                res = funits.lane_insert(latch["a"], latch["sx"], value)
                fustate.pending.append((ready, "r", res))
            elif opcode == "ext":
                # the trigger carries the lane index
                res = funits.lane_extract(latch["a"], value)
                fustate.pending.append((ready, "rs", res))
        except ValueError as e:
            _fault(state, f"{spec.name}.{opcode}: {e}")
        return

    if kind == "lsu":
        is_load, bits = _LSU_OPS[opcode]
        nbytes = bits // 8
        nwords = bits // 32
        addr = value
        memspec = state.machine.memory(spec.memory)
        if memspec is None:
            raise MachineError(f"{spec.name} has no memory '{spec.memory}'")
        if addr % nbytes != 0:
            _fault(state, f"{spec.name}.{opcode}: address {addr:#x} not "
                          f"aligned to {nbytes}")
            return
        if addr + nbytes > memspec.size_bytes:
            _fault(state, f"{spec.name}.{opcode}: access [{addr:#x}, "
                          f"+{nbytes}] outside {spec.memory}")
            return
        mem = state.mem[spec.memory]
        w0 = addr // 4
        banks = memspec.banks
        rw = "read" if is_load else "write"
        for i in range(nwords):
            log.add(("sram_bank", spec.memory, (w0 + i) % banks, rw))
        if is_load:
            val = 0
            for i in range(nwords):
                val |= mem[w0 + i] << (32 * i)
            fustate.pending.append((ready, "r" if bits == 32 else "rv", val))
        else:
            data = latch["x"] if bits == 32 else latch["xv"]
            for i in range(nwords):
                mem[w0 + i] = (data >> (32 * i)) & MASK32
        return

    if kind == "cu":
        if opcode == "halt":
            state.halted = True
            state.halt_reason = "halted"
        elif opcode in ("jump", "cjump"):
            if state.loop is not None:
                _fault(state, f"{opcode} taken while a hardware loop is "
                              f"active")
                return
            target = funits.s32(value)
            if not 0 <= target < n_instr:
                _fault(state, f"jump target {target} out of range")
                return
            state._next_pc = target
        elif opcode == "loop":
            iters = funits.s32(value)
            body = funits.s32(latch["a"])
            if state.loop is not None:
                _fault(state, "loop_setup while a loop is already active")
            elif iters < 1:
                _fault(state, f"loop iteration count {iters} < 1")
            elif body < 1:
                _fault(state, f"loop body length {body} < 1")
            elif (state.machine.loopbuffer_enabled
                    and body > state.machine.loopbuffer_entries):
                _fault(state, f"loop body {body} exceeds loopbuffer "
                              f"({state.machine.loopbuffer_entries})")
            elif state.pc + 1 + body > n_instr:
                _fault(state, "loop body runs past end of program")
            else:
                state._pending_loop = LoopState(state.pc + 1, body, iters)
        return

    raise MachineError(f"no semantics for FU kind '{kind}'")


def _mac_fast(mode: str, act: int, wgt: int, acc: list[int]) -> list[int]:
    """Whole-vector MAC; bit-identical to funits.mac_step."""
    s32 = funits.s32
    if mode == "b":
        x = ~(act ^ wgt) & funits.VEC_MASK
        return [s32(acc[m] + 2 * ((x >> (32 * m)) & MASK32).bit_count() - 32)
                for m in range(32)]
    if mode == "t":
        am = act & _T_MAG_VEC
        wm = wgt & _T_MAG_VEC
        a = act & (am | (am << 1))
        w = wgt & (wm | (wm << 1))
        both = am & wm
        diff = ((a ^ w) >> 1) & both
        pos = both & ~diff
        return [s32(acc[m]
                    + ((pos >> (32 * m)) & MASK32).bit_count()
                    - ((diff >> (32 * m)) & MASK32).bit_count())
                for m in range(32)]
    # i8: 128 byte products; numpy keeps this exact and fast
    a = np.frombuffer(act.to_bytes(128, "little"), dtype=np.int8)
    w = np.frombuffer(wgt.to_bytes(128, "little"), dtype=np.int8)
    d = (a.astype(np.int32) * w.astype(np.int32)).reshape(32, 4).sum(axis=1)
    return [s32(acc[m] + int(d[m])) for m in range(32)]


_T_MAG_VEC = int("55555555" * 32, 16)


def step(state: CoreState, decoded: list[_DInstr], log: EventLog,
         iw_bits: int, trace: list[str] | None = None) -> None:
    """Execute one cycle."""
    cycle = state.cycle
    n_instr = len(decoded)

    # 1. commit matured FU results
    for fustate in state.fu.values():
        if fustate.pending:
            still = []
            for item in fustate.pending:
                if item[0] <= cycle:
                    fustate.outputs[item[1]] = item[2]
                else:
                    still.append(item)
            fustate.pending = still

    # 2. fetch or replay; a bad pc never completes the cycle
    pc = state.pc
    if not 0 <= pc < n_instr:
        _fault(state, f"pc {pc} out of range")
        return
    loop = state.loop
    replaying = (loop is not None and not loop.first_pass
                 and state.machine.loopbuffer_enabled)
    log.add(("loopbuf_replay",) if replaying else ("imem_fetch", iw_bits))

    dinstr = decoded[pc]
    if trace is not None:
        trace.append(f"{cycle} {pc} : {dinstr.text}")

    log.update(dinstr.static)
    state._next_pc = None
    state._pending_loop = None

    # 3-4. guards, then all source reads against pre-cycle state
    guard_regs = state.rf.get(state.machine.guard_rf)
    todo: list[tuple[_DMove, int]] = []
    executed = 0
    for dm in dinstr.moves:
        if dm.guard is not None:
            gval = guard_regs[dm.guard[0]]
            if bool(gval) == dm.guard[1]:
                continue
            # priced statically only for unguarded moves
            log.add(("move", dm.bus_kind))
            if dm.src[0] == "r":
                log.add(("rf_access", dm.src[3], "read"))
            if dm.dst[0] == "r":
                log.add(("rf_access", dm.dst[4], "write"))
            elif dm.dst[0] == "t":
                log.add(("fu_op", dm.dst[4], dm.dst[3]))
        src = dm.src
        tag = src[0]
        if tag == "i":
            value = src[1]
        elif tag == "r":
            value = state.rf[src[1]][src[2]]
        else:
            value = state.fu[src[1]].outputs[src[2]]
        todo.append((dm, value))
        executed += 1

    if not executed:
        log.add(("idle_cycle",))

    # 5. writes
    triggers: list[tuple[FUState, str, str, int]] = []
    for dm, value in todo:
        dst = dm.dst
        tag = dst[0]
        if tag == "r":
            width = dst[3]
            if width == 1:
                state.rf[dst[1]][dst[2]] = 1 if value else 0
            elif width == WORD_BITS:
                state.rf[dst[1]][dst[2]] = value & MASK32
            else:
                state.rf[dst[1]][dst[2]] = value
        elif tag == "p":
            state.fu[dst[1]].latches[dst[2]] = value
        else:
            fustate = state.fu[dst[1]]
            fustate.latches[dst[2]] = value
            triggers.append((fustate, dst[4], dst[3], value))

    # 6. launches in slot order
    for fustate, kind, opcode, value in triggers:
        _launch(state, fustate, kind, opcode, value, log, n_instr)
        if state.halted:
            break

    # 7. next pc
    if not state.halted:
        if state._next_pc is not None:
            state.pc = state._next_pc
        elif (loop is not None and pc == loop.start + loop.body_len - 1):
            loop.remaining -= 1
            if loop.remaining == 0:
                state.loop = None
                state.pc = pc + 1
            else:
                loop.first_pass = False
                state.pc = loop.start
        else:
            state.pc = pc + 1
        if state._pending_loop is not None:
            state.loop = state._pending_loop
    state.cycle += 1


def run(program: Program, machine: MachineConfig | None = None, *,
        max_cycles: int = 5_000_000, trace: bool = False,
        images: dict[str, list[tuple[int, list[int]]]] | None = None,
        state: CoreState | None = None) -> RunResult:
    """Run a program to halt, fault, or the cycle budget."""
    if machine is None:
        machine = default_machine()
    if state is None:
        state = make_state(machine)
    for d in program.data:
        write_words(state, d.memory, d.addr, list(d.words))
    if images:
        for mem_name, chunks in images.items():
            for addr, words in chunks:
                write_words(state, mem_name, addr, words)

    if len(program.instructions) > machine.imem_entries:
        raise MachineError(
            f"program has {len(program.instructions)} instructions, IMEM "
            f"holds {machine.imem_entries}")
    decoded = _decode(program, machine)
    iw_bits = encode_width(program, machine)
    log = EventLog()
    trace_lines: list[str] | None = [] if trace else None

    while not state.halted and state.cycle < max_cycles:
        step(state, decoded, log, iw_bits, trace_lines)

    reason = state.halt_reason if state.halted else "max_cycles"
    return RunResult(state.cycle, reason, state.fault, log, state,
                     trace_lines)
