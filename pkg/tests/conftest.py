"""Shared fixtures: the default machine and a random-program generator."""

import random

import pytest

from ttasim.config import MachineConfig, default_machine
from ttasim.isa import (DataDirective, Guard, Imm, Instruction, Move,
                        PortRead, PortWrite, Program, RegRead, RegWrite,
                        Trigger, parse_asm, validate)
from ttasim.machine import run


@pytest.fixture(scope="session")
def machine() -> MachineConfig:
    return default_machine()


@pytest.fixture(scope="session")
def asm_run(machine):
    """Assemble text against the default machine and run it."""
    def _run(text, **kw):
        return run(parse_asm(text, machine), machine, **kw)
    return _run


class _Pools:
    """Legal sources and destinations per bus width class."""

    def __init__(self, machine: MachineConfig):
        self.machine = machine
        self.srcs = {"scalar": [], "vector": []}
        self.port_dsts = {"scalar": [], "vector": []}
        self.trig_dsts = {"scalar": [], "vector": []}
        self.reg_dsts = {"scalar": [], "vector": []}
        for rf in machine.rfs:
            cls = "scalar" if rf.width <= 32 else "vector"
            for i in range(rf.entries):
                self.srcs[cls].append(RegRead(rf.name, i))
                self.reg_dsts[cls].append(RegWrite(rf.name, i))
        for fu in machine.fus:
            for port, (direction, width) in fu.ports.items():
                cls = "scalar" if width <= 32 else "vector"
                if direction == "out":
                    self.srcs[cls].append(PortRead(fu.name, port))
                elif direction == "in":
                    # cu.a interacts with loop triggers statically; the
                    # kernel tests cover it, keep random programs simple
                    if fu.name != "cu":
                        self.port_dsts[cls].append(PortWrite(fu.name, port))
                else:
                    for op, trig in fu.opcodes.items():
                        if trig == port:
                            self.trig_dsts[cls].append(
                                Trigger(fu.name, port, op))


@pytest.fixture(scope="session")
def random_program(machine):
    """Callable: rng -> a random program that validates cleanly."""
    pools = _Pools(machine)

    def _imm_for(rng: random.Random, dst, n_instr: int) -> Imm:
        if isinstance(dst, Trigger) and dst.fu == "cu":
            if dst.opcode in ("jump", "cjump"):
                return Imm(rng.randrange(n_instr))
            if dst.opcode == "loop":
                return Imm(rng.randint(1, 4))
        return Imm(rng.randrange(-(1 << 31), 1 << 31))

    def _gen(rng: random.Random) -> Program:
        n_instr = rng.randint(1, 6)
        instrs = []
        for _ in range(n_instr):
            slots: list = [None] * machine.num_buses
            used_dst: set = set()
            used_trig: set = set()
            for bus in range(machine.num_buses):
                if rng.random() < 0.4:
                    continue
                cls = "scalar" if machine.bus_is_scalar(bus) else "vector"
                dst = None
                for _try in range(8):
                    pool = rng.choice((pools.reg_dsts[cls],
                                       pools.port_dsts[cls],
                                       pools.trig_dsts[cls]))
                    if not pool:
                        continue
                    cand = rng.choice(pool)
                    if str(cand) in used_dst:
                        continue
                    if isinstance(cand, Trigger) and cand.fu in used_trig:
                        continue
                    dst = cand
                    break
                if dst is None:
                    continue
                used_dst.add(str(dst))
                if isinstance(dst, Trigger):
                    used_trig.add(dst.fu)
                if cls == "scalar" and rng.random() < 0.4:
                    src = _imm_for(rng, dst, n_instr)
                else:
                    src = rng.choice(pools.srcs[cls])
                guard = (Guard(rng.randrange(4), rng.random() < 0.5)
                         if rng.random() < 0.15 else None)
                slots[bus] = Move(src, dst, guard)
            instrs.append(Instruction(tuple(slots)))
        labels = {}
        for i in range(rng.randint(0, 2)):
            labels[f"L{i}"] = rng.randint(0, n_instr)
        data = []
        if rng.random() < 0.3:
            mem = rng.choice(("DMEM", "PMEM"))
            addr = 4 * rng.randrange(0, 1024)
            words = tuple(rng.getrandbits(32)
                          for _ in range(rng.randint(1, 8)))
            data.append(DataDirective(mem, addr, words))
        program = Program(instrs, labels, data)
        assert validate(program, machine) == []
        return program

    return _gen
