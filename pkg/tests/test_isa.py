"""Assembler, disassembler, validation, and encoding width."""

import random

import pytest

from ttasim.config import default_machine
from ttasim.isa import (AsmError, DataDirective, Diagnostic, Guard, Imm,
                        Instruction, Move, PortRead, PortWrite, Program,
                        RegRead, RegWrite, Trigger, emit_asm, encode_width,
                        parse_asm, validate)

SOURCE = """\
// constants then a guarded store loop
.data DMEM 0x40 0x11223344 0xdeadbeef

start:
#5 -> salu0.a ; #2 -> salu0.t.add ;
salu0.r -> rf.0 ; #1 -> brf.1 ;
?b1 rf.0 -> lsu_d.x ; ?b1 #64 -> lsu_d.t.st32 ;
!b1 start -> cu.t.jump ;
#0 -> cu.t.halt ;
"""


def test_parse_basics(machine):
    p = parse_asm(SOURCE, machine)
    assert len(p.instructions) == 5
    assert p.labels == {"start": 0}
    assert p.data == [DataDirective("DMEM", 0x40, (0x11223344, 0xDEADBEEF))]
    first = p.instructions[0].moves
    assert first[0] == Move(Imm(5), PortWrite("salu0", "a"))
    assert first[1] == Move(Imm(2), Trigger("salu0", "t", "add"))
    guarded = p.instructions[2].moves[0]
    assert guarded.guard == Guard(1, negate=False)
    # label reference folded to an instruction index immediate
    jump = p.instructions[3].moves[0]
    assert jump.src == Imm(0) and jump.dst == Trigger("cu", "t", "jump")
    assert jump.guard == Guard(1, negate=True)


def test_canonical_round_trip(machine):
    p = parse_asm(SOURCE, machine)
    text = emit_asm(p)
    assert parse_asm(text, machine) == p
    # canonical text is a fixed point
    assert emit_asm(parse_asm(text, machine)) == text


def test_empty_instruction_is_nop(machine):
    p = parse_asm("nop ;\n#0 -> cu.t.halt ;", machine)
    assert p.instructions[0].moves == []
    assert emit_asm(p).splitlines()[1] == "nop ;"


def test_comments_and_blank_lines(machine):
    text = "\n// comment only\n\n#0 -> cu.t.halt ; // trailing\n"
    p = parse_asm(text, machine)
    assert len(p.instructions) == 1


def test_program_dict_round_trip(machine):
    p = parse_asm(SOURCE, machine)
    assert Program.from_dict(p.to_dict()) == p


# -- diagnostics ----------------------------------------------------------------

@pytest.mark.parametrize("line,fragment", [
    ("#1 -> nowhere.a ;", "unknown FU 'nowhere'"),
    ("#1 -> salu0.q ;", "unknown port 'salu0.q'"),
    ("salu0.r -> salu1.r ;", "not an input"),
    ("#1 -> salu0.t ;", "trigger port"),
    ("#1 -> salu0.t.frobnicate ;", "unknown opcode 'frobnicate'"),
    ("#1 -> rf.16 ;", "out of range"),
    ("?b9 #1 -> rf.0 ;", "guard index 9 out of range"),
    ("vmac.r -> rf.0 ;", "width mismatch"  ),
    ("#1 -> rf.0 ; #2 -> rf.0 ;", "both write rf.0"),
    ("#1 -> salu0.t.add ; #2 -> salu0.t.sub ;", "both launch"),
    ("#99 -> cu.t.jump ;", "jump target 99 out of range"),
    ("undefined_label -> salu0.a ;", "unresolved label"),
])
def test_diagnostic_messages(machine, line, fragment):
    with pytest.raises(AsmError) as exc:
        parse_asm(line + "\n#0 -> cu.t.halt ;", machine)
    text = str(exc.value)
    assert fragment in text
    assert "<asm>:1:" in text      # location points at the offending line


def test_immediate_needs_scalar_bus():
    # a machine with no scalar buses rejects any immediate
    machine = default_machine()
    machine.bus_widths = [1024] * 12
    prog = Program([Instruction((Move(Imm(1), PortWrite("vmac", "a")),)
                                + (None,) * 11)])
    diags = validate(prog, machine)
    assert any("immediate on vector bus" in d.message for d in diags)


def test_validate_data_bounds(machine):
    prog = parse_asm("#0 -> cu.t.halt ;", machine)
    prog.data.append(DataDirective("DMEM", 2, (1,)))
    assert any("not word aligned" in d.message
               for d in validate(prog, machine))
    prog.data[:] = [DataDirective("DMEM", 512 * 1024, (1,))]
    assert any("exceeds" in d.message for d in validate(prog, machine))
    prog.data[:] = [DataDirective("XMEM", 0, (1,))]
    assert any("unknown memory" in d.message for d in validate(prog, machine))


def test_loop_static_checks(machine):
    with pytest.raises(AsmError) as exc:
        parse_asm("#100 -> cu.a ; #2 -> cu.t.loop ;\nnop ;\n"
                  "#0 -> cu.t.halt ;", machine)
    assert "exceeds loopbuffer" in str(exc.value)
    with pytest.raises(AsmError) as exc:
        parse_asm("#8 -> cu.a ; #2 -> cu.t.loop ;\nnop ;\n"
                  "#0 -> cu.t.halt ;", machine)
    assert "past end" in str(exc.value)


def test_slot_count_must_match_machine(machine):
    text = " ; ".join(["nop"] * 13) + " ;"
    with pytest.raises(AsmError) as exc:
        parse_asm(text, machine)
    assert "slots" in str(exc.value) or "buses" in str(exc.value)


def test_hex_immediates_fold_to_signed(machine):
    p = parse_asm("#0xffffffff -> rf.0 ;\n#0 -> cu.t.halt ;", machine)
    assert p.instructions[0].moves[0].src == Imm(-1)


# -- randomized round trip -------------------------------------------------------

def test_random_round_trip_smoke(machine, random_program):
    rng = random.Random(0xA5)
    for _ in range(500):
        p = random_program(rng)
        assert parse_asm(emit_asm(p), machine) == p


# -- encoding width ---------------------------------------------------------------

def test_encode_width_default_machine_golden(machine):
    p = parse_asm("#0 -> cu.t.halt ;", machine)
    # property of the machine alone; frozen as a regression value
    width = encode_width(p, machine)
    assert width == encode_width(parse_asm(SOURCE, machine), machine)
    assert width == 384


def test_encode_width_grows_with_connectivity(machine):
    restricted = default_machine()
    restricted.connectivity = {b: ["rf", "cu"] for b in range(12)}
    p = parse_asm("#0 -> cu.t.halt ;", machine)
    assert encode_width(p, restricted) < encode_width(p, machine)
