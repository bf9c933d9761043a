"""End-to-end acceptance checks.

One test per shipped claim, each printing a single PASS/FAIL line
(visible under pytest -s; pytest -v shows the same verdict per test):

    1. peak throughput per precision mode
    2. oracle equivalence over randomized layer sweeps
    3. energy per operation: binary absolute, ternary and 8-bit ratios
    4. loopbuffer efficacy: same results, strictly less fetch energy
    5. sustained utilization of the full-scale binary conv
    6. lane arithmetic identities, requantization, packing
    7. assembler round trip and generated-program validity
"""

import itertools
import random

import pytest

from ttasim.config import default_machine
from ttasim.energy import (COMPONENTS, account, default_cost_table,
                           ops_of_layer, peak_gops)
from ttasim.funits import (ELEMS, dot_lane, from_lanes, pack_b, pack_t,
                           pack_i8, requant_bin, requant_i8, requant_tern,
                           s8, u32, unpack_b, unpack_i8, unpack_t, canon_t)
from ttasim.isa import emit_asm, parse_asm, validate
from ttasim.kernels import (GenOptions, LayerDesc, LayerShape, build_images,
                            gen_program, random_quant, random_tensors,
                            verify_layer)
from ttasim.machine import run


def _report(num: int, name: str, ok: bool, detail: str) -> None:
    line = f"[criterion {num}] {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


# the full-scale 3x3 conv (16x16 pixels, 128 input and output channels)
# used for the energy and utilization checks
FULL_SHAPE = LayerShape(h=16, w=16, c=128, m=128, r=3, s=3)


@pytest.fixture(scope="module")
def full_runs(machine):
    """Run the full-scale conv once per mode; (result, energy report)."""
    table = default_cost_table()
    out = {}
    for mode in ("b", "t", "i8"):
        desc = LayerDesc("conv", mode, FULL_SHAPE)
        program, layout = gen_program(desc, machine)
        tensors = random_tensors(desc, seed=1000 + ELEMS[mode])
        res = run(program, machine,
                  images=build_images(desc, layout, tensors))
        assert res.halt_reason == "halted", (mode, res.fault)
        report = account(res.events, table, ops_of_layer(desc),
                         clock_mhz=machine.clock_mhz)
        out[mode] = (res, report)
    return out


# -- 1: peak throughput ----------------------------------------------------------

def test_01_peak_throughput(machine):
    want = {"b": 614.4, "t": 307.2, "i8": 76.8}
    got = {m: round(peak_gops(m, machine), 1) for m in want}
    _report(1, "peak throughput", got == want,
            ", ".join(f"{m}={got[m]:g} GOPS" for m in want))


# -- 2: oracle equivalence sweep ---------------------------------------------------

def _rand_opts(rng) -> GenOptions:
    order = ("r", "s", "tc")
    if rng.random() < 0.3:
        order = rng.choice(list(itertools.permutations(order)))
    return GenOptions(use_loopbuffer=rng.random() < 0.9, walk_order=order)


def _rand_conv_family(rng, kind: str, mode: str) -> LayerDesc:
    if kind == "fc":
        h = w = r = s = 1
    else:
        r, s = rng.randint(1, 3), rng.randint(1, 3)
        h, w = r + rng.randint(0, 3), s + rng.randint(0, 3)
    if kind == "dwconv":
        c = 32 * rng.randint(1, 2)
        m, groups = 1, c // 32
    else:
        elems = ELEMS[mode]
        c = elems * rng.randint(1, 64 // elems)
        m = 32 * rng.randint(1, 2)
        groups = m // 32
    quant = None
    if rng.random() < 0.5:
        quant = random_quant(rng.choice(("i8", "b", "t")), groups,
                             seed=rng.getrandbits(20))
    return LayerDesc(kind, mode, LayerShape(h, w, c, m, r, s), quant)


def _rand_elementwise(rng, kind: str) -> LayerDesc:
    if kind == "residual":
        return LayerDesc("residual",
                         shape=LayerShape(h=rng.randint(1, 3),
                                          w=rng.randint(1, 3),
                                          c=32 * rng.randint(1, 2)),
                         emode=rng.choice(("e16", "e32")))
    qk = rng.choice(("i8", "b", "t"))
    m = rng.choice((1, 2, 4))
    c = m * 32 * rng.randint(1, 3)
    return LayerDesc("requant", shape=LayerShape(c=c, m=m),
                     emode="e32" if qk == "i8" else "e16",
                     quant=random_quant(qk, m, seed=rng.getrandbits(20)))


def test_02_oracle_equivalence_sweep(machine):
    rng = random.Random(20230815)
    cases = []
    for kind in ("conv", "fc", "dwconv"):
        for mode in ("b", "t", "i8"):
            cases += [(_rand_conv_family(rng, kind, mode), _rand_opts(rng))
                      for _ in range(100)]
    for kind in ("residual", "requant"):
        cases += [(_rand_elementwise(rng, kind), GenOptions())
                  for _ in range(100)]
    failures = []
    for desc, opts in cases:
        res = verify_layer(desc, machine, seed=rng.getrandbits(30),
                           options=opts)
        if not res.ok:
            failures.append(f"{desc.kind}/{desc.mode} {desc.shape}: "
                            f"{res.mismatches[:2]}")
    _report(2, "oracle equivalence", not failures,
            f"{len(cases)} random layers bit-exact, "
            f"{len(failures)} failed" +
            (f"; first: {failures[0]}" if failures else ""))


# -- 3: energy per operation --------------------------------------------------------

def test_03_energy_ratios(full_runs):
    fj = {m: full_runs[m][1].fj_per_op for m in ("b", "t", "i8")}
    tb = fj["t"] / fj["b"]
    it = fj["i8"] / fj["t"]
    ok = (1.8 <= tb <= 2.2) and abs(fj["b"] - 35.0) <= 3.5 and it > 4.0
    _report(3, "energy per op", ok,
            f"b={fj['b']:.1f} fJ/op (target 35±10%), t/b={tb:.2f} "
            f"(target 1.8..2.2), i8/t={it:.2f} (target >4)")


# -- 4: loopbuffer efficacy -----------------------------------------------------------

def test_04_loopbuffer_efficacy():
    desc = LayerDesc("conv", "b", LayerShape(h=8, w=8, c=64, m=32, r=3, s=3))
    m_on = default_machine()
    m_off = default_machine()
    m_off.loopbuffer_enabled = False
    program, layout = gen_program(desc, m_on)
    tensors = random_tensors(desc, seed=44)
    images = build_images(desc, layout, tensors)
    r_on = run(program, m_on, images=images)
    r_off = run(program, m_off, images=images)
    table = default_cost_table()
    ops = ops_of_layer(desc)
    c_on = account(r_on.events, table, ops).components_fj
    c_off = account(r_off.events, table, ops).components_fj
    same_mem = (r_on.halt_reason == r_off.halt_reason == "halted"
                and r_on.state.mem == r_off.state.mem)
    imem_lower = c_on["IMEM"] < c_off["IMEM"]
    others_equal = all(c_on[k] == c_off[k] for k in COMPONENTS
                       if k != "IMEM")
    _report(4, "loopbuffer efficacy", same_mem and imem_lower and others_equal,
            f"memory identical={same_mem}, IMEM {c_on['IMEM']:.0f} < "
            f"{c_off['IMEM']:.0f} fJ={imem_lower}, "
            f"other components equal={others_equal}")


# -- 5: utilization --------------------------------------------------------------------

def test_05_utilization(full_runs):
    res, report = full_runs["b"]
    ok = res.utilization >= 0.5 and report.achieved_gops >= 307.0
    _report(5, "binary conv utilization", ok,
            f"utilization={res.utilization:.4f} (target >=0.5), "
            f"achieved={report.achieved_gops:.1f} GOPS (target >=307)")


# -- 6: arithmetic identities ------------------------------------------------------------

def _q8_scalar(x: int, mult: int, shift: int, zp: int) -> int:
    return s8(requant_i8(from_lanes([u32(x)] * 32), mult, shift, zp) & 0xFF)


def test_06_arithmetic_identities():
    rng = random.Random(66)
    checks, fails = 0, 0

    def chk(cond):
        nonlocal checks, fails
        checks += 1
        fails += not cond

    # sign-product vs XNOR-popcount, every position exhaustively
    for pos in range(32):
        for a in (-1, 1):
            for b in (-1, 1):
                va, vb = [1] * 32, [1] * 32
                va[pos], vb[pos] = a, b
                chk(dot_lane("b", pack_b(va), pack_b(vb)) == 31 + a * b)
    # ternary gated product, every position and operand pair
    for pos in range(16):
        for a in (-1, 0, 1):
            for b in (-1, 0, 1):
                va, vb = [0] * 16, [0] * 16
                va[pos], vb[pos] = a, b
                chk(dot_lane("t", pack_t(va), pack_t(vb)) == a * b)
    # random bulk, raw words (ternary also exercises canonicalization)
    for _ in range(100_000):
        wa, wb = rng.getrandbits(32), rng.getrandbits(32)
        chk(dot_lane("b", wa, wb) == sum(
            x * y for x, y in zip(unpack_b(wa), unpack_b(wb))))
    for _ in range(100_000):
        wa, wb = rng.getrandbits(32), rng.getrandbits(32)
        chk(dot_lane("t", wa, wb) == sum(
            x * y for x, y in zip(unpack_t(wa), unpack_t(wb))))

    # requantization: saturation at the rails, monotone in the input
    chk(_q8_scalar(2**31 - 1, 4095, 0, 0) == 127)
    chk(_q8_scalar(-(2**31), 4095, 0, 0) == -128)
    xs = sorted(rng.randrange(-2**31, 2**31) for _ in range(2000))
    qs = [_q8_scalar(x, 1234, 7, 3) for x in xs]
    chk(all(a <= b for a, b in zip(qs, qs[1:])))
    chk(qs[0] == -128 and qs[-1] == 127)
    for _ in range(2000):
        x = rng.randrange(-2**15, 2**15)
        thr = rng.randrange(0, 2**15)
        hvec = sum((x & 0xFFFF) << (16 * j) for j in range(32))
        bit = requant_bin(hvec, thr) & 1
        chk((bit == 1) == (x >= thr))
        tw = requant_tern(hvec, thr)
        trit = unpack_t(tw & 0xFFFFFFFF)[0]
        chk(trit == (1 if x > thr else -1 if x < -thr else 0))

    # packing round trips
    for _ in range(2000):
        bv = [rng.choice((-1, 1)) for _ in range(32)]
        chk(unpack_b(pack_b(bv)) == bv)
        tv = [rng.choice((-1, 0, 1)) for _ in range(16)]
        chk(unpack_t(pack_t(tv)) == tv)
        iv = [rng.randrange(-128, 128) for _ in range(4)]
        chk(unpack_i8(pack_i8(iv)) == iv)
        w = rng.getrandbits(32)
        chk(pack_b(unpack_b(w)) == w)
        chk(pack_t(unpack_t(w)) == canon_t(w))

    _report(6, "arithmetic identities", fails == 0,
            f"{checks} checks, {fails} failures")


# -- 7: assembler round trip ----------------------------------------------------------------

def test_07_assembler_round_trip(machine, random_program):
    rng = random.Random(77)
    n = 10_000
    diffs = sum(parse_asm(emit_asm(p), machine) != p
                for p in (random_program(rng) for _ in range(n)))

    kernel_cases = []
    for kind in ("conv", "fc", "dwconv"):
        for mode in ("b", "t", "i8"):
            c = {"b": 64, "t": 32, "i8": 8}[mode] if kind != "dwconv" else 32
            shape = (LayerShape(c=c, m=64) if kind == "fc"
                     else LayerShape(h=5, w=5, c=c, m=32, r=3, s=3))
            kernel_cases.append(LayerDesc(kind, mode, shape))
            kernel_cases.append(LayerDesc(
                kind, mode, shape,
                quant=random_quant(mode, (c if kind == "dwconv" else
                                          shape.m) // 32, seed=7)))
    kernel_cases += [
        LayerDesc("residual", shape=LayerShape(c=64), emode="e16"),
        LayerDesc("residual", shape=LayerShape(c=64), emode="e32"),
        LayerDesc("requant", shape=LayerShape(c=64, m=2), emode="e32",
                  quant=random_quant("i8", 2)),
    ]
    diags = 0
    for desc in kernel_cases:
        for opts in (GenOptions(), GenOptions(use_loopbuffer=False)):
            program, _ = gen_program(desc, machine, opts)
            diags += len(validate(program, machine))
            if parse_asm(emit_asm(program), machine) != program:
                diffs += 1
    _report(7, "assembler round trip",
            diffs == 0 and diags == 0,
            f"{n} random programs + {2 * len(kernel_cases)} generated "
            f"programs round-trip, {diffs} diffs, {diags} diagnostics")
