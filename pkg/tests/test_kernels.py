"""Kernel generator: layouts, schedule variants, and end-to-end checks."""

import random

import pytest

from ttasim import validate
from ttasim.kernels import (
    GenError, GenOptions, LayerDesc, LayerShape, QuantSpec,
    build_images, desc_from_dict, desc_to_dict, gen_program, layout_tensors,
    random_quant, random_tensors, reference_output, unpack_output,
    verify_layer,
)
from ttasim.machine import run

CONV_B = LayerDesc("conv", "b", LayerShape(h=4, w=4, c=64, m=32, r=3, s=3))
CONV_I8 = LayerDesc("conv", "i8", LayerShape(h=4, w=4, c=8, m=32, r=2, s=2))


# -- layouts -------------------------------------------------------------------

def _regions_disjoint(layout):
    by_mem = {}
    for r in layout.regions.values():
        by_mem.setdefault(r.memory, []).append(r)
    for regs in by_mem.values():
        regs.sort(key=lambda r: r.base)
        for a, b in zip(regs, regs[1:]):
            assert a.end <= b.base, f"{a} overlaps {b}"


@pytest.mark.parametrize("desc", [
    CONV_B, CONV_I8,
    LayerDesc("fc", "t", LayerShape(c=64, m=64)),
    LayerDesc("dwconv", "i8", LayerShape(h=5, w=5, c=64, r=3, s=3)),
    LayerDesc("residual", shape=LayerShape(c=96), emode="e16"),
    LayerDesc("requant", shape=LayerShape(c=64, m=2), emode="e32",
              quant=random_quant("i8", 2)),
])
def test_layout_regions_disjoint_and_aligned(desc):
    layout = layout_tensors(desc)
    _regions_disjoint(layout)
    for r in layout.regions.values():
        assert r.base % 4 == 0 and r.nbytes > 0


def test_layout_vector_regions_vector_aligned():
    layout = layout_tensors(CONV_B)
    # weight and bias loads are full 1024-bit reads
    assert layout.regions["wgt"].base % 128 == 0
    assert layout.regions["bias"].base % 128 == 0
    assert layout.regions["ofm"].base % 128 == 0


def test_layout_capacity_error_names_shortfall():
    big = LayerDesc("conv", "i8", LayerShape(h=64, w=64, c=2048, m=32,
                                             r=3, s=3))
    with pytest.raises(GenError, match=r"DMEM needs \d+ bytes.*short"):
        layout_tensors(big)


@pytest.mark.parametrize("desc,msg", [
    (LayerDesc("conv", "b", LayerShape(h=4, w=4, c=33, m=32)),
     "not a multiple of 32"),
    (LayerDesc("conv", "i8", LayerShape(h=4, w=4, c=6, m=32)),
     "not a multiple of 4"),
    (LayerDesc("conv", "i8", LayerShape(h=4, w=4, c=8, m=48)),
     "output channels 48"),
    (LayerDesc("conv", "i8", LayerShape(h=2, w=2, c=8, m=32, r=3, s=3)),
     "smaller than filter"),
    (LayerDesc("dwconv", "i8", LayerShape(h=4, w=4, c=48)),
     "dwconv channels 48"),
    (LayerDesc("residual", shape=LayerShape(c=96)),
     "emode e16 or e32"),
    (LayerDesc("residual", shape=LayerShape(c=33), emode="e16"),
     "not a multiple of 32"),
    (LayerDesc("requant", shape=LayerShape(c=64, m=2), emode="e32"),
     "needs a QuantSpec"),
    (LayerDesc("requant", shape=LayerShape(c=64, m=2), emode="e16",
               quant=random_quant("i8", 2)),
     "takes e32 input"),
    (LayerDesc("requant", shape=LayerShape(c=64, m=3), emode="e16",
               quant=random_quant("b", 3)),
     "multiple of 32 per group"),
    (LayerDesc("requant", shape=LayerShape(c=64, m=2), emode="e16",
               quant=QuantSpec("b", thr=(5,))),
     "one value per group"),
    (LayerDesc("conv", "i8", LayerShape(h=4, w=4, c=8, m=32),
               quant=QuantSpec("i8", mult=(1, 1), shift=(0, 0),
                               zp=(0, 0))),
     "one value per 32-channel tile"),
    (LayerDesc("pool", "i8", LayerShape()), "unknown layer kind"),
])
def test_layout_rejects_bad_descriptors(desc, msg):
    with pytest.raises(GenError, match=msg):
        layout_tensors(desc)


def test_bad_walk_order_rejected():
    with pytest.raises(GenError, match="permutation"):
        gen_program(CONV_I8, options=GenOptions(walk_order=("r", "r", "s")))


# -- schedule variants ---------------------------------------------------------

def _variant_of(desc, options=None):
    program, layout = gen_program(desc, options=options)
    return layout.meta.get("variant"), program


def test_forced_variant_errors():
    with pytest.raises(GenError, match="unknown variant"):
        gen_program(CONV_I8, options=GenOptions(variant="spiral"))
    big = LayerDesc("conv", "i8", LayerShape(h=6, w=6, c=1024, m=32,
                                             r=3, s=3))
    with pytest.raises(GenError, match="exceeds the loopbuffer"):
        gen_program(big, options=GenOptions(variant="pixel_loop"))
    dw = LayerDesc("dwconv", "i8", LayerShape(h=4, w=4, c=32, r=2, s=2))
    with pytest.raises(GenError, match="walk_loop needs"):
        gen_program(dw, options=GenOptions(variant="walk_loop"))


def test_weights_in_vrf_constraints():
    big = LayerDesc("conv", "i8", LayerShape(h=4, w=4, c=64, m=32,
                                             r=2, s=2))   # N = 64
    with pytest.raises(GenError, match="15 free vector registers"):
        gen_program(big, options=GenOptions(weights_in_vrf=True))
    small = LayerDesc("conv", "i8", LayerShape(h=3, w=3, c=8, m=32,
                                               r=2, s=1))  # N = 4
    with pytest.raises(GenError, match="pixel-sized or unrolled"):
        gen_program(small, options=GenOptions(weights_in_vrf=True,
                                              variant="walk_loop"))


def test_generated_programs_validate_clean(machine):
    descs = [
        CONV_B, CONV_I8,
        LayerDesc("fc", "t", LayerShape(c=64, m=32)),
        LayerDesc("dwconv", "b", LayerShape(h=4, w=4, c=32, r=3, s=3)),
        LayerDesc("residual", shape=LayerShape(c=64), emode="e32"),
        LayerDesc("requant", shape=LayerShape(c=64, m=1), emode="e16",
                  quant=random_quant("t", 1)),
    ]
    for desc in descs:
        for opts in (GenOptions(), GenOptions(use_loopbuffer=False)):
            program, _ = gen_program(desc, machine, opts)
            assert validate(program, machine) == []


# -- end-to-end against the oracle ---------------------------------------------

NATIVE = [
    LayerDesc("conv", m, LayerShape(h=4, w=4, c=c, m=32, r=3, s=3))
    for m, c in (("b", 64), ("t", 32), ("i8", 8))
] + [
    LayerDesc("fc", m, LayerShape(c=c, m=64))
    for m, c in (("b", 96), ("t", 48), ("i8", 12))
] + [
    LayerDesc("dwconv", m, LayerShape(h=5, w=4, c=64, r=2, s=3))
    for m in ("b", "t", "i8")
]


@pytest.mark.parametrize("desc", NATIVE,
                         ids=[f"{d.kind}-{d.mode}" for d in NATIVE])
def test_native_layers_match_oracle(desc):
    res = verify_layer(desc, seed=1)
    assert res.ok, res.mismatches


FUSED = [
    ("conv", "b", "b"), ("conv", "t", "t"), ("conv", "i8", "i8"),
    ("conv", "b", "i8"), ("conv", "i8", "t"),
    ("fc", "t", "b"), ("dwconv", "i8", "i8"), ("dwconv", "b", "t"),
]


@pytest.mark.parametrize("kind,mode,qk", FUSED,
                         ids=[f"{k}-{m}-to-{q}" for k, m, q in FUSED])
def test_fused_requant_matches_oracle(kind, mode, qk):
    c = {"b": 64, "t": 32, "i8": 8}[mode]
    if kind == "dwconv":
        shape = LayerShape(h=4, w=4, c=32, r=2, s=2)
        groups = shape.c // 32
    elif kind == "fc":
        shape = LayerShape(c=c, m=64)
        groups = shape.m // 32
    else:
        shape = LayerShape(h=4, w=4, c=c, m=32, r=2, s=2)
        groups = shape.m // 32
    desc = LayerDesc(kind, mode, shape, quant=random_quant(qk, groups,
                                                           seed=9))
    res = verify_layer(desc, seed=2)
    assert res.ok, res.mismatches


@pytest.mark.parametrize("emode", ["e16", "e32"])
def test_residual_matches_oracle(emode):
    desc = LayerDesc("residual", shape=LayerShape(h=2, w=3, c=32),
                     emode=emode)
    res = verify_layer(desc, seed=5)
    assert res.ok, res.mismatches


@pytest.mark.parametrize("qk", ["i8", "b", "t"])
def test_requant_matches_oracle(qk):
    emode = "e32" if qk == "i8" else "e16"
    desc = LayerDesc("requant", shape=LayerShape(c=128, m=2), emode=emode,
                     quant=random_quant(qk, 2, seed=3))
    res = verify_layer(desc, seed=6)
    assert res.ok, res.mismatches


def test_one_hot_weight_selects_input_pixel():
    # a single +1 weight at (m0, i0, j0, c0) must copy the shifted input
    desc = CONV_I8
    sh = desc.shape
    m0, i0, j0, c0 = 17, 1, 0, 5
    rng = random.Random(12)
    tensors = random_tensors(desc, seed=12)
    wgt = [[[[0] * sh.c for _ in range(sh.s)] for _ in range(sh.r)]
           for _ in range(sh.m)]
    wgt[m0][i0][j0][c0] = 1
    tensors["wgt"] = wgt
    tensors["bias"] = [0] * sh.m
    program, layout = gen_program(desc)
    res = run(program, images=build_images(desc, layout, tensors))
    assert res.halt_reason == "halted"
    out = unpack_output(desc, layout, res.state.mem["DMEM"])
    for y in range(sh.oh):
        for x in range(sh.ow):
            for m in range(sh.m):
                want = (tensors["ifm"][y + i0][x + j0][c0]
                        if m == m0 else 0)
                assert out[y][x][m] == want


def test_walk_order_permutation_invariant():
    import itertools
    desc = CONV_I8                      # tc=2, r=s=2: every axis walks
    tensors = random_tensors(desc, seed=8)
    want = reference_output(desc, tensors)
    for order in itertools.permutations(("r", "s", "tc")):
        program, layout = gen_program(desc, options=GenOptions(
            walk_order=order))
        res = run(program, images=build_images(desc, layout, tensors))
        assert res.halt_reason == "halted", order
        out = unpack_output(desc, layout, res.state.mem["DMEM"])
        assert out == want, order


def test_loopbuffer_choice_does_not_change_memory():
    desc = CONV_B
    tensors = random_tensors(desc, seed=4)
    mems = {}
    for use_lb in (True, False):
        program, layout = gen_program(desc, options=GenOptions(
            use_loopbuffer=use_lb))
        res = run(program, images=build_images(desc, layout, tensors))
        assert res.halt_reason == "halted"
        mems[use_lb] = res.state.mem
    assert mems[True] == mems[False]


def test_weights_in_vrf_cuts_weight_memory_reads():
    desc = LayerDesc("conv", "i8", LayerShape(h=4, w=4, c=8, m=32,
                                              r=2, s=2))  # N = 8
    tensors = random_tensors(desc, seed=7)
    want = reference_output(desc, tensors)
    reads = {}
    for in_vrf in (False, True):
        program, layout = gen_program(desc, options=GenOptions(
            weights_in_vrf=in_vrf))
        res = run(program, images=build_images(desc, layout, tensors))
        assert res.halt_reason == "halted"
        assert unpack_output(desc, layout, res.state.mem["DMEM"]) == want
        reads[in_vrf] = sum(
            n for k, n in res.events.counts.items()
            if k[0] == "sram_bank" and k[1] == "PMEM" and k[3] == "read")
    assert reads[True] < reads[False]


def test_verify_layer_flags_corrupted_output():
    res = verify_layer(CONV_I8, seed=9)
    assert res.ok and res.mismatches == []
    assert res.utilization > 0
    assert res.cycles > 0


# -- descriptors and tensors ----------------------------------------------------

def test_desc_dict_round_trip():
    desc = LayerDesc("conv", "t", LayerShape(h=6, w=5, c=32, m=64,
                                             r=3, s=2),
                     quant=random_quant("i8", 2, seed=1))
    opts = GenOptions(use_loopbuffer=False, walk_order=("tc", "r", "s"),
                      weights_in_vrf=False, variant="unrolled")
    d = desc_to_dict(desc, opts)
    back, bopts = desc_from_dict(d)
    assert back == desc and bopts == opts

    plain = LayerDesc("residual", shape=LayerShape(h=2, w=2, c=32),
                      emode="e16")
    back, bopts = desc_from_dict(desc_to_dict(plain))
    assert back == plain and bopts == GenOptions()


@pytest.mark.parametrize("d,msg", [
    ({"version": 99, "kind": "conv"}, "version"),
    ({"version": 1}, "kind"),
    ({"version": 1, "kind": "conv", "shape": {"radius": 3}},
     "bad shape field"),
    ({"version": 1, "kind": "conv", "shape": {"h": "x"}},
     "invalid literal"),
])
def test_desc_from_dict_rejects(d, msg):
    with pytest.raises(ValueError, match=msg):
        desc_from_dict(d)


def test_random_tensors_deterministic():
    a = random_tensors(CONV_B, seed=5)
    b = random_tensors(CONV_B, seed=5)
    c = random_tensors(CONV_B, seed=6)
    assert a == b and a != c
    assert all(v in (-1, 1) for v in a["wgt"][0][0][0])
    t = random_tensors(LayerDesc("conv", "t", CONV_B.shape), seed=5)
    assert all(v in (-1, 0, 1) for row in t["ifm"] for px in row
               for v in px)


def test_random_quant_deterministic():
    a = random_quant("i8", 4, seed=2)
    assert a == random_quant("i8", 4, seed=2)
    assert a != random_quant("i8", 4, seed=3)
    assert len(a.mult) == len(a.shift) == len(a.zp) == 4
    assert all(m >= 1 for m in a.mult) and all(s >= 0 for s in a.shift)
    b = random_quant("b", 3, seed=2)
    assert len(b.thr) == 3 and all(t >= 0 for t in b.thr)
