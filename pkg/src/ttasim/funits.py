"""Bit-exact datapath semantics for the vector units.

Values travel as plain Python ints holding the raw bit pattern: 32-bit
words in [0, 2**32) and 1024-bit vectors in [0, 2**1024).  Lane m of a
vector is bits [32*m+31 : 32*m], so lane 0 is the least significant word.

One 32-bit lane word packs elements of the active precision mode:

    mode B   32 x 1-bit   bit j         0 -> -1, 1 -> +1
    mode T   16 x 2-bit   bits 2j+1:2j  bit 2j = magnitude, bit 2j+1 =
                          sign (1 = negative); sign set with magnitude
                          clear is non-canonical and reads as 0
    mode I8   4 x 8-bit   bits 8j+7:8j  two's complement

Element j always maps to input channel group offset j.  A lane dot
product is the signed sum over all elements of the two operand words;
the binary case reduces to 2*popcount(xnor) - 32.

The multiply-accumulate unit keeps 32 signed 32-bit accumulators with
wraparound.  Readout either returns the raw accumulators (rd32) or
saturates each to int16 and packs two per word (rd16, lane 0 in the low
half).  Requantization rounds half away from zero and saturates to the
target domain; the binary threshold maps ties (x == threshold) to +1,
the ternary threshold is symmetric around zero.
"""

from __future__ import annotations

MASK32 = (1 << 32) - 1
MASK16 = (1 << 16) - 1
MASK8 = (1 << 8) - 1
LANES = 32
VEC_MASK = (1 << 1024) - 1

# Elements packed into one 32-bit lane word per mode.
ELEMS = {"b": 32, "t": 16, "i8": 4}

_T_MAG = 0x55555555    # even bits: trit magnitudes
_T_SIGN = 0xAAAAAAAA   # odd bits: trit signs


def u32(x: int) -> int:
    return x & MASK32


def s32(x: int) -> int:
    x &= MASK32
    return x - (1 << 32) if x & (1 << 31) else x


def s16(x: int) -> int:
    x &= MASK16
    return x - (1 << 16) if x & (1 << 15) else x


def s8(x: int) -> int:
    x &= MASK8
    return x - (1 << 8) if x & (1 << 7) else x


def sat16(x: int) -> int:
    return -32768 if x < -32768 else 32767 if x > 32767 else x


def sat8(x: int) -> int:
    return -128 if x < -128 else 127 if x > 127 else x


def lane(vec: int, m: int) -> int:
    return (vec >> (32 * m)) & MASK32


def lanes(vec: int) -> list[int]:
    return [(vec >> (32 * m)) & MASK32 for m in range(LANES)]


def from_lanes(words: list[int]) -> int:
    vec = 0
    for m, w in enumerate(words):
        vec |= (w & MASK32) << (32 * m)
    return vec


# -- element packing -------------------------------------------------------

def pack_b(vals) -> int:
    """32 values from {-1,+1} -> one word, element j at bit j."""
    assert len(vals) == 32
    word = 0
    for j, v in enumerate(vals):
        if v == 1:
            word |= 1 << j
        elif v != -1:
            raise ValueError(f"binary element must be -1 or +1, got {v}")
    return word


def unpack_b(word: int) -> list[int]:
    return [1 if (word >> j) & 1 else -1 for j in range(32)]


def pack_t(vals) -> int:
    """16 values from {-1,0,+1} -> one word, trit j at bits 2j+1:2j."""
    assert len(vals) == 16
    word = 0
    for j, v in enumerate(vals):
        if v == 1:
            word |= 1 << (2 * j)
        elif v == -1:
            word |= 3 << (2 * j)
        elif v != 0:
            raise ValueError(f"ternary element must be -1, 0 or +1, got {v}")
    return word


def unpack_t(word: int) -> list[int]:
    out = []
    for j in range(16):
        mag = (word >> (2 * j)) & 1
        sign = (word >> (2 * j + 1)) & 1
        out.append(0 if not mag else (-1 if sign else 1))
    return out


def canon_t(word: int) -> int:
    """Clear sign bits whose magnitude bit is 0 (non-canonical zeros)."""
    mag = word & _T_MAG
    return word & (mag | (mag << 1))


def pack_i8(vals) -> int:
    """4 values from [-128,127] -> one word, element j at byte j."""
    assert len(vals) == 4
    word = 0
    for j, v in enumerate(vals):
        if not -128 <= v <= 127:
            raise ValueError(f"int8 element out of range: {v}")
        word |= (v & MASK8) << (8 * j)
    return word


def unpack_i8(word: int) -> list[int]:
    return [s8(word >> (8 * j)) for j in range(4)]


# -- lane dot products -----------------------------------------------------

def dot_lane(mode: str, a: int, w: int) -> int:
    """Signed dot product of the elements packed in two lane words."""
    if mode == "b":
        x = ~(a ^ w) & MASK32
        return 2 * x.bit_count() - 32
    if mode == "t":
        a = canon_t(a)
        w = canon_t(w)
        both = a & w & _T_MAG                  # positions where both nonzero
        diff = ((a ^ w) >> 1) & both           # of those, differing signs
        return (both & ~diff).bit_count() - diff.bit_count()
    if mode == "i8":
        return sum(s8(a >> (8 * j)) * s8(w >> (8 * j)) for j in range(4))
    raise ValueError(f"unknown mode {mode!r}")


# -- multiply-accumulate unit state ----------------------------------------

def mac_init(bias_vec: int) -> list[int]:
    """Load 32 accumulators from a vector of signed 32-bit words."""
    return [s32(lane(bias_vec, m)) for m in range(LANES)]


def mac_step(mode: str, act: int, wgt: int, acc: list[int]) -> list[int]:
    """One MAC: per lane, accumulate the element dot product (wraparound)."""
    return [s32(acc[m] + dot_lane(mode, lane(act, m), lane(wgt, m)))
            for m in range(LANES)]


def mac_read32(acc: list[int]) -> int:
    return from_lanes([u32(a) for a in acc])


def mac_read16(acc: list[int]) -> int:
    """Saturate accumulators to int16, pack two per word (512-bit result)."""
    vec = 0
    for m in range(LANES):
        half = sat16(acc[m]) & MASK16
        vec |= half << (16 * m)
    return vec


# -- elementwise vector ops -------------------------------------------------

def vadd(emode: str, a: int, b: int) -> int:
    """Elementwise add: e16 saturates 32 halfwords, e32 wraps 32 words."""
    if emode == "e16":
        out = 0
        for j in range(32):
            r = sat16(s16(a >> (16 * j)) + s16(b >> (16 * j)))
            out |= (r & MASK16) << (16 * j)
        return out
    if emode == "e32":
        return from_lanes([u32(s32(lane(a, m)) + s32(lane(b, m)))
                           for m in range(LANES)])
    raise ValueError(f"unknown element mode {emode!r}")


def vmax(emode: str, a: int, b: int) -> int:
    if emode == "e16":
        out = 0
        for j in range(32):
            r = max(s16(a >> (16 * j)), s16(b >> (16 * j)))
            out |= (r & MASK16) << (16 * j)
        return out
    if emode == "e32":
        return from_lanes([u32(max(s32(lane(a, m)), s32(lane(b, m))))
                           for m in range(LANES)])
    raise ValueError(f"unknown element mode {emode!r}")


def relu(emode: str, v: int) -> int:
    return vmax(emode, v, 0)


def round_shift(prod: int, shift: int) -> int:
    """(prod / 2**shift) rounded half away from zero, exact integers."""
    if shift == 0:
        return prod
    half = 1 << (shift - 1)
    q = (abs(prod) + half) >> shift
    return -q if prod < 0 else q


def requant_i8(acc_vec: int, mult: int, shift: int, zp: int) -> int:
    """32 signed words -> 32 int8, packed 4 per word (256-bit result)."""
    if shift < 0:
        raise ValueError("requant shift must be >= 0")
    out = 0
    for m in range(LANES):
        v = sat8(round_shift(s32(lane(acc_vec, m)) * mult, shift) + zp)
        out |= (v & MASK8) << (8 * m)
    return out


def requant_bin(acc16_vec: int, thr: int) -> int:
    """32 int16 values -> one binary word; x >= thr maps to +1."""
    word = 0
    for j in range(32):
        if s16(acc16_vec >> (16 * j)) >= thr:
            word |= 1 << j
    return word


def requant_tern(acc16_vec: int, thr: int) -> int:
    """32 int16 values -> 32 trits in two words (64-bit result).

    x > thr -> +1, x < -thr -> -1, else 0; thr must be >= 0.
    """
    if thr < 0:
        raise ValueError("ternary requant threshold must be >= 0")
    out = 0
    for j in range(32):
        x = s16(acc16_vec >> (16 * j))
        t = 1 if x > thr else (3 if x < -thr else 0)
        out |= t << (2 * j)
    return out


# -- lane shuffles -----------------------------------------------------------

def bcast32(x: int) -> int:
    """Replicate one word across all 32 lanes."""
    x = u32(x)
    vec = 0
    for m in range(LANES):
        vec |= x << (32 * m)
    return vec


def lane_insert(vec: int, idx: int, x: int) -> int:
    if not 0 <= idx < LANES:
        raise ValueError(f"lane index out of range: {idx}")
    shift = 32 * idx
    return (vec & ~(MASK32 << shift) & VEC_MASK) | (u32(x) << shift)


def lane_extract(vec: int, idx: int) -> int:
    if not 0 <= idx < LANES:
        raise ValueError(f"lane index out of range: {idx}")
    return lane(vec, idx)


# -- scalar ALU ---------------------------------------------------------------

def salu_op(op: str, a: int, b: int) -> int:
    """Scalar ALU: a is the latched operand, b the trigger value."""
    sa, sb = s32(a), s32(b)
    if op == "add":
        return u32(sa + sb)
    if op == "sub":
        return u32(sa - sb)
    if op == "and":
        return u32(a & b)
    if op == "or":
        return u32(a | b)
    if op == "xor":
        return u32(a ^ b)
    if op == "shl":
        return u32(a << (b & 31))
    if op == "shr_u":
        return u32(a) >> (b & 31)
    if op == "shr_s":
        return u32(sa >> (b & 31))
    if op == "eq":
        return 1 if u32(a) == u32(b) else 0
    if op == "lt_s":
        return 1 if sa < sb else 0
    if op == "lt_u":
        return 1 if u32(a) < u32(b) else 0
    if op == "mul":
        return u32(sa * sb)
    raise ValueError(f"unknown scalar op {op!r}")
