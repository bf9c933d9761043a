"""Scalar reference model for layer math, independent of the simulator.

Everything here is plain Python over logical tensors (nested lists of
small ints): activations and weights in their element domain (+1/-1 for
binary, -1/0/+1 for ternary, [-128, 127] for 8-bit), accumulators as
32-bit two's complement.  Results are compared bit for bit against what
a program left in simulated memory, so this module deliberately shares
no code with the functional units or the kernel generator; the few
helpers they have in common are reimplemented from scratch.

Tensor shapes:

    ifm[h][w][c]           activations, valid padding, stride 1
    wgt[m][r][s][c]        per output channel m
    dw_wgt[r][s][c]        depthwise, one filter column per channel
    conv output [oh][ow][m]

Memory unpackers take a flat list of 32-bit words and decode the packed
output formats (see `unpack_ofm`).
"""

from __future__ import annotations

__all__ = [
    "conv_ref", "conv_ref_alt", "dwconv_ref", "fc_ref", "residual_ref",
    "requant_i8_ref", "requant_bin_ref", "requant_tern_ref", "finalize",
    "unpack_values", "unpack_ofm", "compare",
]


def _wrap32(x: int) -> int:
    x &= 0xFFFFFFFF
    return x - 0x100000000 if x >= 0x80000000 else x


def _sat16(x: int) -> int:
    return -32768 if x < -32768 else 32767 if x > 32767 else x


def _sat8(x: int) -> int:
    return -128 if x < -128 else 127 if x > 127 else x


# -- layer math ---------------------------------------------------------------

def conv_ref(ifm, wgt, bias):
    """Valid, stride-1 convolution; 32-bit wraparound accumulators."""
    h, w, c = len(ifm), len(ifm[0]), len(ifm[0][0])
    m_ch, r, s = len(wgt), len(wgt[0]), len(wgt[0][0])
    oh, ow = h - r + 1, w - s + 1
    out = []
    for y in range(oh):
        row = []
        for x in range(ow):
            px = []
            for m in range(m_ch):
                acc = bias[m]
                for i in range(r):
                    for j in range(s):
                        a_vec = ifm[y + i][x + j]
                        w_vec = wgt[m][i][j]
                        for k in range(c):
                            acc += a_vec[k] * w_vec[k]
                px.append(_wrap32(acc))
            row.append(px)
        out.append(row)
    return out


def conv_ref_alt(ifm, wgt, bias):
    """Same convolution, channel-outer accumulation order."""
    h, w, c = len(ifm), len(ifm[0]), len(ifm[0][0])
    m_ch, r, s = len(wgt), len(wgt[0]), len(wgt[0][0])
    oh, ow = h - r + 1, w - s + 1
    acc = [[[bias[m] for m in range(m_ch)] for _ in range(ow)]
           for _ in range(oh)]
    for k in range(c):
        for i in range(r):
            for j in range(s):
                for m in range(m_ch):
                    wv = wgt[m][i][j][k]
                    if wv == 0:
                        continue
                    for y in range(oh):
                        for x in range(ow):
                            acc[y][x][m] += ifm[y + i][x + j][k] * wv
    return [[[_wrap32(v) for v in px] for px in row] for row in acc]


def dwconv_ref(ifm, wgt, bias):
    """Depthwise: channel c of the output sees only channel c inputs."""
    h, w, c = len(ifm), len(ifm[0]), len(ifm[0][0])
    r, s = len(wgt), len(wgt[0])
    oh, ow = h - r + 1, w - s + 1
    out = []
    for y in range(oh):
        row = []
        for x in range(ow):
            px = []
            for k in range(c):
                acc = bias[k]
                for i in range(r):
                    for j in range(s):
                        acc += ifm[y + i][x + j][k] * wgt[i][j][k]
                px.append(_wrap32(acc))
            row.append(px)
        out.append(row)
    return out


def fc_ref(x, wgt, bias):
    """Fully connected: out[m] = bias[m] + sum_c x[c] * wgt[m][c]."""
    return [_wrap32(bias[m] + sum(xc * wc for xc, wc in zip(x, wgt[m])))
            for m in range(len(wgt))]


def residual_ref(a, b, emode):
    """Elementwise add: "e16" saturates, "e32" wraps."""
    if emode == "e16":
        return [_sat16(x + y) for x, y in zip(a, b)]
    if emode == "e32":
        return [_wrap32(x + y) for x, y in zip(a, b)]
    raise ValueError(f"unknown element mode {emode!r}")


# -- requantization -----------------------------------------------------------

def requant_i8_ref(vals, mult, shift, zp):
    """(v * mult) / 2^shift rounded half away from zero, plus zero point."""
    out = []
    for v in vals:
        p = v * mult
        half = 1 << (shift - 1) if shift > 0 else 0
        q = (p + half) >> shift if p >= 0 else -((-p + half) >> shift)
        out.append(_sat8(q + zp))
    return out


def requant_bin_ref(vals, thr):
    return [1 if v >= thr else -1 for v in vals]


def requant_tern_ref(vals, thr):
    if thr < 0:
        raise ValueError("ternary threshold must be >= 0")
    return [1 if v > thr else -1 if v < -thr else 0 for v in vals]


def finalize(acc, quant):
    """Map one channel vector of accumulators to its stored element values.

    quant is None (keep 32-bit), "w16" (saturate to int16), or a dict
    {"kind": "i8"|"b"|"t", per-channel constant lists}.
    """
    if quant is None:
        return list(acc)
    if quant == "w16":
        return [_sat16(v) for v in acc]
    kind = quant["kind"]
    if kind == "i8":
        return [requant_i8_ref([_wrap32(v)], quant["mult"][m],
                               quant["shift"][m], quant["zp"][m])[0]
                for m, v in enumerate(acc)]
    if kind == "b":
        return [requant_bin_ref([_sat16(v)], quant["thr"][m])[0]
                for m, v in enumerate(acc)]
    if kind == "t":
        return [requant_tern_ref([_sat16(v)], quant["thr"][m])[0]
                for m, v in enumerate(acc)]
    raise ValueError(f"unknown quantization kind {kind!r}")


# -- memory decoding ----------------------------------------------------------

def _bits(words, bit_off, nbits):
    """Read nbits starting at bit_off from little-endian 32-bit words."""
    val = 0
    got = 0
    while got < nbits:
        wi, bi = divmod(bit_off + got, 32)
        take = min(32 - bi, nbits - got)
        val |= ((words[wi] >> bi) & ((1 << take) - 1)) << got
        got += take
    return val


def unpack_values(words, fmt, count):
    """Decode `count` packed elements from 32-bit words.

    Formats: "w32" signed words, "w16" signed halfwords (low half
    first), "i8" signed bytes, "b" one bit per element (1 -> +1,
    0 -> -1), "t" two bits per element (bit 0 magnitude, bit 1 sign).
    """
    out = []
    if fmt == "w32":
        for i in range(count):
            out.append(_wrap32(words[i]))
    elif fmt == "w16":
        for i in range(count):
            v = _bits(words, 16 * i, 16)
            out.append(v - 0x10000 if v >= 0x8000 else v)
    elif fmt == "i8":
        for i in range(count):
            v = _bits(words, 8 * i, 8)
            out.append(v - 0x100 if v >= 0x80 else v)
    elif fmt == "b":
        for i in range(count):
            out.append(1 if _bits(words, i, 1) else -1)
    elif fmt == "t":
        for i in range(count):
            code = _bits(words, 2 * i, 2)
            mag = code & 1
            out.append(0 if not mag else -1 if code >> 1 else 1)
    else:
        raise ValueError(f"unknown element format {fmt!r}")
    return out


_BLOCK_WORDS = {"w32": 32, "w16": 16, "i8": 8, "b": 1, "t": 2}


def unpack_ofm(words, fmt, oh, ow, m_ch):
    """Decode a stored output feature map back to out[y][x][m].

    The map is stored as one block of 32 channels per (tile, y, x),
    tile-major: block index (tm * oh + y) * ow + x.
    """
    bw = _BLOCK_WORDS[fmt]
    out = [[[0] * m_ch for _ in range(ow)] for _ in range(oh)]
    for tm in range((m_ch + 31) // 32):
        for y in range(oh):
            for x in range(ow):
                base = ((tm * oh + y) * ow + x) * bw
                vals = unpack_values(words[base:base + bw], fmt, 32)
                for lane in range(32):
                    m = tm * 32 + lane
                    if m < m_ch:
                        out[y][x][m] = vals[lane]
    return out


def compare(got, want, limit=10):
    """Flatten and diff two nested lists; returns mismatch descriptions."""
    def walk(g, w, path):
        if isinstance(w, list):
            if not isinstance(g, list) or len(g) != len(w):
                mism.append(f"{path}: shape differs")
                return
            for i, (gi, wi) in enumerate(zip(g, w)):
                if len(mism) >= limit:
                    return
                walk(gi, wi, f"{path}[{i}]")
        elif g != w:
            mism.append(f"{path}: got {g}, want {w}")

    mism: list[str] = []
    walk(got, want, "out")
    return mism
