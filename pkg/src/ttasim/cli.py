"""Command line front end.

Subcommands:
    asm     assemble and validate move assembly, write canonical text
    disasm  parse assembly and print its canonical form
    run     execute a program; dump result, final memories, energy report
    gen     turn a layer descriptor into program + layout + memory images
    verify  generate, run, and compare a layer against the scalar reference
    peak    print per-mode peak throughput for a machine

Exit codes: 0 success, 1 domain failure (diagnostics, faults, mismatches),
2 I/O or configuration failure.  All commands are deterministic given the
same inputs and seeds.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import oracle
from .config import MachineConfig, default_machine
from .energy import (CostTable, account, default_cost_table, ops_of_layer,
                     peak_gops)
from .funits import ELEMS
from .isa import AsmError, emit_asm, encode_width, parse_asm
from .kernels import (GenError, GenOptions, LayerDesc, build_images,
                      desc_from_dict, desc_to_dict, gen_program,
                      random_quant, random_tensors, reference_output,
                      unpack_output)
from .machine import (MachineError, dump_memory_image, load_memory_image,
                      run)

_TENSOR_KEYS = {"conv": ("ifm", "wgt", "bias"), "fc": ("ifm", "wgt", "bias"),
                "dwconv": ("ifm", "wgt", "bias"), "residual": ("a", "b"),
                "requant": ("vals",)}


class CliError(Exception):
    """Failure with a process exit code attached."""

    def __init__(self, msg: str, code: int = 1):
        super().__init__(msg)
        self.code = code


# -- input loading -------------------------------------------------------------

def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror or e}", 2) from None


def _load_json(path: str) -> dict:
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as e:
        raise CliError(f"{path}: {e}", 2) from None


def _load_machine(path: str | None) -> MachineConfig:
    if path is None:
        return default_machine()
    try:
        return MachineConfig.from_dict(_load_json(path))
    except (KeyError, ValueError) as e:
        raise CliError(f"{path}: {e}", 2) from None


def _load_table(path: str | None) -> CostTable:
    if path is None:
        return default_cost_table()
    try:
        return CostTable.from_dict(_load_json(path))
    except (KeyError, ValueError) as e:
        raise CliError(f"{path}: {e}", 2) from None


def _load_desc(path: str, mode: str | None) -> tuple[LayerDesc, GenOptions]:
    try:
        desc, options = desc_from_dict(_load_json(path))
    except ValueError as e:
        raise CliError(f"{path}: {e}", 2) from None
    if mode:
        desc = dataclasses.replace(desc, mode=mode)
    return desc, options


def _quant_groups(desc: LayerDesc) -> int:
    if desc.kind == "requant":
        return desc.shape.m
    ch = desc.shape.c if desc.kind == "dwconv" else desc.shape.m
    return max(1, ch // 32)


def _resolve_quant(desc: LayerDesc, seed: int) -> LayerDesc:
    """A quant spec with a kind but no constants means: randomize."""
    q = desc.quant
    if q is None or any((q.mult, q.shift, q.zp, q.thr)):
        return desc
    return dataclasses.replace(
        desc, quant=random_quant(q.kind, _quant_groups(desc), seed))


# -- artifact writing ----------------------------------------------------------

def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    print(f"wrote {path}", file=sys.stderr)


def _chunks_hex(chunks: list[tuple[int, list[int]]]) -> str:
    lines: list[str] = []
    for addr, words in chunks:
        lines.append(f"@{addr:x}")
        for k in range(0, len(words), 8):
            lines.append(" ".join(f"{w & 0xFFFFFFFF:08x}"
                                  for w in words[k:k + 8]))
    return "\n".join(lines) + "\n" if lines else "@0\n"


def _json_safe(v):
    if dataclasses.is_dataclass(v):
        return dataclasses.asdict(v)
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def _layout_dict(layout) -> dict:
    return {
        "version": 1,
        "regions": {name: {"memory": r.memory, "base": r.base,
                           "nbytes": r.nbytes}
                    for name, r in layout.regions.items()},
        "meta": {k: _json_safe(v) for k, v in layout.meta.items()},
    }


# -- commands ------------------------------------------------------------------

def cmd_asm(args) -> int:
    machine = _load_machine(args.machine)
    program = parse_asm(_read_text(args.source), machine,
                        filename=args.source)
    text = emit_asm(program)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"{args.source}: {len(program.instructions)} instructions, "
          f"{encode_width(program, machine)}-bit words", file=sys.stderr)
    return 0


def cmd_disasm(args) -> int:
    machine = _load_machine(args.machine) if args.machine else None
    program = parse_asm(_read_text(args.source), machine,
                        filename=args.source)
    sys.stdout.write(emit_asm(program))
    return 0


def cmd_run(args) -> int:
    machine = _load_machine(args.machine)
    table = _load_table(args.cost_table)
    program = parse_asm(_read_text(args.program), machine,
                        filename=args.program)
    images = {}
    if args.dmem:
        images["DMEM"] = load_memory_image(_read_text(args.dmem))
    if args.pmem:
        images["PMEM"] = load_memory_image(_read_text(args.pmem))
    ops = args.ops
    if ops is None and args.layer:
        desc, _ = _load_desc(args.layer, None)
        ops = ops_of_layer(desc)

    res = run(program, machine, max_cycles=args.max_cycles,
              trace=args.trace, images=images or None)

    out = _out_dir(args)
    result = {
        "version": 1,
        "cycles": res.cycles,
        "halt_reason": res.halt_reason,
        "fault": res.fault,
        "mac_triggers": res.mac_triggers,
        "utilization": res.utilization,
    }
    _write(out / "result.json", json.dumps(result, indent=2) + "\n")
    for mem in sorted(res.state.mem):
        _write(out / f"{mem.lower()}_final.hex",
               dump_memory_image(res.state.mem[mem]))
    report = account(res.events, table, ops or 0, clock_mhz=machine.clock_mhz)
    _write(out / "energy.json", report.to_json())
    _write(out / "energy.txt", report.to_text())
    if args.trace:
        _write(out / "trace.txt", "\n".join(res.trace) + "\n")

    if res.halt_reason != "halted":
        tail = f": {res.fault}" if res.fault else ""
        print(f"error: {res.halt_reason} at cycle {res.cycles}{tail}",
              file=sys.stderr)
        return 1
    print(f"halted after {res.cycles} cycles, {res.mac_triggers} MAC "
          f"triggers, utilization {res.utilization:.4f}")
    return 0


def cmd_gen(args) -> int:
    machine = _load_machine(args.machine)
    desc, options = _load_desc(args.layer, args.mode)
    desc = _resolve_quant(desc, args.seed)
    program, layout = gen_program(desc, machine, options)
    if args.tensors:
        tensors = _load_json(args.tensors)
        missing = [k for k in _TENSOR_KEYS[desc.kind] if k not in tensors]
        if missing:
            raise CliError(f"{args.tensors} lacks {', '.join(missing)}", 2)
    else:
        tensors = random_tensors(desc, args.seed)
    images = build_images(desc, layout, tensors)

    out = _out_dir(args)
    _write(out / "program.tta", emit_asm(program))
    _write(out / "desc.json",
           json.dumps(desc_to_dict(desc, options), indent=2) + "\n")
    _write(out / "layout.json",
           json.dumps(_layout_dict(layout), indent=2) + "\n")
    _write(out / "tensors.json", json.dumps(tensors) + "\n")
    for mem, chunks in sorted(images.items()):
        _write(out / f"{mem.lower()}.hex", _chunks_hex(chunks))
    return 0


_OUT_REGION = {"conv": "ofm", "fc": "ofm", "dwconv": "ofm",
               "residual": "dst", "requant": "dst"}


def _verify_one(desc, machine, options, seed, max_cycles,
                inject: bool) -> tuple[bool, str]:
    program, layout = gen_program(desc, machine, options)
    tensors = random_tensors(desc, seed)
    images = build_images(desc, layout, tensors)
    res = run(program, machine, images=images, max_cycles=max_cycles)
    if res.halt_reason != "halted":
        return False, f" ({res.halt_reason}: {res.fault})"
    if inject:
        reg = layout.regions[_OUT_REGION[desc.kind]]
        res.state.mem[reg.memory][reg.base // 4] ^= 1
    got = unpack_output(desc, layout, res.state.mem["DMEM"])
    want = reference_output(desc, tensors)
    mism = oracle.compare(got, want)
    if mism:
        head = "; ".join(mism[:3])
        more = f"; +{len(mism) - 3} more" if len(mism) > 3 else ""
        s = "es" if len(mism) != 1 else ""
        return False, f" ({len(mism)} mismatch{s}: {head}{more})"
    return True, f" ({res.cycles} cycles, utilization {res.utilization:.4f})"


def cmd_verify(args) -> int:
    machine = _load_machine(args.machine)
    desc0, options = _load_desc(args.layer, args.mode)
    failures = 0
    for seed in range(args.seed, args.seed + args.batch):
        desc = _resolve_quant(desc0, seed)
        ok, detail = _verify_one(desc, machine, options, seed,
                                 args.max_cycles, args.inject_fault)
        print(f"seed {seed}: {'pass' if ok else 'FAIL'}{detail}")
        failures += not ok
    if args.batch > 1:
        print(f"{args.batch - failures}/{args.batch} passed")
    return 1 if failures else 0


def cmd_peak(args) -> int:
    machine = _load_machine(args.machine)
    print(f"{'mode':<6} {'elems/lane':>10} {'peak GOPS':>10}")
    for mode in ("b", "t", "i8"):
        print(f"{mode:<6} {ELEMS[mode]:>10} {peak_gops(mode, machine):>10.1f}")
    return 0


# -- entry point ---------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ttasim",
        description="assembler, cycle-accurate simulator, kernel generator, "
                    "and energy model for a mixed-precision "
                    "transport-triggered vector core")
    sub = p.add_subparsers(dest="command", required=True)

    ap = sub.add_parser("asm", help="assemble and validate move assembly")
    ap.add_argument("source", help="assembly text (.tta)")
    ap.add_argument("-o", "--output",
                    help="write canonical text here instead of stdout")
    ap.add_argument("--machine", help="machine config JSON")
    ap.set_defaults(func=cmd_asm)

    dp = sub.add_parser("disasm", help="print canonical assembly")
    dp.add_argument("source", help="assembly text (.tta)")
    dp.add_argument("--machine", help="machine config JSON")
    dp.set_defaults(func=cmd_disasm)

    rp = sub.add_parser("run", help="execute a program")
    rp.add_argument("program", help="assembly text (.tta)")
    rp.add_argument("--machine", help="machine config JSON")
    rp.add_argument("--cost-table", help="energy cost table JSON")
    rp.add_argument("--dmem", help="initial DMEM image (hex)")
    rp.add_argument("--pmem", help="initial PMEM image (hex)")
    rp.add_argument("--max-cycles", type=int, default=5_000_000)
    rp.add_argument("--trace", action="store_true",
                    help="record a per-cycle transport trace")
    rp.add_argument("--ops", type=int,
                    help="operation count for the fJ/op figure")
    rp.add_argument("--layer",
                    help="layer descriptor JSON to derive the op count")
    rp.add_argument("--out-dir", default="ttasim-out")
    rp.set_defaults(func=cmd_run)

    gp = sub.add_parser("gen",
                        help="generate program and images for a layer")
    gp.add_argument("layer", help="layer descriptor JSON")
    gp.add_argument("--machine", help="machine config JSON")
    gp.add_argument("--mode", choices=("b", "t", "i8"),
                    help="override the descriptor's mode")
    gp.add_argument("--seed", type=int, default=0,
                    help="seed for random tensors and quant constants")
    gp.add_argument("--tensors",
                    help="tensors JSON instead of random ones")
    gp.add_argument("--out-dir", default="ttasim-out")
    gp.set_defaults(func=cmd_gen)

    vp = sub.add_parser("verify",
                        help="run a layer and compare against the reference")
    vp.add_argument("layer", help="layer descriptor JSON")
    vp.add_argument("--machine", help="machine config JSON")
    vp.add_argument("--mode", choices=("b", "t", "i8"),
                    help="override the descriptor's mode")
    vp.add_argument("--seed", type=int, default=0)
    vp.add_argument("--batch", type=int, default=1,
                    help="verify this many consecutive seeds")
    vp.add_argument("--max-cycles", type=int, default=5_000_000)
    vp.add_argument("--inject-fault", action="store_true",
                    help="flip one output bit after the run")
    vp.set_defaults(func=cmd_verify)

    kp = sub.add_parser("peak", help="print per-mode peak throughput")
    kp.add_argument("--machine", help="machine config JSON")
    kp.set_defaults(func=cmd_peak)
    return p


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except AsmError as e:
        for d in e.diagnostics:
            print(d, file=sys.stderr)
        return 1
    except (GenError, MachineError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
