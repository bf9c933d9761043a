"""Cycle-accurate simulator and toolchain for a mixed-precision
transport-triggered vector core.

Modules:
    isa      move-style assembly: parse, validate, emit
    funits   bit-exact functional unit arithmetic
    config   machine description (FUs, RFs, memories, buses)
    machine  cycle-accurate interpreter with loop buffer and banked SRAM
    energy   event-based energy accounting
    kernels  layer-to-program generator plus reference verification
    oracle   independent scalar reference implementations
    cli      command line front end
"""

from ttasim.config import MachineConfig, default_machine
from ttasim.energy import (CostTable, EnergyReport, account,
                           default_cost_table, peak_gops)
from ttasim.isa import Program, emit_asm, parse_asm, validate
from ttasim.machine import RunResult, run

__version__ = "0.1.0"

__all__ = [
    "CostTable",
    "EnergyReport",
    "MachineConfig",
    "Program",
    "RunResult",
    "account",
    "default_cost_table",
    "default_machine",
    "emit_asm",
    "parse_asm",
    "peak_gops",
    "run",
    "validate",
    "__version__",
]
