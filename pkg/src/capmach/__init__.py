"""Two capability machines, a secure calling convention, and a
differential harness for comparing them."""

from .core import (
    INF, GlobalConstants, Instr, Lin, MemCap, Perm, RetPtrCode, RetPtrData,
    SealCap, Sealed, StkPtr, dec_instr, dec_perm, enc_instr, enc_perm,
)
from .machine import TargetConfig, run, step
from .source import SourceConfig, StackFrame, run_source, step_source
from .asm import (
    CALL_LEN, RET_PT_OFFSET, CallParams, assemble, call_cond, disassemble,
    expand_scall, find_hidden_calls,
)
from .components import (
    Component, format_component, initial_config, link, parse_component, plug,
    validate_component,
)
from .harness import (
    DiffVerdict, RunReport, check_linearity, run_diff, run_report,
)

__all__ = [n for n in dir() if not n.startswith("_")]
