"""Differential runner and per-step invariant checks.

A diff run plugs the same trusted/context pair into both machines and
compares termination behaviour; the observables are termination-based,
so fuel exhaustion stands in for divergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .components import Component, initial_config, link, is_program, \
    validate_component
from .core import INF, PC, GlobalConstants, MemCap, RetPtrData, Sealed, \
    StkPtr, is_linear
from .machine import (
    Failed, Halted, NULL_EXTENSION, Running, TargetConfig, TraceRecord,
    current_instr_repr, step,
)
from .source import SOURCE_EXTENSION, SourceConfig, memory_overlap

DEFAULT_FUEL = 100_000


class ValidationFailure(Exception):
    def __init__(self, diagnostics):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass
class RunReport:
    outcome: str                 # halted | failed | fuel-exhausted
    steps: int
    violations: list = field(default_factory=list)
    final_cfg: object = None
    trace: Optional[list] = None


@dataclass
class DiffVerdict:
    source: RunReport
    target: RunReport
    agreement: bool
    detail: str = ""


# ---------------------------------------------------------------------------
# Invariant checks

_BIG = 10 ** 9  # stand-in end for unbounded capabilities


def _collect_linear(w, where, out):
    if isinstance(w, Sealed):
        _collect_linear(w.inner, where, out)
        return
    if not is_linear(w):
        return
    if isinstance(w, (MemCap, StkPtr, RetPtrData)):
        end = _BIG if w.end == INF else w.end
        out.append((w.base, end, where))


def check_linearity(cfg) -> list:
    """Addresses covered by two linear capabilities anywhere in a
    configuration (registers, memory, stack memory, saved frames)."""
    caps = []
    for r, w in cfg.reg.items():
        _collect_linear(w, f"reg {r}", caps)
    for a, w in cfg.mem.items():
        _collect_linear(w, f"mem {a}", caps)
    if isinstance(cfg, SourceConfig):
        for a, w in cfg.ms_stk.items():
            _collect_linear(w, f"stk {a}", caps)
        for i, f in enumerate(cfg.stk):
            for a, w in f.ms.items():
                _collect_linear(w, f"frame {i} addr {a}", caps)
    caps.sort(key=lambda t: t[0])
    dups = []
    for (b1, e1, w1), (b2, e2, w2) in zip(caps, caps[1:]):
        if b2 <= e1:
            dups.append((b2, w1, w2))
    return dups


def check_stack_partition(cfg: SourceConfig) -> list:
    """Disjointness and bottom-up ordering of stack regions."""
    out = []
    overlap = memory_overlap(cfg)
    if overlap:
        out.append(f"region overlap at {sorted(overlap)[:4]}")
    regions = []
    if cfg.ms_stk:
        regions.append(("ms_stk", min(cfg.ms_stk), max(cfg.ms_stk)))
    for i, f in enumerate(cfg.stk):
        if f.ms:
            regions.append((f"frame {i}", min(f.ms), max(f.ms)))
    for (n1, _, hi), (n2, lo, _) in zip(regions, regions[1:]):
        if lo <= hi:
            out.append(f"{n2} not above {n1}")
    return out


# ---------------------------------------------------------------------------
# Running

def run_report(cfg, machine_kind: str, gc: GlobalConstants,
               fuel: int = DEFAULT_FUEL, paranoid: bool = False,
               want_trace: bool = False) -> RunReport:
    ext = SOURCE_EXTENSION if machine_kind == "source" else NULL_EXTENSION
    trace = [] if want_trace else None
    violations: list = []
    steps = 0
    while steps < fuel:
        if paranoid:
            for dup in check_linearity(cfg):
                violations.append(f"step {steps}: duplicated linear addr {dup}")
            if isinstance(cfg, SourceConfig):
                for v in check_stack_partition(cfg):
                    violations.append(f"step {steps}: {v}")
        instr_repr = current_instr_repr(cfg, ext, gc) if want_trace else ""
        nxt = step(cfg, ext, gc)
        steps += 1
        if trace is not None:
            pc = cfg.reg[PC]
            pc_addr = pc.addr if isinstance(pc, MemCap) else None
            trace.append(TraceRecord(steps, pc_addr, instr_repr, nxt.kind))
        if isinstance(nxt, Halted):
            return RunReport("halted", steps, violations, cfg, trace)
        if isinstance(nxt, Failed):
            return RunReport("failed", steps, violations, cfg, trace)
        cfg = nxt.cfg
    return RunReport("fuel-exhausted", steps, violations, cfg, trace)


def write_trace(path, machine_kind: str, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(f"{r.step}\t{machine_kind}\t{r.pc_addr}\t"
                     f"{r.instr}\t{r.outcome}\n")


def _outcomes_agree(a: str, b: str) -> bool:
    if a == "halted" or b == "halted":
        return a == b
    return True  # failed / fuel-exhausted both count as non-termination


def run_diff(trusted: Component, context: Component,
             b_stk: int, e_stk: int, fuel: int = DEFAULT_FUEL,
             check_stk_base: bool = True, paranoid: bool = False,
             want_trace: bool = False, validate: bool = True) -> DiffVerdict:
    gc = GlobalConstants(frozenset(trusted.ms_code), b_stk, check_stk_base)
    if validate:
        diags = validate_component(trusted, gc) + validate_component(context, gc)
        if diags:
            raise ValidationFailure(diags)
    prog = link(trusted, context)
    if not is_program(prog):
        raise ValidationFailure(["link\tprogram\tlink does not yield a program"])
    src = run_report(initial_config(prog, "source", b_stk, e_stk),
                     "source", gc, fuel, paranoid, want_trace)
    trg = run_report(initial_config(prog, "target", b_stk, e_stk),
                     "target", gc, fuel, paranoid, want_trace)
    agree = _outcomes_agree(src.outcome, trg.outcome)
    detail = "" if agree else (
        f"source {src.outcome} after {src.steps} steps, "
        f"target {trg.outcome} after {trg.steps} steps")
    return DiffVerdict(src, trg, agree, detail)


# ---------------------------------------------------------------------------
# Observations (for round-trip comparisons)

def visible_observations(src_cfg: SourceConfig, trg_cfg: TargetConfig):
    """(mismatches, shared-int-register map) between two final states.

    Registers compare as ints; capability-shaped values are
    representation-dependent (token vs capability) and are skipped.
    Memory compares on the source's domain (the target additionally
    maps the stack).
    """
    mismatches = []
    ints = {}
    for r in src_cfg.reg:
        a, b = src_cfg.reg[r], trg_cfg.reg[r]
        if isinstance(a, int) or isinstance(b, int):
            if a != b:
                mismatches.append(f"reg {r}: {a!r} vs {b!r}")
            else:
                ints[r] = a
    for addr in src_cfg.mem:
        a, b = src_cfg.mem[addr], trg_cfg.mem.get(addr)
        if a != b:
            mismatches.append(f"mem {addr}: {a!r} vs {b!r}")
    return mismatches, ints
