"""The overlay machine: native stack, stack pointers, call/return tokens.

Configurations extend the bare machine with a separate stack memory
(``ms_stk``) and a stack of call frames.  Stack pointers index ms_stk
with the same guards the bare machine applies to memory capabilities,
and the call sequence is executed as a single big step whenever it sits
entirely at trusted addresses.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .asm import CALL_LEN, CallParams, call_cond
from .core import (
    PC, RDATA, RRETCODE, RRETDATA, RSTK, RTMP1, RTMP2, GlobalConstants, Lin,
    MemCap, Perm, RetPtrCode, RetPtrData, SealCap, Sealed, StkPtr, Word,
    is_exec, lin_cons, lin_cons_perm, non_exec, read_allowed, within_bounds,
    write_allowed,
)
from .machine import (
    FAILED, MachineExtension, Running, StepOutcome, run, step, upd_pc_addr,
)


@dataclass(frozen=True)
class StackFrame:
    opc: int      # return address in the caller's code capability
    ms: dict      # the caller's private stack portion

    def __repr__(self):
        lo = min(self.ms) if self.ms else None
        hi = max(self.ms) if self.ms else None
        return f"frame(opc={self.opc}, [{lo},{hi}])"


@dataclass(frozen=True)
class SourceConfig:
    mem: dict
    reg: dict
    stk: tuple = ()      # call frames, innermost first
    ms_stk: dict = None  # the currently accessible stack memory

    def __post_init__(self):
        if self.ms_stk is None:
            object.__setattr__(self, "ms_stk", {})

    def with_regs(self, updates: dict) -> "SourceConfig":
        reg = dict(self.reg)
        reg.update(updates)
        return replace(self, reg=reg)

    def with_mem_cell(self, a: int, w: Word) -> "SourceConfig":
        mem = dict(self.mem)
        mem[a] = w
        return replace(self, mem=mem)

    def with_stk_cell(self, a: int, w: Word) -> "SourceConfig":
        ms = dict(self.ms_stk)
        ms[a] = w
        return replace(self, ms_stk=ms)


def stack_addresses(cfg: SourceConfig):
    """All stack addresses: accessible portion plus every saved frame."""
    addrs = set(cfg.ms_stk)
    for f in cfg.stk:
        addrs |= set(f.ms)
    return addrs


def memory_overlap(cfg: SourceConfig):
    """Addresses shared between regions that must stay disjoint."""
    bad = set(cfg.mem) & set(cfg.ms_stk)
    seen = set(cfg.ms_stk)
    for f in cfg.stk:
        dom = set(f.ms)
        bad |= dom & set(cfg.mem)
        bad |= dom & seen
        seen |= dom
    return bad


class SourceExtension(MachineExtension):
    """Stack-pointer and token cases layered over the bare interpreter."""

    def store(self, cfg, cap, r2):
        if (write_allowed(cap.perm) and within_bounds(cap) and r2 != PC
                and cap.addr in cfg.ms_stk):
            w = cfg.reg[r2]
            return upd_pc_addr(
                cfg.with_regs({r2: lin_cons(w)}).with_stk_cell(cap.addr, w))
        return FAILED

    def load(self, cfg, r1, cap):
        if (read_allowed(cap.perm) and within_bounds(cap) and r1 != PC
                and cap.addr in cfg.ms_stk):
            w = cfg.ms_stk[cap.addr]
            if lin_cons_perm(cap.perm, w):
                return upd_pc_addr(
                    cfg.with_stk_cell(cap.addr, lin_cons(w)).with_regs({r1: w}))
        return FAILED

    def cca(self, cfg, r, cap, n):
        if cap.addr + n < 0:
            return FAILED
        return upd_pc_addr(cfg.with_regs({r: replace(cap, addr=cap.addr + n)}))

    def restrict(self, cfg, r1, cap, n):
        from .core import dec_perm, perm_leq
        p = dec_perm(n)
        if perm_leq(p, cap.perm):
            return upd_pc_addr(cfg.with_regs({r1: replace(cap, perm=p)}))
        return FAILED

    def seta2b(self, cfg, r1, cap):
        return upd_pc_addr(cfg.with_regs({r1: replace(cap, addr=cap.base)}))

    def split(self, cfg, r1, r2, r3, cap, n):
        if cap.base <= n < cap.end:
            c1 = replace(cap, end=n)
            c2 = replace(cap, base=n + 1)
            return upd_pc_addr(
                cfg.with_regs({r3: 0}).with_regs({r1: c1}).with_regs({r2: c2}))
        return FAILED

    def splice(self, cfg, r1, r2, r3, c2, c3):
        if (c2.perm == c3.perm and c2.end + 1 == c3.base
                and c2.base <= c2.end and c3.base <= c3.end):
            c = StkPtr(c2.perm, c2.base, c3.end, c3.addr)
            return upd_pc_addr(
                cfg.with_regs({r2: 0}).with_regs({r3: 0}).with_regs({r1: c}))
        return FAILED

    def xjump_result(self, c1, c2, cfg, gc):
        if not (isinstance(c1, RetPtrCode) and isinstance(c2, RetPtrData)):
            return None
        rstk = cfg.reg[RSTK]
        if not (isinstance(rstk, StkPtr) and rstk.perm == Perm.RW):
            return FAILED
        e_stk = rstk.end
        if not (rstk.base == gc.stk_base and gc.stk_base <= e_stk):
            return FAILED
        if not cfg.stk:
            return FAILED
        frame = cfg.stk[0]
        a_stk, e_priv = c2.base, c2.end
        if frame.opc != c1.addr:
            return FAILED
        if e_stk + 1 != a_stk:
            return FAILED
        if set(frame.ms) != set(range(e_stk + 1, e_priv + 1)):
            return FAILED
        ms_stk = dict(cfg.ms_stk)
        ms_stk.update(frame.ms)
        cfg = replace(cfg, stk=cfg.stk[1:], ms_stk=ms_stk)
        return Running(cfg.with_regs({
            PC: MemCap(Perm.RX, Lin.NORMAL, c1.base, c1.end, c1.addr),
            RDATA: 0,
            RSTK: StkPtr(Perm.RW, gc.stk_base, e_priv, a_stk),
            RTMP1: 0,
            RTMP2: 0,
        }))

    def recognize_call(self, cfg, gc):
        pc = cfg.reg[PC]
        if not (isinstance(pc, MemCap) and is_exec(pc)):
            return None
        a = pc.addr
        params = call_cond(cfg.mem, a, gc.stk_base, gc.check_stk_base)
        if params is None:
            return None
        span = range(a, a + CALL_LEN)
        if not all(x in gc.ta for x in span):
            return None
        if not (pc.base <= a and a + CALL_LEN - 1 <= pc.end):
            return None
        return exec_call(cfg, params, self, gc)


def exec_call(cfg: SourceConfig, params: CallParams,
              ext: MachineExtension, gc: GlobalConstants) -> StepOutcome:
    """The call sequence as one atomic step."""
    r1, r2 = params.r1, params.r2
    if RTMP1 in (r1, r2):
        return FAILED
    w1, w2 = cfg.reg[r1], cfg.reg[r2]
    if not (isinstance(w1, Sealed) and isinstance(w2, Sealed)
            and w1.sigma == w2.sigma and non_exec(w2.inner)):
        return FAILED
    rstk = cfg.reg[RSTK]
    if not (isinstance(rstk, StkPtr) and rstk.perm == Perm.RW
            and rstk.base < rstk.addr <= rstk.end):
        return FAILED
    a_stk, e_stk = rstk.addr, rstk.end
    if a_stk not in cfg.ms_stk:
        return FAILED
    pc = cfg.reg[PC]
    if not isinstance(pc, MemCap):
        return FAILED
    a = pc.addr
    if not (pc.base <= a + params.off_pc <= pc.end):
        return FAILED
    seal = cfg.mem.get(a + params.off_pc)
    if not isinstance(seal, SealCap):
        return FAILED
    sigma = seal.cur + params.off_sigma
    if not (seal.base <= sigma <= seal.end):
        return FAILED

    opc = a + CALL_LEN
    ms_priv = {x: cfg.ms_stk[x] for x in cfg.ms_stk if a_stk <= x <= e_stk}
    ms_priv[a_stk] = 42
    ms_rest = {x: w for x, w in cfg.ms_stk.items() if not (a_stk <= x <= e_stk)}
    cfg = replace(cfg, ms_stk=ms_rest,
                  stk=(StackFrame(opc, ms_priv),) + cfg.stk)
    cfg = cfg.with_regs({
        r1: lin_cons(w1),
        r2: lin_cons(w2),
        RSTK: StkPtr(Perm.RW, rstk.base, a_stk - 1, a_stk - 1),
        RRETCODE: Sealed(sigma, RetPtrCode(pc.base, pc.end, opc)),
        RRETDATA: Sealed(sigma, RetPtrData(a_stk, e_stk)),
        RTMP1: 0,
    })
    from .machine import xjump_result
    return xjump_result(w1.inner, w2.inner, cfg, ext, gc)


SOURCE_EXTENSION = SourceExtension()


def step_source(cfg: SourceConfig, gc: GlobalConstants) -> StepOutcome:
    return step(cfg, SOURCE_EXTENSION, gc)


def run_source(cfg: SourceConfig, gc: GlobalConstants, fuel: int = 100_000,
               trace: Optional[list] = None, check=None):
    return run(cfg, SOURCE_EXTENSION, gc, fuel, trace, check)
