"""Single-step instruction interpretation shared by both machines.

Every function here is pure: configurations are immutable snapshots and
each step builds a fresh one.  Source-only instruction cases (stack
tokens, return-token jumps, call recognition) are supplied through a
``MachineExtension``; the target machine uses the null extension.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .core import (
    FAIL, PC, RDATA, GlobalConstants, Instr, MemCap, RetPtrCode, RetPtrData,
    SealCap, Sealed, StkPtr, Word, dec_instr, dec_perm, enc_lin, enc_perm,
    enc_type, is_exec, is_linear, is_sealable, lin_cons, lin_cons_perm,
    non_exec, non_zero, perm_leq, read_allowed, within_bounds, write_allowed,
)


@dataclass(frozen=True)
class TargetConfig:
    mem: dict
    reg: dict

    def with_regs(self, updates: dict) -> "TargetConfig":
        reg = dict(self.reg)
        reg.update(updates)
        return replace(self, reg=reg)

    def with_mem_cell(self, a: int, w: Word) -> "TargetConfig":
        mem = dict(self.mem)
        mem[a] = w
        return replace(self, mem=mem)


@dataclass(frozen=True)
class Running:
    cfg: object

    kind = "running"


@dataclass(frozen=True)
class Failed:
    kind = "failed"


@dataclass(frozen=True)
class Halted:
    kind = "halted"


FAILED = Failed()
HALTED = Halted()
StepOutcome = object  # Running | Failed | Halted


def upd_pc_addr(cfg) -> StepOutcome:
    pc = cfg.reg[PC]
    if isinstance(pc, MemCap):
        return Running(cfg.with_regs({PC: replace(pc, addr=pc.addr + 1)}))
    return FAILED


class MachineExtension:
    """Hooks for the source-only instruction cases.

    Each hook returns a StepOutcome when its (blue) case applies and
    None otherwise; the shared interpreter then falls through to
    ``failed``.  This base class is the target machine: no extra cases.
    """

    def store(self, cfg, cap, r2) -> Optional[StepOutcome]:
        return None

    def load(self, cfg, r1, cap) -> Optional[StepOutcome]:
        return None

    def cca(self, cfg, r, cap, n) -> Optional[StepOutcome]:
        return None

    def restrict(self, cfg, r1, cap, n) -> Optional[StepOutcome]:
        return None

    def seta2b(self, cfg, r1, cap) -> Optional[StepOutcome]:
        return None

    def split(self, cfg, r1, r2, r3, cap, n) -> Optional[StepOutcome]:
        return None

    def splice(self, cfg, r1, r2, r3, c2, c3) -> Optional[StepOutcome]:
        return None

    def xjump_result(self, c1, c2, cfg, gc) -> Optional[StepOutcome]:
        return None

    def recognize_call(self, cfg, gc) -> Optional[StepOutcome]:
        """Big-step call dispatch; None means no call fires here."""
        return None


NULL_EXTENSION = MachineExtension()


def _operand(cfg, rn):
    """Resolve a register-or-immediate operand to an integer, or None."""
    if isinstance(rn, int):
        return rn
    w = cfg.reg[rn]
    return w if isinstance(w, int) else None


def exec_jmp(cfg, r):
    target = cfg.reg[r]
    return Running(cfg.with_regs({r: lin_cons(target), PC: target}))


def exec_jnz(cfg, r, rn):
    operand = rn if isinstance(rn, int) else cfg.reg[rn]
    if non_zero(operand):
        target = cfg.reg[r]
        return Running(cfg.with_regs({r: lin_cons(target), PC: target}))
    return upd_pc_addr(cfg)


def exec_gettype(cfg, r1, r2):
    return upd_pc_addr(cfg.with_regs({r1: enc_type(cfg.reg[r2])}))


def exec_geta(cfg, r1, r2):
    w = cfg.reg[r2]
    if isinstance(w, (MemCap, StkPtr)):
        v = w.addr
    elif isinstance(w, SealCap):
        v = w.cur
    else:
        v = -1
    return upd_pc_addr(cfg.with_regs({r1: v}))


def exec_getb(cfg, r1, r2):
    w = cfg.reg[r2]
    if isinstance(w, (MemCap, StkPtr, SealCap)):
        v = w.base
    else:
        v = -1
    return upd_pc_addr(cfg.with_regs({r1: v}))


def exec_gete(cfg, r1, r2):
    w = cfg.reg[r2]
    if isinstance(w, (MemCap, StkPtr, SealCap)):
        v = w.end
    else:
        v = -1
    return upd_pc_addr(cfg.with_regs({r1: v}))


def exec_getp(cfg, r1, r2):
    w = cfg.reg[r2]
    if isinstance(w, (MemCap, StkPtr)):
        v = enc_perm(w.perm)
    else:
        v = -1
    return upd_pc_addr(cfg.with_regs({r1: v}))


def exec_getlin(cfg, r1, r2):
    from .core import Lin
    lin = Lin.LINEAR if is_linear(cfg.reg[r2]) else Lin.NORMAL
    return upd_pc_addr(cfg.with_regs({r1: enc_lin(lin)}))


def exec_move(cfg, r, rn):
    if r == PC:
        return FAILED
    if isinstance(rn, int):
        return upd_pc_addr(cfg.with_regs({r: rn}))
    # Clear the source register first, then write the destination:
    # correct even when r == rn (a linear cap stays put).
    old = cfg.reg[rn]
    return upd_pc_addr(cfg.with_regs({rn: lin_cons(old), r: old}))


def exec_store(cfg, r1, r2, ext):
    c = cfg.reg[r1]
    if isinstance(c, MemCap):
        if (write_allowed(c.perm) and within_bounds(c) and r2 != PC
                and c.addr in cfg.mem):
            w = cfg.reg[r2]
            return upd_pc_addr(
                cfg.with_regs({r2: lin_cons(w)}).with_mem_cell(c.addr, w))
        return FAILED
    if isinstance(c, StkPtr):
        out = ext.store(cfg, c, r2)
        if out is not None:
            return out
    return FAILED


def exec_load(cfg, r1, r2, ext):
    c = cfg.reg[r2]
    if isinstance(c, MemCap):
        if (read_allowed(c.perm) and within_bounds(c) and r1 != PC
                and c.addr in cfg.mem):
            w = cfg.mem[c.addr]
            if lin_cons_perm(c.perm, w):
                return upd_pc_addr(
                    cfg.with_mem_cell(c.addr, lin_cons(w)).with_regs({r1: w}))
        return FAILED
    if isinstance(c, StkPtr):
        out = ext.load(cfg, r1, c)
        if out is not None:
            return out
    return FAILED


def exec_cca(cfg, r, rn, ext):
    n = _operand(cfg, rn)
    if n is None or r == PC:
        return FAILED
    c = cfg.reg[r]
    if isinstance(c, MemCap):
        if c.addr + n < 0:
            return FAILED
        return upd_pc_addr(cfg.with_regs({r: replace(c, addr=c.addr + n)}))
    if isinstance(c, SealCap):
        if c.cur + n < 0:
            return FAILED
        return upd_pc_addr(cfg.with_regs({r: replace(c, cur=c.cur + n)}))
    if isinstance(c, StkPtr):
        out = ext.cca(cfg, r, c, n)
        if out is not None:
            return out
    return FAILED


def exec_restrict(cfg, r1, rn, ext):
    n = _operand(cfg, rn)
    if n is None or r1 == PC:
        return FAILED
    c = cfg.reg[r1]
    p = dec_perm(n)
    if isinstance(c, MemCap):
        if perm_leq(p, c.perm):
            return upd_pc_addr(cfg.with_regs({r1: replace(c, perm=p)}))
        return FAILED
    if isinstance(c, StkPtr):
        out = ext.restrict(cfg, r1, c, n)
        if out is not None:
            return out
    return FAILED


def _binop(cfg, r0, rn1, rn2, fn):
    n1 = _operand(cfg, rn1)
    n2 = _operand(cfg, rn2)
    if n1 is None or n2 is None:
        return FAILED
    return upd_pc_addr(cfg.with_regs({r0: fn(n1, n2)}))


def exec_lt(cfg, r0, rn1, rn2):
    return _binop(cfg, r0, rn1, rn2, lambda a, b: 1 if a < b else 0)


def exec_plus(cfg, r0, rn1, rn2):
    return _binop(cfg, r0, rn1, rn2, lambda a, b: a + b)


def exec_minus(cfg, r0, rn1, rn2):
    return _binop(cfg, r0, rn1, rn2, lambda a, b: a - b)


def exec_seta2b(cfg, r1, ext):
    if r1 == PC:
        return FAILED
    c = cfg.reg[r1]
    if isinstance(c, MemCap):
        return upd_pc_addr(cfg.with_regs({r1: replace(c, addr=c.base)}))
    if isinstance(c, SealCap):
        return upd_pc_addr(cfg.with_regs({r1: replace(c, cur=c.base)}))
    if isinstance(c, StkPtr):
        out = ext.seta2b(cfg, r1, c)
        if out is not None:
            return out
    return FAILED


def exec_cseal(cfg, r1, r2):
    sc = cfg.reg[r1]
    s = cfg.reg[r2]
    if (is_sealable(sc) and isinstance(s, SealCap)
            and s.base <= s.cur <= s.end):
        return upd_pc_addr(cfg.with_regs({r1: Sealed(s.cur, sc)}))
    return FAILED


def exec_split(cfg, r1, r2, r3, rn4, ext):
    n = _operand(cfg, rn4)
    if n is None or PC in (r1, r2, r3):
        return FAILED
    c = cfg.reg[r3]
    if isinstance(c, MemCap):
        if c.base <= n < c.end:
            c1 = replace(c, end=n)
            c2 = replace(c, base=n + 1)
            return upd_pc_addr(
                cfg.with_regs({r3: lin_cons(c)}).with_regs({r1: c1}).with_regs({r2: c2}))
        return FAILED
    if isinstance(c, SealCap):
        if c.base <= n < c.end:
            c1 = replace(c, end=n)
            c2 = replace(c, base=n + 1)
            return upd_pc_addr(cfg.with_regs({r1: c1}).with_regs({r2: c2}))
        return FAILED
    if isinstance(c, StkPtr):
        out = ext.split(cfg, r1, r2, r3, c, n)
        if out is not None:
            return out
    return FAILED


def exec_splice(cfg, r1, r2, r3, ext):
    if PC in (r1, r2, r3):
        return FAILED
    c2 = cfg.reg[r2]
    c3 = cfg.reg[r3]
    if isinstance(c2, MemCap) and isinstance(c3, MemCap):
        if (c2.perm == c3.perm and c2.lin == c3.lin
                and c2.end + 1 == c3.base
                and c2.base <= c2.end and c3.base <= c3.end):
            c = MemCap(c2.perm, c2.lin, c2.base, c3.end, c3.addr)
            return upd_pc_addr(
                cfg.with_regs({r2: lin_cons(c2)}).with_regs({r3: lin_cons(c3)})
                .with_regs({r1: c}))
        return FAILED
    if isinstance(c2, SealCap) and isinstance(c3, SealCap):
        if (c2.end + 1 == c3.base and c2.base <= c2.end and c3.base <= c3.end):
            c = SealCap(c2.base, c3.end, c3.cur)
            return upd_pc_addr(cfg.with_regs({r1: c}))
        return FAILED
    if isinstance(c2, StkPtr) and isinstance(c3, StkPtr):
        out = ext.splice(cfg, r1, r2, r3, c2, c3)
        if out is not None:
            return out
    return FAILED


def xjump_result(c1, c2, cfg, ext, gc):
    """Dispatch after unsealing an xjmp pair.

    The base case loads the code half into pc and the data half into
    r_data; the source extension adds the return-token case.
    """
    if (not isinstance(c1, RetPtrCode) and not isinstance(c2, RetPtrData)
            and non_exec(c2)):
        return Running(cfg.with_regs({PC: c1, RDATA: c2}))
    out = ext.xjump_result(c1, c2, cfg, gc)
    if out is not None:
        return out
    return FAILED


def exec_xjmp(cfg, r1, r2, ext, gc):
    w1 = cfg.reg[r1]
    w2 = cfg.reg[r2]
    if (isinstance(w1, Sealed) and isinstance(w2, Sealed)
            and w1.sigma == w2.sigma):
        c1, c2 = w1.inner, w2.inner
        cleared = cfg.with_regs({r1: lin_cons(c1)}).with_regs({r2: lin_cons(c2)})
        return xjump_result(c1, c2, cleared, ext, gc)
    return FAILED


def exec_instr(instr: Instr, cfg, ext: MachineExtension, gc: GlobalConstants):
    op = instr.op
    a = instr.args
    if op == "fail":
        return FAILED
    if op == "halt":
        return HALTED
    if op == "jmp":
        return exec_jmp(cfg, a[0])
    if op == "jnz":
        return exec_jnz(cfg, a[0], a[1])
    if op == "gettype":
        return exec_gettype(cfg, a[0], a[1])
    if op == "geta":
        return exec_geta(cfg, a[0], a[1])
    if op == "getb":
        return exec_getb(cfg, a[0], a[1])
    if op == "gete":
        return exec_gete(cfg, a[0], a[1])
    if op == "getp":
        return exec_getp(cfg, a[0], a[1])
    if op == "getlin":
        return exec_getlin(cfg, a[0], a[1])
    if op == "move":
        return exec_move(cfg, a[0], a[1])
    if op == "store":
        return exec_store(cfg, a[0], a[1], ext)
    if op == "load":
        return exec_load(cfg, a[0], a[1], ext)
    if op == "cca":
        return exec_cca(cfg, a[0], a[1], ext)
    if op == "restrict":
        return exec_restrict(cfg, a[0], a[1], ext)
    if op == "lt":
        return exec_lt(cfg, a[0], a[1], a[2])
    if op == "plus":
        return exec_plus(cfg, a[0], a[1], a[2])
    if op == "minus":
        return exec_minus(cfg, a[0], a[1], a[2])
    if op == "seta2b":
        return exec_seta2b(cfg, a[0], ext)
    if op == "xjmp":
        return exec_xjmp(cfg, a[0], a[1], ext, gc)
    if op == "cseal":
        return exec_cseal(cfg, a[0], a[1])
    if op == "split":
        return exec_split(cfg, a[0], a[1], a[2], a[3], ext)
    if op == "splice":
        return exec_splice(cfg, a[0], a[1], a[2], ext)
    raise AssertionError(f"unhandled instruction {instr!r}")


def step(cfg, ext: MachineExtension = NULL_EXTENSION,
         gc: GlobalConstants = None) -> StepOutcome:
    out = ext.recognize_call(cfg, gc)
    if out is not None:
        return out
    pc = cfg.reg[PC]
    if not (isinstance(pc, MemCap) and within_bounds(pc) and is_exec(pc)):
        return FAILED
    if pc.addr not in cfg.mem:
        return FAILED
    return exec_instr(dec_instr(cfg.mem[pc.addr]), cfg, ext, gc)


@dataclass(frozen=True)
class TraceRecord:
    step: int
    pc_addr: object
    instr: str
    outcome: str


def current_instr_repr(cfg, ext, gc) -> str:
    pc = cfg.reg[PC]
    if not isinstance(pc, MemCap):
        return "<no pc cap>"
    w = cfg.mem.get(pc.addr)
    return repr(dec_instr(w)) if w is not None else "<unmapped>"


def run(cfg, ext: MachineExtension = NULL_EXTENSION,
        gc: GlobalConstants = None, fuel: int = 100_000,
        trace: Optional[list] = None, check=None):
    """Iterate the step function for at most ``fuel`` steps.

    Returns (outcome, steps_taken).  ``trace``, when given, collects one
    TraceRecord per step.  ``check``, when given, is called on every
    intermediate configuration (paranoid-mode invariant hook).
    """
    steps = 0
    outcome = Running(cfg)
    while steps < fuel:
        cur = outcome.cfg
        instr_repr = current_instr_repr(cur, ext, gc) if trace is not None else ""
        nxt = step(cur, ext, gc)
        steps += 1
        if trace is not None:
            pc = cur.reg[PC]
            pc_addr = pc.addr if isinstance(pc, MemCap) else None
            trace.append(TraceRecord(steps, pc_addr, instr_repr, nxt.kind))
        if isinstance(nxt, (Failed, Halted)):
            return nxt, steps
        if check is not None:
            check(nxt.cfg)
        outcome = nxt
    return outcome, steps
