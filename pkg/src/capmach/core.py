"""Shared domain types for both capability machines.

Words are either plain Python ints or one of the capability dataclasses
below.  Stack-pointer and return-pointer tokens are source-machine-only
shapes; nothing here enforces that (the source configuration owns that
distinction), but the target machine can never fabricate them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

INF = math.inf

Addr = int
SealId = int
Bound = Union[int, float]  # finite address/seal id, or INF


class Perm(Enum):
    P0 = "0"
    R = "r"
    RW = "rw"
    RX = "rx"
    RWX = "rwx"

    def __repr__(self):
        return self.value


class Lin(Enum):
    LINEAR = "linear"
    NORMAL = "normal"

    def __repr__(self):
        return self.value


# Hasse diagram edges of the permission hierarchy; perm_leq is its
# reflexive-transitive closure.
_PERM_EDGES = {
    (Perm.P0, Perm.R),
    (Perm.R, Perm.RW),
    (Perm.R, Perm.RX),
    (Perm.RW, Perm.RWX),
    (Perm.RX, Perm.RWX),
}


def _close():
    leq = {(p, p) for p in Perm} | _PERM_EDGES
    changed = True
    while changed:
        changed = False
        for (a, b) in list(leq):
            for (c, d) in list(leq):
                if b == c and (a, d) not in leq:
                    leq.add((a, d))
                    changed = True
    return frozenset(leq)


_PERM_LEQ = _close()


def perm_leq(p: Perm, q: Perm) -> bool:
    return (p, q) in _PERM_LEQ


def read_allowed(p: Perm) -> bool:
    return p in (Perm.RWX, Perm.RW, Perm.RX, Perm.R)


def write_allowed(p: Perm) -> bool:
    return p in (Perm.RWX, Perm.RW)


@dataclass(frozen=True)
class MemCap:
    perm: Perm
    lin: Lin
    base: Addr
    end: Bound
    addr: Addr

    def __repr__(self):
        return f"cap({self.perm.value},{self.lin.value},{self.base},{self.end},{self.addr})"


@dataclass(frozen=True)
class SealCap:
    base: SealId
    end: Bound
    cur: SealId

    def __repr__(self):
        return f"seal({self.base},{self.end},{self.cur})"


@dataclass(frozen=True)
class StkPtr:
    perm: Perm
    base: Addr
    end: Bound
    addr: Addr

    def __repr__(self):
        return f"stkptr({self.perm.value},{self.base},{self.end},{self.addr})"


@dataclass(frozen=True)
class RetPtrData:
    base: Addr
    end: Addr

    def __repr__(self):
        return f"retptrdata({self.base},{self.end})"


@dataclass(frozen=True)
class RetPtrCode:
    base: Addr
    end: Addr
    addr: Addr

    def __repr__(self):
        return f"retptrcode({self.base},{self.end},{self.addr})"


SealableCap = Union[MemCap, SealCap, StkPtr, RetPtrData, RetPtrCode]


@dataclass(frozen=True)
class Sealed:
    sigma: SealId
    inner: SealableCap

    def __repr__(self):
        return f"sealed({self.sigma},{self.inner!r})"


Cap = Union[SealableCap, Sealed]
Word = Union[int, Cap]

_SEALABLE = (MemCap, SealCap, StkPtr, RetPtrData, RetPtrCode)


def is_sealable(w: Word) -> bool:
    return isinstance(w, _SEALABLE)


def is_cap(w: Word) -> bool:
    return isinstance(w, _SEALABLE + (Sealed,))


def is_linear(w: Word) -> bool:
    if isinstance(w, MemCap):
        return w.lin is Lin.LINEAR
    if isinstance(w, (StkPtr, RetPtrData)):
        return True
    if isinstance(w, Sealed):
        return is_linear(w.inner)
    return False


def lin_cons(w: Word) -> Word:
    return 0 if is_linear(w) else w


def lin_cons_perm(p: Perm, w: Word) -> bool:
    return write_allowed(p) if is_linear(w) else True


def is_exec(w: Word) -> bool:
    return isinstance(w, MemCap) and w.perm in (Perm.RWX, Perm.RX)


def non_exec(w: Word) -> bool:
    return not is_exec(w)


def within_bounds(sc: Word) -> bool:
    if isinstance(sc, (MemCap, StkPtr)):
        return sc.base <= sc.addr <= sc.end
    if isinstance(sc, SealCap):
        return sc.base <= sc.cur <= sc.end
    return False


def non_zero(w: Word) -> bool:
    return not (isinstance(w, int) and w == 0)


# ---------------------------------------------------------------------------
# Register names

PC = "pc"
RRETDATA = "rretdata"
RRETCODE = "rretcode"
RSTK = "rstk"
RDATA = "rdata"
RTMP1 = "rtmp1"
RTMP2 = "rtmp2"

GEN_REGS = 16

REGISTERS = (
    PC, RRETDATA, RRETCODE, RSTK, RDATA, RTMP1, RTMP2,
) + tuple(f"r{i}" for i in range(GEN_REGS))

_REG_INDEX = {r: i for i, r in enumerate(REGISTERS)}


def is_register(name) -> bool:
    return name in _REG_INDEX


def fresh_registers(fill: Word = 0) -> dict:
    return {r: fill for r in REGISTERS}


# ---------------------------------------------------------------------------
# Global constants threaded through the source semantics

@dataclass(frozen=True)
class GlobalConstants:
    ta: frozenset
    stk_base: Addr
    # Harness knob: when False, call recognition and expansion use the
    # variant macro whose stack-base check is neutralized.
    check_stk_base: bool = True


# ---------------------------------------------------------------------------
# Field encodings

_PERM_ENC = {Perm.P0: 0, Perm.R: 1, Perm.RW: 2, Perm.RX: 3, Perm.RWX: 4}
_PERM_DEC = {v: k for k, v in _PERM_ENC.items()}


def enc_perm(p: Perm) -> int:
    return _PERM_ENC[p]


def dec_perm(n: int) -> Perm:
    # Total: anything outside the table decodes to the bottom permission.
    return _PERM_DEC.get(n, Perm.P0)


def enc_lin(l: Lin) -> int:
    return 1 if l is Lin.LINEAR else 0


TYPE_INT = 0
TYPE_MEMCAP = 1
TYPE_SEAL = 2
TYPE_SEALED = 3


def enc_type(w: Word) -> int:
    """Type code of a word.

    Stack tokens and return-pointer tokens report the memory-capability
    code: they stand in for the capabilities they represent.  The same
    function serves both machines (they agree on all shared words).
    """
    if isinstance(w, int):
        return TYPE_INT
    if isinstance(w, (MemCap, StkPtr, RetPtrData, RetPtrCode)):
        return TYPE_MEMCAP
    if isinstance(w, SealCap):
        return TYPE_SEAL
    if isinstance(w, Sealed):
        return TYPE_SEALED
    raise TypeError(f"not a word: {w!r}")


# ---------------------------------------------------------------------------
# Instructions

@dataclass(frozen=True)
class Instr:
    op: str
    args: tuple = ()

    def __repr__(self):
        if not self.args:
            return self.op
        return self.op + " " + " ".join(str(a) for a in self.args)


# op name -> operand signature ("r" register, "n" register-or-immediate)
OPCODES = {
    "fail": "",
    "halt": "",
    "jmp": "r",
    "jnz": "rn",
    "gettype": "rr",
    "geta": "rr",
    "getb": "rr",
    "gete": "rr",
    "getp": "rr",
    "getlin": "rr",
    "move": "rn",
    "store": "rr",
    "load": "rr",
    "cca": "rn",
    "restrict": "rn",
    "lt": "rnn",
    "plus": "rnn",
    "minus": "rnn",
    "seta2b": "r",
    "xjmp": "rr",
    "cseal": "rr",
    "split": "rrrn",
    "splice": "rrr",
}

_OPLIST = tuple(OPCODES)
_OPIDX = {op: i for i, op in enumerate(_OPLIST)}
_NOPS = len(_OPLIST)

IMM_RANGE = 2 ** 31
_NREG = len(REGISTERS)
# Operand field radix: register indexes first, then zigzagged immediates.
_FIELD_RADIX = _NREG + 2 * IMM_RANGE

FAIL = Instr("fail")
HALT = Instr("halt")


class EncodingError(ValueError):
    pass


def mk_instr(op: str, *args) -> Instr:
    sig = OPCODES.get(op)
    if sig is None:
        raise EncodingError(f"unknown instruction {op!r}")
    if len(args) != len(sig):
        raise EncodingError(f"{op} expects {len(sig)} operands, got {len(args)}")
    for kind, a in zip(sig, args):
        if kind == "r":
            if not is_register(a):
                raise EncodingError(f"{op}: {a!r} is not a register")
        else:
            if not (is_register(a) or isinstance(a, int)):
                raise EncodingError(f"{op}: {a!r} is not a register or immediate")
    return Instr(op, tuple(args))


def _enc_field(a) -> int:
    if is_register(a):
        return _REG_INDEX[a]
    z = 2 * a if a >= 0 else -2 * a - 1
    if z >= 2 * IMM_RANGE:
        raise EncodingError(f"immediate {a} out of range")
    return _NREG + z


def enc_instr(i: Instr) -> int:
    sig = OPCODES.get(i.op)
    if sig is None or len(sig) != len(i.args):
        raise EncodingError(f"malformed instruction {i!r}")
    val = 0
    for a in reversed(i.args):
        val = val * _FIELD_RADIX + _enc_field(a)
    return val * _NOPS + _OPIDX[i.op]


def dec_instr(w: Word) -> Instr:
    """Total decoder: capabilities and non-image integers decode to fail."""
    if not isinstance(w, int) or w < 0:
        return FAIL
    op = _OPLIST[w % _NOPS]
    rest = w // _NOPS
    sig = OPCODES[op]
    args = []
    for kind in sig:
        f = rest % _FIELD_RADIX
        rest //= _FIELD_RADIX
        if f < _NREG:
            args.append(REGISTERS[f])
        else:
            if kind == "r":
                return FAIL
            z = f - _NREG
            args.append(z // 2 if z % 2 == 0 else -(z + 1) // 2)
    if rest != 0:
        return FAIL
    return Instr(op, tuple(args))
