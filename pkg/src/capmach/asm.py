"""Assembler, disassembler, the secure-call macro, hidden-call detection.

The call macro expands to a fixed 26-instruction sequence; the source
machine recognizes that exact sequence in memory (see ``call_cond``) and
reinterprets it as one atomic step when it sits at trusted addresses.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .core import (
    INF, PC, RDATA, RRETCODE, RRETDATA, RSTK, RTMP1, RTMP2, Instr, Lin,
    MemCap, Perm, RetPtrCode, RetPtrData, SealCap, Sealed, StkPtr, Word,
    dec_instr, enc_instr, is_register, mk_instr,
)

CALL_LEN = 26
RET_PT_OFFSET = 15  # first instruction of the macro's return code
_XJMP_INDEX = 14
_OFF_PC_INDEX = 6
_OFF_SIGMA_INDEX = 8
_FAIL_INDEX = 22


@dataclass(frozen=True)
class CallParams:
    off_pc: int
    off_sigma: int
    r1: str
    r2: str


def _call_instrs(off_pc, off_sigma, r1, r2, stk_base, check_stk_base=True):
    # The raw listing, no operand validation (recognition needs to match
    # sequences with arbitrary registers; the call rule rejects rtmp1).
    base_check = (
        Instr("minus", (RTMP1, RTMP1, stk_base)) if check_stk_base
        else Instr("minus", (RTMP1, RTMP1, RTMP1))
    )
    return [
        Instr("move", (RTMP1, 42)),
        Instr("store", (RSTK, RTMP1)),
        Instr("cca", (RSTK, -1)),
        Instr("geta", (RTMP1, RSTK)),
        Instr("split", (RSTK, RRETDATA, RSTK, RTMP1)),
        Instr("move", (RTMP1, PC)),
        Instr("cca", (RTMP1, off_pc - 5)),
        Instr("load", (RTMP1, RTMP1)),
        Instr("cca", (RTMP1, off_sigma)),
        Instr("cseal", (RRETDATA, RTMP1)),
        Instr("move", (RRETCODE, PC)),
        Instr("cca", (RRETCODE, 5)),
        Instr("cseal", (RRETCODE, RTMP1)),
        Instr("move", (RTMP1, 0)),
        Instr("xjmp", (r1, r2)),
        # return code
        Instr("getb", (RTMP1, RSTK)),
        base_check,
        Instr("move", (RTMP2, PC)),
        Instr("cca", (RTMP2, 5)),
        Instr("jnz", (RTMP2, RTMP1)),
        Instr("cca", (RTMP2, 1)),
        Instr("jmp", (RTMP2,)),
        Instr("fail", ()),
        Instr("splice", (RSTK, RSTK, RDATA)),
        Instr("cca", (RSTK, 1)),
        Instr("move", (RTMP2, 0)),
    ]


def expand_scall(params: CallParams, stk_base: int,
                 check_stk_base: bool = True) -> list:
    """The 26-instruction expansion of call_{off_pc,off_sigma}(r1,r2)."""
    if params.r1 in (RTMP1, PC) or params.r2 in (RTMP1, PC):
        raise ValueError("call operands may not be rtmp1 or pc")
    if params.off_pc < 0 or params.off_sigma < 0:
        raise ValueError("call offsets must be natural numbers")
    return _call_instrs(params.off_pc, params.off_sigma,
                        params.r1, params.r2, stk_base, check_stk_base)


def call_cond(mem, a: int, stk_base: int,
              check_stk_base: bool = True) -> Optional[CallParams]:
    """Recognize the call expansion starting at address ``a``.

    Parameters are recovered from the fixed positions (pc-offset at
    index 6, seal offset at index 8, the xjmp register pair at 14) and
    the whole window is then checked cell-by-cell against the expansion.
    """
    cells = []
    for i in range(CALL_LEN):
        w = mem.get(a + i)
        if not isinstance(w, int):
            return None
        cells.append(dec_instr(w))
    i6 = cells[_OFF_PC_INDEX]
    i8 = cells[_OFF_SIGMA_INDEX]
    i14 = cells[_XJMP_INDEX]
    if not (i6.op == "cca" and i6.args[0] == RTMP1 and isinstance(i6.args[1], int)):
        return None
    if not (i8.op == "cca" and i8.args[0] == RTMP1 and isinstance(i8.args[1], int)):
        return None
    if i14.op != "xjmp":
        return None
    off_pc = i6.args[1] + 5
    off_sigma = i8.args[1]
    if off_pc < 0 or off_sigma < 0:
        return None
    r1, r2 = i14.args
    expect = _call_instrs(off_pc, off_sigma, r1, r2, stk_base, check_stk_base)
    if cells != expect:
        return None
    return CallParams(off_pc, off_sigma, r1, r2)


# ---------------------------------------------------------------------------
# Hidden-call detection

def _part_template(i, instr, stk_base, check_stk_base=True):
    """Match ``instr`` against call-part ``i``; return the parameter
    bindings it induces, or None on mismatch."""
    probe = _call_instrs(7, 0, "r0", "r0", stk_base, check_stk_base)[i]
    if i == _OFF_PC_INDEX:
        if instr.op == "cca" and instr.args[0] == RTMP1 \
                and isinstance(instr.args[1], int) and instr.args[1] + 5 >= 0:
            return {"off_pc": instr.args[1] + 5}
        return None
    if i == _OFF_SIGMA_INDEX:
        if instr.op == "cca" and instr.args[0] == RTMP1 \
                and isinstance(instr.args[1], int) and instr.args[1] >= 0:
            return {"off_sigma": instr.args[1]}
        return None
    if i == _XJMP_INDEX:
        if instr.op == "xjmp":
            return {"r1": instr.args[0], "r2": instr.args[1]}
        return None
    return {} if instr == probe else None


@dataclass(frozen=True)
class HiddenCallViolation:
    start: int       # first address of the would-be call sequence
    index: int       # the part index that triggered the match
    addr: int        # address of the triggering cell


def find_hidden_calls(code, stk_base: int,
                      check_stk_base: bool = True) -> list:
    """Report partial or overhanging call fragments in a code segment.

    A cell that looks like call part ``i`` is fine if the aligned
    26-cell window is fully in the segment and consistent (a complete
    call) or some in-segment cell of the window contradicts it.
    """
    violations = []
    for addr in sorted(code):
        w = code[addr]
        if not isinstance(w, int):
            continue
        instr = dec_instr(w)
        for i in range(CALL_LEN):
            if _part_template(i, instr, stk_base, check_stk_base) is None:
                continue
            start = addr - i
            binds = {}
            consistent = True
            full = True
            for j in range(CALL_LEN):
                cell = code.get(start + j)
                if cell is None or not isinstance(cell, int):
                    full = full and cell is not None
                    if cell is not None:
                        consistent = False
                        break
                    continue
                b = _part_template(j, dec_instr(cell), stk_base, check_stk_base)
                if b is None:
                    consistent = False
                    break
                for k, v in b.items():
                    if k in binds and binds[k] != v:
                        consistent = False
                        break
                    binds[k] = v
                if not consistent:
                    break
            if consistent and not full:
                violations.append(HiddenCallViolation(start, i, addr))
    return violations


# ---------------------------------------------------------------------------
# Word literal syntax (shared with the component container format)

_PERM_NAMES = {p.value.upper(): p for p in Perm}
_PERM_NAMES.update({p.value: p for p in Perm})


def _bound(s):
    return INF if s == "inf" else int(s)


def _bound_str(b):
    return "inf" if b == INF else str(b)


def parse_word(text: str) -> Word:
    text = text.strip()
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    kind, _, rest = text.partition(":")
    if kind == "int":
        return int(rest)
    if kind == "cap":
        p, l, b, e, a = rest.split(",")
        return MemCap(_PERM_NAMES[p], Lin(l), int(b), _bound(e), int(a))
    if kind == "seal":
        b, e, c = rest.split(",")
        return SealCap(int(b), _bound(e), int(c))
    if kind == "stkptr":
        p, b, e, a = rest.split(",")
        return StkPtr(_PERM_NAMES[p], int(b), _bound(e), int(a))
    if kind == "retptrcode":
        b, e, a = rest.split(",")
        return RetPtrCode(int(b), int(e), int(a))
    if kind == "retptrdata":
        b, e = rest.split(",")
        return RetPtrData(int(b), int(e))
    if kind == "sealed":
        m = re.fullmatch(r"(\d+),\((.*)\)", rest)
        if not m:
            raise ValueError(f"bad sealed literal: {text!r}")
        inner = parse_word(m.group(2))
        if isinstance(inner, (int, Sealed)):
            raise ValueError(f"sealed wraps a sealable capability: {text!r}")
        return Sealed(int(m.group(1)), inner)
    raise ValueError(f"bad word literal: {text!r}")


def format_word(w: Word) -> str:
    if isinstance(w, int):
        return f"int:{w}"
    if isinstance(w, MemCap):
        return f"cap:{w.perm.value},{w.lin.value},{w.base},{_bound_str(w.end)},{w.addr}"
    if isinstance(w, SealCap):
        return f"seal:{w.base},{_bound_str(w.end)},{w.cur}"
    if isinstance(w, StkPtr):
        return f"stkptr:{w.perm.value},{w.base},{_bound_str(w.end)},{w.addr}"
    if isinstance(w, RetPtrCode):
        return f"retptrcode:{w.base},{w.end},{w.addr}"
    if isinstance(w, RetPtrData):
        return f"retptrdata:{w.base},{w.end}"
    if isinstance(w, Sealed):
        return f"sealed:{w.sigma},({format_word(w.inner)})"
    raise TypeError(f"not a word: {w!r}")


# ---------------------------------------------------------------------------
# Textual assembler

class AsmError(ValueError):
    def __init__(self, msg, line=None):
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


@dataclass
class AsmResult:
    segment: dict
    labels: dict
    imports: list = field(default_factory=list)   # (addr, symbol)
    exports: list = field(default_factory=list)   # (symbol, Word)


_LABEL_RE = re.compile(r"^([A-Za-z_][\w.]*):\s*(.*)$")
_IMM_RE = re.compile(r"^(@?)([A-Za-z_][\w.]*)([+-]\d+)?$")


class _Item:
    def __init__(self, kind, line, **kw):
        self.kind = kind
        self.line = line
        self.__dict__.update(kw)


def _parse_items(src):
    items = []
    for lineno, raw in enumerate(src.splitlines(), 1):
        line = raw.split(";", 1)[0].strip()
        while line:
            m = _LABEL_RE.match(line)
            if m:
                items.append(_Item("label", lineno, name=m.group(1)))
                line = m.group(2).strip()
                continue
            items.append(_Item("stmt", lineno, text=line))
            line = ""
    return items


def _size_of(stmt):
    parts = stmt.text.split()
    head = parts[0]
    if head == ".org":
        return None
    if head in (".import", ".export"):
        return 0
    if head in (".word", ".seal"):
        return 1
    if head == "call":
        return CALL_LEN
    return 1


def assemble(src: str, stk_base: int = 0,
             check_stk_base: bool = True) -> AsmResult:
    """Assemble the textual format into a memory segment.

    One instruction per line; ``;`` comments; ``name:`` labels;
    directives .org/.word/.seal/.import/.export; the ``call`` macro
    occupies 26 cells and may name its seal by label (pc-offset is then
    computed relative to the macro's first address).
    """
    items = _parse_items(src)

    labels = {}
    loc = 0
    for it in items:
        if it.kind == "label":
            if it.name in labels:
                raise AsmError(f"duplicate label {it.name!r}", it.line)
            labels[it.name] = loc
            continue
        parts = it.text.split()
        if parts[0] == ".org":
            try:
                loc = int(parts[1])
            except (IndexError, ValueError):
                raise AsmError(".org needs an address", it.line)
        else:
            size = _size_of(it)
            it.addr = loc
            loc += size

    def resolve(tok, line, at):
        m = _IMM_RE.match(tok)
        if m:
            rel, name, off = m.groups()
            if name not in labels:
                raise AsmError(f"unresolved label {name!r}", line)
            v = labels[name] + (int(off) if off else 0)
            return v - at if rel else v
        try:
            return int(tok)
        except ValueError:
            raise AsmError(f"bad immediate {tok!r}", line)

    def operand(tok, line, at):
        if is_register(tok):
            return tok
        return resolve(tok, line, at)

    result = AsmResult({}, labels)
    seg = result.segment

    def emit(addr, word, line):
        if addr in seg:
            raise AsmError(f"address {addr} assembled twice", line)
        seg[addr] = word

    for it in items:
        if it.kind == "label":
            continue
        parts = it.text.split()
        head = parts[0]
        if head == ".org":
            continue
        if head == ".word":
            try:
                emit(it.addr, parse_word(it.text.split(None, 1)[1]), it.line)
            except (IndexError, ValueError) as e:
                raise AsmError(str(e), it.line)
            continue
        if head == ".seal":
            if len(parts) != 4:
                raise AsmError(".seal needs base end cur", it.line)
            emit(it.addr, SealCap(resolve(parts[1], it.line, it.addr),
                                  _bound(parts[2]),
                                  resolve(parts[3], it.line, it.addr)),
                 it.line)
            continue
        if head == ".import":
            if len(parts) != 3 or not parts[2].startswith("@"):
                raise AsmError(".import needs: .import sym @addr", it.line)
            result.imports.append(
                (resolve(parts[2][1:], it.line, 0), parts[1]))
            continue
        if head == ".export":
            m = re.match(r"\.export\s+(\S+)\s*=\s*(.+)$", it.text)
            if not m:
                raise AsmError(".export needs: .export sym = value", it.line)
            val = m.group(2).strip()
            if val in labels:
                word: Word = labels[val]
            else:
                try:
                    word = parse_word(val)
                except ValueError as e:
                    raise AsmError(str(e), it.line)
            result.exports.append((m.group(1), word))
            continue
        if head == "call":
            if len(parts) != 5:
                raise AsmError("call needs: call seal off_sigma r1 r2", it.line)
            seal_tok, off_s, r1, r2 = parts[1:]
            if seal_tok in labels:
                off_pc = labels[seal_tok] - it.addr
            else:
                off_pc = resolve(seal_tok, it.line, it.addr)
            if off_pc < 0:
                raise AsmError("call seal must sit at or after the macro",
                               it.line)
            params = CallParams(off_pc, resolve(off_s, it.line, it.addr),
                                r1, r2)
            try:
                instrs = expand_scall(params, stk_base, check_stk_base)
            except ValueError as e:
                raise AsmError(str(e), it.line)
            for k, ins in enumerate(instrs):
                emit(it.addr + k, enc_instr(ins), it.line)
            continue
        # plain instruction
        try:
            args = [operand(t, it.line, it.addr) for t in parts[1:]]
            instr = mk_instr(head, *args)
            emit(it.addr, enc_instr(instr), it.line)
        except ValueError as e:
            raise AsmError(str(e), it.line)

    return result


def disassemble(seg, stk_base: Optional[int] = None,
                check_stk_base: bool = True) -> str:
    """Per-cell decode of a memory segment.

    Call-macro runs are folded to one ``call`` line when ``stk_base``
    is supplied; words with no instruction reading print as data.
    """
    lines = []
    addrs = sorted(seg)
    prev = None
    i = 0
    while i < len(addrs):
        a = addrs[i]
        if prev is None or a != prev + 1:
            lines.append(f".org {a}")
        if stk_base is not None:
            p = call_cond(seg, a, stk_base, check_stk_base)
            if p is not None and all(a + k in seg for k in range(CALL_LEN)):
                lines.append(f"call {p.off_pc} {p.off_sigma} {p.r1} {p.r2}")
                prev = a + CALL_LEN - 1
                while i < len(addrs) and addrs[i] <= prev:
                    i += 1
                continue
        w = seg[a]
        if isinstance(w, int):
            instr = dec_instr(w)
            if instr.op == "fail" and w != enc_instr(instr):
                lines.append(f".word {format_word(w)}")
            else:
                lines.append(repr(instr))
        elif isinstance(w, SealCap):
            lines.append(f".seal {w.base} {_bound_str(w.end)} {w.cur}")
        else:
            lines.append(f".word {format_word(w)}")
        prev = a
        i += 1
    return "\n".join(lines) + "\n"


def format_symbols(labels: dict) -> str:
    return "".join(f"{name}\t{addr}\n" for name, addr in sorted(labels.items()))
