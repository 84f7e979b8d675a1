"""Components: well-formedness checking, linking, initial configurations.

A component owns a contiguous code block (with one zero guard pad on
each side), a data segment, import/export symbol lists, two seal-id
sets (return seals and closure seals) and the set of addresses it may
hand out linear capabilities over.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Optional

from .asm import CALL_LEN, call_cond, find_hidden_calls, format_word, parse_word
from .core import (
    INF, PC, RDATA, RSTK, GlobalConstants, Lin, MemCap, Perm, SealCap, Sealed,
    StkPtr, Word, fresh_registers, is_linear, non_exec, perm_leq,
)
from .machine import TargetConfig
from .source import SourceConfig


@dataclass(frozen=True)
class Component:
    ms_code: dict
    ms_data: dict
    imports: tuple = ()        # (addr, symbol) pairs
    exports: tuple = ()        # (symbol, word) pairs
    sig_ret: frozenset = frozenset()
    sig_clos: frozenset = frozenset()
    a_linear: frozenset = frozenset()
    mains: Optional[tuple] = None   # (main code word, main data word)

    def export_map(self):
        return dict(self.exports)


def is_program(c: Component) -> bool:
    return c.mains is not None and not c.imports


# ---------------------------------------------------------------------------
# Validation

def _diag(out, rule, loc, msg):
    out.append(f"{rule}\t{loc}\t{msg}")


def _code_bounds(code):
    """(pad_lo, b, e, pad_hi) when the domain is contiguous, else None."""
    if len(code) < 3:
        return None
    lo, hi = min(code), max(code)
    if set(code) != set(range(lo, hi + 1)):
        return None
    return lo, lo + 1, hi - 1, hi


def _linear_ranges(word, loc, out):
    """Yield (base, end, loc) for every linear capability inside a word."""
    if isinstance(word, Sealed):
        yield from _linear_ranges(word.inner, loc, out)
    elif is_linear(word) and isinstance(word, MemCap):
        yield (word.base, word.end, loc)
    elif is_linear(word):
        _diag(out, "comp-value", loc, f"token in static memory: {word!r}")


def validate_component(c: Component, gc: GlobalConstants) -> list:
    """All well-formedness premises, in order; empty list means ok."""
    out: list = []

    bounds = _code_bounds(c.ms_code)
    if bounds is None:
        _diag(out, "comp", "code", "code domain is not contiguous with pads")
        return out
    pad_lo, b, e, pad_hi = bounds
    if c.ms_code[pad_lo] != 0 or c.ms_code[pad_hi] != 0:
        _diag(out, "comp", f"addr {pad_lo},{pad_hi}", "guard pads must be 0")
    if set(c.ms_code) & set(c.ms_data):
        _diag(out, "comp", "code/data", "code and data domains overlap")
    if set(c.ms_data) & gc.ta:
        _diag(out, "comp", "data", "data overlaps trusted addresses")

    code_dom = set(c.ms_code)
    if code_dom <= gc.ta:
        trusted = True
    elif not (code_dom & gc.ta):
        trusted = False
        if c.sig_ret:
            _diag(out, "comp", "seals",
                  "untrusted component owns return seals")
    else:
        _diag(out, "comp", "code", "code partially trusted")
        trusted = False

    if c.sig_ret & c.sig_clos:
        _diag(out, "comp-code", "seals",
              f"return/closure seal overlap: {sorted(c.sig_ret & c.sig_clos)}")
    sigs = c.sig_ret | c.sig_clos
    if not sigs:
        _diag(out, "comp-code", "seals", "component owns no seals")
        return out
    sig_b, sig_e = min(sigs), max(sigs)
    if sigs != set(range(sig_b, sig_e + 1)):
        _diag(out, "comp-code", "seals", "owned seals are not contiguous")

    # rule A: code cells are integers or the component's own seal word
    seal_word = SealCap(sig_b, sig_e, sig_b)
    seal_addrs = []
    for a in range(b, e + 1):
        w = c.ms_code[a]
        if isinstance(w, int):
            continue
        if w == seal_word:
            seal_addrs.append(a)
        else:
            _diag(out, "comp-code", f"addr {a}",
                  f"code holds a non-seal capability: {w!r}")
    if not seal_addrs:
        _diag(out, "comp-code", "code", "no seal word in code")

    for v in find_hidden_calls(c.ms_code, gc.stk_base, gc.check_stk_base):
        _diag(out, "comp-code", f"addr {v.addr}",
              f"hidden call fragment (part {v.index} of a call at {v.start})")

    # rule B / d_sigma: every complete call inside ta claims one return seal
    claimed: dict = {}
    for a in range(b, e + 1 - CALL_LEN + 1):
        p = call_cond(c.ms_code, a, gc.stk_base, gc.check_stk_base)
        if p is None or not all(a + k in gc.ta for k in range(CALL_LEN)):
            continue
        sw = c.ms_code.get(a + p.off_pc)
        if not isinstance(sw, SealCap):
            _diag(out, "comp-code", f"addr {a}",
                  "call's pc-offset does not name a seal word")
            continue
        sigma = sw.cur + p.off_sigma
        if sigma not in c.sig_ret:
            _diag(out, "comp-code", f"addr {a}",
                  f"call claims seal {sigma} outside the return seals")
            continue
        if sigma in claimed:
            _diag(out, "comp-code", f"addr {a}",
                  f"seal {sigma} claimed twice (also by call at {claimed[sigma]})")
        else:
            claimed[sigma] = a
    for sigma in sorted(c.sig_ret - set(claimed)):
        _diag(out, "comp-code", "seals",
              f"return seal {sigma} claimed by no call")

    # comp-value over data, with a constructed linear-ownership partition
    nonlinear = (set(c.ms_code) | set(c.ms_data)) - c.a_linear
    owned: dict = {}

    def comp_value(w, loc, allow_sealed):
        if isinstance(w, int):
            return
        if isinstance(w, Sealed):
            if not allow_sealed:
                _diag(out, "comp-value", loc, "unexpected sealed word")
            elif is_linear(w.inner) and not isinstance(w.inner, MemCap):
                _diag(out, "comp-value", loc, "token under a seal")
            return
        if isinstance(w, MemCap):
            if not perm_leq(w.perm, Perm.RW):
                _diag(out, "comp-value", loc,
                      f"perm ⊑ rw violated: {w.perm.value}")
            if w.end == INF:
                _diag(out, "comp-value", loc, "unbounded capability")
                return
            rng = set(range(w.base, w.end + 1))
            if w.lin is Lin.LINEAR:
                if not rng:
                    _diag(out, "comp-value", loc, "empty linear capability")
                elif not rng <= c.a_linear:
                    _diag(out, "comp-value", loc,
                          "linear range outside a_linear")
            else:
                if not rng <= nonlinear:
                    _diag(out, "comp-value", loc,
                          "range escapes the component's nonlinear addresses")
            return
        _diag(out, "comp-value", loc, f"disallowed word: {w!r}")

    def claim_linear(w, loc):
        for lb, le, lloc in _linear_ranges(w, loc, out):
            for x in range(lb, le + 1) if le != INF else ():
                if x in owned:
                    _diag(out, "comp-value", lloc,
                          f"linear address {x} owned twice "
                          f"(also at {owned[x]})")
                else:
                    owned[x] = lloc

    for a in sorted(c.ms_data):
        comp_value(c.ms_data[a], f"addr {a}", allow_sealed=True)
        claim_linear(c.ms_data[a], f"addr {a}")

    # comp-export: sealed closures under an owned closure seal, or plain
    # nonlinear values
    for sym, w in c.exports:
        loc = f"export {sym}"
        if isinstance(w, Sealed):
            if w.sigma not in c.sig_clos:
                _diag(out, "comp-export", loc,
                      f"seal {w.sigma} not among the closure seals")
            inner = w.inner
            if isinstance(inner, MemCap):
                if inner.end != INF \
                        and not set(range(inner.base, inner.end + 1)) \
                        <= set(c.ms_code) | set(c.ms_data):
                    _diag(out, "comp-export", loc,
                          "closure range escapes the component")
                if is_linear(inner):
                    _diag(out, "comp-export", loc, "linear export")
            else:
                _diag(out, "comp-export", loc,
                      f"sealed export wraps {inner!r}")
        else:
            comp_value(w, loc, allow_sealed=False)
            if is_linear(w):
                _diag(out, "comp-export", loc, "linear export")

    # imports target data addresses; symbol sanity
    export_syms = {sym for sym, _ in c.exports}
    if len(export_syms) != len(c.exports):
        _diag(out, "comp", "exports", "duplicate export symbol")
    for addr, sym in c.imports:
        if addr in c.ms_code:
            _diag(out, "comp", f"import {sym}",
                  f"import resolves into code (addr {addr})")
        elif addr not in c.ms_data:
            _diag(out, "comp", f"import {sym}",
                  f"import address {addr} not in data")
        if sym in export_syms:
            _diag(out, "comp", f"import {sym}", "symbol both imported and exported")

    if c.mains is not None:
        export_words = [w for _, w in c.exports]
        for which, w in zip(("code", "data"), c.mains):
            if w not in export_words:
                _diag(out, "comp", f"main {which}", "main word not exported")

    return out


# ---------------------------------------------------------------------------
# Linking

class LinkError(ValueError):
    pass


def link(c1: Component, c2: Component) -> Component:
    """⋈: disjoint unions plus import resolution."""
    if set(c1.ms_code) & set(c2.ms_code):
        raise LinkError("code domains overlap")
    if set(c1.ms_data) & set(c2.ms_data):
        raise LinkError("data domains overlap")
    code = {**c1.ms_code, **c2.ms_code}
    data = {**c1.ms_data, **c2.ms_data}
    if set(code) & set(data):
        raise LinkError("linked code and data overlap")
    if c1.sig_ret & c2.sig_ret or c1.sig_clos & c2.sig_clos:
        raise LinkError("seal sets overlap")
    sig_ret = c1.sig_ret | c2.sig_ret
    sig_clos = c1.sig_clos | c2.sig_clos
    if sig_ret & sig_clos:
        raise LinkError("return and closure seals clash")
    if c1.a_linear & c2.a_linear:
        raise LinkError("linear address sets overlap")
    syms1 = {s for s, _ in c1.exports}
    syms2 = {s for s, _ in c2.exports}
    if syms1 & syms2:
        raise LinkError(f"duplicate exports: {sorted(syms1 & syms2)}")
    if c1.mains is not None and c2.mains is not None:
        raise LinkError("both sides carry mains")
    exports = dict(c1.exports)
    exports.update(c2.exports)
    imports = []
    for addr, sym in tuple(c1.imports) + tuple(c2.imports):
        if sym in exports:
            data[addr] = exports[sym]
        else:
            imports.append((addr, sym))
    return Component(code, data, tuple(imports), tuple(exports.items()),
                     sig_ret, sig_clos, c1.a_linear | c2.a_linear,
                     c1.mains if c1.mains is not None else c2.mains)


# ---------------------------------------------------------------------------
# Initial configurations

class ConfigError(ValueError):
    pass


def initial_config(p: Component, machine_kind: str,
                   b_stk: int, e_stk: int):
    """⇝: the starting configuration of a program.

    On the target the stack is ordinary memory reached through a linear
    RW capability; on the source it is the separate stack segment
    reached through a stack-pointer token.
    """
    if p.imports:
        raise ConfigError("program has unresolved imports")
    if p.mains is None:
        raise ConfigError("program has no mains")
    wc, wd = p.mains
    if not (isinstance(wc, Sealed) and isinstance(wd, Sealed)):
        raise ConfigError("mains must be a sealed pair")
    if wc.sigma != wd.sigma:
        raise ConfigError("main seals differ")
    if not non_exec(wd.inner):
        raise ConfigError("main data half is executable")
    if b_stk > e_stk:
        raise ConfigError("empty stack range")
    static = set(p.ms_code) | set(p.ms_data)
    if static & set(range(b_stk - 1, e_stk + 2)):
        raise ConfigError("stack (with guards) overlaps code or data")

    reg = fresh_registers()
    reg[PC] = wc.inner
    reg[RDATA] = wd.inner
    mem = {**p.ms_code, **p.ms_data, b_stk - 1: 0, e_stk + 1: 0}
    if machine_kind == "target":
        reg[RSTK] = MemCap(Perm.RW, Lin.LINEAR, b_stk, e_stk, e_stk)
        for x in range(b_stk, e_stk + 1):
            mem[x] = 0
        return TargetConfig(mem, reg)
    if machine_kind == "source":
        reg[RSTK] = StkPtr(Perm.RW, b_stk, e_stk, e_stk)
        ms_stk = {x: 0 for x in range(b_stk, e_stk + 1)}
        return SourceConfig(mem, reg, (), ms_stk)
    raise ConfigError(f"unknown machine kind {machine_kind!r}")


def plug(ctx: Component, comp: Component, machine_kind: str,
         b_stk: int, e_stk: int):
    p = link(ctx, comp)
    if not is_program(p):
        raise ConfigError("link is not a program")
    return initial_config(p, machine_kind, b_stk, e_stk)


# ---------------------------------------------------------------------------
# Container format

def _parse_sigs(s):
    s = s.strip()
    if not s:
        return frozenset()
    got = set()
    for part in s.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            got |= set(range(int(lo), int(hi) + 1))
        elif part:
            got.add(int(part))
    return frozenset(got)


def _fmt_sigs(s):
    return ",".join(str(x) for x in sorted(s))


_SECTION_RE = re.compile(r"^\[(\w+)(?:\s+(.*?))?\]$")


def parse_component(text: str) -> Component:
    code: dict = {}
    data: dict = {}
    imports: list = []
    exports: list = []
    sig_ret = frozenset()
    sig_clos = frozenset()
    a_linear: set = set()
    mains: list = []
    section = None
    code_next = None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split(";", 1)[0].strip() if not raw.strip().startswith("[") \
            else raw.strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            section, attrs = m.group(1), m.group(2) or ""
            if section == "code":
                am = re.search(r"base=(-?\d+)", attrs)
                if not am:
                    raise ValueError(f"line {lineno}: [code] needs base=")
                code_next = int(am.group(1)) - 1  # pad precedes the base
            elif section == "seals":
                ret_m = re.search(r"ret=([0-9.,]*)", attrs)
                clos_m = re.search(r"clos=([0-9.,]*)", attrs)
                sig_ret = _parse_sigs(ret_m.group(1) if ret_m else "")
                sig_clos = _parse_sigs(clos_m.group(1) if clos_m else "")
            continue
        if section == "code":
            code[code_next] = parse_word(line)
            code_next += 1
        elif section == "data":
            addr, lit = line.split(None, 1)
            data[int(addr)] = parse_word(lit)
        elif section == "imports":
            sym, addr = line.split()
            imports.append((int(addr), sym))
        elif section == "exports":
            sym, lit = line.split(None, 1)
            exports.append((sym, parse_word(lit)))
        elif section == "linear":
            if ".." in line:
                lo, hi = line.split("..")
                a_linear |= set(range(int(lo), int(hi) + 1))
            else:
                a_linear.add(int(line))
        elif section == "main":
            mains.append(parse_word(line))
        else:
            raise ValueError(f"line {lineno}: content outside a section")

    if mains and len(mains) != 2:
        raise ValueError("[main] needs exactly two words")
    return Component(code, data, tuple(imports), tuple(exports),
                     sig_ret, sig_clos, frozenset(a_linear),
                     tuple(mains) if mains else None)


def format_component(c: Component) -> str:
    lines = []
    if c.ms_code:
        b = min(c.ms_code) + 1
        lines.append(f"[code base={b}]")
        for a in sorted(c.ms_code):
            lines.append(format_word(c.ms_code[a]))
    lines.append("[data]")
    for a in sorted(c.ms_data):
        lines.append(f"{a}\t{format_word(c.ms_data[a])}")
    if c.imports:
        lines.append("[imports]")
        for addr, sym in c.imports:
            lines.append(f"{sym}\t{addr}")
    if c.exports:
        lines.append("[exports]")
        for sym, w in c.exports:
            lines.append(f"{sym}\t{format_word(w)}")
    lines.append(f"[seals ret={_fmt_sigs(c.sig_ret)} clos={_fmt_sigs(c.sig_clos)}]")
    if c.a_linear:
        lines.append("[linear]")
        for a in sorted(c.a_linear):
            lines.append(str(a))
    if c.mains is not None:
        lines.append("[main]")
        lines.append(format_word(c.mains[0]))
        lines.append(format_word(c.mains[1]))
    return "\n".join(lines) + "\n"
