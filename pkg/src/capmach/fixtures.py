"""Built-in program corpus and attack scenarios.

Every fixture pairs a trusted component (its code is the trusted
address set) with a context.  Addresses follow one layout: trusted code
near 100 with data at 300, context code near 500 with data at 700, the
stack at [1000, 1063] with guard cells just outside.
"""

from __future__ import annotations

from dataclasses import dataclass

from .asm import assemble
from .components import Component
from .core import GlobalConstants, Lin, MemCap, Perm, SealCap, Sealed
from .harness import DiffVerdict, RunReport, run_diff

STK_BASE = 1000
STK_END = 1063

T_CODE = 100
T_DATA = 300
C_CODE = 500
C_DATA = 700


def std_gc(trusted: Component, check_stk_base: bool = True) -> GlobalConstants:
    return GlobalConstants(frozenset(trusted.ms_code), STK_BASE, check_stk_base)


def _pad(segment: dict) -> dict:
    b, e = min(segment), max(segment)
    assert set(segment) == set(range(b, e + 1)), "code must be contiguous"
    return {b - 1: 0, **segment, e + 1: 0}


def _seal(sigma, inner):
    return Sealed(sigma, inner)


def _rx(b, e, a):
    return MemCap(Perm.RX, Lin.NORMAL, b, e, a)


def _rw(b, e, a):
    return MemCap(Perm.RW, Lin.NORMAL, b, e, a)


def _asm(base, text, check_stk_base=True):
    return assemble(f".org {base}\n{text}", STK_BASE, check_stk_base)


def _code_cap(res, label):
    b, e = min(res.segment), max(res.segment)
    return _rx(b, e, res.labels[label])


# ---------------------------------------------------------------------------
# Context building blocks

def minimal_context() -> Component:
    """Just the mandatory seal word; no exports, no behaviour."""
    return Component(_pad({C_CODE: SealCap(9, 9, 9)}), {},
                     sig_clos=frozenset({9}))


def _context(text, data, exports, mains=None, imports=(),
             a_linear=frozenset()):
    res = _asm(C_CODE, text + "\ncsealw: .seal 9 9 9")
    comp = Component(_pad(res.segment), dict(data), tuple(imports),
                     tuple(exports(res)), frozenset(), frozenset({9}),
                     frozenset(a_linear),
                     mains(res) if mains else None)
    return comp


def context_cb(body: str) -> Component:
    """A context exporting one callback closure with body ``body``."""
    return _context(
        f"cb:\n{body}\n  xjmp rretcode rretdata",
        {C_DATA: 0},
        lambda res: [("cb_code", _seal(9, _code_cap(res, "cb"))),
                     ("cb_data", _seal(9, _rw(C_DATA, C_DATA, C_DATA)))])


# ---------------------------------------------------------------------------
# Trusted building blocks

def _trusted(text, data, sig_ret, sig_clos, exports, mains=None, imports=()):
    res = _asm(T_CODE, text)
    return Component(_pad(res.segment), dict(data), tuple(imports),
                     tuple(exports(res)), frozenset(sig_ret),
                     frozenset(sig_clos), frozenset(),
                     mains(res) if mains else None)


def _main_pair(res, entry, data_lo, data_hi, sigma):
    return (_seal(sigma, _code_cap(res, entry)),
            _seal(sigma, _rw(data_lo, data_hi, data_lo)))


def trusted_simple(body: str) -> Component:
    """A trusted main with no calls (clos seal only)."""
    def exports(res):
        mc, md = _main_pair(res, "entry", T_DATA, T_DATA, 2)
        return [("main_code", mc), ("main_data", md)]
    return _trusted(f"entry:\n{body}\nsealw: .seal 2 2 2",
                    {T_DATA: 0}, (), {2}, exports,
                    mains=lambda res: _main_pair(res, "entry", T_DATA, T_DATA, 2))


_LOAD_CB = """\
  move r3 rdata
  load r1 r3
  cca r3 1
  load r2 r3"""


def trusted_one_call(pre: str = "", post: str = "") -> Component:
    """Trusted main: load the imported callback pair, call it, halt."""
    text = f"""\
entry:
{pre}{_LOAD_CB}
  call sealw 0 r1 r2
{post}  halt
sealw: .seal 1 2 1
"""
    def exports(res):
        mc, md = _main_pair(res, "entry", T_DATA, T_DATA + 1, 2)
        return [("main_code", mc), ("main_data", md)]
    return _trusted(text, {T_DATA: 0, T_DATA + 1: 0}, {1}, {2}, exports,
                    mains=lambda res: _main_pair(res, "entry", T_DATA,
                                                 T_DATA + 1, 2),
                    imports=((T_DATA, "cb_code"), (T_DATA + 1, "cb_data")))


# ---------------------------------------------------------------------------
# Corpus entries

def _fx_halt():
    return trusted_simple("  halt"), minimal_context()


def _fx_arith():
    body = """\
  move r6 10
  move r0 0
  move r5 pc
  cca r5 @loop+1
loop:
  plus r0 r0 r6
  minus r6 r6 1
  jnz r5 r6
  minus r0 r0 55
  jnz r10 r0
  halt"""
    return trusted_simple(body), minimal_context()


def _fx_call_return():
    return trusted_one_call(), context_cb("  move r5 7")


def _fx_sequential_calls():
    text = f"""\
entry:
{_LOAD_CB}
  call sealw 0 r1 r2
  seta2b r3
  load r1 r3
  cca r3 1
  load r2 r3
  call sealw 1 r1 r2
  halt
sealw: .seal 1 3 1
"""
    def exports(res):
        mc, md = _main_pair(res, "entry", T_DATA, T_DATA + 1, 3)
        return [("main_code", mc), ("main_data", md)]
    t = _trusted(text, {T_DATA: 0, T_DATA + 1: 0}, {1, 2}, {3}, exports,
                 mains=lambda res: _main_pair(res, "entry", T_DATA,
                                              T_DATA + 1, 3),
                 imports=((T_DATA, "cb_code"), (T_DATA + 1, "cb_data")))
    return t, context_cb("  plus r6 r6 1")


def _fx_nested_mixed():
    # trusted main calls an untrusted callback; the callback calls back
    # into a second trusted closure with its own (raw) call sequence
    t_text = f"""\
entry:
{_LOAD_CB}
  call sealw 0 r1 r2
  halt
clo2:
  move r7 99
  xjmp rretcode rretdata
sealw: .seal 1 3 1
"""
    def t_exports(res):
        mc, md = _main_pair(res, "entry", T_DATA, T_DATA + 1, 2)
        return [("main_code", mc), ("main_data", md),
                ("clo2_code", _seal(3, _code_cap(res, "clo2"))),
                ("clo2_data", _seal(3, _rw(T_DATA + 2, T_DATA + 2, T_DATA + 2)))]
    t = _trusted(t_text, {T_DATA: 0, T_DATA + 1: 0, T_DATA + 2: 0},
                 {1}, {2, 3}, t_exports,
                 mains=lambda res: _main_pair(res, "entry", T_DATA,
                                              T_DATA + 1, 2),
                 imports=((T_DATA, "cb_code"), (T_DATA + 1, "cb_data")))
    c_text = """\
cb:
  move r8 rretcode
  move r9 rretdata
  move r5 rdata
  load r3 r5
  cca r5 1
  load r4 r5
  call csealw 0 r3 r4
  xjmp r8 r9"""
    c = _context(
        c_text,
        {C_DATA: 0, C_DATA + 1: 0},
        lambda res: [("cb_code", _seal(9, _code_cap(res, "cb"))),
                     ("cb_data", _seal(9, _rw(C_DATA, C_DATA + 1, C_DATA)))],
        imports=((C_DATA, "clo2_code"), (C_DATA + 1, "clo2_data")))
    return t, c


def _fx_stack_locals():
    pre = """\
  move r7 5
  store rstk r7
  cca rstk -1
"""
    post = """\
  cca rstk 1
  load r7 rstk
  minus r7 r7 5
  jnz r10 r7
"""
    return trusted_one_call(pre, post), context_cb("  move r5 1")


def _fx_data_passing():
    pre = "  move r0 5\n"
    post = """\
  minus r0 r0 15
  jnz r10 r0
"""
    body = """\
  plus r5 r0 r0
  plus r0 r5 r0"""
    return trusted_one_call(pre, post), context_cb(body)


def _fx_deep_trusted():
    # trusted main calls its own second closure, which calls the context
    text = f"""\
entry:
{_LOAD_CB}
  call sealw 0 r1 r2
  halt
clo2:
  move r8 rretcode
  move r9 rretdata
  move r3 rdata
  load r1 r3
  cca r3 1
  load r2 r3
  call sealw 1 r1 r2
  xjmp r8 r9
sealw: .seal 1 3 1
"""
    def exports(res):
        mc, md = _main_pair(res, "entry", T_DATA, T_DATA + 1, 3)
        return [("main_code", mc), ("main_data", md)]

    def mains(res):
        return _main_pair(res, "entry", T_DATA, T_DATA + 1, 3)

    res_probe = _asm(T_CODE, text)
    clo2_code = _seal(3, _code_cap(res_probe, "clo2"))
    clo2_data = _seal(3, _rw(T_DATA + 2, T_DATA + 3, T_DATA + 2))
    t = _trusted(text,
                 {T_DATA: clo2_code, T_DATA + 1: clo2_data,
                  T_DATA + 2: 0, T_DATA + 3: 0},
                 {1, 2}, {3}, exports, mains=mains,
                 imports=((T_DATA + 2, "cb_code"), (T_DATA + 3, "cb_data")))
    return t, context_cb("  plus r6 r6 1")


def _fx_stack_smash():
    # no trusted calls: the context mangles its stack freely; both
    # machines agree step for step
    t = Component(_pad({T_CODE: SealCap(2, 2, 2)}), {},
                  sig_clos=frozenset({2}))
    text = """\
entry:
  move r7 7
  cca rstk -63
  move r6 16
  move r5 pc
  cca r5 @loop+1
loop:
  store rstk r7
  cca rstk 1
  minus r6 r6 1
  jnz r5 r6
  split r4 rstk rstk 1031
  splice rstk r4 rstk
  halt"""
    c = _context(
        text, {C_DATA: 0},
        lambda res: [("main_code", _seal(9, _code_cap(res, "entry"))),
                     ("main_data", _seal(9, _rw(C_DATA, C_DATA, C_DATA)))],
        mains=lambda res: (_seal(9, _code_cap(res, "entry")),
                           _seal(9, _rw(C_DATA, C_DATA, C_DATA))))
    return t, c


def _fx_multi_seal():
    t_text = f"""\
cloA:
{_LOAD_CB}
  call sealw 0 r1 r2
  halt
cloB:
  fail
sealw: .seal 1 3 1
"""
    def t_exports(res):
        return [("cloA_code", _seal(2, _code_cap(res, "cloA"))),
                ("cloA_data", _seal(2, _rw(T_DATA, T_DATA + 1, T_DATA))),
                ("cloB_code", _seal(3, _code_cap(res, "cloB")))]
    t = _trusted(t_text, {T_DATA: 0, T_DATA + 1: 0}, {1}, {2, 3}, t_exports,
                 imports=((T_DATA, "cb_code"), (T_DATA + 1, "cb_data")))
    c_text = """\
entry:
  move r5 rdata
  load r3 r5
  cca r5 1
  load r4 r5
  xjmp r3 r4
cb:
  plus r6 r6 1
  xjmp rretcode rretdata"""
    c = _context(
        c_text,
        {C_DATA: 0, C_DATA + 1: 0, C_DATA + 2: 0},
        lambda res: [("main_code", _seal(9, _code_cap(res, "entry"))),
                     ("main_data",
                      _seal(9, _rw(C_DATA, C_DATA + 1, C_DATA))),
                     ("cb_code", _seal(9, _code_cap(res, "cb"))),
                     ("cb_data",
                      _seal(9, _rw(C_DATA + 2, C_DATA + 2, C_DATA + 2)))],
        mains=lambda res: (_seal(9, _code_cap(res, "entry")),
                           _seal(9, _rw(C_DATA, C_DATA + 1, C_DATA))),
        imports=((C_DATA, "cloA_code"), (C_DATA + 1, "cloA_data")))
    return t, c


def _fx_spin():
    body = """\
  move r5 pc
  cca r5 @entry+1
  jmp r5"""
    return trusted_simple(body), minimal_context()


CORPUS = (
    ("halt", _fx_halt),
    ("arith-loop", _fx_arith),
    ("call-return", _fx_call_return),
    ("sequential-calls", _fx_sequential_calls),
    ("nested-mixed", _fx_nested_mixed),
    ("stack-locals", _fx_stack_locals),
    ("data-passing", _fx_data_passing),
    ("deep-trusted", _fx_deep_trusted),
    ("stack-smash", _fx_stack_smash),
    ("multi-seal", _fx_multi_seal),
    ("spin", _fx_spin),
)


def corpus():
    return [(name, *fn()) for name, fn in CORPUS]


# ---------------------------------------------------------------------------
# Attack scenarios

@dataclass
class ScenarioResult:
    name: str
    verdict: DiffVerdict
    expected: str       # "both-failed" | "disagreement"

    @property
    def as_expected(self) -> bool:
        s, t = self.verdict.source.outcome, self.verdict.target.outcome
        if self.expected == "both-failed":
            return s == "failed" and t == "failed"
        return s == "failed" and t == "halted" and not self.verdict.agreement


def scenario_partial_stack_return() -> ScenarioResult:
    """The callee keeps the top of the stack and tries to return."""
    t = trusted_one_call()
    c = context_cb("  split rstk r7 rstk 1050")
    v = run_diff(t, c, STK_BASE, STK_END, fuel=1000)
    return ScenarioResult("partial-stack-return", v, "both-failed")


def _second_stack_components(check_stk_base: bool):
    t_text = """\
entry:
  call sealw 0 r1 r2
  halt
sealw: .seal 1 2 1
"""
    res = _asm(T_CODE, t_text, check_stk_base)
    def t_exports(r):
        return [("tmain_code", _seal(2, _code_cap(r, "entry"))),
                ("tmain_data", _seal(2, _rw(T_DATA, T_DATA, T_DATA)))]
    t = Component(_pad(res.segment), {T_DATA: 0}, (), tuple(t_exports(res)),
                  frozenset({1}), frozenset({2}), frozenset())

    fake_lo, fake_hi = C_DATA + 10, C_DATA + 68
    c_text = """\
entry:
  move r5 rdata
  load r3 r5
  cca r5 1
  load r4 r5
  cca r5 1
  load r1 r5
  cca r5 1
  load r2 r5
  cca r5 1
  load rstk r5
  xjmp r3 r4
cb:
  xjmp rretcode rretdata"""
    data = {C_DATA: 0, C_DATA + 1: 0, C_DATA + 4:
            MemCap(Perm.RW, Lin.LINEAR, fake_lo, fake_hi, fake_hi),
            C_DATA + 69: 0}
    data.update({x: 0 for x in range(fake_lo, fake_hi + 1)})

    def c_exports(r):
        cb = [("cb_code", _seal(9, _code_cap(r, "cb"))),
              ("cb_data", _seal(9, _rw(C_DATA + 69, C_DATA + 69, C_DATA + 69)))]
        return cb + [("main_code", _seal(9, _code_cap(r, "entry"))),
                     ("main_data", _seal(9, _rw(C_DATA, C_DATA + 4, C_DATA)))]
    cres = _asm(C_CODE, c_text + "\ncsealw: .seal 9 9 9")
    # the context keeps its own callback pair in data so the trusted
    # macro finds a sealed pair in r1/r2
    data[C_DATA + 2] = _seal(9, _code_cap(cres, "cb"))
    data[C_DATA + 3] = _seal(9, _rw(C_DATA + 69, C_DATA + 69, C_DATA + 69))
    c = Component(_pad(cres.segment), data,
                  ((C_DATA, "tmain_code"), (C_DATA + 1, "tmain_data")),
                  tuple(c_exports(cres)), frozenset(), frozenset({9}),
                  frozenset(range(fake_lo, fake_hi + 1)),
                  (_seal(9, _code_cap(cres, "entry")),
                   _seal(9, _rw(C_DATA, C_DATA + 4, C_DATA))))
    return t, c


def scenario_second_stack(check_stk_base: bool = True) -> ScenarioResult:
    """A context hands the trusted caller a private second stack.

    With the stack-base check in place both machines refuse; with the
    check compiled out the target completes the ill-bracketed return
    while the source still refuses — a visible disagreement.
    """
    t, c = _second_stack_components(check_stk_base)
    v = run_diff(t, c, STK_BASE, STK_END, fuel=1000,
                 check_stk_base=check_stk_base)
    name = "second-stack" if check_stk_base else "second-stack-nocheck"
    return ScenarioResult(name, v,
                          "both-failed" if check_stk_base else "disagreement")


def scenario_double_return() -> ScenarioResult:
    """A second closure replays the consumed return pair."""
    t_text = f"""\
entry:
{_LOAD_CB}
  cca r3 1
  load r5 r3
  cca r3 1
  load r6 r3
  call sealw 0 r1 r2
  xjmp r5 r6
  halt
sealw: .seal 1 2 1
"""
    def exports(res):
        mc, md = _main_pair(res, "entry", T_DATA, T_DATA + 3, 2)
        return [("main_code", mc), ("main_data", md)]
    t = _trusted(t_text,
                 {T_DATA: 0, T_DATA + 1: 0, T_DATA + 2: 0, T_DATA + 3: 0},
                 {1}, {2}, exports,
                 mains=lambda res: _main_pair(res, "entry", T_DATA,
                                              T_DATA + 3, 2),
                 imports=((T_DATA, "cb_code"), (T_DATA + 1, "cb_data"),
                          (T_DATA + 2, "cb2_code"), (T_DATA + 3, "cb2_data")))
    c_text = """\
cb:
  xjmp rretcode rretdata
cb2:
  xjmp rretcode rretdata"""
    c = _context(
        c_text, {C_DATA: 0, C_DATA + 1: 0},
        lambda res: [("cb_code", _seal(9, _code_cap(res, "cb"))),
                     ("cb_data", _seal(9, _rw(C_DATA, C_DATA, C_DATA))),
                     ("cb2_code", _seal(9, _code_cap(res, "cb2"))),
                     ("cb2_data", _seal(9, _rw(C_DATA + 1, C_DATA + 1,
                                               C_DATA + 1)))])
    v = run_diff(t, c, STK_BASE, STK_END, fuel=1000)
    return ScenarioResult("double-return", v, "both-failed")


SCENARIOS = {
    "partial-stack-return": scenario_partial_stack_return,
    "second-stack": scenario_second_stack,
    "second-stack-nocheck": lambda: scenario_second_stack(False),
    "double-return": scenario_double_return,
}
