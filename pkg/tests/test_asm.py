import math

import pytest

from capmach.asm import (
    CALL_LEN, RET_PT_OFFSET, AsmError, CallParams, HiddenCallViolation,
    assemble, call_cond, disassemble, expand_scall, find_hidden_calls,
    format_symbols, format_word, parse_word,
)
from capmach.core import (
    Lin, MemCap, Perm, RetPtrCode, RetPtrData, SealCap, Sealed, StkPtr,
    dec_instr, enc_instr, mk_instr,
)


def enc_call(params, at=0, stk_base=1000, check=True):
    return {at + i: enc_instr(ins)
            for i, ins in enumerate(expand_scall(params, stk_base, check))}


def test_expansion_geometry():
    ins = expand_scall(CallParams(30, 2, "r3", "r4"), 1000)
    assert len(ins) == CALL_LEN == 26
    assert ins[6] == mk_instr("cca", "rtmp1", 25)     # off_pc - 5
    assert ins[8] == mk_instr("cca", "rtmp1", 2)      # off_sigma
    assert ins[14] == mk_instr("xjmp", "r3", "r4")
    assert ins[RET_PT_OFFSET] == mk_instr("getb", "rtmp1", "rstk")
    assert ins[16] == mk_instr("minus", "rtmp1", "rtmp1", 1000)
    assert ins[22] == mk_instr("fail")
    assert ins[24] == mk_instr("cca", "rstk", 1)
    ins = expand_scall(CallParams(30, 2, "r3", "r4"), 1000, check_stk_base=False)
    assert ins[16] == mk_instr("minus", "rtmp1", "rtmp1", "rtmp1")


def test_expand_rejects_bad_operands():
    with pytest.raises(ValueError):
        expand_scall(CallParams(0, 0, "rtmp1", "r4"), 0)
    with pytest.raises(ValueError):
        expand_scall(CallParams(0, 0, "r3", "pc"), 0)
    with pytest.raises(ValueError):
        expand_scall(CallParams(-1, 0, "r3", "r4"), 0)


def test_call_cond_roundtrip():
    p = CallParams(30, 2, "r3", "r4")
    mem = enc_call(p, at=7)
    assert call_cond(mem, 7, 1000) == p
    assert call_cond(mem, 8, 1000) is None       # misaligned
    assert call_cond(mem, 7, 999) is None        # wrong stack base baked in
    assert call_cond(mem, 7, 1000, check_stk_base=False) is None
    mem_nc = enc_call(p, at=7, check=False)
    assert call_cond(mem_nc, 7, 1000, check_stk_base=False) == p
    assert call_cond(mem_nc, 7, 1000) is None
    mem[20] = SealCap(0, 9, 0)                   # non-integer cell
    assert call_cond(mem, 7, 1000) is None


def test_call_cond_perturbation():
    p = CallParams(12, 0, "r0", "r1")
    base = enc_call(p, stk_base=77)
    assert call_cond(base, 0, 77) == p
    for i in range(CALL_LEN):
        mem = dict(base)
        mem[i] = mem[i] + 1
        assert call_cond(mem, 0, 77) is None, f"cell {i} perturbation missed"


def test_find_hidden_calls():
    p = CallParams(30, 0, "r3", "r4")
    complete = enc_call(p, at=100)
    complete[100 + 30] = SealCap(0, 9, 0)
    assert find_hidden_calls(complete, 1000) == []

    # a truncated prefix: every matching part overhangs the segment
    frag = {a: w for a, w in enc_call(p, at=200).items() if a < 210}
    vs = find_hidden_calls(frag, 1000)
    assert vs and all(isinstance(v, HiddenCallViolation) for v in vs)
    assert any(v.start == 200 for v in vs)

    # an inner cell contradicting the window suppresses the report
    broken = dict(frag)
    broken[205] = enc_instr(mk_instr("halt"))
    starts = {v.start for v in find_hidden_calls(broken, 1000)}
    assert 200 not in starts

    # unrelated code is clean
    plain = {i: enc_instr(mk_instr("plus", "r0", "r0", 1)) for i in range(40)}
    assert find_hidden_calls(plain, 1000) == []


def test_find_hidden_calls_overhang():
    # a lone xjmp one cell from the segment edge could be part 14 of a
    # call whose tail lies outside the segment
    seg = {50: enc_instr(mk_instr("xjmp", "r3", "r4"))}
    vs = find_hidden_calls(seg, 1000)
    assert any(v.index == 14 and v.addr == 50 for v in vs)


WORDS = [
    0,
    -17,
    MemCap(Perm.RWX, Lin.NORMAL, 0, 10, 3),
    MemCap(Perm.RW, Lin.LINEAR, 5, math.inf, 5),
    SealCap(2, 9, 4),
    StkPtr(Perm.RW, 1000, 1010, 1005),
    RetPtrCode(0, 99, 36),
    RetPtrData(1005, 1010),
    Sealed(3, MemCap(Perm.RX, Lin.NORMAL, 0, 9, 0)),
    Sealed(3, RetPtrData(1, 2)),
]


def test_word_literals_roundtrip():
    for w in WORDS:
        assert parse_word(format_word(w)) == w
    assert parse_word("42") == 42
    with pytest.raises(ValueError):
        parse_word("sealed:1,(int:5)")
    with pytest.raises(ValueError):
        parse_word("bogus:1,2")


def test_assemble_basics():
    r = assemble("""
    .org 10
    start: move r0 5
    loop: minus r0 r0 1
    jnz r1 r0          ; falls through at zero
    halt
    .word cap:rw,normal,0,9,0
    .seal 3 9 3
    .export entry = start
    .import other @20
    """)
    assert r.labels == {"start": 10, "loop": 11}
    assert dec_instr(r.segment[10]) == mk_instr("move", "r0", 5)
    assert dec_instr(r.segment[13]) == mk_instr("halt")
    assert r.segment[14] == MemCap(Perm.RW, Lin.NORMAL, 0, 9, 0)
    assert r.segment[15] == SealCap(3, 9, 3)
    assert r.exports == [("entry", 10)]
    assert r.imports == [(20, "other")]
    assert format_symbols(r.labels) == "loop\t11\nstart\t10\n"


def test_assemble_labels_as_operands():
    r = assemble("""
    .org 0
    jmp r0
    target: halt
    move r2 target      ; absolute: 1
    move r3 @target     ; relative to this cell: 1 - 3
    move r4 target+3
    """)
    assert dec_instr(r.segment[2]) == mk_instr("move", "r2", 1)
    assert dec_instr(r.segment[3]) == mk_instr("move", "r3", -2)
    assert dec_instr(r.segment[4]) == mk_instr("move", "r4", 4)


def test_assemble_call_macro():
    r = assemble("""
    .org 100
    call sealw 0 r3 r4
    halt
    sealw: .seal 5 9 5
    """, stk_base=1000)
    assert call_cond(r.segment, 100, 1000) == CallParams(27, 0, "r3", "r4")
    assert r.labels["sealw"] == 127
    assert dec_instr(r.segment[126]) == mk_instr("halt")


def test_assemble_errors():
    with pytest.raises(AsmError):
        assemble("move r0 nolabel")
    with pytest.raises(AsmError):
        assemble("x: halt\nx: halt")
    with pytest.raises(AsmError):
        assemble(".org 0\nhalt\n.org 0\nhalt")      # double assembly
    with pytest.raises(AsmError):
        assemble("frob r0")                          # unknown mnemonic
    with pytest.raises(AsmError):
        assemble("s: .seal 0 9 0\ncall s 0 r1 r2")   # seal before macro


def test_disassemble_roundtrip():
    src = """
    .org 5
    move r0 7
    lt r1 r0 9
    halt
    .org 20
    .word seal:1,4,2
    """
    seg = assemble(src).segment
    again = assemble(disassemble(seg)).segment
    assert again == seg


def test_disassemble_folds_calls():
    r = assemble("""
    .org 0
    call 30 1 r5 r6
    halt
    """, stk_base=1000)
    text = disassemble(r.segment, stk_base=1000)
    assert "call 30 1 r5 r6" in text
    assert text.count("\n") == 3  # .org, call, halt
    raw = disassemble(r.segment)  # without folding: 27 instruction lines
    assert "xjmp r5 r6" in raw
    assert assemble(raw, stk_base=1000).segment == r.segment


def test_disassemble_noncanonical_int():
    # decodes as fail but is not the canonical fail image: keep the raw word
    seg = {0: 10**15}
    text = disassemble(seg)
    assert ".word int:1000000000000000" in text
    assert assemble(text).segment == seg
