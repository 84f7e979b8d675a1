from capmach.core import (
    GlobalConstants, Lin, MemCap, Perm, fresh_registers,
)
from capmach.machine import TargetConfig
from capmach.source import SourceConfig

NOWHERE = GlobalConstants(frozenset(), 0)


def rx(b, e, a):
    return MemCap(Perm.RX, Lin.NORMAL, b, e, a)


def rw(b, e, a, lin=Lin.NORMAL):
    return MemCap(Perm.RW, lin, b, e, a)


def tcfg(mem=None, **regvals):
    reg = fresh_registers()
    reg.update(regvals)
    return TargetConfig(dict(mem or {}), reg)


def scfg(mem=None, stk=(), ms_stk=None, **regvals):
    reg = fresh_registers()
    reg.update(regvals)
    return SourceConfig(dict(mem or {}), reg, tuple(stk), dict(ms_stk or {}))
