import pytest

from capmach import cli
from capmach.components import format_component, link
from capmach.core import Lin, MemCap, Perm, Sealed
from capmach.fixtures import (
    SCENARIOS, STK_BASE, STK_END, context_cb, corpus, minimal_context,
    scenario_second_stack, trusted_one_call, trusted_simple,
)
from capmach.harness import (
    check_linearity, check_stack_partition, run_diff, visible_observations,
    write_trace,
)
from capmach.source import SourceConfig, StackFrame


def test_corpus_agreement():
    for name, t, ctx in corpus():
        v = run_diff(t, ctx, STK_BASE, STK_END, fuel=2000)
        assert v.agreement, f"{name}: {v.detail}"


def test_call_return_verdict():
    t, ctx = trusted_one_call(), context_cb("  move r5 7")
    v = run_diff(t, ctx, STK_BASE, STK_END, want_trace=True)
    assert v.source.outcome == "halted" and v.target.outcome == "halted"
    assert v.target.steps == v.source.steps + 24
    mism, ints = visible_observations(v.source.final_cfg, v.target.final_cfg)
    assert mism == []
    assert ints["r5"] == 7


def test_paranoid_corpus():
    for name, t, ctx in corpus()[:4]:
        v = run_diff(t, ctx, STK_BASE, STK_END, fuel=2000, paranoid=True)
        assert v.source.violations == [] and v.target.violations == [], name


def test_scenarios_as_expected():
    for name, fn in SCENARIOS.items():
        r = fn()
        assert r.as_expected, name


def test_second_stack_knob():
    on = scenario_second_stack(True)
    assert on.expected == "both-failed" and on.as_expected
    off = scenario_second_stack(False)
    assert off.expected == "disagreement"
    assert off.verdict.target.outcome == "halted"
    assert off.verdict.source.outcome == "failed"


def lincap(b, e):
    return MemCap(Perm.RW, Lin.LINEAR, b, e, b)


def test_check_linearity():
    t, ctx = corpus()[0][1], corpus()[0][2]
    from capmach.components import initial_config
    cfg = initial_config(link(t, ctx), "target", STK_BASE, STK_END)
    assert check_linearity(cfg) == []
    dup = cfg.with_regs({"r1": lincap(2000, 2010), "r2": lincap(2005, 2015)})
    assert check_linearity(dup)
    hidden = cfg.with_regs({"r1": lincap(2000, 2010),
                            "r2": Sealed(1, lincap(2010, 2020))})
    assert check_linearity(hidden)  # sealing does not hide duplication
    ok = cfg.with_regs({"r1": lincap(2000, 2010), "r2": lincap(2011, 2020)})
    assert check_linearity(ok) == []


def test_check_stack_partition():
    from capmach.components import initial_config
    t, ctx = corpus()[0][1], corpus()[0][2]
    cfg = initial_config(link(t, ctx), "source", STK_BASE, STK_END)
    assert check_stack_partition(cfg) == []
    bad = SourceConfig(cfg.mem, cfg.reg,
                       (StackFrame(0, {STK_BASE: 0}),), cfg.ms_stk)
    assert check_stack_partition(bad)
    # frames must sit above the accessible part, innermost on top
    upside_down = SourceConfig(cfg.mem, cfg.reg,
                               (StackFrame(0, {900: 0}),),
                               {STK_BASE: 0})
    assert check_stack_partition(upside_down)


def test_write_trace(tmp_path):
    t, ctx = trusted_simple("  halt"), minimal_context()
    v = run_diff(t, ctx, STK_BASE, STK_END, want_trace=True)
    p = tmp_path / "t.trace"
    write_trace(p, "source", v.source.trace)
    lines = p.read_text().splitlines()
    assert len(lines) == v.source.steps
    step, kind, pc_addr, instr, outcome = lines[0].split("\t")
    assert (step, kind, outcome) == ("1", "source", "halted")
    assert instr == "halt"


# ---------------------------------------------------------------------------
# CLI

def _write(tmp_path, name, comp):
    p = tmp_path / name
    p.write_text(format_component(comp))
    return str(p)


def test_cli_asm(tmp_path):
    src = tmp_path / "a.s"
    src.write_text(".org 0\nstart: halt\n")
    out = tmp_path / "a.mem"
    assert cli.main(["asm", str(src), "-o", str(out)]) == 0
    text = out.read_text()
    assert "[mem]" in text and "[symbols]" in text and "start\t0" in text
    src.write_text("bogus r9\n")
    assert cli.main(["asm", str(src), "-o", str(out)]) == 3


def test_cli_validate(tmp_path, capsys):
    good = _write(tmp_path, "good.comp", trusted_simple("  halt"))
    assert cli.main(["validate", good]) == 0
    bad = trusted_simple("  halt")
    broken = bad.ms_code.copy()
    broken[min(broken)] = 7  # clobber the guard pad
    from capmach.components import Component
    badc = Component(broken, bad.ms_data, bad.imports, bad.exports,
                     bad.sig_ret, bad.sig_clos, bad.a_linear, bad.mains)
    badf = _write(tmp_path, "bad.comp", badc)
    assert cli.main(["validate", badf]) == 4
    assert "pads" in capsys.readouterr().out


def test_cli_link_and_run(tmp_path):
    t = _write(tmp_path, "t.comp", trusted_simple("  halt"))
    c = _write(tmp_path, "c.comp", minimal_context())
    out = str(tmp_path / "p.comp")
    assert cli.main(["link", t, c, "-o", out]) == 0
    # a linked program is not a single well-formed component (the seal
    # sets of its parts need not be contiguous together), so skip the
    # per-component checks when running it
    run = ["run", out, "--no-validate", "--machine"]
    assert cli.main(run + ["target"]) == 0
    assert cli.main(run + ["source"]) == 0
    assert cli.main(["run", out, "--machine", "target"]) == 4
    tfail = _write(tmp_path, "tf.comp", trusted_simple("  fail"))
    assert cli.main(["link", tfail, c, "-o", out]) == 0
    assert cli.main(run + ["target"]) == 1
    # linking two components that claim the same seals
    assert cli.main(["link", t, t, "-o", out]) == 4


def test_cli_diff(tmp_path):
    t = _write(tmp_path, "t.comp", trusted_one_call())
    c = _write(tmp_path, "c.comp", context_cb("  move r5 7"))
    tdir = str(tmp_path / "traces")
    assert cli.main(["diff", t, c, "--trace-dir", tdir]) == 0
    assert (tmp_path / "traces" / "source.trace").exists()
    assert (tmp_path / "traces" / "target.trace").exists()


def test_cli_scenarios():
    assert cli.main(["scenarios"]) == 0
    assert cli.main(["scenarios", "--run", "partial-stack-return"]) == 0
    assert cli.main(["scenarios", "--run", "second-stack-nocheck"]) == 2
    assert cli.main(["scenarios", "--run", "no-such"]) == 3


def test_cli_usage_errors(tmp_path):
    assert cli.main(["frobnicate"]) == 3
    missing = str(tmp_path / "nope.comp")
    with pytest.raises(FileNotFoundError):
        cli.main(["validate", missing])
    garbled = tmp_path / "g.comp"
    garbled.write_text("not a container\n")
    assert cli.main(["validate", str(garbled)]) == 3
