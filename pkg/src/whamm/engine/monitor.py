"""Attaching monitor modules to an application at load time.

Each monitor gets its own :class:`Instance` (its own memories and globals),
so a monitor cannot touch application state.  Probe exports are matched
against the application's sites; a probe fires before its instruction with
arguments gathered from the live frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from ..errors import MonitorTrap, Trap
from ..monitor import EXIT_BINDING, CallRef, MatchBinding, NotAProbe, parse_export_name
from ..report import HEADER, REPORT_IMPORT, ReportSink, needs_report_import
from .. import match as M
from ..wasm.types import FuncType, ModuleIR, Site
from .interp import Instance
from .numeric import NumericTrap, to_wasm


@dataclass
class ProbeAttachment:
    site: Site
    binding: MatchBinding
    probe: int  # function index in the monitor instance
    constant_args: dict  # parameter position -> value fixed at attach time
    dynamic_args: list  # (position, "arg"|"local", n)
    frame_locals: list = field(default_factory=list)  # application local indices
    fired: int = 0


@dataclass
class AttachedMonitor:
    module: ModuleIR
    instance: Instance
    sink: ReportSink
    attachments: list = field(default_factory=list)
    exit_func: Optional[int] = None


def _wrap(fn: Callable, what: str):
    try:
        return fn()
    except (Trap, NumericTrap) as e:
        raise MonitorTrap(getattr(e, "kind", str(e)), detail=what) from None
    except RecursionError:
        raise MonitorTrap("stack-exhaustion", detail=what) from None


class ProbedInstance:
    """An application instance with zero or more monitors attached."""

    def __init__(self, app: ModuleIR, imports: Optional[dict] = None, **kw):
        self.app = app
        self.instance = Instance(app, imports, run_start=False, **kw)
        self.monitors: list[AttachedMonitor] = []
        self._frame_base: dict = {}  # (monitor index, fid) -> first appended local

    # attachment --------------------------------------------------------

    def attach(self, mon: ModuleIR, imports: Optional[dict] = None) -> AttachedMonitor:
        sink = ReportSink()
        imps = dict(imports or {})
        if needs_report_import(mon):
            imps[REPORT_IMPORT] = sink.host_func()
        inst = Instance(mon, imps, run_start=False)
        sink.bind(inst)
        am = AttachedMonitor(mon, inst, sink)
        if mon.start is not None:
            _wrap(lambda: inst.invoke(mon.start, []), "start function")
        mi = len(self.monitors)
        self.monitors.append(am)
        for name, (kind, idx) in mon.exports.items():
            if kind != "func":
                continue
            try:
                b = parse_export_name(name)
            except NotAProbe:
                continue
            if b == EXIT_BINDING:
                am.exit_func = idx
                continue
            self._attach_binding(mi, am, b, idx)
        return am

    def _attach_binding(self, mi: int, am: AttachedMonitor, b: MatchBinding, probe: int):
        sig = am.module.func_type(probe)
        for f in self.app.funcs:
            local_types = f.local_types
            for site in f.sites:
                if site.opcode != b.opcode:
                    continue
                att = self._bind_site(mi, am, b, probe, sig, site, local_types)
                if att is not None:
                    am.attachments.append(att)
                    self._install(am, att)

    def _bind_site(self, mi, am, b, probe, sig: FuncType, site: Site, local_types):
        params = b.params or ()
        types = list(sig.params)
        n_frame = len(sig.results)
        # type check against the validator's view of the site
        pos = 0
        layout = []
        for p in params:
            if p == "frame":
                layout.append((pos, p, types[pos:pos + n_frame]))
                pos += n_frame
                continue
            if pos >= len(types):
                return None
            layout.append((pos, p, types[pos]))
            pos += 1
        if pos != len(types):
            return None
        for _, p, ty in layout:
            if isinstance(p, CallRef) or p == "frame":
                continue
            if not _token_fits(p, ty, site, local_types):
                return None
        if b.predicate is not None:
            if not self._static_call(am, b.predicate, site):
                return None
        consts, dyn, frame = {}, [], []
        for at, p, ty in layout:
            if isinstance(p, CallRef):
                consts[at] = self._static_call(am, p, site)
            elif p == "frame":
                frame = self._frame_locals(mi, site.fid, local_types, ty)
                for k, loc in enumerate(frame):
                    dyn.append((at + k, "local", loc))
            else:
                kind, n = M.split_indexed(p)
                if kind == "imm":
                    consts[at] = to_wasm(ty, site.immediates[n])
                elif kind == "pc":
                    consts[at] = site.pc
                elif kind == "fid":
                    consts[at] = site.fid
                else:
                    dyn.append((at, kind, n))
        return ProbeAttachment(site, b, probe, consts, dyn, frame)

    def _static_call(self, am: AttachedMonitor, call: CallRef, site: Site) -> int:
        """Evaluate a match-time call with static arguments."""
        args = []
        for p in call.params or ():
            if isinstance(p, CallRef):
                args.append(self._static_call(am, p, site))
                continue
            kind, n = M.split_indexed(p)
            if kind == "pc":
                args.append(site.pc)
            elif kind == "fid":
                args.append(site.fid)
            elif kind == "imm" and n < len(site.immediates):
                args.append(site.immediates[n])
            else:
                raise MonitorTrap("bad-callback", detail=f"${call.name} needs dynamic {p!r}")
        export = "$" + call.name
        if export not in am.module.exports:
            raise MonitorTrap("bad-callback", detail=f"no export {export!r}")
        res = _wrap(lambda: am.instance.invoke(export, args), f"${call.name}")
        return res[0] if res else 0

    def _frame_locals(self, mi: int, fid: int, local_types, types) -> list[int]:
        key = (mi, fid)
        if key not in self._frame_base:
            extra = self.instance.extra_locals.setdefault(fid, [])
            self._frame_base[key] = len(local_types) + len(extra)
            extra.extend(types)
        base = self._frame_base[key]
        return [base + k for k in range(len(types))]

    def _install(self, am: AttachedMonitor, att: ProbeAttachment):
        inst = am.instance
        n = len(att.constant_args) + len(att.dynamic_args)
        probe = att.probe
        consts = att.constant_args
        dyn = att.dynamic_args
        frame = att.frame_locals
        where = f"probe at func {att.site.fid} pc {att.site.pc}"

        def fire(fr):
            args = [None] * n
            for at, v in consts.items():
                args[at] = v
            stack = fr.stack
            for at, kind, k in dyn:
                args[at] = stack[-1 - k] if kind == "arg" else fr.locals[k]
            att.fired += 1
            try:
                out = inst._execute(inst.funcs[probe], args)
            except (Trap, NumericTrap) as e:
                raise MonitorTrap(getattr(e, "kind", str(e)), att.site.fid, att.site.pc,
                                  where) from None
            for loc, v in zip(frame, out):
                fr.locals[loc] = v

        hooks = self.instance.hooks.setdefault(att.site.fid, {})
        hooks.setdefault(att.site.pc, []).append(fire)

    # running -------------------------------------------------------------

    def run(self, entry: str, args=()) -> list:
        app = self.app
        inst = self.instance
        if app.start is not None:
            inst.invoke(app.start, [])
        return inst.invoke(entry, list(args))

    def on_exit(self) -> str:
        """Call every monitor's ``wasm:exit`` (attach order); the joined report."""
        blocks = []
        for am in self.monitors:
            if am.exit_func is not None:
                _wrap(lambda: am.instance.invoke(am.exit_func, []), "wasm:exit")
            blocks.append(am.sink.text())
        return "".join(blocks) if blocks else HEADER + "\n"


def _token_fits(tok: str, ty: str, site: Site, local_types) -> bool:
    kind, n = M.split_indexed(tok)
    if kind == "arg":
        return n < len(site.stack_in) and site.stack_in[n] == ty
    if kind == "local":
        return n < len(local_types) and local_types[n] == ty
    if kind == "imm":
        return n < len(site.immediates) and ty == "i64"
    return kind in ("pc", "fid") and ty == "i32"


def attach_monitor(app: ModuleIR, *monitors: ModuleIR, imports: Optional[dict] = None,
                   **kw) -> ProbedInstance:
    """Instantiate ``app`` and attach ``monitors`` in order."""
    pi = ProbedInstance(app, imports, **kw)
    for mon in monitors:
        pi.attach(mon)
    return pi


@dataclass
class MonitoredOutcome:
    values: list
    trap: Optional[Trap]
    report: str
    memories: list
    probed: ProbedInstance


def run_monitored(app: ModuleIR, monitors, entry: str = "main", args=(),
                  imports: Optional[dict] = None) -> MonitoredOutcome:
    """Run ``app`` with ``monitors`` attached; traps skip the exit callbacks."""
    pi = attach_monitor(app, *monitors, imports=imports)
    values, trap = [], None
    try:
        values = pi.run(entry, args)
    except Trap as t:
        trap = t
    report = "" if trap is not None else pi.on_exit()
    mems = [bytes(m) for m in pi.instance.memories]
    return MonitoredOutcome(values, trap, report, mems, pi)
