"""Platform assembly and run control: the executable virtual platform.

Memory map (fixed public contract):

    0x0000_0000  RAM        (size mem.size)
    0x1000_0000  UART       0x100
    0x1001_0000  ACCEL      0x100
    0x1003_0000  SIMCTRL    0x100

The CPU drives simulated time: every instruction advances it by its cycle
count over system.cpu.clock_hz; kernel events (accelerator completion)
are dispatched at their exact timestamps in between. The accelerator runs
on its own clock domain.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

from . import gdbstub
from .bus import Bus
from .config import (
    TYPE_BOOL,
    TYPE_INT,
    TYPE_SIZE,
    TYPE_STRING,
    PropertySet,
    PropertySpec,
)
from .cpu import STEP_BREAKPOINT, STEP_STOPPED, Cpu
from .gdbstub import GdbStub
from .kernel import SimKernel
from .peripherals import PS_PER_S, Accelerator, Ram, SimCtrl, Uart
from .tracing import ArtifactRegistry, VcdWriter, build_stats
from .turbo import HAVE_TURBO, TurboExecutor

RAM_BASE = 0x0000_0000
UART_BASE = 0x1000_0000
UART_SIZE = 0x100
ACC_BASE = 0x1001_0000
ACC_SIZE = 0x100
SIMCTRL_BASE = 0x1003_0000
SIMCTRL_SIZE = 0x100

MAX_RAM_SIZE = 0x1000_0000  # must stay below the device window

OUTCOME_FINISHED = "finished"
OUTCOME_LIMIT = "limit"
OUTCOME_KILLED = "killed"

_TURBO_CAP = 1 << 22  # cycles per compiled block between poll points
_TURBO_MIN = 64

_CATALOG = [
    ("system.cpu.clock_hz", TYPE_INT, 100_000_000, "CPU clock frequency in Hz"),
    ("system.cpu.turbo", TYPE_BOOL, True,
     "use the compiled fast path for plain RAM execution spans"),
    ("acc.clock_hz", TYPE_INT, 100_000_000, "accelerator clock frequency in Hz"),
    ("acc.base_cycles", TYPE_INT, 16, "fixed accelerator start-up cycles"),
    ("acc.cycles_per_mac", TYPE_INT, 1, "accelerator cycles per multiply-accumulate"),
    ("bus.access_cycles", TYPE_INT, 0, "interconnect wait cycles added per access"),
    ("mem.size", TYPE_SIZE, 16 << 20, "RAM size in bytes"),
    ("sw.image", TYPE_STRING, "", "path of the flat binary image to load"),
    ("sw.load_addr", TYPE_INT, 0x0, "RAM byte address the image is loaded at"),
    ("sw.entry_pc", TYPE_INT, 0x0, "reset program counter"),
    ("gdb.port", TYPE_INT, 0, "GDB stub TCP port (0 = off, -1 = auto)"),
    ("gdb.wait", TYPE_BOOL, False, "hold execution until a debugger attaches"),
    ("uart.port", TYPE_INT, 0, "console stream TCP port (0 = off, -1 = auto)"),
    ("trace.enable", TYPE_BOOL, False, "write trace.vcd signal traces"),
    ("limit.sim_time_ps", TYPE_INT, 0, "simulated-time budget in ps (0 = unbounded)"),
]


def property_catalog() -> PropertySet:
    """Fresh property set holding the platform's full public catalog."""
    return PropertySet(
        [PropertySpec(name, kind, default, desc) for name, kind, default, desc in _CATALOG]
    )


class BuildError(Exception):
    """Invalid property combination or image; raised before the run starts."""


@dataclass
class ExitReport:
    outcome: str  # finished | limit | killed
    exit_code: int | None
    instructions: int
    cycles: int
    sim_time_ps: int
    wall_time_ms: float
    artifacts: list[str]


class Platform:
    """One built platform instance; run() executes it to completion."""

    def __init__(self, props: PropertySet, workdir: str | Path,
                 image: bytes | None = None) -> None:
        self.workdir = Path(workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        props.freeze()
        self.props = props
        self.artifacts = ArtifactRegistry()
        self._write_config_snapshot()

        self.cpu_clock = props.get("system.cpu.clock_hz")
        acc_clock = props.get("acc.clock_hz")
        if self.cpu_clock <= 0 or acc_clock <= 0:
            raise BuildError("clock_hz properties must be positive")
        mem_size = props.get("mem.size")
        if not 0 < mem_size <= MAX_RAM_SIZE:
            raise BuildError(f"mem.size must be in (0, {MAX_RAM_SIZE:#x}]")
        access_cycles = props.get("bus.access_cycles")
        if access_cycles < 0:
            raise BuildError("bus.access_cycles must be >= 0")
        if props.get("acc.base_cycles") < 0 or props.get("acc.cycles_per_mac") < 0:
            raise BuildError("accelerator cycle coefficients must be >= 0")
        self.limit_ps = props.get("limit.sim_time_ps")
        if self.limit_ps < 0:
            raise BuildError("limit.sim_time_ps must be >= 0")

        self.kernel = SimKernel()
        self.bus = Bus(access_cycles)
        self.ram = Ram(mem_size)
        self.uart = Uart(props.get("uart.port"))
        self.simctrl = SimCtrl(self.kernel)

        self._vcd_stream = None
        self.tracer = None
        trace_cb = None
        trap_cb = None
        if props.get("trace.enable"):
            self._vcd_stream = open(self.workdir / "trace.vcd", "w", encoding="ascii")
            self.tracer = VcdWriter(self._vcd_stream, self.kernel.now)
            ids = {
                "busy": self.tracer.declare("acc.busy", 1),
                "done": self.tracer.declare("acc.done", 1),
                "error": self.tracer.declare("acc.error", 1),
                "irq": self.tracer.declare("acc.irq", 1),
            }
            trap_id = self.tracer.declare("cpu.trap_cause", 32)
            tracer = self.tracer
            trace_cb = lambda name, value: tracer.change(ids[name], value)
            trap_cb = tracer.changer(trap_id)

        self.cpu = Cpu(self.bus, trap_hook=trap_cb)
        self.accel = Accelerator(
            self.ram, self.kernel, self.cpu.set_irq, acc_clock,
            props.get("acc.base_cycles"), props.get("acc.cycles_per_mac"),
            trace=trace_cb,
        )
        self.bus.map(RAM_BASE, mem_size, self.ram)
        self.bus.map(UART_BASE, UART_SIZE, self.uart)
        self.bus.map(ACC_BASE, ACC_SIZE, self.accel)
        self.bus.map(SIMCTRL_BASE, SIMCTRL_SIZE, self.simctrl)

        if image is None and props.get("sw.image"):
            try:
                image = Path(props.get("sw.image")).read_bytes()
            except OSError as exc:
                raise BuildError(f"cannot read sw.image: {exc}") from exc
        if image:
            try:
                self.ram.load_image(image, props.get("sw.load_addr"))
            except ValueError as exc:
                raise BuildError(str(exc)) from exc
        self.cpu.reset(props.get("sw.entry_pc"))

        self.stub: GdbStub | None = None
        if props.get("gdb.port") != 0:
            self.stub = GdbStub(self.cpu, props.get("gdb.port"), props.get("gdb.wait"))

        self._turbo: TurboExecutor | None = None
        if HAVE_TURBO and props.get("system.cpu.turbo"):
            self._turbo = TurboExecutor(
                self.cpu, self.ram.view, access_cycles, access_cycles
            )

        self._frac = 0  # sub-picosecond remainder, in units of 1/clock_hz ps
        self._turbo_backoff = 0
        self._limit_hit = False
        self._killed = False
        self._ran = False
        self.report: ExitReport | None = None

    # -- public accessors ------------------------------------------------------

    @property
    def gdb_port(self) -> int | None:
        return self.stub.port if self.stub else None

    @property
    def uart_port(self) -> int | None:
        return self.uart.port

    def sim_time_ps(self) -> int:
        return self.kernel.now()

    # -- time bookkeeping ------------------------------------------------------

    def _advance(self, dcycles: int) -> None:
        """Advance simulated time by CPU cycles, firing due events on the way."""
        self._frac += dcycles * PS_PER_S
        dt = self._frac // self.cpu_clock
        self._frac %= self.cpu_clock
        target = self.kernel.now() + dt
        if self.limit_ps and target >= self.limit_ps:
            target = self.limit_ps
            self._limit_hit = True
        while True:
            due = self.kernel.peek_time()
            if due is None or due > target:
                break
            self.kernel.dispatch_next()
        self.kernel.advance_to(target)

    def _dispatch_due(self) -> None:
        while True:
            due = self.kernel.peek_time()
            if due is None or due > self.kernel.now():
                break
            self.kernel.dispatch_next()

    def _turbo_budget(self) -> int:
        bound: int | None = self.kernel.peek_time()
        if self.limit_ps:
            bound = self.limit_ps if bound is None else min(bound, self.limit_ps)
        if bound is None:
            return _TURBO_CAP
        remaining = bound - self.kernel.now()
        if remaining <= 0:
            return 0
        budget = (remaining * self.cpu_clock - 1 - self._frac) // PS_PER_S
        return max(0, min(int(budget), _TURBO_CAP))

    # -- run control -------------------------------------------------------------

    def run(self) -> ExitReport:
        """Execute to completion and finalize all artifacts."""
        if self._ran:
            raise RuntimeError("platform already ran")
        self._ran = True
        wall_start = time.perf_counter()

        outcome = OUTCOME_FINISHED
        resume_skip = False
        if self.stub is not None and self.stub.wait:
            self.stub.wait_for_client()
            if self._gdb_session(None) == "run":
                resume_skip = True

        poll_countdown = 0
        while True:
            self._dispatch_due()
            if self._killed:
                outcome = OUTCOME_KILLED
                break
            if self.kernel.stop_pending:
                outcome = OUTCOME_FINISHED
                break
            if self._limit_hit or (self.limit_ps and self.kernel.now() >= self.limit_ps):
                outcome = OUTCOME_LIMIT
                break

            if self.stub is not None:
                poll_countdown -= 1
                if poll_countdown <= 0:
                    poll_countdown = 64 if self.stub.attached else 4096
                    directive = self.stub.poll_running()
                    if directive in (gdbstub.ATTACH, gdbstub.PAUSE):
                        stop = "S02" if directive == gdbstub.PAUSE else None
                        if self._gdb_session(stop) == "run":
                            resume_skip = True
                        continue
                    if directive == gdbstub.KILL:
                        self._killed = True
                        continue

            if (
                self._turbo is not None
                and self._turbo_backoff == 0
                and not resume_skip
                and not self.cpu.breakpoints
                and not (self.stub is not None and self.stub.attached)
                and not self.cpu.irq_deliverable()
            ):
                budget = self._turbo_budget()
                if budget >= _TURBO_MIN:
                    retired, cycles = self._turbo.run(budget)
                    if retired:
                        self._advance(cycles)
                        if self.stub is not None:
                            poll_countdown = 0  # a block is a long time
                        continue
                    # no progress (device access or trap at pc): interpret
                    # a while before offering the block runner again
                    self._turbo_backoff = 64

            if self._turbo_backoff:
                self._turbo_backoff -= 1
            result = self._slow_step(resume_skip)
            resume_skip = False
            if result.kind == STEP_BREAKPOINT:
                session = self._gdb_session("S05")
                if session == "run":
                    resume_skip = True
            elif result.kind == STEP_STOPPED:
                self._killed = True

        wall_ms = (time.perf_counter() - wall_start) * 1e3
        exit_code = self.kernel.stop_code if outcome == OUTCOME_FINISHED else None
        if self.stub is not None and self.stub.attached and outcome == OUTCOME_FINISHED:
            self.stub.report_exit(exit_code or 0)
        self.report = self._finalize(outcome, exit_code, wall_ms)
        return self.report

    def _slow_step(self, skip_breakpoint: bool):
        before = self.cpu.cycle
        result = self.cpu.step(skip_breakpoint=skip_breakpoint)
        delta = self.cpu.cycle - before
        if delta:
            self._advance(delta)
        return result

    def _gdb_session(self, initial_stop: str | None) -> str:
        """Serve a paused debugger; returns 'run' or 'kill'."""
        assert self.stub is not None
        if initial_stop:
            self.stub.send_stop(initial_stop)
        while True:
            directive = self.stub.serve_paused()
            if directive == gdbstub.STEP:
                self._slow_step(skip_breakpoint=True)
                self._dispatch_due()
                if self.kernel.stop_pending or self._limit_hit:
                    return "run"  # outer loop turns this into the outcome
                self.stub.send_stop("S05")
            elif directive == gdbstub.CONTINUE:
                return "run"
            elif directive == gdbstub.DETACH:
                self.stub._drop_client()
                return "run"
            elif directive == gdbstub.KILL:
                self._killed = True
                return "kill"

    # -- artifacts ---------------------------------------------------------------

    def _write_config_snapshot(self) -> None:
        path = self.workdir / "config.resolved"
        path.write_text(
            json.dumps(self.props.snapshot(), indent=2) + "\n", encoding="ascii"
        )
        self.artifacts.register("config.resolved", str(path))

    def _finalize(self, outcome: str, exit_code: int | None,
                  wall_ms: float) -> ExitReport:
        console_path = self.workdir / "console.log"
        console_path.write_bytes(bytes(self.uart.capture))
        self.artifacts.register("console.log", str(console_path))

        if self.tracer is not None:
            self.tracer.close()
            self._vcd_stream.close()
            self.artifacts.register("trace.vcd", str(self.workdir / "trace.vcd"))

        stats = build_stats(
            self.cpu.instret, self.cpu.cycle, self.kernel.now(),
            wall_ms, outcome, exit_code,
        )
        stats_path = self.workdir / "stats.json"
        stats_path.write_text(
            json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="ascii"
        )
        self.artifacts.register("stats.json", str(stats_path))

        self.uart.close()
        if self.stub is not None:
            self.stub.close()
        self.artifacts.freeze()
        return ExitReport(
            outcome=outcome,
            exit_code=exit_code,
            instructions=self.cpu.instret,
            cycles=self.cpu.cycle,
            sim_time_ps=self.kernel.now(),
            wall_time_ms=wall_ms,
            artifacts=self.artifacts.names(),
        )


def build_platform(props: PropertySet, workdir: str | Path,
                   image: bytes | None = None) -> Platform:
    return Platform(props, workdir, image)
