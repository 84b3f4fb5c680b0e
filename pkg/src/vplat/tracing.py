"""Run artifacts: VCD signal traces, statistics and the artifact registry."""

from __future__ import annotations

from typing import Callable, IO


class TraceError(Exception):
    """VCD misuse: duplicate/late declaration or out-of-range value."""


class ArtifactError(Exception):
    """Duplicate artifact name."""


_ID_CHARS = [chr(c) for c in range(33, 127)]


def _id_code(index: int) -> str:
    code = ""
    while True:
        code += _ID_CHARS[index % 94]
        index //= 94
        if index == 0:
            return code


class VcdWriter:
    """Streams value changes into an IEEE-1364 VCD file at 1 ps resolution.

    All signals are declared up front; the header is emitted together with
    an initial dump at time 0 on the first recorded change (or start()).
    Consecutive identical values coalesce into a single dump.
    """

    def __init__(self, stream: IO[str], now_fn: Callable[[], int]) -> None:
        self._out = stream
        self._now = now_fn
        self._signals: list[tuple[str, int, str]] = []  # (name, width, id)
        self._values: list[int] = []
        self._by_name: set[str] = set()
        self._started = False
        self._last_time = -1

    def declare(self, name: str, width: int, init: int = 0) -> int:
        """Register a signal; returns its id for change(). Must precede time 0."""
        if self._started:
            raise TraceError(f"declare({name!r}) after first change")
        if name in self._by_name:
            raise TraceError(f"duplicate signal name {name!r}")
        if width < 1 or init >= (1 << width):
            raise TraceError(f"bad width/init for {name!r}")
        self._by_name.add(name)
        self._signals.append((name, width, _id_code(len(self._signals))))
        self._values.append(init)
        return len(self._signals) - 1

    def start(self) -> None:
        """Emit the header and the time-0 initial value dump."""
        if self._started:
            return
        self._started = True
        out = self._out
        out.write("$timescale 1ps $end\n")
        open_scopes: list[str] = []
        for name, width, code in self._signals:
            *scopes, leaf = name.split(".")
            while open_scopes and open_scopes != scopes[: len(open_scopes)]:
                out.write("$upscope $end\n")
                open_scopes.pop()
            for scope in scopes[len(open_scopes):]:
                out.write(f"$scope module {scope} $end\n")
                open_scopes.append(scope)
            kind = "wire" if width == 1 else "reg"
            out.write(f"$var {kind} {width} {code} {leaf} $end\n")
        while open_scopes:
            out.write("$upscope $end\n")
            open_scopes.pop()
        out.write("$enddefinitions $end\n")
        out.write("#0\n$dumpvars\n")
        for index, (_, width, code) in enumerate(self._signals):
            out.write(self._format(width, code, self._values[index]))
        out.write("$end\n")
        self._last_time = 0

    def change(self, signal_id: int, value: int) -> None:
        """Record (now, signal, value); identical consecutive values coalesce."""
        name, width, code = self._signals[signal_id]
        if value < 0 or value >= (1 << width):
            raise TraceError(f"value {value} too wide for {name} ({width} bits)")
        if not self._started:
            self.start()
        if value == self._values[signal_id]:
            return
        now = self._now()
        if now < self._last_time:
            raise TraceError(f"time went backwards: {now} < {self._last_time}")
        if now > self._last_time:
            self._out.write(f"#{now}\n")
            self._last_time = now
        self._out.write(self._format(width, code, value))
        self._values[signal_id] = value

    def changer(self, signal_id: int) -> Callable[[int], None]:
        return lambda value: self.change(signal_id, value)

    @staticmethod
    def _format(width: int, code: str, value: int) -> str:
        if width == 1:
            return f"{value}{code}\n"
        return f"b{value:b} {code}\n"

    def close(self) -> None:
        self.start()  # header even for change-free runs
        self._out.flush()


class ArtifactRegistry:
    """Names the files a run produced; immutable once the run finishes."""

    def __init__(self) -> None:
        self._entries: dict[str, str] = {}
        self._frozen = False

    def register(self, name: str, path: str) -> None:
        if self._frozen:
            raise ArtifactError("registry is finalized")
        if name in self._entries:
            raise ArtifactError(f"duplicate artifact {name!r}")
        self._entries[name] = path

    def freeze(self) -> None:
        self._frozen = True

    def names(self) -> list[str]:
        return sorted(self._entries)

    def path(self, name: str) -> str:
        return self._entries[name]

    def items(self) -> list[tuple[str, str]]:
        return sorted(self._entries.items())


def build_stats(
    instructions: int,
    cycles: int,
    sim_time_ps: int,
    wall_time_ms: float,
    outcome: str,
    exit_code: int | None = None,
) -> dict:
    """Assemble the stats document; wall-clock fields live in dedicated keys
    so determinism comparisons can exclude them mechanically."""
    wall_s = max(wall_time_ms, 1e-6) / 1e3
    stats = {
        "instructions": instructions,
        "cycles": cycles,
        "sim_time_ps": sim_time_ps,
        "wall_time_ms": wall_time_ms,
        "real_time_factor": (sim_time_ps / 1e12) / wall_s,
        "outcome": outcome,
    }
    if exit_code is not None:
        stats["exit_code"] = exit_code
    return stats
