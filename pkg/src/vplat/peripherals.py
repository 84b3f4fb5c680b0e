"""Platform device set: RAM, UART console, simulation control, accelerator.

The accelerator is a memory-mapped matrix-multiply engine: the core
programs source/destination addresses and dimensions, triggers START and
either polls STATUS or takes the completion interrupt. Data moves through
backdoor access to RAM; completion timing follows an analytical cycle
model on the accelerator's own clock.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
from typing import Callable

import numpy as np

from .bus import (
    ACCESS_RO,
    ACCESS_RW,
    ACCESS_WO,
    RESP_OK,
    Register,
    RegisterFile,
    Transaction,
    WRITE,
)
from .kernel import SimKernel

log = logging.getLogger(__name__)

PS_PER_S = 10**12


class Ram:
    """Byte-addressable zero-initialized memory with backdoor access."""

    def __init__(self, size: int) -> None:
        self.size = size
        self.storage = bytearray(size)
        self.view = np.frombuffer(self.storage, dtype=np.uint8)

    def access(self, offset: int, txn: Transaction) -> None:
        n = len(txn.data)
        if txn.command == WRITE:
            self.storage[offset:offset + n] = txn.data
        else:
            txn.data[:] = self.storage[offset:offset + n]
        txn.response = RESP_OK

    def load_image(self, data: bytes, load_address: int) -> None:
        if load_address < 0 or load_address + len(data) > self.size:
            raise ValueError(
                f"image [{load_address:#x}, +{len(data):#x}) exceeds "
                f"RAM size {self.size:#x}"
            )
        self.storage[load_address:load_address + len(data)] = data

    def read_words(self, addr: int, count: int) -> list[int]:
        return list(struct.unpack_from(f"<{count}I", self.storage, addr))

    def write_words(self, addr: int, words: list[int]) -> None:
        struct.pack_into(f"<{len(words)}I", self.storage, addr, *words)


class ConsoleServer:
    """Optional one-way TCP fan-out of the console byte stream."""

    def __init__(self, port: int) -> None:
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(("0.0.0.0", 0 if port < 0 else port))
        self._sock.listen(4)
        self.port = self._sock.getsockname()[1]
        self._clients: list[socket.socket] = []
        self._lock = threading.Lock()
        self._closing = False
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()

    def _accept_loop(self) -> None:
        while True:
            try:
                client, _ = self._sock.accept()
            except OSError:
                return
            with self._lock:
                if self._closing:
                    client.close()
                    return
                self._clients.append(client)

    def broadcast(self, data: bytes) -> None:
        with self._lock:
            clients = list(self._clients)
        for client in clients:
            try:
                client.sendall(data)
            except OSError as exc:
                log.warning("console client dropped: %s", exc)
                with self._lock:
                    if client in self._clients:
                        self._clients.remove(client)
                client.close()

    def close(self) -> None:
        with self._lock:
            self._closing = True
            clients = list(self._clients)
            self._clients.clear()
        for client in clients:
            client.close()
        self._sock.close()


class Uart:
    """Transmit-only console UART; every TXDATA write is captured losslessly."""

    TXDATA = 0x00
    STATUS = 0x04
    STATUS_TX_READY = 0x1

    def __init__(self, port: int = 0) -> None:
        self.capture = bytearray()
        self.server = ConsoleServer(port) if port != 0 else None
        self._regs = RegisterFile([
            Register(self.TXDATA, ACCESS_WO, write_hook=self._tx),
            Register(self.STATUS, ACCESS_RO, reset_value=self.STATUS_TX_READY),
        ])

    @property
    def port(self) -> int | None:
        return self.server.port if self.server else None

    def access(self, offset: int, txn: Transaction) -> None:
        self._regs.access(offset, txn)

    def _tx(self, value: int) -> None:
        data = bytes([value & 0xFF])
        self.capture += data
        if self.server is not None:
            self.server.broadcast(data)

    def close(self) -> None:
        if self.server is not None:
            self.server.close()


class SimCtrl:
    """Test-control device: writing EXIT ends the simulation run."""

    EXIT = 0x00

    def __init__(self, kernel: SimKernel) -> None:
        self._kernel = kernel
        self._regs = RegisterFile([
            Register(self.EXIT, ACCESS_WO, write_hook=self._exit),
        ])

    def access(self, offset: int, txn: Transaction) -> None:
        self._regs.access(offset, txn)

    def _exit(self, value: int) -> None:
        self._kernel.request_stop(value & 0xFF)


class Accelerator:
    """Matrix-multiply engine with analytical completion timing.

    C = A x B over row-major little-endian 32-bit words with wrap-around
    arithmetic; A is M x K, B is K x N, C is M x N. Completion is
    scheduled (base_cycles + M*N*K*cycles_per_mac) accelerator-clock
    cycles after START.
    """

    CTRL = 0x00
    STATUS = 0x04
    SRC_A = 0x08
    SRC_B = 0x0C
    DST = 0x10
    DIM_M = 0x14
    DIM_N = 0x18
    DIM_K = 0x1C

    CTRL_START = 0x1
    CTRL_IRQ_EN = 0x2
    ST_BUSY = 0x1
    ST_DONE = 0x2
    ST_ERROR = 0x4

    _PARAM_OFFSETS = (SRC_A, SRC_B, DST, DIM_M, DIM_N, DIM_K)

    def __init__(
        self,
        ram: Ram,
        kernel: SimKernel,
        set_irq: Callable[[bool], None],
        clock_hz: int,
        base_cycles: int,
        cycles_per_mac: int,
        trace: Callable[[str, int], None] | None = None,
    ) -> None:
        self._ram = ram
        self._kernel = kernel
        self._set_irq = set_irq
        self._clock_hz = clock_hz
        self._base_cycles = base_cycles
        self._cycles_per_mac = cycles_per_mac
        self._trace = trace or (lambda name, value: None)
        self.busy = False
        self.done = False
        self.error = False
        self.irq_en = False
        self.irq_level = False
        self._result: list[int] = []
        self._result_dst = 0
        self._regs = RegisterFile([
            Register(self.CTRL, ACCESS_RW, write_hook=self._write_ctrl),
            Register(self.STATUS, ACCESS_RW,
                     read_hook=self._read_status, write_hook=self._write_status),
            Register(self.SRC_A), Register(self.SRC_B), Register(self.DST),
            Register(self.DIM_M), Register(self.DIM_N), Register(self.DIM_K),
        ])

    def access(self, offset: int, txn: Transaction) -> None:
        if (
            txn.command == WRITE
            and self.busy
            and offset in self._PARAM_OFFSETS
            and len(txn.data) == 4
            and offset % 4 == 0
        ):
            # parameter writes are locked out while the engine runs
            self._flag_error()
            txn.response = RESP_OK
            return
        self._regs.access(offset, txn)

    def _reg(self, offset: int) -> int:
        return self._regs.regs[offset].value

    def _write_ctrl(self, value: int) -> None:
        self._regs.regs[self.CTRL].value = value & self.CTRL_IRQ_EN
        self.irq_en = bool(value & self.CTRL_IRQ_EN)
        if value & self.CTRL_START:
            self._start()
        self._update_irq()

    def _read_status(self, _stored: int) -> int:
        return (
            (self.ST_BUSY if self.busy else 0)
            | (self.ST_DONE if self.done else 0)
            | (self.ST_ERROR if self.error else 0)
        )

    def _write_status(self, value: int) -> None:
        if value & self.ST_DONE:
            self.done = False
            self._trace("done", 0)
        if value & self.ST_ERROR:
            self.error = False
            self._trace("error", 0)
        self._update_irq()

    def _flag_error(self) -> None:
        self.error = True
        self._trace("error", 1)

    def _start(self) -> None:
        if self.busy:
            self._flag_error()
            return
        m = self._reg(self.DIM_M)
        n = self._reg(self.DIM_N)
        k = self._reg(self.DIM_K)
        src_a = self._reg(self.SRC_A)
        src_b = self._reg(self.SRC_B)
        dst = self._reg(self.DST)
        if m == 0 or n == 0 or k == 0 or m * n * k > 0xFFFFFFFF:
            self._flag_error()
            return
        regions = ((src_a, 4 * m * k), (src_b, 4 * k * n), (dst, 4 * m * n))
        if any(base + size > self._ram.size for base, size in regions):
            self._flag_error()
            return

        a = self._ram.read_words(src_a, m * k)
        b = self._ram.read_words(src_b, k * n)
        c = []
        for i in range(m):
            row = a[i * k:(i + 1) * k]
            for j in range(n):
                acc = 0
                for p in range(k):
                    acc += row[p] * b[p * n + j]
                c.append(acc & 0xFFFFFFFF)
        self._result = c
        self._result_dst = dst
        self.busy = True
        self.done = False
        self._trace("busy", 1)
        self._trace("done", 0)
        cycles = self._base_cycles + m * n * k * self._cycles_per_mac
        delay_ps = cycles * PS_PER_S // self._clock_hz
        self._kernel.schedule(self._complete, delay_ps)

    def _complete(self) -> None:
        self._ram.write_words(self._result_dst, self._result)
        self._result = []
        self.busy = False
        self.done = True
        self._trace("busy", 0)
        self._trace("done", 1)
        self._update_irq()

    def _update_irq(self) -> None:
        level = self.done and self.irq_en
        if level != self.irq_level:
            self.irq_level = level
            self._trace("irq", 1 if level else 0)
            self._set_irq(level)
