"""GDB Remote Serial Protocol server for the CPU core.

Plain ack-mode RSP over TCP. All target access happens between
instruction steps: while a client is paused the simulation does not
advance; while it runs the platform polls for interrupts and new
connections at step boundaries.
"""

from __future__ import annotations

import socket
import struct
from typing import Callable

from .cpu import Cpu, DebugAccessError

INTERRUPT = 0x03

# directives handed back to the run loop
CONTINUE = "continue"
STEP = "step"
DETACH = "detach"
KILL = "kill"
ATTACH = "attach"
PAUSE = "pause"

_ESCAPED = frozenset(b"$#}")


def rsp_escape(payload: bytes) -> bytes:
    out = bytearray()
    for byte in payload:
        if byte in _ESCAPED:
            out += bytes((0x7D, byte ^ 0x20))
        else:
            out.append(byte)
    return bytes(out)


def rsp_unescape(data: bytes) -> bytes:
    out = bytearray()
    escape = False
    for byte in data:
        if escape:
            out.append(byte ^ 0x20)
            escape = False
        elif byte == 0x7D:
            escape = True
        else:
            out.append(byte)
    return bytes(out)


def rsp_encode(payload: bytes) -> bytes:
    """'$' escaped-payload '#' checksum; checksum covers the wire bytes."""
    wire = rsp_escape(payload)
    return b"$" + wire + b"#" + f"{sum(wire) % 256:02x}".encode()


def rsp_extract(buf: bytes) -> tuple[str, bytes, int, bytes]:
    """Pull the next event off a receive buffer.

    Returns (kind, payload, consumed, ack) with kind one of packet, bad,
    interrupt, ack, nack, need_more. `ack` holds bytes to transmit back
    ('+' or '-' per RSP acknowledgement rules).
    """
    if not buf:
        return "need_more", b"", 0, b""
    first = buf[0]
    if first == INTERRUPT:
        return "interrupt", b"", 1, b""
    if first == ord("+"):
        return "ack", b"", 1, b""
    if first == ord("-"):
        return "nack", b"", 1, b""
    if first != ord("$"):
        return "junk", b"", 1, b""
    end = buf.find(b"#")
    if end < 0 or len(buf) < end + 3:
        return "need_more", b"", 0, b""
    wire = buf[1:end]
    want = int(buf[end + 1:end + 3], 16)
    if sum(wire) % 256 != want:
        return "bad", b"", end + 3, b"-"
    return "packet", rsp_unescape(wire), end + 3, b"+"


class GdbStub:
    """One-client RSP server bound at construction so the port is known."""

    def __init__(self, cpu: Cpu, port: int, wait: bool) -> None:
        self.cpu = cpu
        self.wait = wait
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind(("0.0.0.0", 0 if port < 0 else port))
        self._listener.listen(2)
        self.port = self._listener.getsockname()[1]
        self._client: socket.socket | None = None
        self._rxbuf = bytearray()
        self._last_sent = b""
        self._directive: str | None = None
        self.on_kill: Callable[[], None] | None = None

    # -- connection handling -------------------------------------------------

    @property
    def attached(self) -> bool:
        return self._client is not None

    def wait_for_client(self) -> None:
        self._listener.settimeout(None)
        client, _ = self._listener.accept()
        self._adopt(client)

    def _adopt(self, client: socket.socket) -> None:
        client.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._client = client
        self._rxbuf.clear()

    def _try_accept(self) -> bool:
        self._listener.settimeout(0)
        try:
            client, _ = self._listener.accept()
        except (BlockingIOError, socket.timeout, OSError):
            return False
        if self._client is not None:
            client.close()  # one client at a time
            return False
        self._adopt(client)
        return True

    def _refuse_extras(self) -> None:
        """Close connections knocking while a client is already active."""
        if self._client is None:
            return
        self._listener.settimeout(0)
        try:
            extra, _ = self._listener.accept()
        except (BlockingIOError, socket.timeout, OSError):
            return
        extra.close()

    def _drop_client(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None
        self._rxbuf.clear()

    def close(self) -> None:
        self._drop_client()
        self._listener.close()

    # -- wire I/O --------------------------------------------------------------

    def _recv(self, timeout: float | None) -> bool:
        """Read whatever is available; False when the client hung up."""
        assert self._client is not None
        self._client.settimeout(timeout)
        try:
            data = self._client.recv(4096)
        except (socket.timeout, BlockingIOError):
            return True
        except OSError:
            return False
        if not data:
            return False
        self._rxbuf += data
        return True

    def _send_packet(self, payload: bytes) -> None:
        if self._client is None:
            return
        self._last_sent = rsp_encode(payload)
        try:
            self._client.sendall(self._last_sent)
        except OSError:
            self._drop_client()

    def send_stop(self, reply: str) -> None:
        self._send_packet(reply.encode())

    def report_exit(self, exit_code: int) -> None:
        self._send_packet(f"W{exit_code & 0xFF:02x}".encode())

    # -- event pump --------------------------------------------------------------

    def _pump(self) -> str | None:
        """Process buffered bytes; returns a directive if one was triggered."""
        while True:
            kind, payload, consumed, ack = rsp_extract(bytes(self._rxbuf))
            if kind == "need_more":
                return None
            del self._rxbuf[:consumed]
            if ack and self._client is not None:
                try:
                    self._client.sendall(ack)
                except OSError:
                    self._drop_client()
                    return DETACH
            if kind == "interrupt":
                return PAUSE
            if kind == "nack":
                if self._last_sent and self._client is not None:
                    self._client.sendall(self._last_sent)
            elif kind == "packet":
                self._directive = None
                reply = self.handle(payload)
                if reply is not None:
                    self._send_packet(reply)
                if self._directive is not None:
                    return self._directive

    def poll_running(self) -> str | None:
        """Step-boundary poll while the simulation is free-running."""
        if self._client is None:
            if self._try_accept():
                return ATTACH
            return None
        self._refuse_extras()
        if not self._recv(0):
            self._drop_client()
            return None
        return self._pump()

    def serve_paused(self) -> str:
        """Block processing commands until the client resumes or leaves."""
        while True:
            if self._client is None:
                self.wait_for_client()
            self._refuse_extras()
            directive = self._pump()
            if directive == PAUSE:
                self.send_stop("S02")  # already stopped; report SIGINT
                continue
            if directive is not None:
                return directive
            if not self._recv(0.5):
                self._drop_client()
                return DETACH

    # -- command handling ----------------------------------------------------------

    def handle(self, payload: bytes) -> bytes | None:
        """Execute one RSP command; returns the reply payload.

        Resume-class commands return None and set a directive for the
        run loop instead. Unsupported commands get the RSP-standard
        empty reply.
        """
        if not payload:
            return b""
        head = payload[:1]
        try:
            if payload.startswith(b"qSupported"):
                return b"PacketSize=4096"
            if payload == b"?":
                return b"S05"
            if payload == b"g":
                regs = self.cpu.debug_read_registers()
                return b"".join(struct.pack("<I", v).hex().encode() for v in regs)
            if head == b"G":
                blob = bytes.fromhex(payload[1:].decode())
                if len(blob) != 33 * 4:
                    return b"E01"
                for index in range(33):
                    value = struct.unpack_from("<I", blob, index * 4)[0]
                    self.cpu.debug_write_register(index, value)
                return b"OK"
            if head == b"p":
                index = int(payload[1:], 16)
                value = self.cpu.debug_read_register(index)
                return struct.pack("<I", value).hex().encode()
            if head == b"P":
                index_text, _, value_text = payload[1:].partition(b"=")
                value = struct.unpack("<I", bytes.fromhex(value_text.decode()))[0]
                self.cpu.debug_write_register(int(index_text, 16), value)
                return b"OK"
            if head == b"m":
                addr_text, _, len_text = payload[1:].partition(b",")
                addr, length = int(addr_text, 16), int(len_text, 16)
                try:
                    return self.cpu.debug_read_memory(addr, length).hex().encode()
                except DebugAccessError:
                    return b"E14"
            if head == b"M":
                header, _, hex_data = payload[1:].partition(b":")
                addr_text, _, len_text = header.partition(b",")
                addr, length = int(addr_text, 16), int(len_text, 16)
                data = bytes.fromhex(hex_data.decode())
                if len(data) != length:
                    return b"E01"
                try:
                    self.cpu.debug_write_memory(addr, data)
                except DebugAccessError:
                    return b"E14"
                return b"OK"
            if payload.startswith(b"Z0,") or payload.startswith(b"z0,"):
                parts = payload[3:].split(b",")
                addr = int(parts[0], 16)
                if head == b"Z":
                    self.cpu.add_breakpoint(addr)
                else:
                    self.cpu.remove_breakpoint(addr)
                return b"OK"
            if head in (b"Z", b"z"):
                return b""  # watchpoints unsupported
            if head == b"s":
                self._directive = STEP
                return None
            if head == b"c":
                self._directive = CONTINUE
                return None
            if head == b"D":
                self._directive = DETACH
                return b"OK"
            if head == b"k":
                self._directive = KILL
                if self.on_kill is not None:
                    self.on_kill()
                return None
            return b""
        except (ValueError, DebugAccessError, IndexError):
            return b"E01"
