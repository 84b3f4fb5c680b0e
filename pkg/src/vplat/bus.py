"""Blocking-transport bus fabric: transactions, address routing, registers.

Transactions carry naturally aligned 1/2/4-byte payloads. The interconnect
adds a flat, configurable per-access latency and routes by address to the
mapped target device.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

READ = "read"
WRITE = "write"

RESP_OK = "ok"
RESP_ADDRESS_ERROR = "address_error"
RESP_COMMAND_ERROR = "command_error"

ACCESS_RO = "ro"
ACCESS_WO = "wo"
ACCESS_RW = "rw"


class MappingError(Exception):
    """Invalid address-map construction (overlap, zero size, overflow)."""


@dataclass
class Transaction:
    address: int
    command: str  # READ | WRITE
    data: bytearray
    response: str | None = None
    latency_cycles: int = 0

    def is_valid(self) -> bool:
        n = len(self.data)
        return n in (1, 2, 4) and self.address % n == 0

    def value(self) -> int:
        return int.from_bytes(self.data, "little")

    def set_value(self, value: int) -> None:
        self.data[:] = value.to_bytes(len(self.data), "little")


def read_txn(address: int, size: int) -> Transaction:
    return Transaction(address, READ, bytearray(size))

def write_txn(address: int, data: bytes) -> Transaction:
    return Transaction(address, WRITE, bytearray(data))


class AddressMap:
    """Ordered list of non-overlapping (base, size, target) ranges."""

    def __init__(self) -> None:
        self.entries: list[tuple[int, int, object]] = []

    def map(self, base: int, size: int, target: object) -> None:
        if size <= 0:
            raise MappingError(f"zero/negative size for range at {base:#x}")
        if base + size > 2**64:
            raise MappingError(f"range [{base:#x}, +{size:#x}) overflows")
        for other_base, other_size, other in self.entries:
            if base < other_base + other_size and other_base < base + size:
                raise MappingError(
                    f"range [{base:#x}, +{size:#x}) overlaps "
                    f"[{other_base:#x}, +{other_size:#x})"
                )
        self.entries.append((base, size, target))

    def route(self, address: int) -> tuple[object, int] | None:
        """Resolve address to (target, local_offset), or None if unmapped."""
        for base, size, target in self.entries:
            if base <= address < base + size:
                return target, address - base
        return None


class Bus:
    """Routes transactions to mapped targets, accumulating access latency.

    Targets implement access(offset, txn) and must set txn.response.
    """

    def __init__(self, access_cycles: int = 0) -> None:
        self.amap = AddressMap()
        self.access_cycles = access_cycles

    def map(self, base: int, size: int, target: object) -> None:
        self.amap.map(base, size, target)

    def transport(self, txn: Transaction) -> Transaction:
        if not txn.is_valid():
            txn.response = RESP_COMMAND_ERROR
            return txn
        txn.latency_cycles += self.access_cycles
        hit = self.amap.route(txn.address)
        if hit is None:
            txn.response = RESP_ADDRESS_ERROR
            return txn
        target, offset = hit
        target.access(offset, txn)
        if txn.response is None:
            txn.response = RESP_OK
        return txn

    def read(self, address: int, size: int) -> Transaction:
        return self.transport(read_txn(address, size))

    def write(self, address: int, data: bytes) -> Transaction:
        return self.transport(write_txn(address, data))


@dataclass
class Register:
    """One 32-bit register in a register file.

    read_hook(value) may substitute the returned value; write_hook(value)
    runs after the store.
    """

    offset: int
    access: str = ACCESS_RW
    reset_value: int = 0
    read_hook: Callable[[int], int] | None = None
    write_hook: Callable[[int], None] | None = None
    value: int = field(init=False)

    def __post_init__(self) -> None:
        if self.offset % 4 != 0:
            raise MappingError(f"register offset {self.offset:#x} not 4-byte aligned")
        self.value = self.reset_value & 0xFFFFFFFF


class RegisterFile:
    """Productivity layer: offset-addressed 32-bit registers with hooks."""

    def __init__(self, registers: list[Register]) -> None:
        self.regs: dict[int, Register] = {}
        for reg in registers:
            if reg.offset in self.regs:
                raise MappingError(f"duplicate register offset {reg.offset:#x}")
            self.regs[reg.offset] = reg

    def access(self, offset: int, txn: Transaction) -> None:
        if len(txn.data) != 4 or offset % 4 != 0:
            txn.response = RESP_COMMAND_ERROR
            return
        reg = self.regs.get(offset)
        if reg is None:
            txn.response = RESP_ADDRESS_ERROR
            return
        if txn.command == READ:
            if reg.access == ACCESS_WO:
                txn.response = RESP_COMMAND_ERROR
                return
            value = reg.value
            if reg.read_hook is not None:
                value = reg.read_hook(value) & 0xFFFFFFFF
            txn.set_value(value)
        else:
            if reg.access == ACCESS_RO:
                txn.response = RESP_COMMAND_ERROR
                return
            reg.value = txn.value()
            if reg.write_hook is not None:
                reg.write_hook(reg.value)
        txn.response = RESP_OK
