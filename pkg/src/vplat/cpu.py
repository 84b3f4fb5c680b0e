"""Interpreter CPU core: fetch/decode/execute over the bus.

Machine mode only. One level-sensitive external interrupt line, taken at
instruction boundaries when enabled through mstatus.MIE and mie.MEIE.
Debug accesses go through the bus but never perturb the counters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from . import isa
from .bus import RESP_OK, Bus, read_txn, write_txn

# mcause values
CAUSE_FETCH_MISALIGNED = 0
CAUSE_FETCH_FAULT = 1
CAUSE_ILLEGAL = 2
CAUSE_BREAKPOINT = 3
CAUSE_LOAD_MISALIGNED = 4
CAUSE_LOAD_FAULT = 5
CAUSE_STORE_MISALIGNED = 6
CAUSE_STORE_FAULT = 7
CAUSE_ECALL_M = 11
CAUSE_IRQ_EXTERNAL = 0x8000000B

MSTATUS_MIE = 1 << 3
MSTATUS_MPIE = 1 << 7
MIE_MEIE = 1 << 11

STEP_RETIRED = "retired"
STEP_TRAP = "trap"
STEP_BREAKPOINT = "breakpoint"
STEP_STOPPED = "stopped"

_LOAD_SIZES = {"lb": 1, "lbu": 1, "lh": 2, "lhu": 2, "lw": 4}
_STORE_SIZES = {"sb": 1, "sh": 2, "sw": 4}


@dataclass(frozen=True)
class StepResult:
    kind: str
    cause: int | None = None


class DebugAccessError(Exception):
    """Debug memory access hit an unmapped or inaccessible address."""


class _Trap(Exception):
    def __init__(self, cause: int) -> None:
        self.cause = cause


def _signed(value: int) -> int:
    return value - 0x100000000 if value & 0x80000000 else value


class Cpu:
    """32-bit integer core with instruction and cycle counters."""

    def __init__(self, bus: Bus, trap_hook: Callable[[int], None] | None = None) -> None:
        self.bus = bus
        self.regs: list[int] = [0] * 32
        self.pc = 0
        self.mstatus = 0
        self.mie = 0
        self.mtvec = 0
        self.mepc = 0
        self.mcause = 0
        self.instret = 0
        self.cycle = 0
        self.irq_pending = False
        self.halted = False
        self.breakpoints: set[int] = set()
        self.trap_hook = trap_hook
        self._step_latency = 0

    def reset(self, entry_pc: int) -> None:
        """Full architectural reset; interrupts disabled, counters zeroed."""
        self.regs = [0] * 32
        self.pc = entry_pc & 0xFFFFFFFF
        self.mstatus = 0
        self.mie = 0
        self.mtvec = 0
        self.mepc = 0
        self.mcause = 0
        self.instret = 0
        self.cycle = 0
        self.halted = False

    def set_irq(self, level: bool) -> None:
        """Drive the external interrupt line (level-sensitive)."""
        self.irq_pending = bool(level)

    def irq_deliverable(self) -> bool:
        return (
            self.irq_pending
            and bool(self.mstatus & MSTATUS_MIE)
            and bool(self.mie & MIE_MEIE)
        )

    # -- execution ---------------------------------------------------------

    def step(self, skip_breakpoint: bool = False) -> StepResult:
        """Execute one instruction (or take a pending trap/breakpoint)."""
        if self.halted:
            return StepResult(STEP_STOPPED)
        if not skip_breakpoint and self.pc in self.breakpoints:
            return StepResult(STEP_BREAKPOINT)
        if self.irq_deliverable():
            self._enter_trap(CAUSE_IRQ_EXTERNAL)
            self.cycle += 1
            return StepResult(STEP_TRAP, CAUSE_IRQ_EXTERNAL)

        self._step_latency = 0
        trap_pc = self.pc
        try:
            word = self._fetch(self.pc)
            instr = self._decode(word)
            self._execute(instr)
        except _Trap as trap:
            self.pc = trap_pc
            self._enter_trap(trap.cause)
            self.cycle += 1 + self._step_latency
            return StepResult(STEP_TRAP, trap.cause)
        self.instret += 1
        self.cycle += 1 + self._step_latency
        return StepResult(STEP_RETIRED)

    def _fetch(self, pc: int) -> int:
        if pc % 4:
            raise _Trap(CAUSE_FETCH_MISALIGNED)
        txn = self.bus.transport(read_txn(pc, 4))
        if txn.response != RESP_OK:
            raise _Trap(CAUSE_FETCH_FAULT)
        self._step_latency += txn.latency_cycles
        return txn.value()

    @staticmethod
    def _decode(word: int) -> isa.Instr:
        try:
            return isa.decode(word)
        except isa.DecodeError:
            raise _Trap(CAUSE_ILLEGAL) from None

    def _execute(self, instr: isa.Instr) -> None:
        op = instr.op
        regs = self.regs
        pc = self.pc
        next_pc = (pc + 4) & 0xFFFFFFFF

        if op in ("addi", "slti", "sltiu", "xori", "ori", "andi",
                  "slli", "srli", "srai"):
            a = regs[instr.rs1]
            imm = instr.imm
            if op == "addi":
                value = (a + imm) & 0xFFFFFFFF
            elif op == "slti":
                value = 1 if _signed(a) < imm else 0
            elif op == "sltiu":
                value = 1 if a < (imm & 0xFFFFFFFF) else 0
            elif op == "xori":
                value = (a ^ imm) & 0xFFFFFFFF
            elif op == "ori":
                value = (a | imm) & 0xFFFFFFFF
            elif op == "andi":
                value = (a & imm) & 0xFFFFFFFF
            elif op == "slli":
                value = (a << imm) & 0xFFFFFFFF
            elif op == "srli":
                value = a >> imm
            else:  # srai
                value = (_signed(a) >> imm) & 0xFFFFFFFF
            self._set_reg(instr.rd, value)
        elif op in ("add", "sub", "sll", "slt", "sltu", "xor", "srl",
                    "sra", "or", "and"):
            a = regs[instr.rs1]
            b = regs[instr.rs2]
            if op == "add":
                value = (a + b) & 0xFFFFFFFF
            elif op == "sub":
                value = (a - b) & 0xFFFFFFFF
            elif op == "sll":
                value = (a << (b & 31)) & 0xFFFFFFFF
            elif op == "slt":
                value = 1 if _signed(a) < _signed(b) else 0
            elif op == "sltu":
                value = 1 if a < b else 0
            elif op == "xor":
                value = a ^ b
            elif op == "srl":
                value = a >> (b & 31)
            elif op == "sra":
                value = (_signed(a) >> (b & 31)) & 0xFFFFFFFF
            elif op == "or":
                value = a | b
            else:  # and
                value = a & b
            self._set_reg(instr.rd, value)
        elif op in _LOAD_SIZES:
            size = _LOAD_SIZES[op]
            addr = (regs[instr.rs1] + instr.imm) & 0xFFFFFFFF
            if addr % size:
                raise _Trap(CAUSE_LOAD_MISALIGNED)
            txn = self.bus.transport(read_txn(addr, size))
            if txn.response != RESP_OK:
                raise _Trap(CAUSE_LOAD_FAULT)
            self._step_latency += txn.latency_cycles
            value = txn.value()
            if op == "lb":
                value = value - 0x100 if value & 0x80 else value
            elif op == "lh":
                value = value - 0x10000 if value & 0x8000 else value
            self._set_reg(instr.rd, value & 0xFFFFFFFF)
        elif op in _STORE_SIZES:
            size = _STORE_SIZES[op]
            addr = (regs[instr.rs1] + instr.imm) & 0xFFFFFFFF
            if addr % size:
                raise _Trap(CAUSE_STORE_MISALIGNED)
            data = (regs[instr.rs2] & ((1 << (8 * size)) - 1)).to_bytes(size, "little")
            txn = self.bus.transport(write_txn(addr, data))
            if txn.response != RESP_OK:
                raise _Trap(CAUSE_STORE_FAULT)
            self._step_latency += txn.latency_cycles
        elif op == "lui":
            self._set_reg(instr.rd, (instr.imm << 12) & 0xFFFFFFFF)
        elif op == "auipc":
            self._set_reg(instr.rd, (pc + (instr.imm << 12)) & 0xFFFFFFFF)
        elif op == "jal":
            self._set_reg(instr.rd, next_pc)
            next_pc = (pc + instr.imm) & 0xFFFFFFFF
        elif op == "jalr":
            target = (regs[instr.rs1] + instr.imm) & 0xFFFFFFFE
            self._set_reg(instr.rd, next_pc)
            next_pc = target
        elif op in ("beq", "bne", "blt", "bge", "bltu", "bgeu"):
            a = regs[instr.rs1]
            b = regs[instr.rs2]
            taken = {
                "beq": a == b,
                "bne": a != b,
                "blt": _signed(a) < _signed(b),
                "bge": _signed(a) >= _signed(b),
                "bltu": a < b,
                "bgeu": a >= b,
            }[op]
            if taken:
                next_pc = (pc + instr.imm) & 0xFFFFFFFF
        elif op in ("fence", "wfi"):
            pass
        elif op == "ecall":
            raise _Trap(CAUSE_ECALL_M)
        elif op == "ebreak":
            raise _Trap(CAUSE_BREAKPOINT)
        elif op in ("csrrw", "csrrs", "csrrc"):
            old = self._csr_read(instr.csr)
            src = regs[instr.rs1]
            if op == "csrrw":
                self._csr_write(instr.csr, src)
            elif instr.rs1 != 0:
                if op == "csrrs":
                    self._csr_write(instr.csr, old | src)
                else:
                    self._csr_write(instr.csr, old & ~src & 0xFFFFFFFF)
            self._set_reg(instr.rd, old)
        elif op == "mret":
            next_pc = self.mepc
            if self.mstatus & MSTATUS_MPIE:
                self.mstatus |= MSTATUS_MIE
            else:
                self.mstatus &= ~MSTATUS_MIE
            self.mstatus |= MSTATUS_MPIE
        else:  # pragma: no cover - table and decoder are exhaustive
            raise _Trap(CAUSE_ILLEGAL)
        self.pc = next_pc

    def _set_reg(self, rd: int, value: int) -> None:
        if rd != 0:
            self.regs[rd] = value & 0xFFFFFFFF

    def _csr_read(self, csr: int) -> int:
        return {
            isa.CSR_MSTATUS: self.mstatus,
            isa.CSR_MIE: self.mie,
            isa.CSR_MTVEC: self.mtvec,
            isa.CSR_MEPC: self.mepc,
            isa.CSR_MCAUSE: self.mcause,
        }[csr]

    def _csr_write(self, csr: int, value: int) -> None:
        value &= 0xFFFFFFFF
        if csr == isa.CSR_MSTATUS:
            self.mstatus = value
        elif csr == isa.CSR_MIE:
            self.mie = value
        elif csr == isa.CSR_MTVEC:
            self.mtvec = value
        elif csr == isa.CSR_MEPC:
            self.mepc = value
        elif csr == isa.CSR_MCAUSE:
            self.mcause = value

    def _enter_trap(self, cause: int) -> None:
        self.mepc = self.pc
        self.mcause = cause
        if self.mstatus & MSTATUS_MIE:
            self.mstatus |= MSTATUS_MPIE
        else:
            self.mstatus &= ~MSTATUS_MPIE
        self.mstatus &= ~MSTATUS_MIE
        self.pc = self.mtvec & 0xFFFFFFFC
        if self.trap_hook is not None:
            self.trap_hook(cause)

    # -- debug interface (pause-point contract) -----------------------------

    def debug_read_registers(self) -> list[int]:
        """x0..x31 then pc: 33 values."""
        return list(self.regs) + [self.pc]

    def debug_read_register(self, index: int) -> int:
        if index == 32:
            return self.pc
        if 0 <= index < 32:
            return self.regs[index]
        raise DebugAccessError(f"no register {index}")

    def debug_write_register(self, index: int, value: int) -> None:
        value &= 0xFFFFFFFF
        if index == 32:
            self.pc = value
        elif 0 < index < 32:
            self.regs[index] = value
        elif index != 0:
            raise DebugAccessError(f"no register {index}")

    def debug_read_memory(self, addr: int, length: int) -> bytes:
        out = bytearray()
        for chunk_addr, size in _debug_chunks(addr, length):
            txn = self.bus.transport(read_txn(chunk_addr, size))
            if txn.response != RESP_OK:
                raise DebugAccessError(f"read fault at {chunk_addr:#010x}")
            out += txn.data
        return bytes(out)

    def debug_write_memory(self, addr: int, data: bytes) -> None:
        pos = 0
        for chunk_addr, size in _debug_chunks(addr, len(data)):
            txn = self.bus.transport(write_txn(chunk_addr, data[pos:pos + size]))
            if txn.response != RESP_OK:
                raise DebugAccessError(f"write fault at {chunk_addr:#010x}")
            pos += size

    def add_breakpoint(self, addr: int) -> None:
        self.breakpoints.add(addr & 0xFFFFFFFF)

    def remove_breakpoint(self, addr: int) -> None:
        self.breakpoints.discard(addr & 0xFFFFFFFF)


def _debug_chunks(addr: int, length: int):
    """Split [addr, addr+length) into naturally aligned 1/2/4-byte accesses."""
    end = addr + length
    while addr < end:
        if addr % 4 == 0 and end - addr >= 4:
            size = 4
        elif addr % 2 == 0 and end - addr >= 2:
            size = 2
        else:
            size = 1
        yield addr, size
        addr += size
