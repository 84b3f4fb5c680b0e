"""Batched fast-path executor for plain RAM-resident code.

Interprets the same base integer ISA as `cpu.Cpu`, compiled with numba,
for spans where nothing observable can happen: no device access, no
system instruction, no trap, no deliverable interrupt, no breakpoints.
It stops *before* any instruction it cannot prove ordinary, leaving the
interpreter to execute it; results are bit-identical to stepping.

Cycle accounting matches the interpreter: 1 cycle per instruction plus
the configured bus latency for the fetch and for one data access.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_TURBO = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_TURBO = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn
        return deco if not (args and callable(args[0])) else args[0]

# st[] slots
_PC, _RETIRED, _CYCLES = 0, 1, 2


@njit(cache=True, nogil=True)
def _run_block(mem, regs, st, budget, ram_size, fetch_lat, data_lat):  # noqa: C901
    pc = st[_PC]
    retired = np.int64(0)
    cycles = np.int64(0)
    max_cost = 1 + fetch_lat + data_lat
    mask = 0xFFFFFFFF

    while cycles + max_cost <= budget:
        if pc & 3 or pc + 4 > ram_size:
            break
        w = (
            np.int64(mem[pc])
            | np.int64(mem[pc + 1]) << 8
            | np.int64(mem[pc + 2]) << 16
            | np.int64(mem[pc + 3]) << 24
        )
        opcode = w & 0x7F
        rd = (w >> 7) & 0x1F
        f3 = (w >> 12) & 0x7
        rs1 = (w >> 15) & 0x1F
        rs2 = (w >> 20) & 0x1F
        f7 = (w >> 25) & 0x7F
        next_pc = (pc + 4) & mask
        cost = 1 + fetch_lat

        if opcode == 0x13:  # op-imm
            imm = w >> 20
            if imm & 0x800:
                imm -= 0x1000
            a = regs[rs1]
            if f3 == 0:
                value = (a + imm) & mask
            elif f3 == 2:
                sa = a - 0x100000000 if a & 0x80000000 else a
                value = 1 if sa < imm else 0
            elif f3 == 3:
                value = 1 if a < (imm & mask) else 0
            elif f3 == 4:
                value = (a ^ imm) & mask
            elif f3 == 6:
                value = (a | imm) & mask
            elif f3 == 7:
                value = (a & imm) & mask
            elif f3 == 1:
                if f7 != 0:
                    break
                value = (a << rs2) & mask
            else:  # f3 == 5
                if f7 == 0x00:
                    value = a >> rs2
                elif f7 == 0x20:
                    sa = a - 0x100000000 if a & 0x80000000 else a
                    value = (sa >> rs2) & mask
                else:
                    break
            if rd:
                regs[rd] = value
        elif opcode == 0x33:  # op
            a = regs[rs1]
            b = regs[rs2]
            if f3 == 0 and f7 == 0x00:
                value = (a + b) & mask
            elif f3 == 0 and f7 == 0x20:
                value = (a - b) & mask
            elif f3 == 1 and f7 == 0x00:
                value = (a << (b & 31)) & mask
            elif f3 == 2 and f7 == 0x00:
                sa = a - 0x100000000 if a & 0x80000000 else a
                sb = b - 0x100000000 if b & 0x80000000 else b
                value = 1 if sa < sb else 0
            elif f3 == 3 and f7 == 0x00:
                value = 1 if a < b else 0
            elif f3 == 4 and f7 == 0x00:
                value = a ^ b
            elif f3 == 5 and f7 == 0x00:
                value = a >> (b & 31)
            elif f3 == 5 and f7 == 0x20:
                sa = a - 0x100000000 if a & 0x80000000 else a
                value = (sa >> (b & 31)) & mask
            elif f3 == 6 and f7 == 0x00:
                value = a | b
            elif f3 == 7 and f7 == 0x00:
                value = a & b
            else:
                break
            if rd:
                regs[rd] = value
        elif opcode == 0x03:  # loads
            imm = w >> 20
            if imm & 0x800:
                imm -= 0x1000
            addr = (regs[rs1] + imm) & mask
            if f3 == 0 or f3 == 4:
                size = 1
            elif f3 == 1 or f3 == 5:
                size = 2
            elif f3 == 2:
                size = 4
            else:
                break
            if addr & (size - 1) or addr + size > ram_size:
                break
            value = np.int64(mem[addr])
            if size >= 2:
                value |= np.int64(mem[addr + 1]) << 8
            if size == 4:
                value |= np.int64(mem[addr + 2]) << 16
                value |= np.int64(mem[addr + 3]) << 24
            if f3 == 0 and value & 0x80:
                value = (value - 0x100) & mask
            elif f3 == 1 and value & 0x8000:
                value = (value - 0x10000) & mask
            if rd:
                regs[rd] = value
            cost += data_lat
        elif opcode == 0x23:  # stores
            imm = ((w >> 25) & 0x7F) << 5 | ((w >> 7) & 0x1F)
            if imm & 0x800:
                imm -= 0x1000
            addr = (regs[rs1] + imm) & mask
            if f3 == 0:
                size = 1
            elif f3 == 1:
                size = 2
            elif f3 == 2:
                size = 4
            else:
                break
            if addr & (size - 1) or addr + size > ram_size:
                break
            value = regs[rs2]
            mem[addr] = value & 0xFF
            if size >= 2:
                mem[addr + 1] = (value >> 8) & 0xFF
            if size == 4:
                mem[addr + 2] = (value >> 16) & 0xFF
                mem[addr + 3] = (value >> 24) & 0xFF
            cost += data_lat
        elif opcode == 0x63:  # branches
            a = regs[rs1]
            b = regs[rs2]
            if f3 == 0:
                taken = a == b
            elif f3 == 1:
                taken = a != b
            elif f3 == 4 or f3 == 5:
                sa = a - 0x100000000 if a & 0x80000000 else a
                sb = b - 0x100000000 if b & 0x80000000 else b
                taken = sa < sb if f3 == 4 else sa >= sb
            elif f3 == 6:
                taken = a < b
            elif f3 == 7:
                taken = a >= b
            else:
                break
            if taken:
                imm = (
                    ((w >> 31) & 1) << 12
                    | ((w >> 25) & 0x3F) << 5
                    | ((w >> 8) & 0xF) << 1
                    | ((w >> 7) & 1) << 11
                )
                if imm & 0x1000:
                    imm -= 0x2000
                next_pc = (pc + imm) & mask
        elif opcode == 0x37:  # lui
            if rd:
                regs[rd] = (w >> 12) << 12 & mask
        elif opcode == 0x17:  # auipc
            if rd:
                regs[rd] = (pc + ((w >> 12) << 12)) & mask
        elif opcode == 0x6F:  # jal
            imm = (
                ((w >> 31) & 1) << 20
                | ((w >> 21) & 0x3FF) << 1
                | ((w >> 20) & 1) << 11
                | ((w >> 12) & 0xFF) << 12
            )
            if imm & 0x100000:
                imm -= 0x200000
            if rd:
                regs[rd] = next_pc
            next_pc = (pc + imm) & mask
        elif opcode == 0x67:  # jalr
            if f3 != 0:
                break
            imm = w >> 20
            if imm & 0x800:
                imm -= 0x1000
            target = (regs[rs1] + imm) & 0xFFFFFFFE
            if rd:
                regs[rd] = next_pc
            next_pc = target
        elif opcode == 0x0F:  # fence
            if f3 != 0:
                break
        else:
            break  # system, csr, illegal: interpreter takes over

        pc = next_pc
        retired += 1
        cycles += cost

    st[_PC] = pc
    st[_RETIRED] = retired
    st[_CYCLES] = cycles


class TurboExecutor:
    """Marshals CPU state in and out of the compiled block runner."""

    def __init__(self, cpu, ram_view: np.ndarray, fetch_lat: int, data_lat: int) -> None:
        self._cpu = cpu
        self._mem = ram_view
        self._ram_size = np.int64(len(ram_view))
        self._fetch_lat = np.int64(fetch_lat)
        self._data_lat = np.int64(data_lat)
        self._regs = np.zeros(32, dtype=np.int64)
        self._st = np.zeros(3, dtype=np.int64)

    def run(self, budget_cycles: int) -> tuple[int, int]:
        """Execute up to budget_cycles worth of plain instructions.

        Returns (instructions_retired, cycles_consumed); the CPU is left
        exactly as if it had single-stepped them.
        """
        cpu = self._cpu
        regs = self._regs
        for i in range(32):
            regs[i] = cpu.regs[i]
        self._st[_PC] = cpu.pc
        _run_block(
            self._mem, regs, self._st, np.int64(budget_cycles),
            self._ram_size, self._fetch_lat, self._data_lat,
        )
        retired = int(self._st[_RETIRED])
        if retired:
            for i in range(1, 32):
                cpu.regs[i] = int(regs[i])
            cpu.pc = int(self._st[_PC])
            cpu.instret += retired
            cpu.cycle += int(self._st[_CYCLES])
        return retired, int(self._st[_CYCLES])
