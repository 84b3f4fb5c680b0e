"""Firmware tooling: a tiny programmatic assembler and the demo workload.

The demo image fills two matrices with a seeded linear-congruential
generator (glibc constants: x' = 1103515245*x + 12345 mod 2^32, realized
as unrolled shift-adds since the core has no multiplier), programs the
accelerator, waits for completion by interrupt or by polling, prints an
additive checksum of the result over the UART and exits through the
simulation-control device.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import isa, platform

LCG_MUL = 1103515245
LCG_INC = 12345

_LCG_BITS = [k for k in range(32) if (LCG_MUL >> k) & 1]


def lcg_next(state: int) -> int:
    """One step of the demo's pseudo-random sequence."""
    return (state * LCG_MUL + LCG_INC) & 0xFFFFFFFF


class AsmError(Exception):
    """Unresolved label or unencodable operand."""


class Program:
    """Ordered instruction/word list with label-based branch resolution."""

    def __init__(self, origin: int = 0) -> None:
        self.origin = origin
        self._items: list[tuple[str, object]] = []
        self._labels: dict[str, int] = {}

    def label(self, name: str) -> None:
        if name in self._labels:
            raise AsmError(f"duplicate label {name!r}")
        self._labels[name] = len(self._items)

    def emit(self, op: str, **fields) -> None:
        self._items.append(("instr", isa.Instr(op, **fields)))

    def word(self, value: int) -> None:
        self._items.append(("word", value & 0xFFFFFFFF))

    def li(self, rd: int, value: int) -> None:
        """Load a 32-bit constant (one or two instructions)."""
        value &= 0xFFFFFFFF
        signed = value - 0x100000000 if value & 0x80000000 else value
        if -2048 <= signed <= 2047:
            self.emit("addi", rd=rd, rs1=0, imm=signed)
            return
        hi = ((value + 0x800) >> 12) & 0xFFFFF
        lo = value - ((hi << 12) & 0xFFFFFFFF)
        if lo >= 0x80000000:
            lo -= 0x100000000
        self.emit("lui", rd=rd, imm=hi)
        if lo:
            self.emit("addi", rd=rd, rs1=rd, imm=lo)

    def li_label(self, rd: int, label: str) -> None:
        """Load a label's absolute address (always two instructions)."""
        self._items.append(("li_label_hi", (rd, label)))
        self._items.append(("li_label_lo", (rd, label)))

    def address_of(self, label: str) -> int:
        if label not in self._labels:
            raise AsmError(f"unresolved label {label!r}")
        return self.origin + 4 * self._labels[label]

    @property
    def symbols(self) -> dict[str, int]:
        return {name: self.origin + 4 * index for name, index in self._labels.items()}

    def assemble(self) -> bytes:
        """Resolve labels and emit the little-endian word stream."""
        out = bytearray()
        for index, (kind, payload) in enumerate(self._items):
            here = self.origin + 4 * index
            if kind == "word":
                word = payload
            elif kind == "instr":
                instr = payload
                if isinstance(instr.imm, str):
                    target = self.address_of(instr.imm)
                    instr = isa.Instr(
                        instr.op, rd=instr.rd, rs1=instr.rs1, rs2=instr.rs2,
                        imm=target - here, csr=instr.csr,
                    )
                try:
                    word = isa.encode(instr)
                except isa.EncodeError as exc:
                    raise AsmError(str(exc)) from exc
            else:
                rd, label = payload
                target = self.address_of(label)
                hi = ((target + 0x800) >> 12) & 0xFFFFF
                lo = target - ((hi << 12) & 0xFFFFFFFF)
                if lo >= 0x80000000:
                    lo -= 0x100000000
                if kind == "li_label_hi":
                    word = isa.encode(isa.Instr("lui", rd=rd, imm=hi))
                else:
                    word = isa.encode(isa.Instr("addi", rd=rd, rs1=rd, imm=lo))
            out += word.to_bytes(4, "little")
        return bytes(out)


@dataclass
class DemoImage:
    """Demo firmware plus the addresses tests and debuggers care about."""

    image: bytes
    symbols: dict[str, int]
    m: int
    n: int
    k: int
    seed: int
    a_addr: int
    b_addr: int
    c_addr: int
    flag_addr: int = field(default=0)


def _emit_lcg_step(prog: Program) -> None:
    """x1 = x1 * LCG_MUL + LCG_INC, via x4/x5 scratch."""
    prog.emit("addi", rd=4, rs1=1, imm=0)  # bit 0 of the multiplier
    for bit in _LCG_BITS[1:]:
        prog.emit("slli", rd=5, rs1=1, imm=bit)
        prog.emit("add", rd=4, rs1=4, rs2=5)
    prog.li(5, LCG_INC)
    prog.emit("add", rd=4, rs1=4, rs2=5)
    prog.emit("addi", rd=1, rs1=4, imm=0)


def demo_firmware(m: int, n: int, k: int, seed: int, wait: str = "irq",
                  data_base: int = 0x8000) -> DemoImage:
    """Generate the accelerator demo image (pure function of its arguments).

    wait: "irq" uses the completion interrupt with a trap handler setting
    a RAM flag; "poll" spins on STATUS.DONE. Both variants produce the
    same matrices, result and checksum output ("C=" + 8 hex digits).
    """
    if min(m, n, k) < 1:
        raise AsmError("matrix dimensions must be >= 1")
    if wait not in ("irq", "poll"):
        raise AsmError(f"unknown wait mode {wait!r}")
    flag_addr = data_base - 0x100
    a_addr = data_base
    b_addr = a_addr + 4 * m * k
    c_addr = b_addr + 4 * k * n

    prog = Program(origin=0)
    prog.label("start")
    if wait == "irq":
        prog.li_label(5, "handler")
        prog.emit("csrrw", rd=0, rs1=5, csr=isa.CSR_MTVEC)
        prog.li(4, 1 << 11)  # MEIE
        prog.emit("csrrs", rd=0, rs1=4, csr=isa.CSR_MIE)
        prog.li(4, 1 << 3)  # MIE
        prog.emit("csrrs", rd=0, rs1=4, csr=isa.CSR_MSTATUS)

    # fill A then B with the LCG sequence, starting from the seed
    prog.li(1, seed)
    prog.li(2, a_addr)
    prog.li(3, m * k + k * n)
    prog.label("fill_loop")
    _emit_lcg_step(prog)
    prog.emit("sw", rs1=2, rs2=1, imm=0)
    prog.emit("addi", rd=2, rs1=2, imm=4)
    prog.emit("addi", rd=3, rs1=3, imm=-1)
    prog.emit("bne", rs1=3, rs2=0, imm="fill_loop")

    # clear the completion flag, then program the accelerator
    prog.li(6, flag_addr)
    prog.emit("sw", rs1=6, rs2=0, imm=0)
    prog.li(5, platform.ACC_BASE)
    for offset, value in (
        (0x08, a_addr), (0x0C, b_addr), (0x10, c_addr),
        (0x14, m), (0x18, n), (0x1C, k),
    ):
        prog.li(4, value)
        prog.emit("sw", rs1=5, rs2=4, imm=offset)
    prog.li(4, 0b11 if wait == "irq" else 0b01)  # START (+IRQ_EN)
    prog.emit("sw", rs1=5, rs2=4, imm=0x00)

    prog.label("wait_loop")
    if wait == "irq":
        prog.emit("lw", rd=4, rs1=6, imm=0)
        prog.emit("beq", rs1=4, rs2=0, imm="wait_loop")
    else:
        prog.emit("lw", rd=4, rs1=5, imm=0x04)
        prog.emit("andi", rd=4, rs1=4, imm=0b010)  # DONE
        prog.emit("beq", rs1=4, rs2=0, imm="wait_loop")
        prog.li(4, 0b010)  # write-1-to-clear DONE
        prog.emit("sw", rs1=5, rs2=4, imm=0x04)

    # additive 32-bit checksum over C
    prog.label("post_accel")
    prog.emit("addi", rd=7, rs1=0, imm=0)
    prog.li(2, c_addr)
    prog.li(3, m * n)
    prog.label("sum_loop")
    prog.emit("lw", rd=4, rs1=2, imm=0)
    prog.emit("add", rd=7, rs1=7, rs2=4)
    prog.emit("addi", rd=2, rs1=2, imm=4)
    prog.emit("addi", rd=3, rs1=3, imm=-1)
    prog.emit("bne", rs1=3, rs2=0, imm="sum_loop")

    # print "C=" + 8 hex digits + "\n"
    prog.li(5, platform.UART_BASE)
    prog.li(4, ord("C"))
    prog.emit("sw", rs1=5, rs2=4, imm=0)
    prog.li(4, ord("="))
    prog.emit("sw", rs1=5, rs2=4, imm=0)
    prog.li(3, 8)
    prog.label("print_loop")
    prog.emit("srli", rd=4, rs1=7, imm=28)
    prog.emit("slti", rd=6, rs1=4, imm=10)
    prog.emit("bne", rs1=6, rs2=0, imm="print_digit")
    prog.emit("addi", rd=4, rs1=4, imm=ord("a") - 10)
    prog.emit("jal", rd=0, imm="print_emit")
    prog.label("print_digit")
    prog.emit("addi", rd=4, rs1=4, imm=ord("0"))
    prog.label("print_emit")
    prog.emit("sw", rs1=5, rs2=4, imm=0)
    prog.emit("slli", rd=7, rs1=7, imm=4)
    prog.emit("addi", rd=3, rs1=3, imm=-1)
    prog.emit("bne", rs1=3, rs2=0, imm="print_loop")
    prog.li(4, ord("\n"))
    prog.emit("sw", rs1=5, rs2=4, imm=0)

    # exit(0) through the simulation-control device
    prog.li(5, platform.SIMCTRL_BASE)
    prog.emit("sw", rs1=5, rs2=0, imm=0)
    prog.label("hang")
    prog.emit("jal", rd=0, imm="hang")

    if wait == "irq":
        # trap handler: clear DONE (drops the IRQ line), raise the flag
        prog.label("handler")
        prog.li(29, platform.ACC_BASE)
        prog.li(30, 0b010)
        prog.emit("sw", rs1=29, rs2=30, imm=0x04)
        prog.li(31, flag_addr)
        prog.li(30, 1)
        prog.emit("sw", rs1=31, rs2=30, imm=0)
        prog.emit("mret")

    image = prog.assemble()
    if len(image) > flag_addr:
        raise AsmError(f"demo code ({len(image)} bytes) would overlap its data")
    return DemoImage(
        image=image, symbols=prog.symbols, m=m, n=n, k=k, seed=seed,
        a_addr=a_addr, b_addr=b_addr, c_addr=c_addr, flag_addr=flag_addr,
    )


def busy_loop_firmware(iterations: int) -> bytes:
    """Counted two-instruction loop, then exit(0); for throughput runs."""
    prog = Program(origin=0)
    prog.li(1, iterations)
    prog.label("loop")
    prog.emit("addi", rd=1, rs1=1, imm=-1)
    prog.emit("bne", rs1=1, rs2=0, imm="loop")
    prog.li(5, platform.SIMCTRL_BASE)
    prog.emit("sw", rs1=5, rs2=0, imm=0)
    prog.label("hang")
    prog.emit("jal", rd=0, imm="hang")
    return prog.assemble()
