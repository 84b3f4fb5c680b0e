"""Base 32-bit integer instruction set: encoding and decoding.

One table drives both directions so the firmware assembler and the CPU
decoder cannot drift apart. Only machine-mode CSRs known to the core are
accepted in CSR instructions.
"""

from __future__ import annotations

from dataclasses import dataclass

CSR_MSTATUS = 0x300
CSR_MIE = 0x304
CSR_MTVEC = 0x305
CSR_MEPC = 0x341
CSR_MCAUSE = 0x342

IMPLEMENTED_CSRS = frozenset({CSR_MSTATUS, CSR_MIE, CSR_MTVEC, CSR_MEPC, CSR_MCAUSE})

# format tags
_U, _J, _I, _B, _S, _R, _SHIFT, _FENCE, _SYS, _CSR = range(10)

# op -> (format, opcode, funct3, funct7)
_TABLE: dict[str, tuple[int, int, int, int]] = {
    "lui":   (_U, 0x37, 0, 0),
    "auipc": (_U, 0x17, 0, 0),
    "jal":   (_J, 0x6F, 0, 0),
    "jalr":  (_I, 0x67, 0, 0),
    "beq":   (_B, 0x63, 0, 0),
    "bne":   (_B, 0x63, 1, 0),
    "blt":   (_B, 0x63, 4, 0),
    "bge":   (_B, 0x63, 5, 0),
    "bltu":  (_B, 0x63, 6, 0),
    "bgeu":  (_B, 0x63, 7, 0),
    "lb":    (_I, 0x03, 0, 0),
    "lh":    (_I, 0x03, 1, 0),
    "lw":    (_I, 0x03, 2, 0),
    "lbu":   (_I, 0x03, 4, 0),
    "lhu":   (_I, 0x03, 5, 0),
    "sb":    (_S, 0x23, 0, 0),
    "sh":    (_S, 0x23, 1, 0),
    "sw":    (_S, 0x23, 2, 0),
    "addi":  (_I, 0x13, 0, 0),
    "slti":  (_I, 0x13, 2, 0),
    "sltiu": (_I, 0x13, 3, 0),
    "xori":  (_I, 0x13, 4, 0),
    "ori":   (_I, 0x13, 6, 0),
    "andi":  (_I, 0x13, 7, 0),
    "slli":  (_SHIFT, 0x13, 1, 0x00),
    "srli":  (_SHIFT, 0x13, 5, 0x00),
    "srai":  (_SHIFT, 0x13, 5, 0x20),
    "add":   (_R, 0x33, 0, 0x00),
    "sub":   (_R, 0x33, 0, 0x20),
    "sll":   (_R, 0x33, 1, 0x00),
    "slt":   (_R, 0x33, 2, 0x00),
    "sltu":  (_R, 0x33, 3, 0x00),
    "xor":   (_R, 0x33, 4, 0x00),
    "srl":   (_R, 0x33, 5, 0x00),
    "sra":   (_R, 0x33, 5, 0x20),
    "or":    (_R, 0x33, 6, 0x00),
    "and":   (_R, 0x33, 7, 0x00),
    "fence": (_FENCE, 0x0F, 0, 0),
    "ecall":  (_SYS, 0x73, 0, 0x000),
    "ebreak": (_SYS, 0x73, 0, 0x001),
    "wfi":    (_SYS, 0x73, 0, 0x105),
    "mret":   (_SYS, 0x73, 0, 0x302),
    "csrrw": (_CSR, 0x73, 1, 0),
    "csrrs": (_CSR, 0x73, 2, 0),
    "csrrc": (_CSR, 0x73, 3, 0),
}

MNEMONICS = tuple(_TABLE)


class DecodeError(Exception):
    """Word does not match any implemented instruction encoding."""


class EncodeError(Exception):
    """Operand missing or out of range; message names the field."""


@dataclass(frozen=True)
class Instr:
    """Decoded/encodable instruction. Unused operand fields stay None."""

    op: str
    rd: int | None = None
    rs1: int | None = None
    rs2: int | None = None
    imm: int | None = None
    csr: int | None = None


def _want(op: str, name: str, value: int | None) -> int:
    if value is None:
        raise EncodeError(f"{op}: missing {name}")
    return value


def _check_reg(op: str, name: str, value: int | None) -> int:
    value = _want(op, name, value)
    if not 0 <= value <= 31:
        raise EncodeError(f"{op}: register {name}={value} out of range 0..31")
    return value


def _check_range(op: str, name: str, value: int | None, lo: int, hi: int) -> int:
    value = _want(op, name, value)
    if not lo <= value <= hi:
        raise EncodeError(f"{op}: {name}={value} outside [{lo}, {hi}]")
    return value


def _sext(value: int, bits: int) -> int:
    sign = 1 << (bits - 1)
    return (value & (sign - 1)) - (value & sign)


def encode(instr: Instr) -> int:
    """Return the canonical 32-bit encoding of `instr`."""
    entry = _TABLE.get(instr.op)
    if entry is None:
        raise EncodeError(f"unknown mnemonic {instr.op!r}")
    fmt, opcode, f3, f7 = entry
    op = instr.op

    if fmt == _U:
        rd = _check_reg(op, "rd", instr.rd)
        imm = _check_range(op, "imm", instr.imm, 0, 0xFFFFF)
        return (imm << 12) | (rd << 7) | opcode
    if fmt == _J:
        rd = _check_reg(op, "rd", instr.rd)
        imm = _check_range(op, "imm", instr.imm, -(1 << 20), (1 << 20) - 2)
        if imm % 2:
            raise EncodeError(f"{op}: imm={imm} must be even")
        u = imm & 0x1FFFFF
        word = (
            ((u >> 20) & 1) << 31
            | ((u >> 1) & 0x3FF) << 21
            | ((u >> 11) & 1) << 20
            | ((u >> 12) & 0xFF) << 12
        )
        return word | (rd << 7) | opcode
    if fmt == _I:
        rd = _check_reg(op, "rd", instr.rd)
        rs1 = _check_reg(op, "rs1", instr.rs1)
        imm = _check_range(op, "imm", instr.imm, -2048, 2047)
        return ((imm & 0xFFF) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
    if fmt == _B:
        rs1 = _check_reg(op, "rs1", instr.rs1)
        rs2 = _check_reg(op, "rs2", instr.rs2)
        imm = _check_range(op, "imm", instr.imm, -4096, 4094)
        if imm % 2:
            raise EncodeError(f"{op}: imm={imm} must be even")
        u = imm & 0x1FFF
        word = (
            ((u >> 12) & 1) << 31
            | ((u >> 5) & 0x3F) << 25
            | ((u >> 1) & 0xF) << 8
            | ((u >> 11) & 1) << 7
        )
        return word | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | opcode
    if fmt == _S:
        rs1 = _check_reg(op, "rs1", instr.rs1)
        rs2 = _check_reg(op, "rs2", instr.rs2)
        imm = _check_range(op, "imm", instr.imm, -2048, 2047)
        u = imm & 0xFFF
        return (
            ((u >> 5) & 0x7F) << 25
            | (rs2 << 20)
            | (rs1 << 15)
            | (f3 << 12)
            | ((u & 0x1F) << 7)
            | opcode
        )
    if fmt == _SHIFT:
        rd = _check_reg(op, "rd", instr.rd)
        rs1 = _check_reg(op, "rs1", instr.rs1)
        shamt = _check_range(op, "imm", instr.imm, 0, 31)
        return (f7 << 25) | (shamt << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
    if fmt == _R:
        rd = _check_reg(op, "rd", instr.rd)
        rs1 = _check_reg(op, "rs1", instr.rs1)
        rs2 = _check_reg(op, "rs2", instr.rs2)
        return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
    if fmt == _FENCE:
        return 0x0FF0000F  # canonical fence iorw,iorw
    if fmt == _SYS:
        return (f7 << 20) | opcode
    # _CSR
    rd = _check_reg(op, "rd", instr.rd)
    rs1 = _check_reg(op, "rs1", instr.rs1)
    csr = _want(op, "csr", instr.csr)
    if csr not in IMPLEMENTED_CSRS:
        raise EncodeError(f"{op}: csr={csr:#x} not implemented")
    return (csr << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode


def decode(word: int) -> Instr:
    """Decode a 32-bit word; raises DecodeError on unrecognized encodings."""
    word &= 0xFFFFFFFF
    opcode = word & 0x7F
    rd = (word >> 7) & 0x1F
    f3 = (word >> 12) & 0x7
    rs1 = (word >> 15) & 0x1F
    rs2 = (word >> 20) & 0x1F
    f7 = (word >> 25) & 0x7F

    if opcode == 0x37:
        return Instr("lui", rd=rd, imm=word >> 12)
    if opcode == 0x17:
        return Instr("auipc", rd=rd, imm=word >> 12)
    if opcode == 0x6F:
        imm = (
            ((word >> 31) & 1) << 20
            | ((word >> 21) & 0x3FF) << 1
            | ((word >> 20) & 1) << 11
            | ((word >> 12) & 0xFF) << 12
        )
        return Instr("jal", rd=rd, imm=_sext(imm, 21))
    if opcode == 0x67:
        if f3 != 0:
            raise DecodeError(f"bad jalr funct3 in {word:#010x}")
        return Instr("jalr", rd=rd, rs1=rs1, imm=_sext(word >> 20, 12))
    if opcode == 0x63:
        names = {0: "beq", 1: "bne", 4: "blt", 5: "bge", 6: "bltu", 7: "bgeu"}
        if f3 not in names:
            raise DecodeError(f"bad branch funct3 in {word:#010x}")
        imm = (
            ((word >> 31) & 1) << 12
            | ((word >> 25) & 0x3F) << 5
            | ((word >> 8) & 0xF) << 1
            | ((word >> 7) & 1) << 11
        )
        return Instr(names[f3], rs1=rs1, rs2=rs2, imm=_sext(imm, 13))
    if opcode == 0x03:
        names = {0: "lb", 1: "lh", 2: "lw", 4: "lbu", 5: "lhu"}
        if f3 not in names:
            raise DecodeError(f"bad load funct3 in {word:#010x}")
        return Instr(names[f3], rd=rd, rs1=rs1, imm=_sext(word >> 20, 12))
    if opcode == 0x23:
        names = {0: "sb", 1: "sh", 2: "sw"}
        if f3 not in names:
            raise DecodeError(f"bad store funct3 in {word:#010x}")
        imm = ((word >> 25) & 0x7F) << 5 | ((word >> 7) & 0x1F)
        return Instr(names[f3], rs1=rs1, rs2=rs2, imm=_sext(imm, 12))
    if opcode == 0x13:
        names = {0: "addi", 2: "slti", 3: "sltiu", 4: "xori", 6: "ori", 7: "andi"}
        if f3 in names:
            return Instr(names[f3], rd=rd, rs1=rs1, imm=_sext(word >> 20, 12))
        if f3 == 1 and f7 == 0x00:
            return Instr("slli", rd=rd, rs1=rs1, imm=rs2)
        if f3 == 5 and f7 == 0x00:
            return Instr("srli", rd=rd, rs1=rs1, imm=rs2)
        if f3 == 5 and f7 == 0x20:
            return Instr("srai", rd=rd, rs1=rs1, imm=rs2)
        raise DecodeError(f"bad op-imm encoding {word:#010x}")
    if opcode == 0x33:
        table = {
            (0, 0x00): "add", (0, 0x20): "sub", (1, 0x00): "sll",
            (2, 0x00): "slt", (3, 0x00): "sltu", (4, 0x00): "xor",
            (5, 0x00): "srl", (5, 0x20): "sra", (6, 0x00): "or",
            (7, 0x00): "and",
        }
        name = table.get((f3, f7))
        if name is None:
            raise DecodeError(f"bad op encoding {word:#010x}")
        return Instr(name, rd=rd, rs1=rs1, rs2=rs2)
    if opcode == 0x0F:
        if f3 != 0:
            raise DecodeError(f"unsupported misc-mem {word:#010x}")
        return Instr("fence")
    if opcode == 0x73:
        if f3 == 0:
            names = {0x00000073: "ecall", 0x00100073: "ebreak",
                     0x10500073: "wfi", 0x30200073: "mret"}
            if word in names:
                return Instr(names[word])
            raise DecodeError(f"unsupported system encoding {word:#010x}")
        names = {1: "csrrw", 2: "csrrs", 3: "csrrc"}
        if f3 not in names:
            raise DecodeError(f"unsupported csr funct3 in {word:#010x}")
        csr = word >> 20
        if csr not in IMPLEMENTED_CSRS:
            raise DecodeError(f"csr {csr:#x} not implemented ({word:#010x})")
        return Instr(names[f3], rd=rd, rs1=rs1, csr=csr)
    raise DecodeError(f"unrecognized opcode in {word:#010x}")
