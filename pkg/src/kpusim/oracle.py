"""Flat reference interpreter and state comparison.

The interpreter executes an image one instruction at a time over plain
32-bit registers, 32-bit logical user memory and 64-bit supervisor cells.
No pipeline, no padding, no ciphertext: it is the answer key the encrypted
machine is checked against. It still mirrors every architectural rule that
shows through to results: the prefix latch protocol, trap entry and return,
mode containment of special registers, flag conventions, and the quirk that
an unwritten user cell reads back as the decryption of an all-zero block.

compare() translates a finished machine into this flat domain and diffs:
registers by their 32-bit values, user memory by logical address (detecting
aliases, where one logical address ended up spread over several physical
cells with different contents), debug output verbatim.
"""

from dataclasses import dataclass, field

from . import alu, isa
from .codec import MASK32, word_value
from .core import (Mode, SPR_CONFIG, SPR_EPCR, SPR_SR, USER_READABLE_SPRS,
                   VEC_ILLEGAL, VEC_SYSCALL, pack_sr, unpack_sr)
from .isa import InstrClass
from .memsys import SUPER_REGION_BYTES, OutOfRegion, UnalignedSupervisorAccess

_IMM_ALU_OP = {
    isa.OP_ADDI: alu.OP_ADD, isa.OP_ANDI: alu.OP_AND, isa.OP_ORI: alu.OP_OR,
    isa.OP_XORI: alu.OP_XOR, isa.OP_MULI: alu.OP_MUL,
}
_SHIFT_ALU_OP = {isa.SHIFT_SLL: alu.OP_SLL, isa.SHIFT_SRL: alu.OP_SRL,
                 isa.SHIFT_SRA: alu.OP_SRA}


class MaxStepsExceeded(Exception):
    pass


class OracleFault(Exception):
    """Program did something the flat machine cannot continue from."""


@dataclass
class OracleResult:
    regs: list
    user_mem: dict
    super_cells: dict
    outputs: list
    steps: int
    mode: Mode
    flags: dict


class Interpreter:
    def __init__(self, image, cdc):
        self.codec = cdc
        self.pc = image.entry & MASK32
        self.mode = Mode.USER if image.mode == "user" else Mode.SUPERVISOR
        self.regs = [0] * 32
        self.flags = {"f": False, "cy": False, "ov": False}
        self.epcr = 0
        # mirrors the machine's hidden saved-SR, which resets to all-clear:
        # an rfe with no preceding trap drops to user mode with clean flags
        self.esr = (Mode.USER, {"f": False, "cy": False, "ov": False})
        self.spr = {SPR_CONFIG: 0x4B505531}
        self.text = dict(image.text)
        self.user_mem = {}
        self.super_cells = {}
        for addr, value in image.data.items():
            self.super_cells[self._cell(addr)] = value
        self.outputs = []
        self.steps = 0
        self.halted = False
        self.p0 = None
        self.p1 = None
        # what the encrypted machine reads from a never-written cell
        self.blank = word_value(cdc.decrypt(0))

    # ----------------------------------------------------------- helpers --

    def _cell(self, addr):
        if addr % 8:
            raise UnalignedSupervisorAccess("address 0x%x" % addr)
        if addr >= SUPER_REGION_BYTES:
            raise OutOfRegion("address 0x%x" % addr)
        return addr // 8

    def _write(self, rd, value):
        if rd:
            self.regs[rd] = value & MASK32

    def _apply(self, effects):
        self.flags.update(effects)

    def _trap(self, vector, return_pc):
        self.esr = (self.mode, dict(self.flags))
        self.epcr = return_pc & MASK32
        self.flags = {"f": False, "cy": False, "ov": False}
        self.mode = Mode.SUPERVISOR
        self.pc = vector
        self.p0 = self.p1 = None

    def _read_spr(self, index):
        if self.mode is Mode.USER:
            return self.spr[index] if index in USER_READABLE_SPRS else 0
        if index == SPR_SR:
            return pack_sr(self.mode is Mode.SUPERVISOR, self.flags["f"],
                           self.flags["cy"], self.flags["ov"])
        if index == SPR_EPCR:
            return self.epcr
        return self.spr.get(index, 0)

    def _write_spr(self, index, value):
        if self.mode is Mode.USER or index == SPR_CONFIG:
            return
        if index == SPR_SR:
            _, f, cy, ov = unpack_sr(value)
            self.flags = {"f": f, "cy": cy, "ov": ov}
        elif index == SPR_EPCR:
            self.epcr = value & MASK32
        else:
            self.spr[index] = value & MASK32

    # -------------------------------------------------------------- step --

    def step(self):
        pc = self.pc
        word = self.text.get(pc)
        if word is None:
            self.steps += 1
            self._trap(VEC_ILLEGAL, pc)
            return
        try:
            ins = isa.decode(word)
        except isa.IllegalOpcode:
            self.steps += 1
            self._trap(VEC_ILLEGAL, pc)
            return
        user = self.mode is Mode.USER

        if ins.cls is InstrClass.PREFIX:
            # merged into the immediate they precede, not a step of their own
            if ins.prefix_idx == 0:
                self.p0, self.p1 = ins.prefix_payload, None
            elif self.p0 is not None and self.p1 is None:
                self.p1 = ins.prefix_payload
            else:
                self.p0 = self.p1 = None
            self.pc = (pc + 4) & MASK32
            return
        self.steps += 1

        literal = None
        if ins.cls is InstrClass.IMMEDIATE:
            if user:
                if self.p0 is None or self.p1 is None:
                    self._trap(VEC_ILLEGAL, pc)
                    return
                cipher = (self.p0 << 40) | (self.p1 << 16) | (word & 0xFFFF)
                literal = word_value(self.codec.decrypt(cipher))
            else:
                literal = ins.imm & MASK32
        # every non-prefix instruction leaves the latch empty
        self.p0 = self.p1 = None

        if user and (ins.cls is InstrClass.CLASS64 or ins.mnemonic == "l.rfe"):
            self._trap(VEC_ILLEGAL, pc)
            return

        self.pc = (pc + 4) & MASK32
        m = ins.mnemonic

        if ins.cls is InstrClass.NOP:
            if ins.imm == 1:
                self.halted = True
            elif ins.imm == 2:
                self.outputs.append(self.regs[3])
            return
        if m == "l.sys":
            self._trap(VEC_SYSCALL, (pc + 4) & MASK32)
            return
        if m == "l.rfe":
            self.mode, self.flags = self.esr[0], dict(self.esr[1])
            self.pc = self.epcr
            return

        if ins.cls is InstrClass.REGISTER:
            a, b = self.regs[ins.ra], self.regs[ins.rb]
            if ins.opcode == isa.OP_SF:
                self.flags["f"] = alu.compare_flag(ins.funct, a, b)
                return
            res, effects = alu.execute(ins.funct, a, b)
            self._write(ins.rd, res)
            self._apply(effects)
            return
        if ins.cls is InstrClass.IMMEDIATE:
            op = (_SHIFT_ALU_OP[ins.funct] if ins.opcode == isa.OP_SHIFTI
                  else _IMM_ALU_OP[ins.opcode])
            res, effects = alu.execute(op, self.regs[ins.ra], literal)
            self._write(ins.rd, res)
            self._apply(effects)
            return
        if ins.cls is InstrClass.LOAD:
            ea = (self.regs[ins.ra] + ins.imm) & MASK32
            if user:
                self._write(ins.rd, self.user_mem.get(ea, self.blank))
            else:
                self._write(ins.rd, self.super_cells.get(self._cell(ea), 0) & MASK32)
            return
        if ins.cls is InstrClass.STORE:
            ea = (self.regs[ins.ra] + ins.imm) & MASK32
            if user:
                self.user_mem[ea] = self.regs[ins.rb]
            else:
                self.super_cells[self._cell(ea)] = self.regs[ins.rb]
            return
        if ins.cls is InstrClass.CLASS64:
            if ins.funct == isa.C64_ADD:
                self._write(ins.rd, self.regs[ins.ra] + self.regs[ins.rb])
                return
            ea = (self.regs[ins.ra] + ins.imm) & MASK32
            if ins.funct == isa.C64_LD:
                self._write(ins.rd, self.super_cells.get(self._cell(ea), 0))
            else:
                self.super_cells[self._cell(ea)] = self.regs[ins.rb]
            return
        if ins.cls is InstrClass.BRANCH:
            taken = self.flags["f"] if m == "l.bf" else not self.flags["f"]
            if taken:
                self.pc = (pc + 4 * ins.imm) & MASK32
            return
        if ins.cls is InstrClass.JUMP:
            if m in ("l.j", "l.jal"):
                target = (pc + 4 * ins.imm) & MASK32
            else:
                target = self.regs[ins.rb]
            if m in ("l.jal", "l.jalr"):
                self._write(9, (pc + 4) & MASK32)
            self.pc = target
            return
        if m == "l.mfspr":
            index = (self.regs[ins.ra] | ins.imm) & 0xFFFF
            self._write(ins.rd, self._read_spr(index))
            return
        if m == "l.mtspr":
            index = (self.regs[ins.ra] | ins.imm) & 0xFFFF
            self._write_spr(index, self.regs[ins.rb])
            return
        raise OracleFault("unhandled instruction %s" % m)

    def run(self, max_steps=2_000_000):
        while not self.halted:
            if self.steps >= max_steps:
                raise MaxStepsExceeded("no exit after %d steps" % max_steps)
            self.step()
        return OracleResult(list(self.regs), dict(self.user_mem),
                            dict(self.super_cells), list(self.outputs),
                            self.steps, self.mode, dict(self.flags))


def interpret(image, cdc, max_steps=2_000_000):
    """Run the flat interpreter over an image to completion."""
    return Interpreter(image, cdc).run(max_steps)


# ------------------------------------------------------------- comparison --

@dataclass
class SimView:
    """Encrypted-machine end state in serializable form."""

    mode: str
    regs_real: list
    regs_shadow: list
    cells: dict = field(default_factory=dict)
    tlb: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)


def engine_view(engine):
    st = engine.state
    return SimView(
        mode=st.mode.value,
        regs_real=list(st.regs),
        regs_shadow=list(st.shadow),
        cells=dict(engine.mem.cells),
        tlb=dict(engine.mem.tlb.entries),
        outputs=list(engine.outputs),
    )


def render_dump(view):
    lines = ["KPUDUMP 1", "MODE %s" % view.mode]
    for i in range(32):
        lines.append("REG %02d %016x %016x"
                     % (i, view.regs_real[i], view.regs_shadow[i]))
    for index in sorted(view.cells):
        if view.cells[index]:
            lines.append("PHYS %d %016x" % (index, view.cells[index]))
    for cipher, index in sorted(view.tlb.items(), key=lambda kv: kv[1]):
        lines.append("TLBMAP %016x %d" % (cipher, index))
    for value in view.outputs:
        lines.append("OUT %d" % value)
    return "\n".join(lines) + "\n"


def parse_sim_dump(text):
    view = SimView(mode="super", regs_real=[0] * 32, regs_shadow=[0] * 32)
    seen_magic = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if not seen_magic:
            if fields != ["KPUDUMP", "1"]:
                raise ValueError("line %d: expected KPUDUMP 1 header" % lineno)
            seen_magic = True
            continue
        kind = fields[0]
        if kind == "MODE":
            view.mode = fields[1]
        elif kind == "REG":
            i = int(fields[1], 10)
            view.regs_real[i] = int(fields[2], 16)
            view.regs_shadow[i] = int(fields[3], 16)
        elif kind == "PHYS":
            view.cells[int(fields[1], 10)] = int(fields[2], 16)
        elif kind == "TLBMAP":
            view.tlb[int(fields[1], 16)] = int(fields[2], 10)
        elif kind == "OUT":
            view.outputs.append(int(fields[1], 10))
        else:
            raise ValueError("line %d: unrecognized record %r" % (lineno, kind))
    return view


class AliasDetected(Exception):
    """One logical address is spread over physical cells that disagree."""


def _domainize_register(view, i, cdc):
    if view.mode == "user":
        return view.regs_shadow[i] & MASK32
    real = view.regs_real[i]
    if real >> 32 == 0:
        return real & MASK32
    return word_value(cdc.decrypt(real))


def compare(view, result, cdc):
    """Diff an encrypted-machine view against an oracle result.

    Returns a list of human-readable mismatch lines; empty means the two
    agree. Raises AliasDetected if the encrypted machine's memory holds
    several inconsistent physical copies of one logical address.
    """
    problems = []
    for i in range(32):
        sim = _domainize_register(view, i, cdc)
        ref = result.regs[i] & MASK32
        if sim != ref:
            problems.append("r%d: machine 0x%08x, reference 0x%08x"
                            % (i, sim, ref))

    logical = {}
    for cipher, index in view.tlb.items():
        ea_block = cdc.decrypt(cipher)
        addr = word_value(ea_block)
        raw = view.cells.get(index, 0)
        value = word_value(cdc.decrypt(raw)) if raw else None
        logical.setdefault(addr, []).append(value)
    blank = word_value(cdc.decrypt(0))
    for addr, values in sorted(logical.items()):
        seen = {blank if v is None else v for v in values}
        if len(seen) > 1:
            raise AliasDetected(
                "logical address 0x%08x maps to %d cells with values %s"
                % (addr, len(values),
                   ", ".join("0x%08x" % v for v in sorted(seen))))
    for addr, ref in sorted(result.user_mem.items()):
        values = logical.get(addr)
        if values is None:
            problems.append("memory 0x%08x: missing from machine, "
                            "reference 0x%08x" % (addr, ref))
            continue
        value = blank if values[0] is None else values[0]
        if value != ref & MASK32:
            problems.append("memory 0x%08x: machine 0x%08x, reference 0x%08x"
                            % (addr, value, ref & MASK32))

    if view.outputs != [v & MASK32 for v in result.outputs]:
        problems.append("outputs: machine %r, reference %r"
                        % (view.outputs, result.outputs))
    return problems
