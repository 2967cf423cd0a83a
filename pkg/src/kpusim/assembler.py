"""Two-pass assembler producing loadable machine images.

Inside a ``.encrypt on`` region every immediate-class instruction carries a
64-bit encrypted immediate: the assembler pads the 32-bit literal with a
deterministic padding word, encrypts the block, and emits the ciphertext as
two prefix instructions (24-bit payloads each) followed by the instruction
itself holding the final 16 bits. Shift immediates keep their 2-bit
sub-operation inside that final segment, so for them the assembler retries
padding candidates until the ciphertext happens to land the right sub-op
bits; the search is deterministic, a few tries on average.

The pass structure is: pass one fixes every instruction's address (sizes
never depend on operand values, an encrypted immediate-class line is always
three words), pass two encodes against the resolved labels and assigns
padding ordinals in program order.

A small lint pass flags source patterns that break the pad-provenance
discipline encrypted programs rely on: arithmetic performed on a register
holding a return address, and register jumps through values that were
computed or loaded as data.
"""

import re
from dataclasses import dataclass, field

from . import isa
from .codec import MASK32, MASK64, make_padding

MAX_PAD_ATTEMPTS = 4096


class ParseError(Exception):
    def __init__(self, lineno, msg):
        self.lineno = lineno
        super().__init__("line %d: %s" % (lineno, msg))


class UndefinedLabel(ParseError):
    pass


class CryptoSafetyError(Exception):
    """Strict-mode lint failure."""


class FormatError(Exception):
    """Malformed image text."""

    def __init__(self, lineno, msg):
        self.lineno = lineno
        super().__init__("line %d: %s" % (lineno, msg))


@dataclass
class Image:
    entry: int = 0x100
    mode: str = "super"
    text: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)


# ------------------------------------------------------------ image files --

def write_image(image):
    lines = ["KPUIMG 1", "ENTRY 0x%08x" % image.entry, "MODE %s" % image.mode]
    for addr in sorted(image.text):
        lines.append("TEXT 0x%08x %08x" % (addr, image.text[addr]))
    for addr in sorted(image.data):
        lines.append("DATA 0x%08x %016x" % (addr, image.data[addr]))
    return "\n".join(lines) + "\n"


def parse_image(text):
    image = Image(text={}, data={})
    seen_magic = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if not seen_magic:
            if fields != ["KPUIMG", "1"]:
                raise FormatError(lineno, "expected KPUIMG 1 header")
            seen_magic = True
            continue
        kind = fields[0]
        try:
            if kind == "ENTRY" and len(fields) == 2:
                image.entry = int(fields[1], 16)
            elif kind == "MODE" and len(fields) == 2:
                if fields[1] not in ("user", "super"):
                    raise FormatError(lineno, "mode must be user or super")
                image.mode = fields[1]
            elif kind == "TEXT" and len(fields) == 3:
                addr = int(fields[1], 16)
                word = int(fields[2], 16)
                if addr % 4 or addr > MASK32 or word > MASK32:
                    raise FormatError(lineno, "bad text record")
                image.text[addr] = word
            elif kind == "DATA" and len(fields) == 3:
                addr = int(fields[1], 16)
                value = int(fields[2], 16)
                if addr > MASK32 or value > MASK64:
                    raise FormatError(lineno, "bad data record")
                image.data[addr] = value
            else:
                raise FormatError(lineno, "unrecognized record %r" % kind)
        except ValueError:
            raise FormatError(lineno, "bad number in %r" % line) from None
    if not seen_magic:
        raise FormatError(1, "empty image")
    return image


# ---------------------------------------------------------------- parsing --

_LABEL_RE = re.compile(r"^([A-Za-z_.$][\w.$]*):")
_REG_RE = re.compile(r"^[rR]([0-9]|[12][0-9]|3[01])$")
_MEM_RE = re.compile(r"^(.*)\(([rR][0-9]+)\)$")

_RRR = {"l.add": isa.ALU_ADD, "l.sub": isa.ALU_SUB, "l.and": isa.ALU_AND,
        "l.or": isa.ALU_OR, "l.xor": isa.ALU_XOR, "l.mul": isa.ALU_MUL,
        "l.divu": isa.ALU_DIVU, "l.sll": isa.ALU_SLL, "l.srl": isa.ALU_SRL,
        "l.sra": isa.ALU_SRA}
_SF = {"l.sfeq": isa.SF_EQ, "l.sfne": isa.SF_NE, "l.sfgts": isa.SF_GTS,
       "l.sfges": isa.SF_GES, "l.sflts": isa.SF_LTS, "l.sfles": isa.SF_LES}
_IMM = {"l.addi": isa.OP_ADDI, "l.andi": isa.OP_ANDI, "l.ori": isa.OP_ORI,
        "l.xori": isa.OP_XORI, "l.muli": isa.OP_MULI}
_SHIFT = {"l.slli": isa.SHIFT_SLL, "l.srli": isa.SHIFT_SRL,
          "l.srai": isa.SHIFT_SRA}
_RELS = {"l.j": isa.OP_J, "l.jal": isa.OP_JAL, "l.bf": isa.OP_BF,
         "l.bnf": isa.OP_BNF}


def _parse_reg(tok, lineno):
    m = _REG_RE.match(tok.strip())
    if not m:
        raise ParseError(lineno, "expected register, got %r" % tok.strip())
    return int(m.group(1))


class _Item:
    """One source statement bound to an address during pass one."""

    def __init__(self, lineno, mnemonic, ops, addr, encrypted, labeled):
        self.lineno = lineno
        self.mnemonic = mnemonic
        self.ops = ops
        self.addr = addr
        self.encrypted = encrypted
        self.labeled = labeled


class Assembler:
    def __init__(self, cdc, seed=0):
        self.codec = cdc
        self.seed = seed

    # public entry point
    def assemble(self, source, strict=False):
        items, labels, image, words = self._pass_one(source)
        self._pass_two(items, labels, image, words)
        diagnostics = lint(items)
        if strict and diagnostics:
            raise CryptoSafetyError("\n".join(diagnostics))
        return image, diagnostics

    # ------------------------------------------------------------ pass 1 --

    def _pass_one(self, source):
        loc = 0x100
        encrypted = False
        labels = {}
        items = []
        words = []                       # (addr, raw word) from .word
        image = Image(text={}, data={})
        entry_expr = None

        for lineno, raw in enumerate(source.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            labeled = False
            while True:
                m = _LABEL_RE.match(line)
                if not m:
                    break
                name = m.group(1)
                if name in labels:
                    raise ParseError(lineno, "duplicate label %r" % name)
                labels[name] = loc
                labeled = True
                line = line[m.end():].strip()
            if not line:
                continue

            fields = line.split(None, 1)
            head = fields[0]
            rest = fields[1].strip() if len(fields) > 1 else ""

            if head.startswith("."):
                loc, encrypted, entry_expr = self._directive(
                    head, rest, lineno, loc, encrypted, entry_expr,
                    image, words, labels)
                continue

            item = _Item(lineno, head, rest, loc, encrypted, labeled)
            items.append(item)
            if encrypted and (head in _IMM or head in _SHIFT):
                loc += 12                # prefix pair plus the instruction
            else:
                loc += 4

        if entry_expr is not None:
            image.entry = self._expr(entry_expr[1], labels, entry_expr[0])
        return items, labels, image, words

    def _directive(self, head, rest, lineno, loc, encrypted, entry_expr,
                   image, words, labels):
        if head == ".org":
            value = self._expr(rest, labels, lineno)
            if value % 4:
                raise ParseError(lineno, ".org address not word aligned")
            return value, encrypted, entry_expr
        if head == ".encrypt":
            if rest not in ("on", "off"):
                raise ParseError(lineno, ".encrypt takes on or off")
            return loc, rest == "on", entry_expr
        if head == ".entry":
            return loc, encrypted, (lineno, rest)
        if head == ".mode":
            if rest not in ("user", "super"):
                raise ParseError(lineno, ".mode takes user or super")
            image.mode = rest
            return loc, encrypted, entry_expr
        if head == ".word":
            words.append((lineno, loc, rest))
            return loc + 4, encrypted, entry_expr
        if head == ".space":
            n = self._expr(rest, labels, lineno)
            if n < 0 or n % 4:
                raise ParseError(lineno, ".space takes a multiple of 4")
            return loc + n, encrypted, entry_expr
        if head == ".dword":
            parts = [p.strip() for p in rest.split(",")]
            if len(parts) != 2:
                raise ParseError(lineno, ".dword takes address, value")
            addr = self._expr(parts[0], labels, lineno)
            value = self._expr(parts[1], labels, lineno) & MASK64
            image.data[addr & MASK32] = value
            return loc, encrypted, entry_expr
        raise ParseError(lineno, "unknown directive %s" % head)

    # ------------------------------------------------------------ pass 2 --

    def _pass_two(self, items, labels, image, words):
        ordinal = 0
        for lineno, addr, expr in words:
            self._put_word(image, addr, self._expr(expr, labels, lineno) & MASK32,
                           lineno)
        for item in items:
            try:
                encoded = self._encode_item(item, labels, ordinal)
            except isa.OperandOutOfRange as exc:
                raise ParseError(item.lineno, str(exc)) from None
            if item.encrypted and \
                    (item.mnemonic in _IMM or item.mnemonic in _SHIFT):
                ordinal += 1
            for offset, word in enumerate(encoded):
                self._put_word(image, item.addr + 4 * offset, word, item.lineno)

    def _put_word(self, image, addr, word, lineno):
        addr &= MASK32
        if addr in image.text:
            raise ParseError(lineno, "text overlap at 0x%08x" % addr)
        image.text[addr] = word

    def _expr(self, text, labels, lineno):
        s = text.strip()
        if not s:
            raise ParseError(lineno, "empty expression")
        try:
            return int(s, 0)
        except ValueError:
            pass
        m = re.match(r"^([A-Za-z_.$][\w.$]*)\s*([+-]\s*\d+)?$", s)
        if m:
            name = m.group(1)
            if name not in labels:
                raise UndefinedLabel(lineno, "undefined label %r" % name)
            value = labels[name]
            if m.group(2):
                value += int(m.group(2).replace(" ", ""), 0)
            return value
        raise ParseError(lineno, "cannot parse expression %r" % s)

    def _split_ops(self, item, n):
        parts = [p.strip() for p in item.ops.split(",")] if item.ops else []
        if len(parts) != n:
            raise ParseError(item.lineno,
                             "%s takes %d operands" % (item.mnemonic, n))
        return parts

    def _mem_operand(self, tok, lineno, labels):
        m = _MEM_RE.match(tok.strip())
        if not m:
            raise ParseError(lineno, "expected offset(reg), got %r" % tok)
        off = self._expr(m.group(1), labels, lineno)
        return off, _parse_reg(m.group(2), lineno)

    def _encode_item(self, item, labels, ordinal):
        mn = item.mnemonic
        lineno = item.lineno

        if mn in _RELS:
            (target,) = self._split_ops(item, 1)
            value = self._expr(target, labels, lineno)
            delta = value - item.addr
            if delta % 4:
                raise ParseError(lineno, "branch target not word aligned")
            ins = isa.Instruction(_RELS[mn], mn,
                                  isa.InstrClass.JUMP, imm=delta // 4)
            return [isa.encode(ins)]
        if mn in ("l.jr", "l.jalr"):
            (reg,) = self._split_ops(item, 1)
            op = isa.OP_JR if mn == "l.jr" else isa.OP_JALR
            return [isa.encode(isa.Instruction(op, mn, isa.InstrClass.JUMP,
                                               rb=_parse_reg(reg, lineno)))]
        if mn == "l.nop":
            k = self._expr(item.ops, labels, lineno) if item.ops else 0
            return [isa.encode(isa.Instruction(isa.OP_NOP, mn,
                                               isa.InstrClass.NOP, imm=k))]
        if mn == "l.sys":
            k = self._expr(item.ops, labels, lineno) if item.ops else 0
            return [isa.encode(isa.Instruction(isa.OP_SYS, mn,
                                               isa.InstrClass.SYSTRAP, imm=k))]
        if mn == "l.rfe":
            self._split_ops(item, 0)
            return [isa.encode(isa.Instruction(isa.OP_RFE, mn,
                                               isa.InstrClass.SYSTRAP))]
        if mn == "l.prefix":
            idx, payload = self._split_ops(item, 2)
            return [isa.encode(isa.Instruction(
                isa.OP_PREFIX, mn, isa.InstrClass.PREFIX,
                prefix_idx=self._expr(idx, labels, lineno),
                prefix_payload=self._expr(payload, labels, lineno)))]
        if mn in _RRR:
            rd, ra, rb = (_parse_reg(t, lineno)
                          for t in self._split_ops(item, 3))
            return [isa.encode(isa.Instruction(
                isa.OP_ALU, mn, isa.InstrClass.REGISTER,
                rd=rd, ra=ra, rb=rb, funct=_RRR[mn]))]
        if mn == "l.add64":
            rd, ra, rb = (_parse_reg(t, lineno)
                          for t in self._split_ops(item, 3))
            return [isa.encode(isa.Instruction(
                isa.OP_C64, mn, isa.InstrClass.CLASS64,
                rd=rd, ra=ra, rb=rb, funct=isa.C64_ADD))]
        if mn in _SF:
            ra, rb = (_parse_reg(t, lineno) for t in self._split_ops(item, 2))
            return [isa.encode(isa.Instruction(
                isa.OP_SF, mn, isa.InstrClass.REGISTER,
                ra=ra, rb=rb, funct=_SF[mn]))]
        if mn in ("l.lwz", "l.ld"):
            rd_tok, mem = self._split_ops(item, 2)
            rd = _parse_reg(rd_tok, lineno)
            off, ra = self._mem_operand(mem, lineno, labels)
            if mn == "l.lwz":
                return [isa.encode(isa.Instruction(
                    isa.OP_LWZ, mn, isa.InstrClass.LOAD,
                    rd=rd, ra=ra, imm=off))]
            return [isa.encode(isa.Instruction(
                isa.OP_C64, mn, isa.InstrClass.CLASS64,
                rd=rd, ra=ra, imm=off, funct=isa.C64_LD))]
        if mn in ("l.sw", "l.sd"):
            mem, rb_tok = self._split_ops(item, 2)
            rb = _parse_reg(rb_tok, lineno)
            off, ra = self._mem_operand(mem, lineno, labels)
            if mn == "l.sw":
                return [isa.encode(isa.Instruction(
                    isa.OP_SW, mn, isa.InstrClass.STORE,
                    ra=ra, rb=rb, imm=off))]
            return [isa.encode(isa.Instruction(
                isa.OP_C64, mn, isa.InstrClass.CLASS64,
                ra=ra, rb=rb, imm=off, funct=isa.C64_SD))]
        if mn == "l.mfspr":
            rd, ra, k = self._split_ops(item, 3)
            return [isa.encode(isa.Instruction(
                isa.OP_MFSPR, mn, isa.InstrClass.SPR,
                rd=_parse_reg(rd, lineno), ra=_parse_reg(ra, lineno),
                imm=self._expr(k, labels, lineno)))]
        if mn == "l.mtspr":
            ra, rb, k = self._split_ops(item, 3)
            return [isa.encode(isa.Instruction(
                isa.OP_MTSPR, mn, isa.InstrClass.SPR,
                ra=_parse_reg(ra, lineno), rb=_parse_reg(rb, lineno),
                imm=self._expr(k, labels, lineno)))]
        if mn in _IMM or mn in _SHIFT:
            rd, ra, imm_tok = self._split_ops(item, 3)
            rd = _parse_reg(rd, lineno)
            ra = _parse_reg(ra, lineno)
            literal = self._expr(imm_tok, labels, lineno)
            if item.encrypted:
                return self._encode_encrypted(mn, rd, ra, literal,
                                              ordinal, lineno)
            if mn in _SHIFT:
                return [isa.encode(isa.Instruction(
                    isa.OP_SHIFTI, mn, isa.InstrClass.IMMEDIATE, rd=rd, ra=ra,
                    imm=literal, funct=_SHIFT[mn]))]
            return [isa.encode(isa.Instruction(
                _IMM[mn], mn, isa.InstrClass.IMMEDIATE,
                rd=rd, ra=ra, imm=literal))]

        raise ParseError(lineno, "unknown mnemonic %r" % mn)

    def _encode_encrypted(self, mn, rd, ra, literal, ordinal, lineno):
        if not -(1 << 31) <= literal <= MASK32:
            raise ParseError(lineno, "immediate %d does not fit 32 bits" % literal)
        value = literal & MASK32
        sub = _SHIFT.get(mn)
        attempt = 0
        while True:
            pad = make_padding(self.seed, ordinal, attempt)
            cipher = self.codec.encrypt((pad << 32) | value)
            if sub is None or (cipher >> 14) & 3 == sub:
                break
            attempt += 1
            if attempt >= MAX_PAD_ATTEMPTS:
                raise ParseError(lineno, "no padding fits shift sub-op")
        p0 = (cipher >> 40) & 0xFFFFFF
        p1 = (cipher >> 16) & 0xFFFFFF
        tail = cipher & 0xFFFF
        if sub is not None:
            body = isa.encode(isa.Instruction(
                isa.OP_SHIFTI, mn, isa.InstrClass.IMMEDIATE, rd=rd, ra=ra,
                imm=tail & 0x3FFF, funct=sub))
        else:
            op = _IMM[mn]
            imm = tail if op in isa.IMM_UNSIGNED_OPS else isa._sext(tail, 16)
            body = isa.encode(isa.Instruction(
                op, mn, isa.InstrClass.IMMEDIATE, rd=rd, ra=ra, imm=imm))
        return [
            isa.encode(isa.Instruction(isa.OP_PREFIX, "l.prefix",
                                       isa.InstrClass.PREFIX,
                                       prefix_idx=0, prefix_payload=p0)),
            isa.encode(isa.Instruction(isa.OP_PREFIX, "l.prefix",
                                       isa.InstrClass.PREFIX,
                                       prefix_idx=1, prefix_payload=p1)),
            body,
        ]


def assemble(source, cdc, seed=0, strict=False):
    """Convenience wrapper returning just the image."""
    image, _ = Assembler(cdc, seed).assemble(source, strict=strict)
    return image


# ------------------------------------------------------------------- lint --

PROG, DATA, UNKNOWN = "prog", "data", "unknown"

_BLOCK_ENDERS = set(_RELS) | {"l.jr", "l.jalr", "l.sys", "l.rfe"}


def lint(items):
    """Pad-provenance diagnostics over encrypted regions.

    Within each straight-line block the link register is assumed to hold a
    return address and loads mark their destination as data; arithmetic on
    an address-tainted register, or a register jump through a data-tainted
    one, would desynchronize padding between runs of the same logical
    program, so both get flagged.
    """
    diags = []
    taint = None
    for item in items:
        if not item.encrypted:
            taint = None
            continue
        if taint is None or item.labeled:
            taint = {9: PROG}
        mn = item.mnemonic

        def reg_of(tok):
            m = _REG_RE.match(tok.strip())
            return int(m.group(1)) if m else None

        ops = [p.strip() for p in item.ops.split(",")] if item.ops else []
        if mn in _RRR or mn in _IMM or mn in _SHIFT or mn == "l.add64":
            regs = [reg_of(t) for t in ops]
            rd = regs[0] if regs else None
            for src in regs[1:]:
                if src is not None and taint.get(src, UNKNOWN) == PROG:
                    diags.append(
                        "line %d: arithmetic on a program address in r%d"
                        % (item.lineno, src))
            if rd:
                taint[rd] = DATA
        elif mn == "l.lwz" or mn == "l.ld":
            rd = reg_of(ops[0]) if ops else None
            if rd:
                taint[rd] = DATA
        elif mn == "l.mfspr":
            rd = reg_of(ops[0]) if ops else None
            if rd:
                taint[rd] = DATA
        elif mn in ("l.jr", "l.jalr"):
            rb = reg_of(ops[0]) if ops else None
            if rb is not None and taint.get(rb, UNKNOWN) == DATA:
                diags.append(
                    "line %d: register jump through a data value in r%d"
                    % (item.lineno, rb))
            if mn == "l.jalr":
                taint[9] = PROG
        elif mn == "l.jal":
            taint[9] = PROG

        if mn in _BLOCK_ENDERS:
            taint = None
    return diags
