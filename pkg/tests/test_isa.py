"""Instruction word decode/encode checks."""

import dataclasses
import random

import pytest

from kpusim import isa


def test_known_words():
    nop = isa.decode(0x15000002)
    assert nop.mnemonic == "l.nop"
    assert nop.imm == 2
    assert nop.cls is isa.InstrClass.NOP
    assert isa.encode(nop) == 0x15000002

    addi = isa.decode(0x9CA50001)
    assert addi.mnemonic == "l.addi"
    assert (addi.rd, addi.ra, addi.imm) == (5, 5, 1)
    assert addi.cls is isa.InstrClass.IMMEDIATE


def test_backward_jump_word():
    instr = isa.decode(0x03FFFFFF)
    assert instr.mnemonic == "l.j"
    assert instr.imm == -1
    assert isa.encode(instr) == 0x03FFFFFF


def test_immediate_sign_conventions():
    # addi/muli/xori sign-extend, andi/ori keep the raw 16 bits
    assert isa.decode((isa.OP_ADDI << 26) | (3 << 21) | 0xFFFF).imm == -1
    assert isa.decode((isa.OP_MULI << 26) | (3 << 21) | 0x8000).imm == -32768
    assert isa.decode((isa.OP_XORI << 26) | (3 << 21) | 0xFFFF).imm == -1
    assert isa.decode((isa.OP_ANDI << 26) | (3 << 21) | 0xFFFF).imm == 0xFFFF
    assert isa.decode((isa.OP_ORI << 26) | (3 << 21) | 0x8000).imm == 0x8000


def test_shift_immediate_sub_ops():
    word = (isa.OP_SHIFTI << 26) | (4 << 21) | (2 << 16) | (1 << 14) | 9
    instr = isa.decode(word)
    assert instr.mnemonic == "l.srli"
    assert (instr.rd, instr.ra, instr.imm, instr.funct) == (4, 2, 9, 1)
    bad = (isa.OP_SHIFTI << 26) | (3 << 14)
    with pytest.raises(isa.IllegalOpcode):
        isa.decode(bad)


def test_set_flag_sub_ops():
    for sub, name in isa.SF_NAMES.items():
        word = (isa.OP_SF << 26) | (sub << 21) | (1 << 16) | (2 << 11)
        instr = isa.decode(word)
        assert instr.mnemonic == name
        assert (instr.ra, instr.rb) == (1, 2)
    with pytest.raises(isa.IllegalOpcode):
        isa.decode((isa.OP_SF << 26) | (6 << 21))


def test_register_alu_functs():
    for funct, name in isa.ALU_FUNCT_NAMES.items():
        word = (isa.OP_ALU << 26) | (7 << 21) | (1 << 16) | (2 << 11) | funct
        instr = isa.decode(word)
        assert instr.mnemonic == name
        assert (instr.rd, instr.ra, instr.rb) == (7, 1, 2)
    with pytest.raises(isa.IllegalOpcode):
        isa.decode((isa.OP_ALU << 26) | 10)


def test_reserved_fields_must_be_zero():
    cases = [
        (isa.OP_JR << 26) | (1 << 16),      # only rb carries the target
        (isa.OP_RFE << 26) | 1,
        (isa.OP_ALU << 26) | 0x10,          # gap between rb and funct
        (isa.OP_SF << 26) | 1,
        (isa.OP_NOP << 26) | 2,             # nop missing its fixed bit 24
        0x15000002 | (1 << 25),
    ]
    for word in cases:
        with pytest.raises(isa.IllegalOpcode):
            isa.decode(word)


def test_decode_is_total_and_canonical():
    """Any 32-bit word either decodes or raises IllegalOpcode.

    Words that do decode must re-encode to the same bits, so every
    reserved field is checked and no information is dropped.
    """
    rng = random.Random(0x15A)
    decoded = 0
    for _ in range(100000):
        word = rng.getrandbits(32)
        try:
            instr = isa.decode(word)
        except isa.IllegalOpcode:
            continue
        decoded += 1
        assert isa.encode(instr) == word
    assert decoded > 10000


def test_encode_rejects_out_of_range_operands():
    instr = isa.decode(0x9CA50001)
    with pytest.raises(isa.OperandOutOfRange):
        isa.encode(dataclasses.replace(instr, rd=32))
    with pytest.raises(isa.OperandOutOfRange):
        isa.encode(dataclasses.replace(instr, imm=40000))


def test_classify_covers_every_mnemonic():
    rng = random.Random(0x15B)
    classes = set()
    for _ in range(20000):
        word = rng.getrandbits(32)
        try:
            instr = isa.decode(word)
        except isa.IllegalOpcode:
            continue
        assert isinstance(instr.cls, isa.InstrClass)
        classes.add(instr.cls)
    assert isa.InstrClass.LOAD in classes
    assert isa.InstrClass.STORE in classes
    assert isa.InstrClass.BRANCH in classes


def test_format_round_trips_through_text():
    words = [0x15000002, 0x9CA50001, 0x03FFFFFF]
    for word in words:
        text = isa.format_instruction(isa.decode(word))
        assert text.startswith("l.")
