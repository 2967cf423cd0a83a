"""Cycle-level pipeline engine.

One physical conveyor of stage positions, configured per mode:

  supervisor (short)   F D R X W
  user, plan A         F D R X M C1..C10 W     execute early, codec late
  user, plan B         F D C1..C10 R X M W     codec first, execute late

Every user-mode instruction traverses all sixteen positions; the plan
decides which position does which logical job for that instruction. Plan B
exists only for user-mode immediate-class instructions, whose 64-bit
encrypted immediate (gathered from two prefix instructions plus the
instruction's own 16-bit field) is decrypted one Feistel round per codec
stage before the read stage needs it. Everything else rides plan A so that
results computed at X forward to the instruction entering behind.

Timing rules the rest of the model hangs off:
  * a producer's result is forwardable at the end of its execute cycle;
    a consumer may enter X the cycle after that,
  * memory data returns one cycle after M (cache hit), plus the ten codec
    rounds on a miss, giving the 2-cycle and 12-cycle load-use stalls,
  * branches and jumps resolve at X against the prediction buffer; a wrong
    prediction flushes the (plan-depth) slots behind and refetches,
  * traps, rfe, exits and illegal carriers hold fetch from decode until
    commit, so a mode transition always sees a drained pipe and nothing
    younger than a trap ever touches memory.

A cycle retires exactly one conveyor cell: an instruction (counted under
its class) or a bubble (counted as a stall or refill wait state), so the
accounting closes exactly by construction.
"""

from dataclasses import dataclass

from . import alu, isa
from .codec import (MASK32, MASK64, ROUNDS, NotAProgramAddress, feistel_unround,
                    open_program_address, pad_mix, to_decrypted_address,
                    to_encrypted_address, word_pad, word_value)
from .core import MachineState, Mode, VEC_ILLEGAL, VEC_SYSCALL
from .isa import InstrClass
from .memsys import CacheHit, MemorySystem


class SimulationFault(Exception):
    """Program did something the machine cannot continue from."""


class MaxCyclesExceeded(Exception):
    pass


class MissingPrefix(Exception):
    """Immediate-class instruction arrived in user mode with no full latch."""


# ------------------------------------------------------------------ plans --

@dataclass(frozen=True)
class PipelinePlan:
    name: str
    stages: tuple

    @property
    def depth(self):
        return len(self.stages)

    def index(self, stage):
        return self.stages.index(stage)


_CODEC_STAGES = tuple("C%d" % i for i in range(1, ROUNDS + 1))

SHORT = PipelinePlan("short", ("F", "D", "R", "X", "W"))
LONG_A = PipelinePlan("A", ("F", "D", "R", "X", "M") + _CODEC_STAGES + ("W",))
LONG_B = PipelinePlan("B", ("F", "D") + _CODEC_STAGES + ("R", "X", "M", "W"))


def select_config(cls, mode):
    """Pipeline plan for an instruction class in a mode."""
    if mode is Mode.SUPERVISOR:
        return SHORT
    if cls is InstrClass.IMMEDIATE:
        return LONG_B
    return LONG_A


def plan_depth(mode):
    return SHORT.depth if mode is Mode.SUPERVISOR else LONG_A.depth


# ----------------------------------------------------------------- prefix --

class PrefixLatch:
    """Decode-side latch holding the two prefix payloads of a 64-bit
    encrypted immediate until the immediate-class instruction arrives."""

    def __init__(self):
        self.p0 = None
        self.p1 = None

    def clear(self):
        self.p0 = None
        self.p1 = None

    def feed(self, idx, payload):
        if idx == 0:
            self.p0 = payload
            self.p1 = None
        elif self.p0 is not None and self.p1 is None:
            self.p1 = payload
        else:
            self.clear()

    @property
    def full(self):
        return self.p0 is not None and self.p1 is not None


def consume_prefixes(latch, imm16):
    """Reassemble the 64-bit encrypted immediate and clear the latch."""
    if not latch.full:
        raise MissingPrefix("immediate-class instruction without prefix pair")
    value = (latch.p0 << 40) | (latch.p1 << 16) | (imm16 & 0xFFFF)
    latch.clear()
    return value


# -------------------------------------------------------------- predictor --

class BranchPredictionBuffer:
    """Direct-mapped one-level predictor, indexed by pc word bits.

    Cold lookups predict not-taken. Every resolved branch or jump installs
    its outcome: full pc tag, last target, one taken bit.
    """

    def __init__(self, entries=64):
        self.entries = [None] * entries
        self.hits_right = 0
        self.hits_wrong = 0
        self.misses_right = 0
        self.misses_wrong = 0

    def _slot(self, pc):
        return (pc >> 2) % len(self.entries)

    def lookup(self, pc):
        entry = self.entries[self._slot(pc)]
        if entry is not None and entry[0] == pc:
            return True, entry[2], entry[1]
        return False, False, (pc + 4) & MASK32

    def update(self, pc, taken, target):
        self.entries[self._slot(pc)] = (pc, target, taken)

    def record(self, hit, right):
        if hit:
            if right:
                self.hits_right += 1
            else:
                self.hits_wrong += 1
        elif right:
            self.misses_right += 1
        else:
            self.misses_wrong += 1

    @property
    def hits(self):
        return self.hits_right + self.hits_wrong

    @property
    def misses(self):
        return self.misses_right + self.misses_wrong


# ------------------------------------------------------------------ stats --

STALL = "stalls"
REFILL = "refills"

FLAG = "F"  # pseudo-register name for the branch flag forwarding path


class ModeStats:
    def __init__(self):
        self.completions = {cls: 0 for cls in InstrClass}
        self.stalls = 0
        self.refills = 0
        self.loads_cached = 0
        self.stores_cached = 0

    @property
    def instructions(self):
        return sum(self.completions.values())

    @property
    def cycles(self):
        return self.instructions + self.stalls + self.refills


class CycleStats:
    """Per-mode completion and wait-state accounting."""

    def __init__(self):
        self.per_mode = {Mode.USER: ModeStats(), Mode.SUPERVISOR: ModeStats()}
        self.cycles = 0

    def mode(self, mode):
        return self.per_mode[mode]

    @property
    def instructions(self):
        return sum(m.instructions for m in self.per_mode.values())

    def closes(self):
        return self.cycles == sum(m.cycles for m in self.per_mode.values())


# ------------------------------------------------------------------ cells --

class Bubble:
    __slots__ = ("tag",)

    def __init__(self, tag):
        self.tag = tag


class Slot:
    """One in-flight instruction."""

    def __init__(self, instr, pc, mode, config):
        self.instr = instr
        self.pc = pc
        self.mode = mode
        self.config = config
        self.x_index = config.index("X")
        self.r_index = config.index("R")
        self.m_index = config.index("M") if "M" in config.stages else None
        self.sources = ()
        self.dest = None
        self.carrier = False            # travels only to raise illegal at W
        self.serialize = False          # must be oldest before entering X
        self.imm_cipher = None          # 64-bit encrypted immediate
        self.codec_block = None         # staged decrypt state
        self.codec_rounds = 0
        self.executed = False
        self.mem_done = False
        self.result = None              # forwardable 64-bit value
        self.ready_cycle = None
        self.flag_result = None         # forwardable F for set-flag
        self.pending_effects = None     # flag writes applied at commit
        self.pending_reg = None         # (index, value, is_program_address)
        self.ea_block = None
        self.store_value = None
        self.cached = False
        self.predicted = None           # (bpb_hit, taken, target)


def _slot_sources(instr):
    srcs = []
    m = instr.mnemonic
    if instr.cls is InstrClass.REGISTER:
        srcs = [instr.ra, instr.rb]
    elif instr.cls is InstrClass.IMMEDIATE:
        srcs = [instr.ra]
    elif instr.cls is InstrClass.LOAD:
        srcs = [instr.ra]
    elif instr.cls is InstrClass.STORE:
        srcs = [instr.ra, instr.rb]
    elif instr.cls is InstrClass.BRANCH:
        return (FLAG,)
    elif m in ("l.jr", "l.jalr"):
        srcs = [instr.rb]
    elif m == "l.mfspr":
        srcs = [instr.ra]
    elif m == "l.mtspr":
        srcs = [instr.ra, instr.rb]
    elif instr.cls is InstrClass.CLASS64:
        if instr.funct == isa.C64_LD:
            srcs = [instr.ra]
        else:
            srcs = [instr.ra, instr.rb]
    return tuple(s for s in srcs if s)   # r0 is constant zero


def _slot_dest(instr):
    m = instr.mnemonic
    if m in ("l.jal", "l.jalr"):
        return 9
    if instr.opcode == isa.OP_SF:
        return FLAG
    if m in ("l.lwz", "l.mfspr", "l.ld") or \
            instr.cls in (InstrClass.REGISTER, InstrClass.IMMEDIATE) or \
            (instr.cls is InstrClass.CLASS64 and instr.funct == isa.C64_ADD):
        return instr.rd if instr.rd else None
    return None


# map immediate opcodes to ALU operation ids
_IMM_ALU_OP = {
    isa.OP_ADDI: alu.OP_ADD, isa.OP_ANDI: alu.OP_AND, isa.OP_ORI: alu.OP_OR,
    isa.OP_XORI: alu.OP_XOR, isa.OP_MULI: alu.OP_MUL,
}
_SHIFT_ALU_OP = {isa.SHIFT_SLL: alu.OP_SLL, isa.SHIFT_SRL: alu.OP_SRL,
                 isa.SHIFT_SRA: alu.OP_SRA}


class Engine:
    """Drives one program image to completion, cycle by cycle."""

    def __init__(self, image, cdc, user_words=None, cache_entries=None,
                 bpb_entries=64, trace=False):
        mode = Mode.USER if image.mode == "user" else Mode.SUPERVISOR
        self.codec = cdc
        self.state = MachineState(cdc, entry=image.entry, mode=mode)
        kwargs = {}
        if user_words is not None:
            kwargs["user_words"] = user_words
        if cache_entries is not None:
            kwargs["cache_entries"] = cache_entries
        self.mem = MemorySystem(cdc, **kwargs)
        for addr in sorted(image.data):
            self.mem.supervisor_store(addr, image.data[addr])
        self.text = dict(image.text)
        self.bpb = BranchPredictionBuffer(bpb_entries)
        self.stats = CycleStats()
        self.outputs = []
        self.trace_lines = [] if trace else None
        self.cycle = 0
        self.halted = False
        self.latch = PrefixLatch()
        self.fetch_pc = image.entry & MASK32
        self.fetch_hold = False
        self.conveyor = [Bubble(REFILL) for _ in range(plan_depth(mode))]
        self._rebuilt = False

    # ------------------------------------------------------------- fetch --

    def _fetch(self):
        if self.fetch_hold:
            return Bubble(REFILL)
        pc = self.fetch_pc
        word = self.text.get(pc)
        mode = self.state.mode
        if word is None:
            slot = self._carrier(pc, mode, "no instruction at 0x%08x" % pc)
            self.fetch_pc = (pc + 4) & MASK32
            return slot
        try:
            instr = isa.decode(word)
        except isa.IllegalOpcode as exc:
            slot = self._carrier(pc, mode, str(exc))
            self.fetch_pc = (pc + 4) & MASK32
            return slot
        if instr.cls is InstrClass.PREFIX:
            self.latch.feed(instr.prefix_idx, instr.prefix_payload)
            slot = Slot(instr, pc, mode, select_config(instr.cls, mode))
            self.fetch_pc = (pc + 4) & MASK32
            return slot
        if instr.cls is InstrClass.CLASS64 and mode is Mode.USER:
            self.latch.clear()
            slot = self._carrier(pc, mode, "64-bit instruction in user mode")
            self.fetch_pc = (pc + 4) & MASK32
            return slot
        if instr.mnemonic == "l.rfe" and mode is Mode.USER:
            self.latch.clear()
            slot = self._carrier(pc, mode, "l.rfe in user mode")
            self.fetch_pc = (pc + 4) & MASK32
            return slot

        imm_cipher = None
        if instr.cls is InstrClass.IMMEDIATE and mode is Mode.USER:
            try:
                imm_cipher = consume_prefixes(self.latch, word & 0xFFFF)
            except MissingPrefix as exc:
                slot = self._carrier(pc, mode, str(exc))
                self.fetch_pc = (pc + 4) & MASK32
                return slot
        else:
            self.latch.clear()

        slot = Slot(instr, pc, mode, select_config(instr.cls, mode))
        slot.sources = _slot_sources(instr)
        slot.dest = _slot_dest(instr)
        slot.serialize = instr.cls is InstrClass.SPR
        if imm_cipher is not None:
            slot.imm_cipher = imm_cipher
            slot.codec_block = imm_cipher

        if instr.cls is InstrClass.SYSTRAP or \
                (instr.cls is InstrClass.NOP and instr.imm == 1):
            # Nothing younger may enter the pipe behind a trap, a return or
            # the exit no-op: their commit changes the instruction stream.
            self.fetch_hold = True
            self.fetch_pc = (pc + 4) & MASK32
        elif instr.cls in (InstrClass.BRANCH, InstrClass.JUMP):
            hit, taken, target = self.bpb.lookup(pc)
            slot.predicted = (hit, taken, target)
            self.fetch_pc = target if taken else (pc + 4) & MASK32
        else:
            self.fetch_pc = (pc + 4) & MASK32
        return slot

    def _carrier(self, pc, mode, reason):
        slot = Slot(isa.Instruction(isa.OP_SYS, "l.illegal", InstrClass.SYSTRAP),
                    pc, mode, select_config(InstrClass.SYSTRAP, mode))
        slot.carrier = True
        self.fetch_hold = True
        return slot

    # -------------------------------------------------------- forwarding --

    def _find_producer(self, idx, name):
        for j in range(idx + 1, len(self.conveyor)):
            cell = self.conveyor[j]
            if isinstance(cell, Slot) and not cell.carrier and cell.dest == name:
                return cell
        return None

    def _source_ready(self, idx, cell, n):
        for name in cell.sources:
            producer = self._find_producer(idx, name)
            if producer is None:
                continue
            ready = (producer.ready_cycle if name != FLAG
                     else (producer.ready_cycle if producer.flag_result is not None else None))
            if ready is None or ready > n:
                return False
        if cell.serialize:
            for j in range(idx + 1, len(self.conveyor) - 1):
                if isinstance(self.conveyor[j], Slot):
                    return False
        return True

    def _operand(self, idx, name):
        producer = self._find_producer(idx, name)
        st = self.state
        if producer is not None:
            assert producer.mode is st.mode, "cross-mode forward"
            if name == FLAG:
                return producer.flag_result
            return producer.result
        if name == FLAG:
            return st.flag_f
        return st.read_operand(name)

    # ----------------------------------------------------------- execute --

    def _execute(self, idx, cell, n):
        cell.executed = True
        instr = cell.instr
        st = self.state
        user = cell.mode is Mode.USER
        m = instr.mnemonic

        if cell.carrier or instr.cls in (InstrClass.NOP, InstrClass.PREFIX,
                                         InstrClass.SYSTRAP):
            return

        if instr.cls is InstrClass.REGISTER:
            a = self._operand(idx, instr.ra) if instr.ra else 0
            b = self._operand(idx, instr.rb) if instr.rb else 0
            if instr.opcode == isa.OP_SF:
                cell.flag_result = alu.compare_flag(instr.funct,
                                                    a & MASK32, b & MASK32)
                cell.pending_effects = {"f": cell.flag_result}
                cell.ready_cycle = n
                return
            res32, effects = alu.execute(instr.funct, a & MASK32, b & MASK32)
            cell.pending_effects = effects
            if user:
                pad = pad_mix(word_pad(a), word_pad(b), instr.funct)
                cell.result = (pad << 32) | res32
            else:
                cell.result = res32
            cell.ready_cycle = n
            cell.pending_reg = (instr.rd, cell.result, False)
            return

        if instr.cls is InstrClass.IMMEDIATE:
            a = self._operand(idx, instr.ra) if instr.ra else 0
            if instr.opcode == isa.OP_SHIFTI:
                op = _SHIFT_ALU_OP[instr.funct]
            else:
                op = _IMM_ALU_OP[instr.opcode]
            if user:
                assert cell.codec_rounds == ROUNDS, "immediate not decrypted"
                b = cell.codec_block
                res32, effects = alu.execute(op, a & MASK32, word_value(b))
                pad = pad_mix(word_pad(a), word_pad(b), op)
                cell.result = (pad << 32) | res32
            else:
                b = instr.imm & MASK32
                res32, effects = alu.execute(op, a & MASK32, b)
                cell.result = res32
            cell.pending_effects = effects
            cell.ready_cycle = n
            cell.pending_reg = (instr.rd, cell.result, False)
            return

        if instr.cls is InstrClass.LOAD or instr.cls is InstrClass.STORE:
            a = self._operand(idx, instr.ra) if instr.ra else 0
            off = instr.imm & MASK32
            if user:
                ea32, _ = alu.execute(alu.OP_ADDR, a & MASK32, off)
                pad = pad_mix(word_pad(a), off, alu.OP_ADDR)
                cell.ea_block = (pad << 32) | ea32
            else:
                cell.ea_block = (a + instr.imm) & MASK64
            if instr.cls is InstrClass.STORE:
                cell.store_value = self._operand(idx, instr.rb) if instr.rb else 0
            if cell.m_index is None:
                self._mem_access(cell, n)       # short plan: memory at X
            return

        if instr.cls is InstrClass.CLASS64:
            a = self._operand(idx, instr.ra) if instr.ra else 0
            if instr.funct == isa.C64_ADD:
                b = self._operand(idx, instr.rb) if instr.rb else 0
                cell.result = (a + b) & MASK64
                cell.ready_cycle = n
                cell.pending_reg = (instr.rd, cell.result, False)
                return
            cell.ea_block = (a + instr.imm) & MASK64
            if instr.funct == isa.C64_SD:
                cell.store_value = self._operand(idx, instr.rb) if instr.rb else 0
            if cell.m_index is None:
                self._mem_access(cell, n)
            return

        if instr.cls is InstrClass.BRANCH or instr.cls is InstrClass.JUMP:
            self._resolve_branch(idx, cell, n)
            return

        if m == "l.mfspr":
            a = self._operand(idx, instr.ra) if instr.ra else 0
            index = ((a & MASK32) | instr.imm) & 0xFFFF
            value = st.read_spr(index)
            if user:
                pad = pad_mix(word_pad(a), index, alu.OP_MFSPR)
                cell.result = (pad << 32) | (value & MASK32)
            else:
                cell.result = value & MASK64
            cell.ready_cycle = n
            cell.pending_reg = (instr.rd, cell.result, False)
            return

        if m == "l.mtspr":
            a = self._operand(idx, instr.ra) if instr.ra else 0
            b = self._operand(idx, instr.rb) if instr.rb else 0
            index = ((a & MASK32) | instr.imm) & 0xFFFF
            # Serialized, so the write is program-ordered even though it
            # lands at X; user-mode writes are ignored inside write_spr.
            st.write_spr(index, b)
            return

        raise AssertionError("unhandled instruction %s" % m)

    def _resolve_branch(self, idx, cell, n):
        instr = cell.instr
        m = instr.mnemonic
        pc = cell.pc
        if m in ("l.bf", "l.bnf"):
            flag = self._operand(idx, FLAG)
            taken = flag if m == "l.bf" else not flag
            target = (pc + 4 * instr.imm) & MASK32
        elif m in ("l.j", "l.jal"):
            taken = True
            target = (pc + 4 * instr.imm) & MASK32
        else:                            # l.jr / l.jalr
            taken = True
            value = self._operand(idx, instr.rb) if instr.rb else 0
            try:
                target = open_program_address(value)
            except NotAProgramAddress as exc:
                raise SimulationFault(
                    "jump target at pc 0x%08x: %s" % (pc, exc)) from exc
        if m in ("l.jal", "l.jalr"):
            link = (pc + 4) & MASK32
            if cell.mode is Mode.USER:
                cell.result = to_decrypted_address(link)
            else:
                cell.result = to_encrypted_address(link)
            cell.ready_cycle = n
            cell.pending_reg = (9, cell.result, True)

        hit, pred_taken, pred_target = cell.predicted
        right = (pred_taken == taken) and (not taken or pred_target == target)
        self.bpb.record(hit, right)
        self.bpb.update(pc, taken, target)
        if not right:
            for j in range(idx):
                self.conveyor[j] = Bubble(REFILL)
            self.latch.clear()
            self.fetch_hold = False
            self.fetch_pc = target if taken else (pc + 4) & MASK32

    # -------------------------------------------------------------- memory --

    def _mem_access(self, cell, n):
        cell.mem_done = True
        instr = cell.instr
        user = cell.mode is Mode.USER
        if instr.cls is InstrClass.LOAD:
            if user:
                value, source = self.mem.user_load(cell.ea_block)
                cell.cached = source is CacheHit
                cell.result = value
                cell.ready_cycle = n + 1 if cell.cached else n + 1 + ROUNDS
            else:
                value = self.mem.supervisor_load(cell.ea_block) & MASK32
                cell.result = value
                cell.ready_cycle = n + 1
            cell.pending_reg = (instr.rd, cell.result, False)
            return
        if instr.cls is InstrClass.STORE:
            if user:
                before = self.mem.cache.write_hits
                self.mem.user_store(cell.ea_block, cell.store_value)
                cell.cached = self.mem.cache.write_hits > before
            else:
                self.mem.supervisor_store(cell.ea_block,
                                          cell.store_value & MASK32)
            return
        if instr.cls is InstrClass.CLASS64:
            if instr.funct == isa.C64_LD:
                cell.result = self.mem.supervisor_load(cell.ea_block)
                cell.ready_cycle = n + 1
                cell.pending_reg = (instr.rd, cell.result, False)
            else:
                self.mem.supervisor_store(cell.ea_block, cell.store_value)

    # -------------------------------------------------------------- retire --

    def _retire(self, cell, n):
        st = self.state
        if isinstance(cell, Bubble):
            ms = self.stats.mode(st.mode)
            if cell.tag == STALL:
                ms.stalls += 1
            else:
                ms.refills += 1
            return
        instr = cell.instr
        ms = self.stats.mode(cell.mode)
        ms.completions[instr.cls] += 1
        if instr.cls is InstrClass.LOAD and cell.cached:
            ms.loads_cached += 1
        if instr.cls is InstrClass.STORE and cell.cached:
            ms.stores_cached += 1

        if cell.carrier:
            st.enter_exception(VEC_ILLEGAL, cell.pc)
            self._transition()
            return
        if instr.mnemonic == "l.sys":
            st.enter_exception(VEC_SYSCALL, (cell.pc + 4) & MASK32)
            self._transition()
            return
        if instr.mnemonic == "l.rfe":
            st.rfe()
            self._transition()
            return
        if instr.cls is InstrClass.NOP:
            if instr.imm == 1:
                self.halted = True
            elif instr.imm == 2:
                if cell.mode is Mode.USER:
                    value = st.read_shadow(3) & MASK32
                else:
                    value = st.regs[3] & MASK32
                self.outputs.append(value)
            return

        if cell.pending_reg is not None:
            index, value, is_addr = cell.pending_reg
            st.write_register(index, value, program_address=is_addr)
        if cell.pending_effects:
            eff = cell.pending_effects
            if "f" in eff:
                st.flag_f = eff["f"]
            if "cy" in eff:
                st.flag_cy = eff["cy"]
            if "ov" in eff:
                st.flag_ov = eff["ov"]

    def _transition(self):
        depth = plan_depth(self.state.mode)
        self.conveyor = [Bubble(REFILL) for _ in range(depth)]
        self.latch.clear()
        self.fetch_hold = False
        self.fetch_pc = self.state.pc
        self._rebuilt = True

    # -------------------------------------------------------------- cycle --

    def _trace(self, n):
        parts = []
        for idx in range(len(self.conveyor) - 1, -1, -1):
            cell = self.conveyor[idx]
            if isinstance(cell, Slot):
                parts.append("%s:0x%08x:%s" % (cell.config.stages[idx],
                                               cell.pc, cell.instr.mnemonic))
        self.trace_lines.append("cycle %d | %s" % (n, " ".join(parts)))

    def step(self):
        n = self.cycle
        conveyor = self.conveyor
        depth = len(conveyor)

        if self.trace_lines is not None:
            self._trace(n)

        # execute pass, oldest first (younger cells can be flushed by it)
        for idx in range(depth - 1, -1, -1):
            cell = conveyor[idx]
            if isinstance(cell, Slot) and not cell.executed and idx == cell.x_index:
                self._execute(idx, cell, n)

        # memory pass
        for idx in range(depth - 1, -1, -1):
            cell = conveyor[idx]
            if isinstance(cell, Slot) and cell.m_index == idx and \
                    cell.executed and not cell.mem_done:
                self._mem_access(cell, n)

        # retire
        self._retire(conveyor[-1], n)
        self.stats.cycles += 1
        self.cycle = n + 1
        if self.halted:
            return

        if self._rebuilt:
            # fresh conveyor after a mode transition; fetch straight into it
            self._rebuilt = False
            self.conveyor[0] = self._fetch()
            return

        # find the oldest instruction stalled at its read position
        stall_idx = None
        for idx in range(depth - 2, -1, -1):
            cell = conveyor[idx]
            if isinstance(cell, Slot) and idx == cell.r_index and \
                    not self._source_ready(idx, cell, n):
                stall_idx = idx
                break

        new = [None] * depth
        limit = stall_idx if stall_idx is not None else -1
        for idx in range(depth - 1):
            cell = conveyor[idx]
            if idx <= limit:
                new[idx] = cell
            else:
                new[idx + 1] = cell
                if isinstance(cell, Slot) and cell.codec_block is not None and \
                        cell.codec_rounds < ROUNDS and \
                        cell.config.stages[idx + 1].startswith("C"):
                    # one decrypt round per codec stage traversed
                    key = self.codec.round_keys[ROUNDS - 1 - cell.codec_rounds]
                    cell.codec_block = feistel_unround(cell.codec_block, key)
                    cell.codec_rounds += 1
        if stall_idx is not None:
            new[stall_idx + 1] = Bubble(STALL)
        else:
            new[0] = self._fetch()
        self.conveyor = new

    def run(self, max_cycles=5_000_000):
        while not self.halted:
            if self.cycle >= max_cycles:
                raise MaxCyclesExceeded("no exit after %d cycles" % max_cycles)
            self.step()
        return self.state
