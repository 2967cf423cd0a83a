"""Memory system: word-granular FCFS address translation, the user data
cache, and the Harvard-split physical storage.

Instructions live in their own 32-bit word space addressed by plain program
addresses. Data lives in 64-bit cells. Supervisor data addresses map
identically (addr/8); user-mode effective addresses are encrypted whole and
the resulting ciphertext is assigned a physical cell in first-come order,
one cell per distinct cipher address. Two computations of the same logical
address with different paddings therefore land in different cells: hardware
aliasing is a feature of the model, not an accident.
"""

from collections import OrderedDict

from .codec import MASK32, MASK64

SUPER_REGION_BYTES = 1 << 20           # identity-mapped supervisor region
DEFAULT_USER_WORDS = 64 * 1024
DEFAULT_CACHE_ENTRIES = 64


class PhysicalExhausted(Exception):
    """FCFS allocator ran out of pre-set user physical words."""


class UnalignedSupervisorAccess(Exception):
    """Supervisor data addresses must be 8-byte aligned."""


class OutOfRegion(Exception):
    """Address beyond the supervisor region and the user range."""


class CacheHit:
    pass


class CacheMiss:
    pass


class MemoryDecrypt:
    """Load was served by decrypting a memory cell (cache did not hold it)."""


class TlbMap:
    """Cipher address -> physical word index, first-come first-served."""

    def __init__(self, base, capacity):
        self.base = base
        self.capacity = capacity
        self.entries = OrderedDict()   # preserves allocation order
        self.cursor = 0

    def translate(self, cipher_addr):
        cipher_addr &= MASK64
        idx = self.entries.get(cipher_addr)
        if idx is not None:
            return idx
        if self.cursor >= self.capacity:
            raise PhysicalExhausted(
                "user physical range exhausted after %d words" % self.capacity)
        idx = self.base + self.cursor
        self.cursor += 1
        self.entries[cipher_addr] = idx
        return idx


class UserDataCache:
    """Small fully-associative LRU cache of plaintext write data.

    Keyed by the full 64-bit padded effective address, so the same logical
    address under a different padding is a different line (mirroring the
    aliasing behaviour of the encrypted memory behind it). Write-through,
    write-allocate; loads that miss do not allocate, the cache only ever
    holds data that went through a store.
    """

    def __init__(self, entries=DEFAULT_CACHE_ENTRIES):
        self.capacity = entries
        self.lines = OrderedDict()     # ea block -> value block, LRU order
        self.read_hits = 0
        self.read_misses = 0
        self.write_hits = 0
        self.write_misses = 0

    def load(self, ea_block):
        line = self.lines.get(ea_block)
        if line is None:
            self.read_misses += 1
            return None
        self.read_hits += 1
        self.lines.move_to_end(ea_block)
        return line

    def store(self, ea_block, value_block):
        if ea_block in self.lines:
            self.write_hits += 1
            self.lines.move_to_end(ea_block)
        else:
            self.write_misses += 1
            if len(self.lines) >= self.capacity:
                self.lines.popitem(last=False)
        self.lines[ea_block] = value_block


class MemorySystem:
    """Data-side memory: physical cells, translation, and the user cache."""

    def __init__(self, codec, user_words=DEFAULT_USER_WORDS,
                 cache_entries=DEFAULT_CACHE_ENTRIES):
        self.codec = codec
        self.super_cells = SUPER_REGION_BYTES // 8
        self.total_cells = self.super_cells + user_words
        self.cells = {}                # sparse: index -> 64-bit word
        self.tlb = TlbMap(self.super_cells, user_words)
        self.cache = UserDataCache(cache_entries)

    # ---------------------------------------------------------- physical --

    def read_cell(self, index):
        return self.cells.get(index, 0)

    def write_cell(self, index, value):
        self.cells[index] = value & MASK64

    # -------------------------------------------------------- supervisor --

    def super_index(self, addr):
        addr &= MASK64
        if addr % 8:
            raise UnalignedSupervisorAccess("address 0x%x not 8-aligned" % addr)
        index = addr // 8
        if index >= self.total_cells:
            raise OutOfRegion("address 0x%x beyond physical storage" % addr)
        return index

    def supervisor_load(self, addr):
        return self.read_cell(self.super_index(addr))

    def supervisor_store(self, addr, value):
        self.write_cell(self.super_index(addr), value)

    # --------------------------------------------------------------- user --

    def user_load(self, ea_block):
        """Load through the cache; returns (value block, source class)."""
        cached = self.cache.load(ea_block)
        if cached is not None:
            return cached, CacheHit
        cipher = self.codec.encrypt(ea_block)
        index = self.tlb.translate(cipher)
        return self.codec.decrypt(self.read_cell(index)), MemoryDecrypt

    def user_store(self, ea_block, value_block):
        """Write-through: plaintext to the cache, ciphertext to the cell."""
        self.cache.store(ea_block, value_block)
        cipher = self.codec.encrypt(ea_block)
        index = self.tlb.translate(cipher)
        self.write_cell(index, self.codec.encrypt(value_block))

    # --------------------------------------------------------------- dump --

    def dump(self):
        """Deterministic text image of cells and the translation map."""
        lines = []
        for index in sorted(self.cells):
            value = self.cells[index]
            if value:
                lines.append("PHYS %d %016x" % (index, value))
        for cipher, index in sorted(self.tlb.entries.items(), key=lambda kv: kv[1]):
            lines.append("TLBMAP %016x %d" % (cipher, index))
        return "\n".join(lines) + ("\n" if lines else "")


def parse_dump(text):
    """Inverse of MemorySystem.dump: (cells dict, tlb entries dict)."""
    cells = {}
    tlb = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "PHYS" and len(parts) == 3:
            cells[int(parts[1])] = int(parts[2], 16)
        elif parts[0] == "TLBMAP" and len(parts) == 3:
            tlb[int(parts[1], 16)] = int(parts[2])
        else:
            raise ValueError("bad dump line %d: %r" % (lineno, raw))
    return cells, tlb
