"""Block codec and the plaintext-domain word conventions.

User-mode state is kept as 64-bit ciphertext blocks. The plaintext domain
behind them uses two disjoint shapes:

  padded data word     (pad << 32) | value32, where the pad avoids the two
                       program-address patterns below
  program address      "encrypted" form: zero-filled to 64 bits
                       "decrypted" form: top 16 bits forced to 0x7fff

The cipher is a 10-round balanced Feistel on 64-bit blocks, one round per
codec pipeline stage. It is deliberately lightweight and pluggable; nothing
here claims cryptographic strength, only bijectivity and determinism.
"""

from dataclasses import dataclass

MASK16 = 0xFFFF
MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF

GOLDEN = 0x9E3779B9  # 32-bit golden-ratio constant used by the key fold

ROUNDS = 10

# Decrypted program-address marker in the top 16 bits.
ADDR_TAG = 0x7FFF


class NotAProgramAddress(Exception):
    """64-bit value is in neither program-address form."""


def rotl32(x, n):
    n &= 31
    x &= MASK32
    return ((x << n) | (x >> (32 - n))) & MASK32 if n else x


def _feistel_f(x, k):
    # Mixes rotate, xor and 32-bit add so that differences both shift and
    # propagate through carries.
    return (rotl32(x ^ k, 7) + (rotl32(x, 13) ^ k)) & MASK32


def _split(block):
    return (block >> 32) & MASK32, block & MASK32


def _join(left, right):
    return ((left & MASK32) << 32) | (right & MASK32)


def key_schedule(key):
    """Fold a 128-bit master key into the ten 32-bit round keys."""
    if not 0 <= key <= (1 << 128) - 1:
        raise ValueError("master key must be a 128-bit integer")
    words = [(key >> (96 - 32 * i)) & MASK32 for i in range(4)]
    ks = []
    for i in range(ROUNDS):
        mixed = words[i % 4] ^ (((i + 1) * GOLDEN) & MASK32)
        mixed = (mixed * GOLDEN) & MASK32
        ks.append(rotl32(mixed, (7 * i) % 32) ^ words[(i + 1) % 4])
    return ks


def feistel_round(block, k):
    """One forward Feistel round."""
    left, right = _split(block)
    return _join(right, left ^ _feistel_f(right, k))


def feistel_unround(block, k):
    """Inverse of feistel_round with the same round key."""
    left, right = _split(block)
    return _join(right ^ _feistel_f(left, k), left)


class Codec:
    """Encrypt/decrypt 64-bit blocks under a fixed 128-bit key."""

    def __init__(self, key):
        self.key = key
        self.round_keys = key_schedule(key)
        self._reversed = list(reversed(self.round_keys))

    def encrypt(self, block):
        for k in self.round_keys:
            block = feistel_round(block, k)
        return block

    def decrypt(self, block):
        for k in self._reversed:
            block = feistel_unround(block, k)
        return block


# ---------------------------------------------------------------- padding --

def pad_is_valid(pad):
    """Pads may not collide with either program-address top half."""
    pad &= MASK32
    return pad != 0 and (pad >> 16) != ADDR_TAG


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def make_padding(seed, ordinal, attempt=0):
    """Deterministic 32-bit pad for assembly-time constant number `ordinal`.

    Invalid candidates are skipped, so the result always satisfies
    pad_is_valid. `attempt` selects later candidates from the same stream;
    the assembler uses it when a ciphertext must land on fixed bits.
    """
    state = (seed & MASK64) ^ ((ordinal * 0xD1B54A32D192ED03) & MASK64)
    remaining = attempt
    while True:
        state, out = _splitmix64(state)
        pad = out & MASK32
        if pad_is_valid(pad):
            if remaining == 0:
                return pad
            remaining -= 1


def pad_mix(pad_a, pad_b, op_id):
    """Pad provenance for a runtime ALU result.

    Deterministic in the operand pads and the operation, so recomputing a
    value recomputes its padding (and therefore its ciphertext) exactly.
    """
    mixed = (rotl32(pad_a, 5) ^ pad_b ^ ((0x9E37 << op_id) & MASK32)) & MASK32
    if not pad_is_valid(mixed):
        mixed ^= 0x40000001
    return mixed


# ------------------------------------------------------------ padded word --

@dataclass(frozen=True)
class PaddedWord:
    """Plaintext-domain data value: meaningful low 32 bits plus a pad."""

    value: int
    pad: int

    def __post_init__(self):
        if not 0 <= self.value <= MASK32:
            raise ValueError("value must fit 32 bits")
        if not pad_is_valid(self.pad):
            raise ValueError("pad 0x%08x collides with a program-address form" % self.pad)

    @property
    def block(self):
        return (self.pad << 32) | self.value


def word_value(block):
    """Low 32 bits of a plaintext-domain block."""
    return block & MASK32


def word_pad(block):
    """Top 32 bits of a plaintext-domain block."""
    return (block >> 32) & MASK32


# -------------------------------------------------- program-address forms --

def is_encrypted_address(block):
    """Zero-filled form: how program addresses travel in encrypted storage."""
    return (block >> 32) == 0


def is_decrypted_address(block):
    """0x7fff-tagged form: how program addresses look inside the ALU."""
    return (block >> 48) == ADDR_TAG and ((block >> 32) & MASK16) == 0


def to_encrypted_address(pc):
    return pc & MASK32


def to_decrypted_address(pc):
    return (ADDR_TAG << 48) | (pc & MASK32)


def open_program_address(block):
    """Recover the 32-bit pc from either program-address form."""
    if is_encrypted_address(block) or is_decrypted_address(block):
        return block & MASK32
    raise NotAProgramAddress("0x%016x is not a program address" % block)
