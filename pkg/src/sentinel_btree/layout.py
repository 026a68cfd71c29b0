"""Byte layout shared by the Python code and the compiled kernels.

Region::

    [0, 64)      superblock: magic, root offset, head-leaf offset, node size,
                 node kind, height
    [64, ...)    node blocks, each HEADER_BYTES + node_size bytes

Node block::

    header line (64 B)
        word 0  sibling node offset (0 = none)
        word 1  circular nodes: base | count << 32 (count is a hint)
        word 2  internal nodes: leftmost child offset
        word 3  flags: bit 0 = leaf, bits 8.. = level
    slot area (node_size B): capacity = node_size / 16 entries of
        {key: u64, ptr: u64}; a nil (0) ptr marks the end of the valid prefix

The slot area starts on a cache-line boundary so that every line holds
exactly COUNT_IN_LINE entries.  Linear nodes keep their entry count in
volatile memory only; it is recomputed by scanning after a crash.
"""

from dataclasses import dataclass

WORD = 8
LINE = 64
LINE_WORDS = LINE // WORD
ENTRY_BYTES = 16
COUNT_IN_LINE = LINE // ENTRY_BYTES

HEADER_BYTES = LINE
HDR_WORDS = HEADER_BYTES // WORD
H_SIBLING = 0
H_BASECOUNT = 1
H_LEFTMOST = 2
H_FLAGS = 3
FLAG_LEAF = 1

SB_MAGIC = 0
SB_ROOT = 1
SB_HEAD = 2
SB_NODE_SIZE = 3
SB_KIND = 4
SB_HEIGHT = 5
MAGIC = 0x53454E54494E454C
HEAP_START = LINE

NIL = 0
KEY_MAX = (1 << 64) - 1
MASK64 = KEY_MAX

LINEAR = 0
CIRCULAR = 1
ACCEL_NONE = 0
ACCEL_SENTINEL = 1
ACCEL_FINGERPRINT = 2
SEARCH_LINEAR = 0
SEARCH_BINARY = 1

NODE_KINDS = {"linear": LINEAR, "circular": CIRCULAR}
ACCELS = {"none": ACCEL_NONE, "sentinel": ACCEL_SENTINEL, "fingerprint": ACCEL_FINGERPRINT}
SEARCHES = {"linear": SEARCH_LINEAR, "binary": SEARCH_BINARY}
BENCH_NODE_SIZES = (512, 1024, 2048, 4096)

# compiled-kernel configuration vector
C_HEAP_W = 0
C_BLOCK_W = 1
C_CAP = 2
C_NLINES = 3
C_KIND = 4
C_ACCEL = 5
C_SEARCH = 6
C_LOCKING = 7
C_LATENCY_NS = 8
C_SPIN_CYCLES = 9
CFG_LEN = 10

# mutation plans: (kind, word index, value) triples
EV_STORE = 0
EV_FLUSH = 1
EV_FENCE = 2

ST_OK = 0
ST_DUP = 1
ST_FULL = 2
ST_MISSING = 3
ST_BADPTR = 4


def pack_basecount(base: int, count: int) -> int:
    return base | (count << 32)


def unpack_basecount(word: int) -> tuple[int, int]:
    return word & 0xFFFFFFFF, word >> 32


@dataclass(frozen=True)
class Geometry:
    node_size: int

    def __post_init__(self):
        if self.node_size < LINE or self.node_size % LINE:
            raise ValueError(f"node size {self.node_size} must be a positive multiple of {LINE}")

    @property
    def capacity(self) -> int:
        return self.node_size // ENTRY_BYTES

    @property
    def nlines(self) -> int:
        return self.capacity // COUNT_IN_LINE

    @property
    def block(self) -> int:
        return HEADER_BYTES + self.node_size

    def slot_offset(self, node: int, j: int) -> int:
        return node + HEADER_BYTES + ENTRY_BYTES * j
