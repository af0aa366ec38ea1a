"""Blocks, chains, validation, fork choice and dummy-run compaction.

Chains are immutable persistent lists: each :class:`Chain` holds its head
block and a pointer to the chain it extends, so extension is O(1) and two
miners can share prefixes freely.
"""

import enum
import logging
from dataclasses import dataclass, field

from .hashing import FIXED_STRING_HASH, digest, encode_fields, u64
from .mining import Target, try_nonce

log = logging.getLogger(__name__)


class Kind(enum.Enum):
    GENESIS = "genesis"
    STANDARD = "standard"
    DUMMY = "dummy"


_KIND_CODE = {Kind.GENESIS: b"\x00", Kind.STANDARD: b"\x01", Kind.DUMMY: b"\x02"}


class RejectReason(enum.Enum):
    WRONG_PARENT = "WrongParent"
    BAD_POW = "BadPoW"
    STALE_MAT_INDEX = "StaleMatIndex"
    FOREIGN_DUMMY = "ForeignDummy"


class ChainError(ValueError):
    pass


@dataclass(frozen=True)
class Block:
    kind: Kind
    parent: bytes | None
    mat_index: int
    nonce: int | None = None
    creator: str | None = None
    payload_tag: str | None = None
    id: bytes = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "id", digest(self.encode()))

    @property
    def dummy_core(self):
        if self.kind is not Kind.DUMMY:
            return None
        return (self.parent, FIXED_STRING_HASH, self.mat_index)

    @property
    def is_standard(self) -> bool:
        return self.kind is Kind.STANDARD

    def encode(self) -> bytes:
        """Canonical encoding: length-prefixed fields in declaration order."""
        core = self.dummy_core
        return encode_fields(
            _KIND_CODE[self.kind],
            self.parent or b"",
            u64(self.mat_index),
            b"" if self.nonce is None else u64(self.nonce),
            (self.creator or "").encode(),
            (self.payload_tag or "").encode(),
            b"" if core is None else encode_fields(core[0], core[1], u64(core[2])),
        )

    def __repr__(self):
        who = f", {self.creator}" if self.creator else ""
        return f"<{self.kind.value} mat={self.mat_index}{who} {self.id.hex()[:10]}>"


_GENESIS = Block(Kind.GENESIS, None, 0)


def make_genesis() -> Block:
    return _GENESIS


def make_dummy(head: Block, index: int) -> Block:
    if index <= head.mat_index:
        raise ValueError(f"dummy index {index} must exceed head index {head.mat_index}")
    return Block(Kind.DUMMY, head.id, index)


def make_standard(head: Block, index: int, nonce: int, creator: str, payload_tag: str = "") -> Block:
    return Block(Kind.STANDARD, head.id, index, nonce, creator, payload_tag)


class Chain:
    """An immutable chain ending in ``head``; ``prev`` is the chain it extends.

    ``jump`` points further back along skew-binary distances so that
    ancestors can be found in O(log n) steps.
    """

    __slots__ = ("head", "prev", "jump", "standard_height", "length")

    def __init__(self, head: Block, prev: "Chain | None" = None):
        self.head = head
        self.prev = prev
        if prev is None:
            self.standard_height = 0
            self.length = 1
            self.jump = None
        else:
            self.standard_height = prev.standard_height + head.is_standard
            self.length = prev.length + 1
            far = prev.jump
            if far is not None and far.jump is not None and \
                    prev.length - far.length == far.length - far.jump.length:
                self.jump = far.jump
            else:
                self.jump = prev

    @classmethod
    def genesis(cls) -> "Chain":
        return cls(make_genesis())

    @classmethod
    def from_blocks(cls, blocks) -> "Chain":
        """Link ``blocks`` in order without checking them (see :func:`chain_problem`)."""
        it = iter(blocks)
        chain = cls(next(it))
        for b in it:
            chain = cls(b, chain)
        return chain

    def extend(self, block: Block) -> "Chain":
        if block.parent != self.head.id:
            raise ChainError("block does not extend the chain head")
        if block.mat_index <= self.head.mat_index:
            raise ChainError("mat_index must increase along the chain")
        return Chain(block, self)

    @property
    def head_id(self) -> bytes:
        return self.head.id

    @property
    def blocks(self) -> tuple:
        out = []
        node = self
        while node is not None:
            out.append(node.head)
            node = node.prev
        return tuple(reversed(out))

    def iter_back(self):
        node = self
        while node is not None:
            yield node
            node = node.prev

    def ancestor(self, length: int) -> "Chain":
        """The prefix of this chain with ``length`` blocks."""
        if not 1 <= length <= self.length:
            raise IndexError(length)
        node = self
        while node.length > length:
            node = node.jump if node.jump.length >= length else node.prev
        return node

    def first_at_height(self, height: int) -> "Chain":
        """Shortest prefix whose standard height is at least ``height``
        (the whole chain if it is lower)."""
        node = self
        while node.prev is not None:
            if node.jump.standard_height >= height:
                node = node.jump
            elif node.prev.standard_height >= height:
                node = node.prev
            else:
                break
        return node

    def standard_ids(self) -> set:
        return {n.head.id for n in self.iter_back() if n.head.is_standard}

    def __len__(self):
        return self.length

    def __eq__(self, other):
        if not isinstance(other, Chain):
            return NotImplemented
        return self.length == other.length and self.head.id == other.head.id

    def __hash__(self):
        return hash((self.head.id, self.length))

    def __repr__(self):
        return f"<Chain len={self.length} std={self.standard_height} head={self.head!r}>"


def common_ancestor(a: Chain, b: Chain) -> Chain:
    """Longest shared prefix of two chains with the same genesis."""
    if a.length > b.length:
        a = a.ancestor(b.length)
    elif b.length > a.length:
        b = b.ancestor(a.length)
    # equal lengths give equal jump targets, so both sides can jump together
    while a.head.id != b.head.id:
        if a.jump is not None and a.jump.head.id != b.jump.head.id:
            a, b = a.jump, b.jump
        else:
            a, b = a.prev, b.prev
        if a is None:
            raise ChainError("chains do not share a genesis block")
    return a


def new_suffix(local: Chain, incoming: Chain) -> list:
    """Blocks of ``incoming`` after its common prefix with ``local``, oldest first."""
    base = common_ancestor(local, incoming)
    out = []
    node = incoming
    while node.length > base.length:
        out.append(node.head)
        node = node.prev
    out.reverse()
    return out


def check_pow(block: Block, target: Target) -> bool:
    return try_nonce(block.parent, block.nonce, target)


def validate_block(b: Block, local: Chain, target: Target, current_index: int, *,
                   zeroblock: bool = True) -> RejectReason | None:
    """Check a block received from the network against the local chain.

    Returns ``None`` when the block is acceptable, otherwise the reason for
    rejection.  Dummy blocks are only ever generated locally.
    """
    if b.kind is Kind.DUMMY or b.kind is Kind.GENESIS:
        return RejectReason.FOREIGN_DUMMY
    # a block from a past interval is stale whatever it builds on
    if zeroblock and b.mat_index < current_index:
        return RejectReason.STALE_MAT_INDEX
    if b.parent != local.head.id:
        return RejectReason.WRONG_PARENT
    if b.nonce is None or not check_pow(b, target):
        return RejectReason.BAD_POW
    if b.mat_index <= local.head.mat_index:
        return RejectReason.STALE_MAT_INDEX
    return None


def _dummy_run(start: Block, stop_index: int) -> list:
    """Dummies after ``start`` for every index up to ``stop_index - 1``."""
    run = []
    head = start
    for idx in range(start.mat_index + 1, stop_index):
        head = make_dummy(head, idx)
        run.append(head)
    return run


def check_link(prev: Block, b: Block, target: Target) -> RejectReason | None:
    """Structural check of ``b`` following ``prev`` in a chain.

    A standard block may skip over a compacted dummy run; the run is
    re-derived from ``prev`` and must end at ``b.parent``.
    """
    if b.mat_index <= prev.mat_index:
        return RejectReason.STALE_MAT_INDEX
    if b.kind is Kind.GENESIS:
        return RejectReason.WRONG_PARENT
    if b.kind is Kind.DUMMY:
        return None if b.parent == prev.id else RejectReason.FOREIGN_DUMMY
    if b.parent != prev.id:
        run = _dummy_run(prev, b.mat_index)
        if not run or run[-1].id != b.parent:
            return RejectReason.WRONG_PARENT
    if b.nonce is None or not check_pow(b, target):
        return RejectReason.BAD_POW
    return None


def chain_problem(chain: Chain, target: Target):
    """First structural defect as ``(position, reason)``, or ``None`` for a valid chain."""
    blocks = chain.blocks
    if blocks[0] != make_genesis():
        return 0, RejectReason.WRONG_PARENT
    for pos in range(1, len(blocks)):
        reason = check_link(blocks[pos - 1], blocks[pos], target)
        if reason is not None:
            return pos, reason
    return None


def fork_choice(local: Chain, incoming: Chain, target: Target | None = None) -> Chain:
    """Longest standard chain wins; on a tie the chain already held is kept.

    When ``target`` is given the part of ``incoming`` not shared with
    ``local`` is checked first and an invalid ``incoming`` is ignored.
    """
    if target is not None:
        try:
            base = common_ancestor(local, incoming)
        except ChainError:
            log.warning("incoming chain rejected: different genesis")
            return local
        prev = base.head
        for b in new_suffix(local, incoming):
            reason = check_link(prev, b, target)
            if reason is not None:
                log.warning("incoming chain rejected at %r: %s", b, reason.value)
                return local
            prev = b
    if incoming.standard_height > local.standard_height:
        return incoming
    return local


def compact(chain: Chain) -> Chain:
    """Drop every dummy run that sits between two standard blocks."""
    kept = []
    pending = []
    seen_standard = False
    for b in chain.blocks:
        if b.kind is Kind.DUMMY:
            pending.append(b)
            continue
        if b.is_standard and seen_standard:
            pending = []
        kept.extend(pending)
        pending = []
        kept.append(b)
        seen_standard = seen_standard or b.is_standard
    kept.extend(pending)
    return Chain.from_blocks(kept)


def expand(chain: Chain) -> Chain:
    """Inverse of :func:`compact`: re-derive every removed dummy run."""
    blocks = chain.blocks
    out = Chain(blocks[0])
    for b in blocks[1:]:
        if b.parent != out.head.id and b.is_standard:
            for d in _dummy_run(out.head, b.mat_index):
                out = Chain(d, out)
        out = Chain(b, out)
    return out


# --- chain file format -------------------------------------------------------

class ChainFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _dash(value):
    return "-" if value is None or value == "" else str(value)


def format_block(b: Block) -> str:
    return ",".join([
        b.kind.value, str(b.mat_index), _dash(b.parent.hex() if b.parent else None),
        _dash(b.nonce), _dash(b.creator), _dash(b.payload_tag), b.id.hex(),
    ])


def parse_block(line: str, lineno: int = 0) -> Block:
    parts = line.strip().split(",")
    if len(parts) != 7:
        raise ChainFormatError(lineno, f"expected 7 fields, got {len(parts)}")
    kind_s, idx_s, parent_s, nonce_s, creator_s, payload_s, id_s = parts
    try:
        kind = Kind(kind_s)
        mat_index = int(idx_s)
        parent = None if parent_s == "-" else bytes.fromhex(parent_s)
        nonce = None if nonce_s == "-" else int(nonce_s)
    except ValueError as exc:
        raise ChainFormatError(lineno, str(exc)) from None
    if mat_index < 0 or (nonce is not None and nonce < 0):
        raise ChainFormatError(lineno, "negative integer field")
    creator = None if creator_s == "-" else creator_s
    payload = None if payload_s == "-" else payload_s
    if kind is Kind.STANDARD:
        if parent is None or nonce is None or creator is None:
            raise ChainFormatError(lineno, "standard block needs parent, nonce and creator")
        payload = payload or ""
    elif nonce is not None or creator is not None or payload is not None:
        raise ChainFormatError(lineno, f"{kind.value} block carries no nonce/creator/payload")
    if (kind is Kind.GENESIS) != (parent is None):
        raise ChainFormatError(lineno, "only the genesis block lacks a parent")
    b = Block(kind, parent, mat_index, nonce, creator, payload)
    if b.id.hex() != id_s:
        raise ChainFormatError(lineno, "block id does not match its content")
    return b


def dumps_chain(chain: Chain) -> str:
    return "".join(format_block(b) + "\n" for b in chain.blocks)


def loads_chain(text: str) -> Chain:
    blocks = [parse_block(line, n) for n, line in enumerate(text.splitlines(), 1) if line.strip()]
    if not blocks:
        raise ChainFormatError(1, "empty chain file")
    if blocks[0].kind is not Kind.GENESIS:
        raise ChainFormatError(1, "first block must be genesis")
    return Chain.from_blocks(blocks)
