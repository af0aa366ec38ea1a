"""Per-miner state machines as pure step functions.

``honest_step`` runs the ZeroBlock miner loop (one standard block or one
dummy per mat interval, mining only inside the first ``avt_net`` seconds of
an interval).  Passing ``sched=None`` gives a plain longest-chain Bitcoin
miner instead.  ``selfish_step`` is the block-withholding adversary.

Both take a state and an event and return ``(new_state, actions)``; the
simulator owns scheduling, randomness and message delivery.
"""

from dataclasses import dataclass

from .chain import (
    Chain,
    ChainError,
    Kind,
    RejectReason,
    check_link,
    common_ancestor,
    make_dummy,
    make_standard,
)
from .mining import MatSchedule, Target, try_nonce

# Timely-seen side blocks older than this many intervals are forgotten.
SIDE_HORIZON = 256

VANILLA = "vanilla-bitcoin"
AGAINST_ZEROBLOCK = "against-zeroblock"
POLICY_MODES = (VANILLA, AGAINST_ZEROBLOCK)


def _evolve(state, **changes):
    """``dataclasses.replace`` without re-running ``__init__`` (hot path)."""
    new = object.__new__(type(state))
    new.__dict__.update(state.__dict__, **changes)
    return new


class SequencingError(RuntimeError):
    """An event was delivered out of order (a simulator bug)."""


# --- events ------------------------------------------------------------------

@dataclass(frozen=True)
class BlockArrival:
    chain: Chain
    time: float
    tie_switch: bool = False  # forced-gamma routing decided by the simulator


@dataclass(frozen=True)
class MatExpiry:
    index: int
    time: float


@dataclass(frozen=True)
class PoWSuccess:
    nonce: int
    time: float


@dataclass(frozen=True)
class Tick:
    time: float


# --- actions -----------------------------------------------------------------

@dataclass(frozen=True)
class Broadcast:
    chain: Chain


@dataclass(frozen=True)
class AdoptChain:
    chain: Chain


@dataclass(frozen=True)
class GenerateDummy:
    index: int
    block: object


@dataclass(frozen=True)
class StartMining:
    head: Chain


@dataclass(frozen=True)
class StopMining:
    pass


@dataclass(frozen=True)
class Withhold:
    block: object


@dataclass(frozen=True)
class RevealPrivate:
    prefix_length: int
    chain: Chain


@dataclass(frozen=True)
class Accept:
    block: object


@dataclass(frozen=True)
class Reject:
    block: object
    reason: RejectReason


# --- honest miner ------------------------------------------------------------

@dataclass(frozen=True)
class MinerState:
    miner_id: str
    local_chain: Chain
    flag_new_block: bool = False
    index: int = 1
    nonce: int = 0
    scounter_anchor: float = 0.0
    hash_power: float = 1.0
    side: frozenset = frozenset()  # (mat_index, id) of timely-seen blocks off the local chain
    last_time: float = 0.0
    # Recently rejected chains as (chain, bad block, reason), newest first.  A
    # chain that extends one of them fails the same way, so it is not re-walked.
    poisoned: tuple = ()

    @classmethod
    def initial(cls, miner_id: str, hash_power: float = 1.0, skew: float = 0.0) -> "MinerState":
        return cls(miner_id, Chain.genesis(), scounter_anchor=skew, hash_power=hash_power)


def _check_time(s, time: float):
    if time < s.last_time:
        raise SequencingError(f"{s.miner_id}: event at {time} precedes {s.last_time}")


def _window_end(s: MinerState, sched: MatSchedule, mine_until_boundary: bool) -> float:
    if mine_until_boundary:
        return sched.boundary(s.index) + s.scounter_anchor
    return sched.window_end(s.index) + s.scounter_anchor


def _fill_dummies(chain: Chain, upto: int, actions: list) -> Chain:
    """Append the dummies an honest miner would hold for intervals before ``upto``."""
    for idx in range(chain.head.mat_index + 1, upto):
        d = make_dummy(chain.head, idx)
        chain = Chain(d, chain)
        actions.append(GenerateDummy(idx, d))
    return chain


def honest_step(s: MinerState, e, sched: MatSchedule | None, t: Target, *,
                mine_until_boundary: bool = False):
    _check_time(s, e.time)
    if sched is not None:
        lo = sched.boundary(s.index - 1) + s.scounter_anchor
        hi = sched.boundary(s.index) + s.scounter_anchor
        if e.time < lo or e.time > hi:
            raise SequencingError(f"{s.miner_id}: event at {e.time} outside interval {s.index}")
    s = _evolve(s, last_time=e.time)
    if isinstance(e, Tick):
        return s, []
    if isinstance(e, BlockArrival):
        return _honest_arrival(s, e, sched, t)
    if isinstance(e, PoWSuccess):
        return _honest_pow(s, e, sched, t, mine_until_boundary)
    if isinstance(e, MatExpiry):
        if sched is None:
            raise SequencingError("mat expiry without a schedule")
        return _honest_expiry(s, e)
    raise TypeError(f"unknown event {e!r}")


def _honest_expiry(s: MinerState, e: MatExpiry):
    if e.index != s.index:
        raise SequencingError(f"{s.miner_id}: expiry of interval {e.index} while in {s.index}")
    actions = []
    chain = s.local_chain
    if not s.flag_new_block and chain.head.mat_index < e.index:
        d = make_dummy(chain.head, e.index)
        chain = Chain(d, chain)
        actions.append(GenerateDummy(e.index, d))
        actions.append(AdoptChain(chain))
    index = e.index + 1
    side = s.side
    if side and min(side)[0] < index - SIDE_HORIZON:
        side = frozenset(x for x in side if x[0] >= index - SIDE_HORIZON)
    s = _evolve(s, local_chain=chain, index=index, flag_new_block=False, side=side)
    actions.append(StartMining(chain))
    return s, actions


def _honest_pow(s: MinerState, e: PoWSuccess, sched, t, mine_until_boundary):
    head = s.local_chain.head
    if sched is not None:
        if s.flag_new_block or e.time >= _window_end(s, sched, mine_until_boundary):
            return s, []
        index = s.index
        if head.mat_index >= index:
            return s, []
    else:
        index = head.mat_index + 1
    if not try_nonce(head.id, e.nonce, t):
        return _evolve(s, nonce=s.nonce + 1), []
    block = make_standard(head, index, e.nonce, s.miner_id)
    chain = Chain(block, s.local_chain)
    actions = [Broadcast(chain)]
    if sched is None:
        actions.append(StartMining(chain))
        return _evolve(s, local_chain=chain, nonce=0), actions
    actions.append(StopMining())
    return _evolve(s, local_chain=chain, flag_new_block=True, nonce=0), actions


# Rejections that no later event can undo: the interval index only grows
# and a block missed while timely never enters ``side``.
_PERMANENT = (RejectReason.STALE_MAT_INDEX, RejectReason.BAD_POW, RejectReason.WRONG_PARENT)


# Only look for the poisoned chain inside chains at most this many standard
# blocks taller; beyond that full validation is cheaper than the search.
_POISON_REACH = 16
# One slot per likely sender of a bad branch is enough.
_POISON_SLOTS = 4


def _contains(chain: Chain, node: Chain) -> bool:
    """Whether ``node`` is a prefix of ``chain`` (``False`` also means "not checked")."""
    if chain.standard_height - node.standard_height > _POISON_REACH:
        return False
    while chain.length > node.length and chain.standard_height >= node.standard_height:
        chain = chain.prev
    return chain.length == node.length and chain.head.id == node.head.id


def _honest_arrival(s: MinerState, e: BlockArrival, sched, t):
    local = s.local_chain
    incoming = e.chain
    for pos, (marker, bad, reason) in enumerate(s.poisoned):
        if _contains(incoming, marker):
            rest = s.poisoned[:pos] + s.poisoned[pos + 1:]
            return _evolve(s, poisoned=((incoming, bad, reason),) + rest), [Reject(bad, reason)]
    try:
        base = common_ancestor(local, incoming)
    except ChainError:
        return s, [Reject(incoming.head, RejectReason.WRONG_PARENT)]
    suffix = []
    node = incoming
    while node.length > base.length:
        suffix.append(node)
        node = node.prev
    if not suffix:
        return s, []
    suffix.reverse()

    actions = []
    fresh = []
    prev = base.head
    valid = True
    for node in suffix:
        b = node.head
        if b.kind is Kind.DUMMY:
            ok = b.parent == prev.id and b.mat_index > prev.mat_index
            if ok and sched is not None:
                ok = b.mat_index < s.index
            if not ok:
                actions.append(Reject(b, RejectReason.FOREIGN_DUMMY))
                valid = False
                break
        elif (b.mat_index, b.id) not in s.side:
            reason = check_link(prev, b, t)
            if reason is None and sched is not None and b.mat_index < s.index:
                reason = RejectReason.STALE_MAT_INDEX
            if reason is not None:
                actions.append(Reject(b, reason))
                valid = False
                if reason in _PERMANENT:
                    entry = (incoming, b, reason)
                    s = _evolve(s, poisoned=(entry,) + s.poisoned[:_POISON_SLOTS - 1])
                break
            actions.append(Accept(b))
            fresh.append(b)
        prev = b

    adopt = valid and (
        incoming.standard_height > local.standard_height
        or (e.tie_switch and incoming.standard_height == local.standard_height)
    )
    # ``side`` only matters for the interval rule; plain Bitcoin skips it
    if not adopt:
        if fresh and sched is not None:
            s = _evolve(s, side=s.side | {(b.mat_index, b.id) for b in fresh})
        return s, actions

    chain = incoming
    if sched is None:
        actions += [AdoptChain(chain), StartMining(chain)]
        return _evolve(s, local_chain=chain), actions
    dropped = set()
    node = local
    while node.length > base.length:
        if node.head.is_standard:
            dropped.add((node.head.mat_index, node.head.id))
        node = node.prev
    side = s.side | dropped if dropped else s.side
    chain = _fill_dummies(chain, s.index, actions)
    actions.append(AdoptChain(chain))
    flag = chain.head.is_standard and chain.head.mat_index >= s.index
    if flag:
        actions.append(StopMining())
    elif not s.flag_new_block:
        actions.append(StartMining(chain))
    return _evolve(s, local_chain=chain, side=side, flag_new_block=flag or s.flag_new_block), actions


# --- selfish miner -----------------------------------------------------------

@dataclass(frozen=True)
class SelfishState:
    miner_id: str
    private_chain: Chain
    public_view: Chain
    hash_power: float = 0.0
    policy_mode: str = VANILLA
    published_height: int = 0
    index: int = 1
    private_dummies: bool = False
    last_time: float = 0.0

    @property
    def lead(self) -> int:
        return self.private_chain.standard_height - self.public_view.standard_height

    @classmethod
    def initial(cls, miner_id: str, hash_power: float, policy_mode: str = VANILLA,
                private_dummies: bool = False) -> "SelfishState":
        if policy_mode not in POLICY_MODES:
            raise ValueError(f"unknown policy mode {policy_mode!r}")
        g = Chain.genesis()
        return cls(miner_id, g, g, hash_power, policy_mode, private_dummies=private_dummies)


def _can_mine(s: SelfishState) -> bool:
    if s.policy_mode == VANILLA:
        return True
    return s.private_chain.head.mat_index < s.index


def _mining_action(s: SelfishState):
    return StartMining(s.private_chain) if _can_mine(s) else StopMining()


def selfish_step(s: SelfishState, e, t: Target | None = None):
    """Withholding adversary.

    On a find the block is withheld, except when a tie race is already on,
    where publishing wins outright.  When honest miners extend the public
    chain the adversary compares heights: behind, it adopts the public
    chain; even, it reveals everything and races; one ahead, it reveals
    everything and wins; further ahead, it reveals just enough to match the
    public height.
    """
    _check_time(s, e.time)
    s = _evolve(s, last_time=e.time)
    if isinstance(e, Tick):
        return s, []
    if isinstance(e, PoWSuccess):
        return _selfish_pow(s, e, t)
    if isinstance(e, BlockArrival):
        return _selfish_arrival(s, e)
    if isinstance(e, MatExpiry):
        return _selfish_expiry(s, e)
    raise TypeError(f"unknown event {e!r}")


def _selfish_pow(s: SelfishState, e: PoWSuccess, t):
    if not _can_mine(s):
        return s, []
    head = s.private_chain.head
    index = head.mat_index + 1 if s.policy_mode == VANILLA else s.index
    if t is not None and not try_nonce(head.id, e.nonce, t):
        return s, []
    racing = (
        s.lead == 0
        and s.private_chain.head.id != s.public_view.head.id
        and s.published_height == s.private_chain.standard_height
    )
    block = make_standard(head, index, e.nonce, s.miner_id)
    private = Chain(block, s.private_chain)
    s = _evolve(s, private_chain=private)
    if racing:
        s = _evolve(s, public_view=private, published_height=private.standard_height)
        return s, [RevealPrivate(private.length, private), _mining_action(s)]
    return s, [Withhold(block), _mining_action(s)]


def _selfish_arrival(s: SelfishState, e: BlockArrival):
    incoming = e.chain
    if incoming.standard_height <= s.public_view.standard_height:
        return s, []
    s = _evolve(s, public_view=incoming)
    lead = s.lead
    private = s.private_chain
    if lead < 0:
        s = _evolve(s, private_chain=incoming, published_height=incoming.standard_height)
        return s, [AdoptChain(incoming), _mining_action(s)]
    if s.published_height >= private.standard_height:
        return s, []
    if lead == 0:
        if private.head.id == incoming.head.id:
            return s, []
        s = _evolve(s, published_height=private.standard_height)
        return s, [RevealPrivate(private.length, private)]
    if lead == 1:
        s = _evolve(s, public_view=private, published_height=private.standard_height)
        return s, [RevealPrivate(private.length, private)]
    prefix = private.first_at_height(incoming.standard_height)
    if prefix.standard_height <= s.published_height:
        return s, []
    s = _evolve(s, published_height=prefix.standard_height)
    return s, [RevealPrivate(prefix.length, prefix)]


def _selfish_expiry(s: SelfishState, e: MatExpiry):
    if s.policy_mode == VANILLA:
        return s, []
    if e.index != s.index:
        raise SequencingError(f"{s.miner_id}: expiry of interval {e.index} while in {s.index}")
    public = s.public_view
    private = s.private_chain
    following = private.head.id == public.head.id
    actions = []
    if public.head.mat_index < e.index:
        d = make_dummy(public.head, e.index)
        public = Chain(d, public)
        actions.append(GenerateDummy(e.index, d))
    if following:
        private = public
    elif s.private_dummies and private.head.mat_index < e.index:
        d = make_dummy(private.head, e.index)
        private = Chain(d, private)
        actions.append(GenerateDummy(e.index, d))
    s = _evolve(s, public_view=public, private_chain=private, index=e.index + 1)
    actions.append(_mining_action(s))
    return s, actions
