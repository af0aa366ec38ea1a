import pytest
from hypothesis import given, settings, strategies as st

from zeroblock.chain import Chain, Kind, RejectReason
from zeroblock.mining import SIM_TARGET, MatSchedule, search_nonce
from zeroblock.protocol import (
    AGAINST_ZEROBLOCK,
    VANILLA,
    Accept,
    AdoptChain,
    BlockArrival,
    Broadcast,
    GenerateDummy,
    MatExpiry,
    MinerState,
    PoWSuccess,
    Reject,
    RevealPrivate,
    SelfishState,
    SequencingError,
    StartMining,
    StopMining,
    Tick,
    Withhold,
    honest_step,
    selfish_step,
)

from helpers import dummy, mine

SCHED = MatSchedule(600, 60)


def kinds(actions):
    return [type(a) for a in actions]


def step(s, e, **kw):
    return honest_step(s, e, SCHED, SIM_TARGET, **kw)


def nonce_for(chain):
    return search_nonce(chain.head.id, SIM_TARGET)[0]


# --- honest miner -------------------------------------------------------------

def test_empty_interval_generates_dummy():
    s = MinerState.initial("h")
    s, acts = step(s, MatExpiry(1, 660.0))
    assert kinds(acts) == [GenerateDummy, AdoptChain, StartMining]
    assert acts[0].index == 1 and acts[0].block.kind is Kind.DUMMY
    assert s.local_chain.head.id == acts[0].block.id
    assert s.index == 2 and not s.flag_new_block


def test_find_inside_window_broadcasts():
    s = MinerState.initial("h")
    s, acts = step(s, PoWSuccess(nonce_for(s.local_chain), 120.0))
    assert kinds(acts) == [Broadcast, StopMining]
    assert s.flag_new_block and s.local_chain.standard_height == 1
    assert s.local_chain.head.mat_index == 1 and s.local_chain.head.creator == "h"


def test_find_after_window_is_ignored():
    s = MinerState.initial("h")
    s2, acts = step(s, PoWSuccess(nonce_for(s.local_chain), 630.0))
    assert acts == [] and s2.local_chain is s.local_chain


def test_find_after_window_counts_when_mining_until_boundary():
    s = MinerState.initial("h")
    s, acts = step(s, PoWSuccess(nonce_for(s.local_chain), 630.0), mine_until_boundary=True)
    assert kinds(acts) == [Broadcast, StopMining]


def test_no_dummy_after_block_in_interval():
    s = MinerState.initial("h")
    s, _ = step(s, PoWSuccess(nonce_for(s.local_chain), 10.0))
    s, acts = step(s, MatExpiry(1, 660.0))
    assert kinds(acts) == [StartMining]
    assert s.local_chain.head.kind is Kind.STANDARD and not s.flag_new_block


def test_second_find_in_interval_is_ignored():
    s = MinerState.initial("h")
    s, _ = step(s, PoWSuccess(nonce_for(s.local_chain), 10.0))
    s2, acts = step(s, PoWSuccess(nonce_for(s.local_chain), 20.0))
    assert acts == [] and s2.local_chain is s.local_chain


def test_timely_arrival_adopted_and_stops_mining():
    s = MinerState.initial("h")
    incoming = mine(Chain.genesis(), 1, "other")
    s, acts = step(s, BlockArrival(incoming, 100.0))
    assert kinds(acts) == [Accept, AdoptChain, StopMining]
    assert s.local_chain.head.id == incoming.head.id and s.flag_new_block


def test_withheld_block_rejected_after_dummy():
    s = MinerState.initial("h")
    s, _ = step(s, MatExpiry(1, 660.0))
    withheld = mine(Chain.genesis(), 1, "selfish")
    before = s.local_chain
    s, acts = step(s, BlockArrival(withheld, 700.0))
    assert kinds(acts) == [Reject]
    assert acts[0].reason is RejectReason.STALE_MAT_INDEX
    assert s.local_chain is before


def test_late_block_seen_in_time_can_win_fork():
    # two honest blocks in interval 1; the loser is kept as timely-seen and
    # the chain built on it is still accepted after the boundary
    s = MinerState.initial("h")
    mine_a = mine(Chain.genesis(), 1, "a")
    mine_b = mine(Chain.genesis(), 1, "b")
    s, _ = step(s, BlockArrival(mine_a, 100.0))
    s, acts = step(s, BlockArrival(mine_b, 110.0))
    assert kinds(acts) == [Accept] and s.local_chain.head.id == mine_a.head.id
    s, _ = step(s, MatExpiry(1, 660.0))
    longer = mine(mine_b, 2, "b")
    s, acts = step(s, BlockArrival(longer, 700.0))
    assert s.local_chain.head.id == longer.head.id


def test_arrival_fills_missing_dummies():
    s = MinerState.initial("h")
    s, _ = step(s, MatExpiry(1, 660.0))
    s, _ = step(s, MatExpiry(2, 1320.0))
    # peer mined in interval 3 on genesis + its own dummies for 1 and 2
    incoming = mine(dummy(dummy(Chain.genesis(), 1), 2), 3, "p")
    s, acts = step(s, BlockArrival(incoming, 1400.0))
    assert s.local_chain.head.id == incoming.head.id


def test_foreign_dummy_for_current_interval_rejected():
    s = MinerState.initial("h")
    s, acts = step(s, BlockArrival(dummy(Chain.genesis(), 1), 100.0))
    assert kinds(acts) == [Reject] and acts[0].reason is RejectReason.FOREIGN_DUMMY


def test_sequencing_errors():
    s = MinerState.initial("h")
    s, _ = step(s, Tick(100.0))
    with pytest.raises(SequencingError):
        step(s, Tick(50.0))
    with pytest.raises(SequencingError):
        step(s, Tick(700.0))
    with pytest.raises(SequencingError):
        step(s, MatExpiry(2, 660.0))


def test_vanilla_honest_keeps_mining():
    s = MinerState.initial("h")
    s, acts = honest_step(s, PoWSuccess(nonce_for(s.local_chain), 5000.0), None, SIM_TARGET)
    assert kinds(acts) == [Broadcast, StartMining]
    assert s.local_chain.head.mat_index == 1


def test_equal_heads_give_identical_dummies():
    a = MinerState.initial("a")
    b = MinerState.initial("b")
    shared = mine(Chain.genesis(), 1, "x")
    a, _ = step(a, BlockArrival(shared, 50.0))
    b, _ = step(b, BlockArrival(shared, 80.0))
    for idx in (1, 2):
        a, _ = step(a, MatExpiry(idx, SCHED.boundary(idx)))
        b, _ = step(b, MatExpiry(idx, SCHED.boundary(idx)))
    assert a.local_chain.head.id == b.local_chain.head.id
    assert a.local_chain.head.kind is Kind.DUMMY


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 11), st.floats(0, 659.0), st.booleans()),
                max_size=30))
def test_honest_trace_conformance(finds):
    """At most one broadcast per interval, and a dummy at every boundary
    of an interval without a block."""
    s = MinerState.initial("h")
    events = sorted((i * SCHED.mat + off, own) for i, off, own in finds)
    broadcasts = {}
    for idx in range(1, 13):
        end = SCHED.boundary(idx)
        for t, own in [e for e in events if SCHED.boundary(idx - 1) <= e[0] < end]:
            if own:
                s, acts = step(s, PoWSuccess(nonce_for(s.local_chain), t))
            else:
                # a peer's block on our head, or a repeat of a block we already hold
                peer = mine(s.local_chain, idx, "peer") if s.local_chain.head.mat_index < idx \
                    else s.local_chain
                s, acts = step(s, BlockArrival(peer, t))
            for a in acts:
                if isinstance(a, Broadcast):
                    broadcasts[idx] = broadcasts.get(idx, 0) + 1
        had_block = s.flag_new_block
        s, acts = step(s, MatExpiry(idx, end))
        if not had_block:
            assert GenerateDummy in kinds(acts)
        assert s.local_chain.head.mat_index == idx
    assert all(n <= 1 for n in broadcasts.values())


# --- adversary ----------------------------------------------------------------

def selfish_with_private(n_private, mode=VANILLA, public=None):
    s = SelfishState.initial("s", 0.3, mode)
    if public is not None:
        s, _ = selfish_step(s, BlockArrival(public, 1.0))
    t = 2.0
    for _ in range(n_private):
        chain = s.private_chain
        s, acts = selfish_step(s, PoWSuccess(nonce_for(chain), t), SIM_TARGET)
        assert Withhold in kinds(acts)
        t += 1
    return s


def honest_chain(height, creator="h"):
    c = Chain.genesis()
    for i in range(1, height + 1):
        c = mine(c, i, creator)
    return c


def test_lead_tracks_heights():
    s = selfish_with_private(3)
    assert s.lead == 3
    assert s.lead == s.private_chain.standard_height - s.public_view.standard_height


def test_adversary_behind_adopts_public_chain():
    s = SelfishState.initial("s", 0.3)
    public = honest_chain(1)
    s, acts = selfish_step(s, BlockArrival(public, 5.0))
    assert kinds(acts) == [AdoptChain, StartMining]
    assert s.private_chain.head.id == public.head.id and s.lead == 0


def test_lead_one_after_honest_block_reveals_everything():
    s = selfish_with_private(2)
    s, acts = selfish_step(s, BlockArrival(honest_chain(1), 10.0))
    assert kinds(acts) == [RevealPrivate]
    assert acts[0].chain.head.id == s.private_chain.head.id
    assert s.public_view.head.id == s.private_chain.head.id


def test_lead_two_after_honest_block_reveals_one_block():
    s = selfish_with_private(3)
    s, acts = selfish_step(s, BlockArrival(honest_chain(1), 10.0))
    assert kinds(acts) == [RevealPrivate]
    revealed = acts[0].chain
    assert revealed.standard_height == 1 and revealed.head.creator == "s"
    assert s.lead == 2


def test_lead_zero_race_then_publish_next_find():
    s = selfish_with_private(1)
    s, acts = selfish_step(s, BlockArrival(honest_chain(1), 10.0))
    assert kinds(acts) == [RevealPrivate] and s.lead == 0
    s, acts = selfish_step(s, PoWSuccess(nonce_for(s.private_chain), 11.0), SIM_TARGET)
    assert RevealPrivate in kinds(acts) and s.lead == 0
    assert s.public_view.head.creator == "s"


def test_against_zeroblock_find_then_honest_block_triggers_reveal():
    s = SelfishState.initial("s", 0.3, AGAINST_ZEROBLOCK)
    s, acts = selfish_step(s, PoWSuccess(nonce_for(s.private_chain), 100.0), SIM_TARGET)
    assert kinds(acts) == [Withhold, StopMining]
    assert s.private_chain.head.mat_index == 1
    s, acts = selfish_step(s, BlockArrival(honest_chain(1), 300.0))
    assert kinds(acts) == [RevealPrivate]


def test_against_zeroblock_mirrors_honest_dummies():
    s = SelfishState.initial("s", 0.3, AGAINST_ZEROBLOCK)
    s, acts = selfish_step(s, MatExpiry(1, 660.0))
    assert GenerateDummy in kinds(acts)
    assert s.public_view.head.kind is Kind.DUMMY
    assert s.private_chain.head.id == s.public_view.head.id and s.index == 2


def test_against_zeroblock_private_branch_skips_dummies_by_default():
    s = selfish_with_private(1, AGAINST_ZEROBLOCK)
    s, _ = selfish_step(s, MatExpiry(1, 660.0))
    assert s.private_chain.head.kind is Kind.STANDARD
    t = SelfishState.initial("s", 0.3, AGAINST_ZEROBLOCK, private_dummies=True)
    t, _ = selfish_step(t, PoWSuccess(nonce_for(t.private_chain), 5.0), SIM_TARGET)
    t, _ = selfish_step(t, MatExpiry(1, 660.0))
    t, _ = selfish_step(t, MatExpiry(2, 1320.0))
    assert t.private_chain.head.kind is Kind.DUMMY and t.private_chain.head.mat_index == 2


def test_unknown_policy_mode():
    with pytest.raises(ValueError):
        SelfishState.initial("s", 0.3, "stubborn")


def test_extensions_of_a_rejected_chain_name_the_original_block():
    s = MinerState.initial("h")
    s, _ = step(s, MatExpiry(1, 660.0))
    withheld = mine(Chain.genesis(), 1, "selfish")
    s, acts = step(s, BlockArrival(withheld, 700.0))
    first = acts[0]
    longer = mine(withheld, 2, "selfish")
    for t, chain in ((710.0, longer), (720.0, mine(longer, 3, "selfish"))):
        s, acts = step(s, BlockArrival(chain, t))
        assert acts == [Reject(first.block, RejectReason.STALE_MAT_INDEX)]
    assert s.local_chain.head.kind is Kind.DUMMY
