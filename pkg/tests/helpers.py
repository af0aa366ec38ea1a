"""Shared builders for the test modules."""

from pathlib import Path

from zeroblock.chain import Chain, make_dummy, make_standard
from zeroblock.mining import SIM_TARGET, search_nonce
from zeroblock.simnet import MinerSpec

FIXTURES = Path(__file__).parent / "fixtures"


def mine(chain: Chain, index: int, creator: str = "m", payload: str = "", start: int = 0) -> Chain:
    """Extend ``chain`` with a standard block carrying a valid nonce."""
    nonce, _ = search_nonce(chain.head.id, SIM_TARGET, start)
    return chain.extend(make_standard(chain.head, index, nonce, creator, payload))


def dummy(chain: Chain, index: int) -> Chain:
    return chain.extend(make_dummy(chain.head, index))


def build(layout, creator="m") -> Chain:
    """Chain from a string such as ``"sdds"``: one block per mat index from 1."""
    chain = Chain.genesis()
    for idx, kind in enumerate(layout, 1):
        chain = mine(chain, idx, creator) if kind == "s" else dummy(chain, idx)
    return chain


def trio(alpha: float, selfish_id="s"):
    half = (1 - alpha) / 2
    return (MinerSpec(selfish_id, "selfish", alpha), MinerSpec("h1", "honest", half),
            MinerSpec("h2", "honest", half))


def honest_pair():
    return (MinerSpec("h1", "honest", 0.5), MinerSpec("h2", "honest", 0.5))
