"""Regenerate the chain fixtures: ``python tests/fixtures/make_fixtures.py``.

The compacted golden file is produced by filtering lines with a hand-written
list of kept mat indices, not by calling ``compact``.
"""

from pathlib import Path

from zeroblock.chain import Chain, dumps_chain, make_dummy, make_standard
from zeroblock.mining import SIM_TARGET, search_nonce

HERE = Path(__file__).parent

# mat index -> kind along the fixture chain (genesis is index 0)
LAYOUT = {1: "d", 2: "s", 3: "d", 4: "d", 5: "s", 6: "s", 7: "d", 8: "s", 9: "d", 10: "d"}
# leading run (1) and trailing run (9, 10) survive; interior runs (3, 4, 7) go
KEPT = {0, 1, 2, 5, 6, 8, 9, 10}


def build() -> Chain:
    chain = Chain.genesis()
    for idx, kind in LAYOUT.items():
        if kind == "d":
            chain = chain.extend(make_dummy(chain.head, idx))
        else:
            nonce, _ = search_nonce(chain.head.id, SIM_TARGET)
            chain = chain.extend(make_standard(chain.head, idx, nonce, f"m{idx % 3}", f"tx{idx}"))
    return chain


def main():
    text = dumps_chain(build())
    (HERE / "chain_dummies.csv").write_text(text)
    kept = [line for line in text.splitlines() if int(line.split(",")[1]) in KEPT]
    (HERE / "chain_dummies.compact.csv").write_text("\n".join(kept) + "\n")


if __name__ == "__main__":
    main()
