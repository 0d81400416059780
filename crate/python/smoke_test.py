"""Smoke test for the pymsms extension module.

Build first with `cargo build -p msms-python --release`; the script copies
the shared library next to a temporary package path and imports it.
"""

import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    for profile in ("release", "debug"):
        for name in ("libpymsms.so", "libpymsms.dylib", "pymsms.dll"):
            lib = ROOT / "target" / profile / name
            if lib.exists():
                dest = Path(tempfile.mkdtemp()) / ("pymsms.pyd" if name.endswith(".dll") else "pymsms.so")
                shutil.copy(lib, dest)
                sys.path.insert(0, str(dest.parent))
                import pymsms

                return pymsms
    sys.exit("build the extension first: cargo build -p msms-python --release")


def grid(rows, cols):
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return edges


def main():
    m = load()

    assert m.count_spanning_trees(3, [(0, 1), (1, 2), (0, 2)]) == 3
    assert m.count_spanning_trees(9, grid(3, 3)) == 192

    cycle = m.Hierarchy([1, 1, 1, 1], [(0, 1), (1, 2), (2, 3), (3, 0)], [[0, 0, 1, 1]])
    assert cycle.levels == 1 and cycle.size(1) == 2
    assert cycle.count_trees() == 2

    # 4x3 grid in six vertical 2x1 blocks
    blocks = [(r // 2) * 3 + c for r in range(4) for c in range(3)]
    h = m.Hierarchy([1] * 12, grid(4, 3), [blocks])
    params = m.Params(num_districts=2, pop_tol=0.2)
    law = m.exact_law(h, params)
    assert len(law) == 25
    assert abs(sum(p for _, p in law) - 1.0) < 1e-9

    chain = m.Chain(h, params, seed=3)
    outcomes = [chain.step() for _ in range(200)]
    assert set(outcomes) <= {"accepted", "rejected", "aborted"}
    chain.run(2000)
    stats = chain.stats()
    assert stats["proposals"] == 2200
    assert all(5 <= p <= 7 for p in chain.district_populations())
    assert len(chain.assignment()) == 12

    assert m.total_variation({0: 1}, {0: 1}) == 0.0
    assert m.total_variation({0: 1}, {1: 1}) == 1.0
    assert m.Params.county().num_districts == 13

    try:
        m.Hierarchy([1, 1, 1, 1], [(0, 1), (2, 3)])
    except ValueError:
        pass
    else:
        raise AssertionError("disconnected graph accepted")

    print("pymsms smoke test passed")


if __name__ == "__main__":
    main()
