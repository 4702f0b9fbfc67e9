"""Regenerate the golden extraction files with the unpacked reference product.

Run from the repository root: ``python tests/data/make_golden.py``. The
files are committed; regenerate only on a deliberate format change.
"""
from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import numpy as np

from rbsextract.bitcore import BitString, toeplitz_matvec
from rbsextract.planner import plan_eq, plan_neq
from rbsextract.stream import samples_to_bits

HERE = Path(__file__).parent
SAMPLES = 10_000


def reference_eq(plan, seed, raw):
    spec = plan.gadget.toeplitz
    n = plan.block_bits
    return BitString.concat(toeplitz_matvec(spec, seed, raw[t * n:(t + 1) * n])
                            for t in range(min(len(raw) // n, plan.num_blocks)))


def reference_neq(plan, seed, raw):
    out, pos, ell = [], 0, 1
    while ell <= plan.last_block:
        g = plan.gadget(ell)
        if pos + g.n_bits > len(raw):
            break
        z = toeplitz_matvec(g.toeplitz, seed, raw[pos:pos + g.n_bits]) + seed
        r = plan.r_len(ell)
        out.append(z[:r])
        seed = z[r:]
        pos += g.n_bits
        ell += 1
    return BitString.concat(out)


def main():
    rng = np.random.Generator(np.random.PCG64(0x5EED))
    raw_samples = rng.integers(0, 2 ** 16, SAMPLES, dtype=np.uint16)
    raw = samples_to_bits(raw_samples, 16)
    (HERE / "golden_input.bin").write_bytes(raw.to_bytes())
    eq = plan_eq(16, 2 ** 51, Fraction(537, 800), 2.0 ** -30)
    neq = plan_neq(16, Fraction(537, 800), 8, 1)
    for name, plan, ref in (("eq", eq, reference_eq), ("neq", neq, reference_neq)):
        seed = BitString.random(plan.seed_len, rng)
        (HERE / f"golden_{name}_plan.txt").write_text(plan.to_text())
        (HERE / f"golden_{name}_seed.bin").write_bytes(seed.to_bytes())
        out = ref(plan, seed, raw)
        (HERE / f"golden_{name}_output.bin").write_bytes(out.to_bytes())
        print(name, len(out), "bits")


if __name__ == "__main__":
    main()
