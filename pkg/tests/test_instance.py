import json

import numpy as np
import pytest
from fractions import Fraction
from hypothesis import given, settings, strategies as st

from qanpp import instance as npi

# Philox output for (n=10, b=20, seed=424242), frozen once as a regression
# fixture: any change here is a break of the determinism contract.
GOLDEN_WEIGHTS = (940966, 7652, 141064, 180115, 218358, 332536, 504084, 647869, 967749, 933221)


def test_generate_n1_b1_legal_values():
    for seed in range(20):
        inst = npi.generate(1, 1, seed)
        assert inst.weights[0] in (1, 2)


def test_generate_deterministic():
    a = npi.generate(15, 25, 99)
    b = npi.generate(15, 25, 99)
    assert a.weights == b.weights
    assert npi.generate(15, 25, 99, with_a0=True).a0_weight == npi.generate(15, 25, 99, with_a0=True).a0_weight


def test_generate_golden_fixture():
    assert npi.generate(10, 20, 424242).weights == GOLDEN_WEIGHTS


def test_generate_rejects_bad_ranges():
    with pytest.raises(npi.PreconditionError):
        npi.generate(0, 10, 1)
    with pytest.raises(npi.PreconditionError):
        npi.generate(31, 10, 1)
    with pytest.raises(npi.PreconditionError):
        npi.generate(10, 41, 1)


def test_weights_in_range(inst12):
    assert all(1 <= w <= 1 << 25 for w in inst12.weights)


def test_residue_single_spin():
    inst = npi.NppInstance(n=1, b=4, seed=0, weights=(11,))
    assert npi.residue(inst, 0).raw == 11
    assert npi.residue(inst, 1).raw == -11


def test_residue_direct_sum():
    inst = npi.NppInstance(n=3, b=4, seed=0, weights=(5, 3, 2))
    assert npi.residue(inst, 0b010).raw == 5 - 3 + 2


def test_residue_all_flip_symmetry(inst12, rng):
    full = (1 << inst12.n) - 1
    for z in rng.integers(0, 1 << inst12.n, size=50):
        z = int(z)
        assert npi.residue(inst12, full ^ z).raw == -npi.residue(inst12, z).raw
    with_a0 = npi.generate(8, 20, 5, with_a0=True)
    a0 = with_a0.a0_weight
    for z in range(1 << 8):
        assert npi.residue(with_a0, 255 ^ z).raw == 2 * a0 - npi.residue(with_a0, z).raw


def test_residue_table_n1():
    inst = npi.NppInstance(n=1, b=4, seed=0, weights=(7,))
    assert npi.residue_table(inst).tolist() == [7, -7]


def test_residue_table_matches_pointwise(inst12, rng):
    table = npi.residue_table(inst12)
    for z in rng.integers(0, 1 << inst12.n, size=1000):
        assert table[int(z)] == npi.residue(inst12, int(z)).raw


def test_residue_table_matches_naive_oracle():
    inst = npi.generate(12, 25, 31, with_a0=True)
    table = npi.residue_table(inst)
    a0 = inst.a0_weight or 0
    for z in range(1 << 12):
        raw = a0
        for j, w in enumerate(inst.weights):
            raw += -w if (z >> j) & 1 else w
        assert table[z] == raw


def test_negation_symmetry_of_table(inst12):
    table = sorted(npi.residue_table(inst12).tolist())
    assert table == sorted((-t for t in table))


def test_hamming_and_overlap_trivial():
    assert npi.hamming(0b0011, 0b0011) == 0
    assert npi.overlap(4, 5, 5) == 1
    assert npi.overlap(4, 0b1010, 0b0101) == -1
    assert npi.hamming(0b0011, 0b0101) == 2
    assert npi.overlap(4, 0b0011, 0b0101) == 0
    assert npi.overlap(5, 0, 1) == Fraction(3, 5)


@settings(max_examples=200, deadline=None)
@given(
    st.integers(min_value=0, max_value=(1 << 12) - 1),
    st.integers(min_value=0, max_value=(1 << 12) - 1),
    st.integers(min_value=0, max_value=(1 << 12) - 1),
)
def test_hamming_metric_axioms(z1, z2, z3):
    assert npi.hamming(z1, z2) == npi.hamming(z2, z1)
    assert (npi.hamming(z1, z2) == 0) == (z1 == z2)
    assert npi.hamming(z1, z3) <= npi.hamming(z1, z2) + npi.hamming(z2, z3)


def test_karmarkar_karp_hand_case():
    inst = npi.NppInstance(n=4, b=4, seed=0, weights=(8, 7, 6, 5))
    assert npi.karmarkar_karp(inst).raw == 0


def test_karmarkar_karp_n1():
    inst = npi.NppInstance(n=1, b=4, seed=0, weights=(9,))
    assert npi.karmarkar_karp(inst).raw == 9


def test_karmarkar_karp_beats_random_search():
    """KK beats best-of-M random at comparable work (M ~ its O(n) cost).

    M is kept near KK's own work budget: at 1e5 draws random search is
    exhaustive for these n and nothing can beat it (see decisions ledger).
    """
    from qanpp.residue_stats import _residues_of

    wins = 0
    for seed in range(50):
        inst = npi.generate(16, 25, 1000 + seed)
        kk = abs(npi.karmarkar_karp(inst).raw)
        rng = np.random.default_rng(seed)
        zs = rng.integers(0, 1 << 16, size=50, dtype=np.uint64)
        if kk <= np.abs(_residues_of(inst, zs)).min():
            wins += 1
    assert wins >= 45  # >= 90% of 50 instances


def test_json_roundtrip(inst10_a0, tmp_path):
    assert npi.from_json(npi.to_json(inst10_a0)) == inst10_a0
    path = tmp_path / "inst.json"
    npi.save(inst10_a0, path)
    assert npi.load(path) == inst10_a0
    raw = json.loads(path.read_text())
    assert set(raw) == {"n", "b", "seed", "weights", "a0"}
    assert all(isinstance(w, int) for w in raw["weights"])


def test_spins_view(inst10):
    s = npi.spins(inst10, 0b0000000101)
    assert s[0] == -1 and s[1] == 1 and s[2] == -1
    assert set(np.unique(s)) <= {-1, 1}
