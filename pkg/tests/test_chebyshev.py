"""Chebyshev grids, Lagrange interpolation, and the four weight-block
operations, checked against direct kernel summation."""

from __future__ import annotations

import numpy as np
import pytest

from bfly.chebyshev import (
    COLUMN,
    ROW,
    ChebGrid,
    SideMismatchError,
    WeightBlock,
    cheb_grid,
    evaluate_block,
    evaluate_column_block,
    evaluate_potential,
    init_source_weights,
    lagrange_eval,
    lagrange_matrix,
    middle_switch,
    translate_column,
    translate_row,
)
from bfly.costs import CostLedger, CostParams
from bfly.geometry import BoxRegion, DyadicKey, box_of, center_of, children
from bfly.phases import PhaseEvaluator, get_phase, kernel_matrix

FLAT = PhaseEvaluator("flat", None, lambda x, y: np.zeros(x.shape[0]))
UNIT1 = BoxRegion((0.0,), (1.0,))


def ledger():
    return CostLedger(CostParams())


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


def test_single_node_is_center():
    g = cheb_grid(1, UNIT1)
    assert np.allclose(g.points, [[0.5]])


def test_two_node_positions():
    g = cheb_grid(2, UNIT1)
    lo = 0.5 * (1.0 - np.cos(np.pi / 4))
    assert np.allclose(g.points[:, 0], [lo, 1.0 - lo])
    assert np.allclose(g.points[:, 0], [0.14644660940672627, 0.8535533905932737])


def test_nodes_ascending_and_interior():
    for q in (2, 3, 5, 8):
        g = cheb_grid(q, UNIT1)
        x = g.points[:, 0]
        assert np.all(np.diff(x) > 0)
        assert np.all((x > 0) & (x < 1))


def test_tensor_flattening_dim0_fastest():
    g = cheb_grid(2, BoxRegion((0.0, 0.0), (1.0, 1.0)))
    a, b = cheb_grid(2, UNIT1).points[:, 0]
    expect = np.array([[a, a], [b, a], [a, b], [b, b]])
    assert np.allclose(g.points, expect)
    assert g.rank == 4


def test_grid_scales_affinely():
    box = BoxRegion((0.25,), (0.25,))
    g = cheb_grid(3, box)
    ref = cheb_grid(3, UNIT1)
    assert np.allclose(g.points[:, 0], 0.25 + 0.25 * ref.points[:, 0])


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------


def test_lagrange_cardinality_exact():
    g = cheb_grid(5, UNIT1)
    assert np.array_equal(lagrange_matrix(g, g.points), np.eye(5))
    g2 = cheb_grid(3, BoxRegion((0.0, 0.5), (0.5, 0.5)))
    assert np.array_equal(lagrange_matrix(g2, g2.points), np.eye(9))


def test_lagrange_partition_of_unity():
    rng = np.random.default_rng(3)
    g = cheb_grid(6, BoxRegion((0.25, 0.0), (0.25, 0.5)))
    pts = np.stack(
        [rng.uniform(0.25, 0.5, 40), rng.uniform(0.0, 0.5, 40)], axis=1
    )
    sums = lagrange_matrix(g, pts).sum(axis=1)
    assert np.allclose(sums, 1.0, atol=1e-12)


def test_q1_basis_is_constant_one():
    g = cheb_grid(1, UNIT1)
    pts = np.linspace(0.0, 1.0, 7)[:, None]
    assert np.allclose(lagrange_matrix(g, pts), 1.0)


def test_polynomial_reproduction():
    rng = np.random.default_rng(9)
    g = cheb_grid(5, UNIT1)

    def p(y):
        return 3 * y**4 - 2 * y**3 + y - 0.5

    coeffs = p(g.points[:, 0])
    pts = rng.uniform(size=(50, 1))
    interp = lagrange_matrix(g, pts) @ coeffs
    assert np.allclose(interp, p(pts[:, 0]), atol=1e-12)


def test_lagrange_eval_matches_matrix():
    g = cheb_grid(4, UNIT1)
    y = [0.3]
    row = lagrange_matrix(g, np.array([y]))
    for t in range(4):
        assert lagrange_eval(g, t, y) == pytest.approx(row[0, t], abs=1e-15)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def test_init_empty_box_gives_zero_block():
    blk = init_source_weights(
        DyadicKey(2, (3,)), np.zeros((0, 1)), np.zeros(0, dtype=complex), FLAT, 4
    )
    assert blk.side == COLUMN
    assert blk.target == DyadicKey(0, (0,))
    assert blk.source == DyadicKey(2, (3,))
    assert np.array_equal(blk.values, np.zeros(4, dtype=complex))


def test_init_node_source_flat_phase_one_hot():
    b = DyadicKey(2, (1,))
    grid = cheb_grid(4, box_of(b))
    g = 2.0 - 1.0j
    blk = init_source_weights(b, grid.points[[2]], np.array([g]), FLAT, 4)
    expect = np.zeros(4, dtype=complex)
    expect[2] = g
    assert np.array_equal(blk.values, expect)


def test_init_column_weights_reproduce_direct_sum():
    # pair (whole domain, one fine box): width product is small enough that
    # the rank-q expansion is essentially exact
    rng = np.random.default_rng(21)
    phase = get_phase("fourier")
    b = DyadicKey(4, (5,))
    lo = 5.0 / 16.0
    pos = rng.uniform(lo, lo + 1.0 / 16.0, size=(8, 1))
    g = rng.normal(size=8) + 1j * rng.normal(size=8)
    blk = init_source_weights(b, pos, g, phase, 8)
    x = rng.uniform(size=(30, 1))
    direct = kernel_matrix(phase, x, pos) @ g
    approx = evaluate_column_block(blk, x, phase, 8)
    rel = np.max(np.abs(approx - direct)) / np.max(np.abs(direct))
    assert rel <= 1e-6


def test_init_rejects_outside_sources():
    with pytest.raises(ValueError):
        init_source_weights(
            DyadicKey(2, (0,)), np.array([[0.9]]), np.ones(1, dtype=complex), FLAT, 4
        )


def test_init_flop_count():
    led = ledger()
    b = DyadicKey(1, (0,))
    pos = np.array([[0.1], [0.2], [0.3]])
    init_source_weights(b, pos, np.ones(3, dtype=complex), FLAT, 4, led)
    assert led.flops == 2 * 3 * 4 + 3 + 4


# ---------------------------------------------------------------------------
# column translation
# ---------------------------------------------------------------------------


def column_children(a_c, b_p, values_list):
    a = DyadicKey(a_c.level - 1, tuple(c // 2 for c in a_c.coords))
    return [
        WeightBlock(a, b_n, v, COLUMN)
        for b_n, v in zip(children(b_p), values_list)
    ]


def test_translate_column_zero_in_zero_out():
    a_c = DyadicKey(1, (1,))
    b_p = DyadicKey(1, (0,))
    blocks = column_children(a_c, b_p, [np.zeros(4, dtype=complex)] * 2)
    out = translate_column((a_c, b_p), blocks, get_phase("fourier"))
    assert out.target == a_c and out.source == b_p and out.side == COLUMN
    assert np.allclose(out.values, 0.0)


def test_translate_column_conserves_mass_flat_phase():
    # rows of each re-interpolation matrix sum to one over the parent basis,
    # so with no phase the total weight is preserved exactly
    rng = np.random.default_rng(33)
    a_c = DyadicKey(1, (0,))
    b_p = DyadicKey(1, (1,))
    vals = [rng.normal(size=5) + 1j * rng.normal(size=5) for _ in range(2)]
    out = translate_column((a_c, b_p), column_children(a_c, b_p, vals), FLAT)
    assert np.sum(out.values) == pytest.approx(
        np.sum(vals[0]) + np.sum(vals[1]), abs=1e-12
    )


def test_translate_column_validates_children():
    a_c = DyadicKey(1, (1,))
    b_p = DyadicKey(1, (0,))
    good = column_children(a_c, b_p, [np.ones(4, dtype=complex)] * 2)
    with pytest.raises(ValueError):
        translate_column((a_c, b_p), good[:1], FLAT)
    swapped = [good[1], good[0]]
    with pytest.raises(ValueError):
        translate_column((a_c, b_p), swapped, FLAT)
    rowside = [WeightBlock(b.target, b.source, b.values, ROW) for b in good]
    with pytest.raises(SideMismatchError):
        translate_column((a_c, b_p), rowside, FLAT)


def test_translate_column_flop_count():
    led = ledger()
    a_c = DyadicKey(1, (1,))
    b_p = DyadicKey(1, (0,))
    q = 8
    blocks = column_children(a_c, b_p, [np.ones(q, dtype=complex)] * 2)
    translate_column((a_c, b_p), blocks, get_phase("fourier"), led)
    assert led.flops == 2 * (2 * q * q + 3 * q)


def test_translate_column_matches_direct_resum():
    # re-expanded equivalent sources must induce the same potential as the
    # child expansions did, up to interpolation error
    rng = np.random.default_rng(43)
    phase = get_phase("fourier")
    q = 8
    a_c = DyadicKey(1, (0,))
    b_p = DyadicKey(3, (6,))
    a = DyadicKey(0, (0,))
    vals = []
    child_keys = children(b_p)
    for _ in child_keys:
        vals.append(rng.normal(size=q) + 1j * rng.normal(size=q))
    blocks = [
        WeightBlock(a, b_n, v, COLUMN) for b_n, v in zip(child_keys, vals)
    ]
    out = translate_column((a_c, b_p), blocks, phase)
    lo = a_c.coords[0] / 2.0
    x = rng.uniform(lo, lo + 0.5, size=(25, 1))
    f_children = sum(
        evaluate_column_block(blk, x, phase, q) for blk in blocks
    )
    f_parent = evaluate_column_block(out, x, phase, q)
    rel = np.max(np.abs(f_parent - f_children)) / np.max(np.abs(f_children))
    assert rel <= 1e-6


# ---------------------------------------------------------------------------
# middle switch
# ---------------------------------------------------------------------------


def make_column_block(a, b, pos, g, phase, q):
    """Column weights for an arbitrary pair, straight from the definition."""
    grid = cheb_grid(q, box_of(b))
    xa = np.asarray(center_of(a))
    mod = np.exp(1j * phase(np.broadcast_to(xa, pos.shape), pos))
    moments = lagrange_matrix(grid, pos).T @ (mod * g)
    demod = np.exp(
        -1j * phase(np.broadcast_to(xa, grid.points.shape), grid.points)
    )
    return WeightBlock(a, b, demod * moments, COLUMN)


def test_middle_switch_zero():
    blk = WeightBlock(DyadicKey(1, (0,)), DyadicKey(1, (1,)), np.zeros(3, dtype=complex), COLUMN)
    out = middle_switch(blk, get_phase("fourier"), 3)
    assert out.side == ROW
    assert np.allclose(out.values, 0.0)


def test_middle_switch_rank_one_is_identity():
    # with one node per dimension the kernel sample and the demodulation are
    # both taken at the same centers and cancel exactly
    blk = WeightBlock(
        DyadicKey(1, (1,)), DyadicKey(1, (0,)), np.array([1.5 - 0.5j]), COLUMN
    )
    out = middle_switch(blk, get_phase("fourier"), 1)
    assert np.allclose(out.values, blk.values, atol=1e-15)


def test_middle_switch_requires_column():
    blk = WeightBlock(DyadicKey(1, (0,)), DyadicKey(1, (1,)), np.zeros(3, dtype=complex), ROW)
    with pytest.raises(SideMismatchError):
        middle_switch(blk, get_phase("fourier"), 3)


def test_middle_switch_flop_count():
    led = ledger()
    blk = WeightBlock(DyadicKey(1, (0,)), DyadicKey(1, (1,)), np.ones(4, dtype=complex), COLUMN)
    middle_switch(blk, get_phase("fourier"), 4, led)
    assert led.flops == 2 * 16 + 2 * 4


def test_switch_preserves_potential():
    # column and row representations of the same pair agree with the direct
    # sum on the pair's target box
    rng = np.random.default_rng(55)
    phase = get_phase("fourier")
    q = 8
    a = DyadicKey(2, (1,))
    b = DyadicKey(2, (2,))
    pos = rng.uniform(0.5, 0.75, size=(12, 1))
    g = rng.normal(size=12) + 1j * rng.normal(size=12)
    blk = make_column_block(a, b, pos, g, phase, q)
    x = rng.uniform(0.25, 0.5, size=(20, 1))
    direct = kernel_matrix(phase, x, pos) @ g
    f_col = evaluate_column_block(blk, x, phase, q)
    row = middle_switch(blk, phase, q)
    f_row = evaluate_block(row, x, phase, q)
    scale = np.max(np.abs(direct))
    assert np.max(np.abs(f_col - direct)) / scale <= 1e-6
    assert np.max(np.abs(f_row - direct)) / scale <= 1e-6
    assert np.max(np.abs(f_row - f_col)) / scale <= 1e-6


# ---------------------------------------------------------------------------
# row translation and evaluation
# ---------------------------------------------------------------------------


def test_translate_row_polynomial_reproduction():
    # row weights are samples of a smooth factor; with a flat phase the
    # translation is plain re-interpolation, exact on low-degree polynomials
    q = 5
    a_c = DyadicKey(1, (0,))
    b_p = DyadicKey(1, (1,))
    a = DyadicKey(0, (0,))
    root_nodes = cheb_grid(q, box_of(a)).points[:, 0]

    def p(y):
        return y**4 - 0.3 * y**2 + 0.1

    child_keys = children(b_p)
    blocks = [
        WeightBlock(a, child_keys[0], p(root_nodes).astype(complex), ROW),
        WeightBlock(a, child_keys[1], np.zeros(q, dtype=complex), ROW),
    ]
    out = translate_row((a_c, b_p), blocks, FLAT)
    fine_nodes = cheb_grid(q, box_of(a_c)).points[:, 0]
    assert out.side == ROW
    assert np.allclose(out.values, p(fine_nodes), atol=1e-12)


def test_translate_row_requires_row_side():
    a_c = DyadicKey(1, (0,))
    b_p = DyadicKey(1, (1,))
    a = DyadicKey(0, (0,))
    blocks = [
        WeightBlock(a, b_n, np.zeros(3, dtype=complex), COLUMN)
        for b_n in children(b_p)
    ]
    with pytest.raises(SideMismatchError):
        translate_row((a_c, b_p), blocks, FLAT)


def test_evaluate_at_grid_node_closed_form():
    phase = get_phase("fourier")
    q = 4
    a = DyadicKey(1, (1,))
    b = DyadicKey(1, (0,))
    vals = np.zeros(q, dtype=complex)
    vals[2] = 1.0
    blk = WeightBlock(a, b, vals, ROW)
    node = cheb_grid(q, box_of(a)).points[2]
    got = evaluate_potential(blk, node, phase, q)
    yb = np.asarray(center_of(b))
    expect = np.exp(1j * phase(node[None, :], yb[None, :])[0])
    assert got == pytest.approx(expect, abs=1e-14)


def test_evaluate_outside_box_raises():
    blk = WeightBlock(
        DyadicKey(1, (0,)), DyadicKey(1, (1,)), np.zeros(3, dtype=complex), ROW
    )
    with pytest.raises(ValueError):
        evaluate_potential(blk, [0.9], get_phase("fourier"), 3)


def test_evaluate_block_side_checks():
    col = WeightBlock(DyadicKey(0, (0,)), DyadicKey(0, (0,)), np.zeros(2, dtype=complex), COLUMN)
    row = WeightBlock(DyadicKey(0, (0,)), DyadicKey(0, (0,)), np.zeros(2, dtype=complex), ROW)
    pts = np.array([[0.5]])
    with pytest.raises(SideMismatchError):
        evaluate_block(col, pts, FLAT, 2)
    with pytest.raises(SideMismatchError):
        evaluate_column_block(row, pts, FLAT, 2)


# ---------------------------------------------------------------------------
# fast tensor-contraction path
# ---------------------------------------------------------------------------


def test_fast_translation_matches_dense_2d():
    rng = np.random.default_rng(61)
    phase = get_phase("hyp-radon")
    q = 4
    a_c = DyadicKey(1, (1, 0))
    b_p = DyadicKey(1, (0, 1))
    a = DyadicKey(0, (0, 0))
    child_keys = children(b_p)
    vals = [
        rng.normal(size=q * q) + 1j * rng.normal(size=q * q)
        for _ in child_keys
    ]
    for side, translate in ((COLUMN, translate_column), (ROW, translate_row)):
        blocks = [
            WeightBlock(a, b_n, v, side) for b_n, v in zip(child_keys, vals)
        ]
        dense = translate((a_c, b_p), blocks, phase, fast=False)
        fast = translate((a_c, b_p), blocks, phase, fast=True)
        scale = np.max(np.abs(dense.values))
        assert np.max(np.abs(dense.values - fast.values)) / scale <= 1e-13


def test_fast_path_counts_fewer_flops():
    rng = np.random.default_rng(67)
    phase = get_phase("hyp-radon")
    q = 4
    a_c = DyadicKey(1, (0, 0))
    b_p = DyadicKey(1, (1, 1))
    a = DyadicKey(0, (0, 0))
    blocks = [
        WeightBlock(a, b_n, rng.normal(size=16) + 0j, COLUMN)
        for b_n in children(b_p)
    ]
    led_dense, led_fast = ledger(), ledger()
    translate_column((a_c, b_p), blocks, phase, led_dense, fast=False)
    translate_column((a_c, b_p), blocks, phase, led_fast, fast=True)
    assert led_dense.flops == 4 * (2 * 16 * 16 + 3 * 16)
    assert led_fast.flops == 4 * (2 * 2 * 4**3 + 3 * 16)
    assert led_fast.flops < led_dense.flops
